#include "mmce/channel.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mmce {

namespace {
constexpr double kPi = 3.14159265358979323846;

ComplexVector steering(double angle, int n) {
  ComplexVector v(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double step = -kPi * std::cos(angle);
  for (int k = 0; k < n; ++k) {
    v(k) = std::polar(scale, step * k);
  }
  return v;
}
}  // namespace

ComplexVector tx_steering_vector(double aod, int n_t) {
  return steering(aod, n_t);
}

ComplexVector rx_steering_vector(double aoa, int n_r) {
  return steering(aoa, n_r);
}

ComplexMatrix assemble_channel(const PathSet& paths,
                               const ArrayGeometry& geom) {
  ComplexMatrix h = ComplexMatrix::Zero(geom.n_r, geom.n_t);
  for (Eigen::Index l = 0; l < paths.path_count(); ++l) {
    h.noalias() += paths.gains(l) * rx_steering_vector(paths.aoa(l), geom.n_r) *
                   tx_steering_vector(paths.aod(l), geom.n_t).adjoint();
  }
  return h;
}

double reflect_into_angle_range(double angle) {
  // Fold into the period [0, 2*pi), then mirror the upper half down.
  angle = std::fmod(angle, 2.0 * kPi);
  if (angle < 0.0) angle += 2.0 * kPi;
  if (angle > kPi) angle = 2.0 * kPi - angle;
  return angle;
}

std::pair<PathSet, bool> evolve_slot(const PathSet& paths,
                                     const DynamicsConfig& cfg, Rng& rng) {
  const double p_depart = cfg.departure_probability();
  const double p_arrive = cfg.arrival_probability();
  if (p_depart < 0.0 || p_depart >= 1.0 || p_arrive < 0.0 || p_arrive >= 1.0) {
    throw std::invalid_argument(
        "evolve_slot: rate * slot_duration must be a valid probability");
  }

  std::vector<Eigen::Index> survivors;
  survivors.reserve(paths.path_count());
  bool changed = false;
  for (Eigen::Index l = 0; l < paths.path_count(); ++l) {
    if (p_depart > 0.0 && rng.bernoulli(p_depart)) {
      changed = true;
    } else {
      survivors.push_back(l);
    }
  }

  bool arrival = p_arrive > 0.0 && rng.bernoulli(p_arrive);
  changed = changed || arrival;

  const Eigen::Index n_out =
      static_cast<Eigen::Index>(survivors.size()) + (arrival ? 1 : 0);
  PathSet out;
  out.gains.resize(n_out);
  out.angles.resize(2 * n_out);

  Eigen::Index i = 0;
  for (Eigen::Index l : survivors) {
    out.gains(i) = paths.gains(l);
    out.angles(i) = paths.aod(l);
    out.angles(n_out + i) = paths.aoa(l);
    ++i;
  }
  if (arrival) {
    out.gains(i) = rng.complex_normal(cfg.gain_variance);
    out.angles(i) = rng.uniform_open(0.0, kPi);
    out.angles(n_out + i) = rng.uniform_open(0.0, kPi);
  }

  if (cfg.sigma_u > 0.0) {
    // The freshly arrived path keeps its drawn angles this slot; only
    // survivors random-walk.
    const Eigen::Index n_surv = static_cast<Eigen::Index>(survivors.size());
    for (Eigen::Index s = 0; s < n_surv; ++s) {
      out.angles(s) = reflect_into_angle_range(out.angles(s) +
                                               cfg.sigma_u * rng.normal());
    }
    for (Eigen::Index s = 0; s < n_surv; ++s) {
      out.angles(n_out + s) = reflect_into_angle_range(
          out.angles(n_out + s) + cfg.sigma_u * rng.normal());
    }
  }

  return {std::move(out), changed};
}

PathSet random_path_set(Eigen::Index path_count, double gain_variance,
                        Rng& rng) {
  PathSet p;
  p.gains.resize(path_count);
  p.angles.resize(2 * path_count);
  for (Eigen::Index l = 0; l < path_count; ++l) {
    p.gains(l) = rng.complex_normal(gain_variance);
  }
  for (Eigen::Index l = 0; l < 2 * path_count; ++l) {
    p.angles(l) = rng.uniform_open(0.0, kPi);
  }
  return p;
}

void write_path_set(std::ostream& os, const PathSet& paths) {
  char line[160];
  for (Eigen::Index l = 0; l < paths.path_count(); ++l) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %.9g\n",
                  paths.gains(l).real(), paths.gains(l).imag(), paths.aod(l),
                  paths.aoa(l));
    os << line;
  }
}

PathSet read_path_set(std::istream& is) {
  std::vector<double> re, im, aod, aoa;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double a, b, c, d;
    if (!(ls >> a >> b >> c >> d)) {
      throw std::runtime_error("read_path_set: malformed record: " + line);
    }
    re.push_back(a);
    im.push_back(b);
    aod.push_back(c);
    aoa.push_back(d);
  }
  PathSet p;
  const Eigen::Index n = static_cast<Eigen::Index>(re.size());
  p.gains.resize(n);
  p.angles.resize(2 * n);
  for (Eigen::Index l = 0; l < n; ++l) {
    p.gains(l) = Complex(re[l], im[l]);
    p.angles(l) = aod[l];
    p.angles(n + l) = aoa[l];
  }
  return p;
}

}  // namespace mmce
