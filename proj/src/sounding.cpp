#include "mmce/sounding.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace mmce {

namespace {
constexpr double kPi = 3.14159265358979323846;

// sum_k exp(j pi k d) and sum_k k exp(j pi k d) over k = 0..n-1, by running
// powers of the unit phasor; one trig call per evaluation.
void phasor_sums(double d, int n, Complex& sum0, Complex& sum1) {
  const Complex w = std::polar(1.0, kPi * d);
  Complex pw(1.0, 0.0);
  sum0 = Complex(0.0, 0.0);
  sum1 = Complex(0.0, 0.0);
  for (int k = 0; k < n; ++k) {
    sum0 += pw;
    sum1 += static_cast<double>(k) * pw;
    pw *= w;
  }
}
}  // namespace

PilotGrid design_grid(Eigen::Index m_t, Eigen::Index m_r,
                      const ArrayGeometry& geom) {
  if (m_t < 1 || m_r < 1) {
    throw std::invalid_argument("design_grid: need at least one direction");
  }
  PilotGrid grid;
  grid.tx_directions.resize(m_t);
  grid.rx_directions.resize(m_r);
  for (Eigen::Index p = 0; p < m_t; ++p) {
    const double center = -1.0 + (2.0 * static_cast<double>(p) + 1.0) /
                                     static_cast<double>(m_t);
    grid.tx_directions(p) = std::acos(center);
  }
  for (Eigen::Index q = 0; q < m_r; ++q) {
    const double center = -1.0 + (2.0 * static_cast<double>(q) + 1.0) /
                                     static_cast<double>(m_r);
    grid.rx_directions(q) = std::acos(center);
  }
  grid.f.resize(geom.n_t, m_t);
  for (Eigen::Index p = 0; p < m_t; ++p) {
    grid.f.col(p) = tx_steering_vector(grid.tx_directions(p), geom.n_t);
  }
  grid.w.resize(geom.n_r, m_r);
  for (Eigen::Index q = 0; q < m_r; ++q) {
    grid.w.col(q) = rx_steering_vector(grid.rx_directions(q), geom.n_r);
  }
  return grid;
}

Complex beam_gain(double angle, double grid_angle, int n) {
  Complex s0, s1;
  phasor_sums(std::cos(angle) - std::cos(grid_angle), n, s0, s1);
  return s0 / static_cast<double>(n);
}

Complex beam_gain_derivative(double angle, double grid_angle, int n) {
  Complex s0, s1;
  phasor_sums(std::cos(angle) - std::cos(grid_angle), n, s0, s1);
  // d/d angle of (1/n) sum_k exp(j pi k (cos angle - c)) pulls down
  // j pi k * (-sin angle).
  return Complex(0.0, kPi) * (-std::sin(angle)) * s1 /
         static_cast<double>(n);
}

GainTables compute_gain_tables(const RealVector& angles, const PilotGrid& grid,
                               const ArrayGeometry& geom,
                               bool with_derivatives) {
  const Eigen::Index paths = angles.size() / 2;
  const Eigen::Index m_t = grid.m_t();
  const Eigen::Index m_r = grid.m_r();

  GainTables t;
  t.tx.resize(m_t, paths);
  t.rx.resize(m_r, paths);
  if (with_derivatives) {
    t.d_tx.resize(m_t, paths);
    t.d_rx.resize(m_r, paths);
  }

  for (Eigen::Index l = 0; l < paths; ++l) {
    const double aod = angles(l);
    const double aoa = angles(paths + l);
    const double sin_aod = std::sin(aod);
    const double sin_aoa = std::sin(aoa);
    for (Eigen::Index p = 0; p < m_t; ++p) {
      Complex s0, s1;
      phasor_sums(std::cos(aod) - std::cos(grid.tx_directions(p)), geom.n_t,
                  s0, s1);
      t.tx(p, l) = s0 / static_cast<double>(geom.n_t);
      if (with_derivatives) {
        t.d_tx(p, l) = Complex(0.0, kPi) * (-sin_aod) * s1 /
                       static_cast<double>(geom.n_t);
      }
    }
    for (Eigen::Index q = 0; q < m_r; ++q) {
      // Combining gain e_r^H(dir_q) e_r(aoa) is the conjugate of the
      // tx-style product, so the phasor runs with the opposite sign.
      Complex s0, s1;
      phasor_sums(-(std::cos(aoa) - std::cos(grid.rx_directions(q))), geom.n_r,
                  s0, s1);
      t.rx(q, l) = s0 / static_cast<double>(geom.n_r);
      if (with_derivatives) {
        t.d_rx(q, l) = Complex(0.0, -kPi) * (-sin_aoa) * s1 /
                       static_cast<double>(geom.n_r);
      }
    }
  }
  return t;
}

ComplexMatrix build_phi(const RealVector& angles, const PilotGrid& grid,
                        const ArrayGeometry& geom) {
  if (angles.size() % 2 != 0) {
    throw std::invalid_argument("build_phi: angle vector length must be even");
  }
  const Eigen::Index paths = angles.size() / 2;
  const Eigen::Index m_t = grid.m_t();
  const Eigen::Index m_r = grid.m_r();
  const GainTables t = compute_gain_tables(angles, grid, geom, false);

  ComplexMatrix phi(m_r * m_t, paths);
  for (Eigen::Index l = 0; l < paths; ++l) {
    for (Eigen::Index p = 0; p < m_t; ++p) {
      phi.col(l).segment(p * m_r, m_r) = t.tx(p, l) * t.rx.col(l);
    }
  }
  return phi;
}

ComplexVector build_phi_derivative_column(const RealVector& angles,
                                          Eigen::Index l, AngleKind kind,
                                          const PilotGrid& grid,
                                          const ArrayGeometry& geom) {
  const Eigen::Index m_t = grid.m_t();
  const Eigen::Index m_r = grid.m_r();
  const GainTables t = compute_gain_tables(angles, grid, geom, true);

  ComplexVector col(m_r * m_t);
  if (kind == AngleKind::kAod) {
    for (Eigen::Index p = 0; p < m_t; ++p) {
      col.segment(p * m_r, m_r) = t.d_tx(p, l) * t.rx.col(l);
    }
  } else {
    for (Eigen::Index p = 0; p < m_t; ++p) {
      col.segment(p * m_r, m_r) = t.tx(p, l) * t.d_rx.col(l);
    }
  }
  return col;
}

ObservationBatch sound_channel(const ComplexMatrix& h, const PilotGrid& grid,
                               double noise_variance, Rng& rng) {
  if (h.rows() != grid.w.rows() || h.cols() != grid.f.rows()) {
    throw std::invalid_argument("sound_channel: dimension mismatch");
  }
  const ComplexMatrix observed = grid.w.adjoint() * h * grid.f;  // m_r x m_t
  ObservationBatch batch;
  batch.noise_variance = noise_variance;
  batch.y = ComplexVector::Map(observed.data(), observed.size());
  batch.y += sample_complex_gaussian(rng, noise_variance, batch.y.size());
  return batch;
}

void write_grid_directions(std::ostream& os, const PilotGrid& grid) {
  char line[64];
  os << "# tx directions (rad)\n";
  for (Eigen::Index p = 0; p < grid.m_t(); ++p) {
    std::snprintf(line, sizeof(line), "%.9g\n", grid.tx_directions(p));
    os << line;
  }
  os << "# rx directions (rad)\n";
  for (Eigen::Index q = 0; q < grid.m_r(); ++q) {
    std::snprintf(line, sizeof(line), "%.9g\n", grid.rx_directions(q));
    os << line;
  }
}

}  // namespace mmce
