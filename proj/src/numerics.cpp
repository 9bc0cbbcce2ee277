#include "mmce/numerics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/SVD>

namespace mmce {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

double Rng::normal() {
  double u1;
  do {
    u1 = uniform_unit();
  } while (u1 == 0.0);
  const double u2 = uniform_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

Complex Rng::complex_normal(double variance) {
  if (variance == 0.0) return Complex(0.0, 0.0);
  const double s = std::sqrt(variance / 2.0);
  const double re = s * normal();
  const double im = s * normal();
  return Complex(re, im);
}

std::uint64_t Rng::derive(std::uint64_t master,
                          std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = master;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t p : path) {
    state ^= p;
    out = splitmix64(state);
  }
  return out;
}

ComplexMatrix pseudo_inverse(const ComplexMatrix& a, double rank_tolerance) {
  if (!a.allFinite()) {
    throw std::invalid_argument("pseudo_inverse: input has non-finite entries");
  }
  if (rank_tolerance <= 0.0) {
    throw std::invalid_argument("pseudo_inverse: rank_tolerance must be > 0");
  }
  if (a.rows() == 0 || a.cols() == 0) {
    return ComplexMatrix::Zero(a.cols(), a.rows());
  }
  Eigen::JacobiSVD<ComplexMatrix> svd(a,
                                      Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RealVector& sv = svd.singularValues();
  const double cutoff = rank_tolerance * sv(0);
  RealVector inv = RealVector::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
}

LMResult lm_minimize(const ResidualFn& residual_fn,
                     const JacobianFn& jacobian_fn, const RealVector& start,
                     const LMConfig& config) {
  constexpr double kDampingCeiling = 1e16;
  constexpr double kScaleFloor = 1e-12;

  LMResult result;
  result.point = start;

  RealVector residual = residual_fn(start);
  double norm = residual.norm();
  result.residual_norm = norm;

  double damping = config.initial_damping;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const RealMatrix jac = jacobian_fn(result.point);
    const RealMatrix normal_matrix = jac.transpose() * jac;
    const RealVector gradient = jac.transpose() * residual;

    // More scaling: damp each coordinate by its Jacobian column norm, floored
    // so that zero columns still give a solvable system.
    RealVector scale2(jac.cols());
    for (Eigen::Index j = 0; j < jac.cols(); ++j) {
      const double cn = jac.col(j).norm();
      scale2(j) = std::max(cn * cn, kScaleFloor * kScaleFloor);
    }

    bool accepted = false;
    while (!accepted) {
      RealMatrix damped = normal_matrix;
      damped.diagonal() += damping * scale2;
      Eigen::LDLT<RealMatrix> solver(damped);
      RealVector step;
      bool solvable = solver.info() == Eigen::Success;
      if (solvable) {
        step = solver.solve(-gradient);
        solvable = step.allFinite();
      }
      if (!solvable) {
        damping *= config.damping_up_factor;
        if (damping > kDampingCeiling) {
          result.status = LMStatus::kSingularSystem;
          return result;
        }
        continue;
      }

      if (step.norm() < config.step_tolerance) {
        result.status = LMStatus::kConverged;
        return result;
      }

      const RealVector candidate = result.point + step;
      const RealVector cand_residual = residual_fn(candidate);
      const double cand_norm = cand_residual.norm();
      if (cand_norm < norm) {
        result.point = candidate;
        residual = cand_residual;
        const double decrease = norm - cand_norm;
        norm = cand_norm;
        result.residual_norm = norm;
        ++result.iterations;
        damping = std::max(damping * config.damping_down_factor,
                           std::numeric_limits<double>::min());
        accepted = true;
        if (decrease < config.residual_tolerance) {
          result.status = LMStatus::kConverged;
          return result;
        }
      } else {
        damping *= config.damping_up_factor;
        if (damping > kDampingCeiling) {
          // No downhill step found at any damping: report the best point.
          result.status = LMStatus::kSingularSystem;
          return result;
        }
      }
    }
  }
  result.status = LMStatus::kMaxIterations;
  return result;
}

namespace {

// Regularized lower incomplete gamma P(a, x) by series expansion (x < a + 1).
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by continued fraction (x >= a+1).
double gamma_q_continued_fraction(double a, double x) {
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) {
    throw std::invalid_argument("regularized_gamma_q: domain error");
  }
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_continued_fraction(a, x);
}

double chi_squared_quantile(double p_right_tail, int dof) {
  if (!(p_right_tail > 0.0 && p_right_tail < 1.0)) {
    throw std::invalid_argument(
        "chi_squared_quantile: probability must be in (0, 1)");
  }
  if (dof < 1) {
    throw std::invalid_argument("chi_squared_quantile: dof must be >= 1");
  }

  const double nu = static_cast<double>(dof);
  const auto right_tail = [&](double x) {
    return regularized_gamma_q(nu / 2.0, x / 2.0);
  };

  // Wilson-Hilferty starting point, then expand to a sign-changing bracket.
  const double z = [&] {
    // Rational approximation of the standard normal upper quantile
    // (Abramowitz & Stegun 26.2.23); only used to seed the bracket.
    const double p = p_right_tail <= 0.5 ? p_right_tail : 1.0 - p_right_tail;
    const double t = std::sqrt(-2.0 * std::log(p));
    const double num = 2.515517 + t * (0.802853 + t * 0.010328);
    const double den = 1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308));
    const double zq = t - num / den;
    return p_right_tail <= 0.5 ? zq : -zq;
  }();
  const double wh = 1.0 - 2.0 / (9.0 * nu) + z * std::sqrt(2.0 / (9.0 * nu));
  double guess = nu * wh * wh * wh;
  if (!(guess > 0.0)) guess = nu;

  double lo = guess;
  double hi = guess;
  while (right_tail(lo) < p_right_tail) {
    lo *= 0.5;
    if (lo < 1e-300) break;
  }
  while (right_tail(hi) > p_right_tail) {
    hi *= 2.0;
  }

  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (right_tail(mid) > p_right_tail) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-13 * hi) break;
  }
  return 0.5 * (lo + hi);
}

ComplexVector sample_complex_gaussian(Rng& rng, double variance,
                                      Eigen::Index count) {
  if (variance < 0.0) {
    throw std::invalid_argument("sample_complex_gaussian: variance < 0");
  }
  ComplexVector out(count);
  if (variance == 0.0) {
    out.setZero();
    return out;
  }
  for (Eigen::Index i = 0; i < count; ++i) {
    out(i) = rng.complex_normal(variance);
  }
  return out;
}

}  // namespace mmce
