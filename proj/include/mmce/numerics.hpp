#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/Dense>

namespace mmce {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

/// Deterministic random stream: a fixed seed reproduces the exact same
/// sample sequence on every platform. The engine is std::mt19937_64 (whose
/// output is pinned by the standard); all variate transforms are done here
/// rather than with std:: distributions, which are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform_unit() {
    return static_cast<double>(next_raw() >> 11) * 0x1.0p-53;
  }

  /// Uniform on the open interval (lo, hi); redraws the measure-zero endpoint.
  double uniform_open(double lo, double hi) {
    double u;
    do {
      u = uniform_unit();
    } while (u == 0.0);
    return lo + u * (hi - lo);
  }

  bool bernoulli(double p) { return uniform_unit() < p; }

  /// Standard normal via Box-Muller (cosine branch only, so the stream
  /// consumes exactly two raw draws per variate).
  double normal();

  /// One draw of CN(0, variance): real and imaginary parts are independent
  /// N(0, variance / 2).
  Complex complex_normal(double variance);

  /// Derives a child seed from a master seed and an index path, so that any
  /// trial (arm, grid point, trial number, ...) can be reproduced in
  /// isolation. SplitMix64 applied over the concatenated path.
  static std::uint64_t derive(std::uint64_t master,
                              std::initializer_list<std::uint64_t> path);

 private:
  std::uint64_t next_raw() {
    ++position_;
    return engine_();
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uint64_t position_ = 0;
};

struct LMConfig {
  double initial_damping = 1e-3;
  double damping_up_factor = 10.0;
  double damping_down_factor = 0.1;
  int max_iterations = 100;
  double step_tolerance = 1e-8;       // radians
  double residual_tolerance = 1e-12;  // absolute decrease of the norm
};

enum class LMStatus {
  kConverged,        // step or residual-decrease tolerance met
  kMaxIterations,    // iteration budget exhausted
  kSingularSystem,   // damped normal matrix unusable after repeated increases
};

struct LMResult {
  RealVector point;
  double residual_norm = 0.0;
  int iterations = 0;        // accepted steps
  LMStatus status = LMStatus::kConverged;
};

using ResidualFn = std::function<RealVector(const RealVector&)>;
using JacobianFn = std::function<RealMatrix(const RealVector&)>;

/// Moore-Penrose pseudo-inverse via SVD. Singular values below
/// rank_tolerance times the largest one are treated as zero.
ComplexMatrix pseudo_inverse(const ComplexMatrix& a,
                             double rank_tolerance = 1e-10);

/// Damped Levenberg-Marquardt over a real residual. Solves
/// (J^T J + lambda * S^T S) step = -J^T r with S the diagonal of column
/// norms of J, multiplicative damping update. Accepted residual norms are
/// non-increasing; the returned point is the best one visited.
LMResult lm_minimize(const ResidualFn& residual_fn,
                     const JacobianFn& jacobian_fn, const RealVector& start,
                     const LMConfig& config = {});

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
double regularized_gamma_q(double a, double x);

/// Right-tail chi-squared quantile: the x with Q_{chi2_dof}(x) = p_right_tail.
/// Bisection on the regularized incomplete gamma, seeded by the
/// Wilson-Hilferty approximation. Relative error below 1e-10.
double chi_squared_quantile(double p_right_tail, int dof);

/// n i.i.d. draws of CN(0, variance). variance == 0 yields zeros without
/// consuming randomness.
ComplexVector sample_complex_gaussian(Rng& rng, double variance,
                                      Eigen::Index count);

}  // namespace mmce
