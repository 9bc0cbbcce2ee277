#include "mmce/acquisition.hpp"

#include <cmath>
#include <ostream>
#include <vector>

namespace mmce {

namespace {

ChannelEstimate make_estimate(const std::vector<Complex>& gains,
                              const std::vector<double>& aods,
                              const std::vector<double>& aoas,
                              double residual_norm) {
  ChannelEstimate est;
  const Eigen::Index n = static_cast<Eigen::Index>(gains.size());
  est.gains.resize(n);
  est.angles.resize(2 * n);
  for (Eigen::Index l = 0; l < n; ++l) {
    est.gains(l) = gains[l];
    est.angles(l) = aods[l];
    est.angles(n + l) = aoas[l];
  }
  est.residual_norm = residual_norm;
  return est;
}

ChannelEstimate keep_paths(const ChannelEstimate& est,
                           const std::vector<Eigen::Index>& keep) {
  ChannelEstimate out;
  const Eigen::Index n = static_cast<Eigen::Index>(keep.size());
  out.gains.resize(n);
  out.angles.resize(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.gains(i) = est.gains(keep[i]);
    out.angles(i) = est.aod(keep[i]);
    out.angles(n + i) = est.aoa(keep[i]);
  }
  out.residual_norm = est.residual_norm;
  return out;
}

// Everything the residual and its Jacobian share at one angle vector:
// gain tables with derivatives, Phi, its pseudo-inverse, the projected
// gains and the fit residual. The LM driver evaluates the Jacobian at the
// point whose residual it just accepted, so caching one state removes half
// of the matrix work.
struct FitState {
  RealVector theta;
  GainTables tables;
  ComplexMatrix phi;       // m x L
  ComplexMatrix pinv;      // L x m
  ComplexVector alpha;     // L
  ComplexVector residual;  // m
  bool valid = false;
};

void compute_fit(const RealVector& theta, const ObservationBatch& y,
                 const PilotGrid& grid, const ArrayGeometry& geom,
                 FitState& out) {
  const Eigen::Index paths = theta.size() / 2;
  const Eigen::Index m_t = grid.m_t();
  const Eigen::Index m_r = grid.m_r();

  out.theta = theta;
  out.tables = compute_gain_tables(theta, grid, geom, true);
  out.phi.resize(m_r * m_t, paths);
  for (Eigen::Index l = 0; l < paths; ++l) {
    for (Eigen::Index p = 0; p < m_t; ++p) {
      out.phi.col(l).segment(p * m_r, m_r) =
          out.tables.tx(p, l) * out.tables.rx.col(l);
    }
  }
  out.pinv = pseudo_inverse(out.phi);
  out.alpha = out.pinv * y.y;
  out.residual = y.y - out.phi * out.alpha;
  out.valid = true;
}

RealMatrix jacobian_from_fit(const FitState& fit, const PilotGrid& grid) {
  const Eigen::Index paths = fit.theta.size() / 2;
  const Eigen::Index m_t = grid.m_t();
  const Eigen::Index m_r = grid.m_r();
  const Eigen::Index m = m_t * m_r;

  const ComplexMatrix gram = fit.pinv * fit.pinv.adjoint();  // L x L
  const ComplexMatrix null_proj =
      ComplexMatrix::Identity(paths, paths) - fit.pinv * fit.phi;
  const ComplexVector pinv_h_alpha = fit.pinv.adjoint() * fit.alpha;  // m

  // d Phi / d angle_l has only column l nonzero, say d_l. With P = Phi^+:
  //   dr = -(d_l alpha_l + Phi dPy),
  //   dPy = -(P d_l) alpha_l + (P P^H e_l)(d_l^H r)
  //         + ((I - P Phi) e_l)(d_l^H P^H alpha).
  RealMatrix jac(2 * m, 2 * paths);
  ComplexVector d_col(m);
  for (Eigen::Index col = 0; col < 2 * paths; ++col) {
    const Eigen::Index l = col % paths;
    if (col < paths) {
      for (Eigen::Index p = 0; p < m_t; ++p) {
        d_col.segment(p * m_r, m_r) =
            fit.tables.d_tx(p, l) * fit.tables.rx.col(l);
      }
    } else {
      for (Eigen::Index p = 0; p < m_t; ++p) {
        d_col.segment(p * m_r, m_r) =
            fit.tables.tx(p, l) * fit.tables.d_rx.col(l);
      }
    }

    const ComplexVector pd = fit.pinv * d_col;
    const Complex d_dot_r = d_col.dot(fit.residual);
    const Complex d_dot_pa = d_col.dot(pinv_h_alpha);
    const ComplexVector dpy = -pd * fit.alpha(l) + gram.col(l) * d_dot_r +
                              null_proj.col(l) * d_dot_pa;
    const ComplexVector dr = -(d_col * fit.alpha(l) + fit.phi * dpy);

    jac.col(col).head(m) = dr.real();
    jac.col(col).tail(m) = dr.imag();
  }
  return jac;
}

// Cached residual/Jacobian pair over one observation, for the LM driver.
class FitEvaluator {
 public:
  FitEvaluator(const ObservationBatch& y, const PilotGrid& grid,
               const ArrayGeometry& geom)
      : y_(y), grid_(grid), geom_(geom) {}

  ResidualFn residual_fn() {
    return [this](const RealVector& theta) {
      return stack_real(state_at(theta).residual);
    };
  }
  JacobianFn jacobian_fn() {
    return [this](const RealVector& theta) {
      return jacobian_from_fit(state_at(theta), grid_);
    };
  }

  // The fit at the final point, for gain/residual extraction.
  const FitState& state_at(const RealVector& theta) {
    if (!cache_.valid || cache_.theta.size() != theta.size() ||
        (cache_.theta.array() != theta.array()).any()) {
      compute_fit(theta, y_, grid_, geom_, cache_);
    }
    return cache_;
  }

 private:
  const ObservationBatch& y_;
  const PilotGrid& grid_;
  const ArrayGeometry& geom_;
  FitState cache_;
};

void wrap_angles(RealVector& angles) {
  for (Eigen::Index i = 0; i < angles.size(); ++i) {
    angles(i) = reflect_into_angle_range(angles(i));
  }
}

void adopt_point(ChannelEstimate& estimate, const RealVector& point,
                 FitEvaluator& eval) {
  RealVector wrapped = point;
  wrap_angles(wrapped);
  const FitState& fit = eval.state_at(wrapped);
  estimate.angles = wrapped;
  estimate.gains = fit.alpha;
  estimate.residual_norm = fit.residual.norm();
}

// LM over the projection residual plus collision merges, iterated until the
// support is collision-free. At most L-1 merges can happen, so the loop is
// bounded by the path count.
void refine_support(ChannelEstimate& estimate, const ObservationBatch& y,
                    const PilotGrid& grid, const ArrayGeometry& geom,
                    const LMConfig& lm_cfg) {
  FitEvaluator eval(y, grid, geom);
  const int rounds = static_cast<int>(estimate.path_count()) + 1;
  for (int round = 0; round < rounds; ++round) {
    const LMResult lm = lm_minimize(eval.residual_fn(), eval.jacobian_fn(),
                                    estimate.angles, lm_cfg);
    adopt_point(estimate, lm.point, eval);
    if (!merge_colliding_paths(estimate, y, grid, geom)) break;
  }
}

// Endfire disambiguation. The array response is 2-periodic in the cosine,
// so the cosine space is a circle with +1 and -1 glued; the angle
// parameterization cannot slide a path across that seam (the derivative
// carries a sin factor that vanishes at the poles). A path whose fit hugs a
// pole may belong just on the other side: re-seed it there, refine, and
// keep whichever support fits better.
void disambiguate_endfire(ChannelEstimate& estimate, const ObservationBatch& y,
                          const PilotGrid& grid, const ArrayGeometry& geom,
                          const LMConfig& lm_cfg) {
  FitEvaluator eval(y, grid, geom);
  const int n_min = std::min(geom.n_t, geom.n_r);
  const double edge = 1.0 - 0.5 / static_cast<double>(n_min);
  for (Eigen::Index idx = 0; idx < estimate.angles.size(); ++idx) {
    const double c = std::cos(estimate.angles(idx));
    if (std::abs(c) <= edge) continue;
    RealVector candidate = estimate.angles;
    candidate(idx) = std::acos(std::copysign(1.0 - 1e-3, -c));
    const LMResult lm = lm_minimize(eval.residual_fn(), eval.jacobian_fn(),
                                    candidate, lm_cfg);
    if (lm.residual_norm < estimate.residual_norm) {
      adopt_point(estimate, lm.point, eval);
      merge_colliding_paths(estimate, y, grid, geom);
    }
  }
}

// Append one matched-filter pick from the current fit residual and refit.
// Adopted only when the residual power drops by clearly more than a
// spurious four-parameter path could explain; returns false otherwise.
bool repair_support(ChannelEstimate& estimate, const ObservationBatch& y,
                    const PilotGrid& grid, const ArrayGeometry& geom,
                    const LMConfig& lm_cfg) {
  const ComplexMatrix phi = build_phi(estimate.angles, grid, geom);
  ObservationBatch residual_batch;
  residual_batch.y = y.y - phi * estimate.gains;
  residual_batch.noise_variance = y.noise_variance;
  const ChannelEstimate seed =
      sic_starting_point(residual_batch, grid, geom, SicConfig{1, 0.0});
  if (seed.empty()) return false;

  ChannelEstimate candidate;
  const Eigen::Index n = estimate.path_count() + 1;
  candidate.gains.resize(n);
  candidate.angles.resize(2 * n);
  candidate.gains.head(n - 1) = estimate.gains;
  candidate.gains(n - 1) = seed.gains(0);
  candidate.angles.head(n - 1) = estimate.angles.head(n - 1);
  candidate.angles(n - 1) = seed.aod(0);
  candidate.angles.segment(n, n - 1) = estimate.angles.tail(n - 1);
  candidate.angles(2 * n - 1) = seed.aoa(0);
  refine_support(candidate, y, grid, geom, lm_cfg);

  const double old_power = estimate.residual_norm * estimate.residual_norm;
  const double new_power = candidate.residual_norm * candidate.residual_norm;
  const double significant =
      std::max(10.0 * y.noise_variance, 1e-12 * y.y.squaredNorm());
  if (new_power >= old_power - significant) return false;
  estimate = std::move(candidate);
  return true;
}

// Drop paths below the per-path SNR floor, re-solving the surviving gains.
// Returns true if anything was pruned. A zero noise level disables pruning.
bool prune_support(ChannelEstimate& estimate, const ObservationBatch& y,
                   const PilotGrid& grid, const ArrayGeometry& geom,
                   double gain_snr_floor_db) {
  if (y.noise_variance <= 0.0 || estimate.empty()) return false;
  const double min_power =
      std::pow(10.0, gain_snr_floor_db / 10.0) * y.noise_variance;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index l = 0; l < estimate.path_count(); ++l) {
    if (std::norm(estimate.gains(l)) >= min_power) keep.push_back(l);
  }
  if (static_cast<Eigen::Index>(keep.size()) == estimate.path_count()) {
    return false;
  }
  estimate = keep_paths(estimate, keep);
  if (estimate.empty()) {
    estimate.residual_norm = y.y.norm();
  } else {
    const ComplexMatrix phi = build_phi(estimate.angles, grid, geom);
    estimate.gains = pseudo_inverse(phi) * y.y;
    estimate.residual_norm = (y.y - phi * estimate.gains).norm();
  }
  return true;
}

}  // namespace

ChannelEstimate sic_starting_point(const ObservationBatch& y,
                                   const PilotGrid& grid,
                                   const ArrayGeometry& geom,
                                   const SicConfig& cfg) {
  const Eigen::Index m_r = grid.m_r();
  ComplexVector residual = y.y;

  std::vector<Complex> gains;
  std::vector<double> aods, aoas;
  for (int l = 0; l < cfg.max_paths; ++l) {
    if (residual.norm() == 0.0) break;

    Eigen::Index peak = 0;
    residual.cwiseAbs().maxCoeff(&peak);
    const Eigen::Index q = peak % m_r;
    const Eigen::Index p = peak / m_r;
    const double aod = grid.tx_directions(p);
    const double aoa = grid.rx_directions(q);

    RealVector pair(2);
    pair << aod, aoa;
    const ComplexVector h = build_phi(pair, grid, geom).col(0);
    const Complex gain = h.dot(residual) / h.squaredNorm();
    if (std::abs(gain) < cfg.gain_threshold) break;

    residual -= h * gain;
    gains.push_back(gain);
    aods.push_back(aod);
    aoas.push_back(aoa);
  }
  return make_estimate(gains, aods, aoas, residual.norm());
}

ComplexVector projection_residual(const RealVector& angles,
                                  const ObservationBatch& y,
                                  const PilotGrid& grid,
                                  const ArrayGeometry& geom) {
  if (angles.size() == 0) return y.y;
  const ComplexMatrix phi = build_phi(angles, grid, geom);
  const ComplexMatrix pinv = pseudo_inverse(phi);
  return y.y - phi * (pinv * y.y);
}

RealVector stack_real(const ComplexVector& v) {
  RealVector out(2 * v.size());
  out.head(v.size()) = v.real();
  out.tail(v.size()) = v.imag();
  return out;
}

RealMatrix residual_jacobian(const RealVector& angles,
                             const ObservationBatch& y, const PilotGrid& grid,
                             const ArrayGeometry& geom) {
  FitState fit;
  compute_fit(angles, y, grid, geom, fit);
  return jacobian_from_fit(fit, grid);
}

bool merge_colliding_paths(ChannelEstimate& estimate,
                           const ObservationBatch& y, const PilotGrid& grid,
                           const ArrayGeometry& geom,
                           double correlation_threshold) {
  bool merged_any = false;
  while (estimate.path_count() > 1) {
    const ComplexMatrix phi = build_phi(estimate.angles, grid, geom);
    Eigen::Index drop = -1;
    for (Eigen::Index i = 0; i < phi.cols() && drop < 0; ++i) {
      for (Eigen::Index j = i + 1; j < phi.cols() && drop < 0; ++j) {
        const double corr = std::abs(phi.col(i).dot(phi.col(j))) /
                            (phi.col(i).norm() * phi.col(j).norm());
        if (corr > correlation_threshold) {
          drop = std::abs(estimate.gains(i)) >= std::abs(estimate.gains(j))
                     ? j
                     : i;
        }
      }
    }
    if (drop < 0) break;

    std::vector<Eigen::Index> keep;
    for (Eigen::Index l = 0; l < estimate.path_count(); ++l) {
      if (l != drop) keep.push_back(l);
    }
    estimate = keep_paths(estimate, keep);
    merged_any = true;
  }

  if (merged_any && !estimate.empty()) {
    const ComplexMatrix phi = build_phi(estimate.angles, grid, geom);
    estimate.gains = pseudo_inverse(phi) * y.y;
    estimate.residual_norm = (y.y - phi * estimate.gains).norm();
  }
  return merged_any;
}

ChannelEstimate acquire(const ObservationBatch& y, const PilotGrid& grid,
                        const ArrayGeometry& geom, const SicConfig& sic_cfg,
                        const LMConfig& lm_cfg, double gain_snr_floor_db) {
  ChannelEstimate estimate = sic_starting_point(y, grid, geom, sic_cfg);
  if (estimate.empty()) return estimate;
  merge_colliding_paths(estimate, y, grid, geom);
  refine_support(estimate, y, grid, geom, lm_cfg);
  disambiguate_endfire(estimate, y, grid, geom, lm_cfg);

  // Iterate repair and pruning to a stable support. A strong off-grid path
  // can soak up several SIC seeds; those turn into weak fitters that the
  // prune clears, freeing capacity for the paths the seeds never reached.
  for (int attempt = 0; attempt < sic_cfg.max_paths; ++attempt) {
    while (estimate.path_count() < sic_cfg.max_paths) {
      if (!repair_support(estimate, y, grid, geom, lm_cfg)) break;
    }
    if (!prune_support(estimate, y, grid, geom, gain_snr_floor_db)) break;
    if (estimate.empty()) break;
    refine_support(estimate, y, grid, geom, lm_cfg);
    disambiguate_endfire(estimate, y, grid, geom, lm_cfg);
  }
  return estimate;
}

void write_channel_estimate(std::ostream& os,
                            const ChannelEstimate& estimate) {
  write_path_set(os, estimate.as_path_set());
}

}  // namespace mmce
