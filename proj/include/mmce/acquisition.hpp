#pragma once

#include <iosfwd>

#include "mmce/sounding.hpp"

namespace mmce {

/// Estimated channel parameters in the same layout as PathSet, plus the
/// Euclidean norm of the fit residual that produced them.
struct ChannelEstimate {
  ComplexVector gains;   // length L
  RealVector angles;     // length 2L, [aod..., aoa...]
  double residual_norm = 0.0;

  Eigen::Index path_count() const { return gains.size(); }
  bool empty() const { return gains.size() == 0; }
  double aod(Eigen::Index l) const { return angles(l); }
  double aoa(Eigen::Index l) const { return angles(path_count() + l); }

  PathSet as_path_set() const { return PathSet{gains, angles}; }
};

struct SicConfig {
  int max_paths = 5;
  double gain_threshold = 0.0;  // linear amplitude; paths below are discarded

  /// Threshold giving per-path SNR of 10 dB at the given noise level,
  /// mirroring the post-refinement pruning rule.
  static SicConfig for_noise(double noise_variance, int max_paths = 5) {
    SicConfig cfg;
    cfg.max_paths = max_paths;
    cfg.gain_threshold = std::sqrt(10.0 * noise_variance);
    return cfg;
  }
};

/// Matched-filter successive interference cancellation on the pilot grid:
/// repeatedly take the strongest residual entry, read its (rx, tx) direction
/// pair off the grid, estimate the gain by matched filter, subtract, stop at
/// max_paths or when the detected gain falls below the threshold (that last
/// path is discarded). Zero paths is a valid outcome.
ChannelEstimate sic_starting_point(const ObservationBatch& y,
                                   const PilotGrid& grid,
                                   const ArrayGeometry& geom,
                                   const SicConfig& cfg);

/// r(angles) = (I - Phi Phi^+) y, the residual of the gain-eliminated least
/// squares problem. Near-collinear columns are handled by the rank-truncated
/// pseudo-inverse.
ComplexVector projection_residual(const RealVector& angles,
                                  const ObservationBatch& y,
                                  const PilotGrid& grid,
                                  const ArrayGeometry& geom);

/// [Re; Im] stacking used for real-valued optimization over the angles.
RealVector stack_real(const ComplexVector& v);

/// Jacobian of the real-stacked projection residual w.r.t. the angle vector:
/// 2*m_r*m_t rows, 2L columns (AoDs first, then AoAs). Uses the analytic
/// derivative of the pseudo-inverse; only column l of d Phi / d angle_l is
/// nonzero, which collapses the three-term formula to rank-one updates.
RealMatrix residual_jacobian(const RealVector& angles,
                             const ObservationBatch& y, const PilotGrid& grid,
                             const ArrayGeometry& geom);

/// Merges estimated paths whose Phi columns are nearly collinear (absolute
/// normalized correlation above the threshold), keeping the stronger path of
/// each pair and re-solving all gains. Returns true if anything merged.
bool merge_colliding_paths(ChannelEstimate& estimate,
                           const ObservationBatch& y, const PilotGrid& grid,
                           const ArrayGeometry& geom,
                           double correlation_threshold = 0.95);

/// Full acquisition: SIC starting point, LM refinement of the angles over
/// the real-stacked projection residual with collision merging and endfire
/// disambiguation, then repair/prune rounds to a stable support. Repair
/// re-seeds one matched-filter pick from the fit residual while capacity
/// remains; the prune removes paths whose per-path SNR
/// |gain|^2 / noise_variance falls below gain_snr_floor_db. Gains always
/// come from the pseudo-inverse solve at the final angles.
ChannelEstimate acquire(const ObservationBatch& y, const PilotGrid& grid,
                        const ArrayGeometry& geom, const SicConfig& sic_cfg,
                        const LMConfig& lm_cfg = {},
                        double gain_snr_floor_db = 10.0);

void write_channel_estimate(std::ostream& os, const ChannelEstimate& estimate);

}  // namespace mmce
