#pragma once

#include "mmce/acquisition.hpp"

namespace mmce {

/// Kalman state for within-block angle tracking. Gains are frozen at their
/// acquisition values; only the angle vector and its error covariance evolve.
struct TrackerState {
  RealVector theta_hat;      // 2L, [aod..., aoa...]
  RealMatrix covariance;     // 2L x 2L, symmetric PSD
  ComplexVector alpha;       // L, fixed within the block
  RealMatrix process_noise;  // assumed angle-walk covariance, 2L x 2L
  double innovation_last = 0.0;  // Euclidean norm of the latest innovation

  Eigen::Index path_count() const { return alpha.size(); }
};

/// Starts a tracker from an acquisition result: theta copied over, zero
/// initial covariance, assumed walk covariance xi * I.
TrackerState tracker_init(const ChannelEstimate& estimate, double xi);

/// First-order observation model at the current state: predicted_y =
/// Phi(theta_hat) alpha, and the real-stacked sensitivity whose complex
/// column l is (d Phi / d angle_l) alpha = d_l alpha_l.
struct Linearization {
  RealMatrix c;             // 2*m_r*m_t x 2L
  ComplexVector predicted;  // m_r*m_t
};

Linearization linearize_observation(const TrackerState& state,
                                    const PilotGrid& grid,
                                    const ArrayGeometry& geom);

/// One predict-correct cycle on a slot's observation. The measurement
/// covariance in the real-stacked domain is (noise_variance / 2) I, since
/// the circularly symmetric noise splits evenly between real and imaginary
/// parts. Covariance update in Joseph form; the posterior covariance is
/// re-symmetrized and the angles reflected back into [0, pi].
TrackerState tracker_step(const TrackerState& state,
                          const ObservationBatch& y, const PilotGrid& grid,
                          const ArrayGeometry& geom);

}  // namespace mmce
