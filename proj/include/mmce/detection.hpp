#pragma once

#include "mmce/tracking.hpp"

namespace mmce {

struct DetectorConfig {
  double p_fa = 0.05;
  double gamma = 0.0;  // threshold; derive with detector_threshold
  int dof = 0;         // 2 * m_r * m_t

  static DetectorConfig for_grid(double p_fa, Eigen::Index m_t,
                                 Eigen::Index m_r);
};

struct DetectionDecision {
  double statistic = 0.0;
  double threshold = 0.0;
  bool changed = false;
};

/// gamma = 0.5 * (right-tail chi-squared quantile at 2 m_r m_t dof). Under
/// ideal estimates twice the statistic is chi-squared with that many degrees
/// of freedom.
double detector_threshold(double p_fa, Eigen::Index m_t, Eigen::Index m_r);

/// L(y) = ||y - Phi(theta) alpha||^2 / sigma_v^2, the whitened residual
/// power of the current estimate.
double change_statistic(const ObservationBatch& y, const ComplexVector& alpha,
                        const RealVector& theta, const PilotGrid& grid,
                        const ArrayGeometry& geom);

/// The per-slot test at the tracker's posterior estimate.
DetectionDecision detect(const ObservationBatch& y, const TrackerState& tracker,
                         const DetectorConfig& cfg, const PilotGrid& grid,
                         const ArrayGeometry& geom);

}  // namespace mmce
