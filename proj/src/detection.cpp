#include "mmce/detection.hpp"

#include <stdexcept>

namespace mmce {

DetectorConfig DetectorConfig::for_grid(double p_fa, Eigen::Index m_t,
                                        Eigen::Index m_r) {
  DetectorConfig cfg;
  cfg.p_fa = p_fa;
  cfg.dof = static_cast<int>(2 * m_t * m_r);
  cfg.gamma = detector_threshold(p_fa, m_t, m_r);
  return cfg;
}

double detector_threshold(double p_fa, Eigen::Index m_t, Eigen::Index m_r) {
  return 0.5 * chi_squared_quantile(p_fa, static_cast<int>(2 * m_t * m_r));
}

double change_statistic(const ObservationBatch& y, const ComplexVector& alpha,
                        const RealVector& theta, const PilotGrid& grid,
                        const ArrayGeometry& geom) {
  if (!(y.noise_variance > 0.0)) {
    throw std::invalid_argument("change_statistic: noise variance must be > 0");
  }
  const ComplexMatrix phi = build_phi(theta, grid, geom);
  const ComplexVector residual = y.y - phi * alpha;
  return residual.squaredNorm() / y.noise_variance;
}

DetectionDecision detect(const ObservationBatch& y,
                         const TrackerState& tracker, const DetectorConfig& cfg,
                         const PilotGrid& grid, const ArrayGeometry& geom) {
  DetectionDecision decision;
  decision.statistic =
      change_statistic(y, tracker.alpha, tracker.theta_hat, grid, geom);
  decision.threshold = cfg.gamma;
  decision.changed = decision.statistic > decision.threshold;
  return decision;
}

}  // namespace mmce
