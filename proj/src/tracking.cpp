#include "mmce/tracking.hpp"

#include <stdexcept>

namespace mmce {

namespace {

// Complex sensitivity: column l is d_l * alpha_l with d_l the nonzero column
// of d Phi / d angle_l. Shared by the public real-stacked linearization and
// the filter update, which works in the complex domain throughout.
void complex_linearization(const TrackerState& state, const PilotGrid& grid,
                           const ArrayGeometry& geom, ComplexMatrix& c,
                           ComplexVector& predicted) {
  const Eigen::Index paths = state.path_count();
  const Eigen::Index m_t = grid.m_t();
  const Eigen::Index m_r = grid.m_r();
  const Eigen::Index m = m_t * m_r;
  const GainTables tables =
      compute_gain_tables(state.theta_hat, grid, geom, true);

  predicted = ComplexVector::Zero(m);
  c.resize(m, 2 * paths);
  for (Eigen::Index l = 0; l < paths; ++l) {
    for (Eigen::Index p = 0; p < m_t; ++p) {
      const auto rows = Eigen::seqN(p * m_r, m_r);
      predicted(rows) += state.alpha(l) * tables.tx(p, l) * tables.rx.col(l);
      c.col(l)(rows) = state.alpha(l) * tables.d_tx(p, l) * tables.rx.col(l);
      c.col(paths + l)(rows) =
          state.alpha(l) * tables.tx(p, l) * tables.d_rx.col(l);
    }
  }
}

}  // namespace

TrackerState tracker_init(const ChannelEstimate& estimate, double xi) {
  if (estimate.empty()) {
    throw std::invalid_argument("tracker_init: empty estimate");
  }
  if (!(xi > 0.0)) {
    throw std::invalid_argument("tracker_init: xi must be positive");
  }
  const Eigen::Index dim = estimate.angles.size();
  TrackerState state;
  state.theta_hat = estimate.angles;
  state.covariance = RealMatrix::Zero(dim, dim);
  state.alpha = estimate.gains;
  state.process_noise = xi * RealMatrix::Identity(dim, dim);
  return state;
}

Linearization linearize_observation(const TrackerState& state,
                                    const PilotGrid& grid,
                                    const ArrayGeometry& geom) {
  ComplexMatrix c;
  ComplexVector predicted;
  complex_linearization(state, grid, geom, c, predicted);

  Linearization lin;
  lin.predicted = predicted;
  lin.c.resize(2 * c.rows(), c.cols());
  lin.c.topRows(c.rows()) = c.real();
  lin.c.bottomRows(c.rows()) = c.imag();
  return lin;
}

TrackerState tracker_step(const TrackerState& state,
                          const ObservationBatch& y, const PilotGrid& grid,
                          const ArrayGeometry& geom) {
  const Eigen::Index dim = state.theta_hat.size();

  // Prediction: the walk model is an identity transition.
  const RealMatrix m_pred = state.covariance + state.process_noise;

  ComplexMatrix c;
  ComplexVector predicted;
  complex_linearization(state, grid, geom, c, predicted);
  const ComplexVector innovation_c = y.y - predicted;

  // Real-stacked quantities reduce to complex ones:
  //   C^T C = Re(c^H c),  C^T e = Re(c^H e_c),
  // with measurement covariance (sigma_v^2 / 2) I in the stacked domain.
  const double sigma = y.noise_variance / 2.0;
  const RealMatrix a = (c.adjoint() * c).real();
  const RealVector ct_innov = (c.adjoint() * innovation_c).real();

  // Kalman gain via the push-through identity:
  //   K = M C^T (sigma I + C M C^T)^-1 = M (sigma I + C^T C M)^-1 C^T,
  // so only a 2L x 2L system is ever factorized.
  const RealMatrix small = sigma * RealMatrix::Identity(dim, dim) + a * m_pred;
  Eigen::PartialPivLU<RealMatrix> lu(small);
  const RealMatrix b = lu.inverse();
  if (!b.allFinite()) {
    throw std::runtime_error("tracker_step: innovation covariance solve failed");
  }

  const RealMatrix mb = m_pred * b;
  const RealVector correction = mb * ct_innov;
  const RealMatrix kc = mb * a;  // K C, 2L x 2L

  TrackerState next = state;
  next.theta_hat = state.theta_hat + correction;
  for (Eigen::Index i = 0; i < dim; ++i) {
    next.theta_hat(i) = reflect_into_angle_range(next.theta_hat(i));
  }

  // Joseph form: (I - KC) M (I - KC)^T + sigma K K^T, with
  // K K^T = M B A B^T M.
  const RealMatrix i_kc = RealMatrix::Identity(dim, dim) - kc;
  RealMatrix m_post = i_kc * m_pred * i_kc.transpose() +
                      sigma * mb * a * mb.transpose();
  next.covariance = 0.5 * (m_post + m_post.transpose());
  next.innovation_last = innovation_c.norm();
  return next;
}

}  // namespace mmce
