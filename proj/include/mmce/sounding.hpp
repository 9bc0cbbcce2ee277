#pragma once

#include <iosfwd>

#include "mmce/channel.hpp"

namespace mmce {

/// Pilot design: m_t beamforming and m_r combining directions with their
/// steering-vector matrices F (n_t x m_t) and W (n_r x m_r). Immutable after
/// construction.
struct PilotGrid {
  RealVector tx_directions;  // m_t angles, rad
  RealVector rx_directions;  // m_r angles, rad
  ComplexMatrix f;           // n_t x m_t, unit-norm columns
  ComplexMatrix w;           // n_r x m_r, unit-norm columns

  Eigen::Index m_t() const { return tx_directions.size(); }
  Eigen::Index m_r() const { return rx_directions.size(); }
  Eigen::Index pilot_count() const { return m_t() * m_r(); }
};

/// One slot of vectorized pilot measurements, combining index fastest.
struct ObservationBatch {
  ComplexVector y;             // length m_r * m_t
  double noise_variance = 0.0; // sigma_v^2
};

/// Nonuniform grid: split cos-space [-1, 1] into m equal bins and steer at
/// the arccosine of each bin center. Directions are returned in increasing
/// angle per the p = 1..m ordering of bin centers -1 + (2p-1)/m.
PilotGrid design_grid(Eigen::Index m_t, Eigen::Index m_r,
                      const ArrayGeometry& geom);

/// Inner product e^H(angle) e(grid_angle) for an n-element ULA, evaluated as
/// the explicit finite sum (1/n) sum_k exp(j pi k (cos angle - cos
/// grid_angle)); exact 1 at alignment, no 0/0 at equal cosines.
Complex beam_gain(double angle, double grid_angle, int n);

/// d/d(angle) of beam_gain.
Complex beam_gain_derivative(double angle, double grid_angle, int n);

/// Per-path beam gains against every pilot direction, packaged so that
/// column l of Phi is kron(tx.col(l), rx.col(l)). tx(p, l) is the transmit
/// gain of path l toward direction p; rx(q, l) the combining gain at
/// direction q. d_tx / d_rx hold the angle derivatives of the same entries.
struct GainTables {
  ComplexMatrix tx;    // m_t x L
  ComplexMatrix rx;    // m_r x L
  ComplexMatrix d_tx;  // m_t x L, d/d aod
  ComplexMatrix d_rx;  // m_r x L, d/d aoa
};

GainTables compute_gain_tables(const RealVector& angles, const PilotGrid& grid,
                               const ArrayGeometry& geom,
                               bool with_derivatives);

/// The m_r*m_t x L observation gain matrix: entry (q + p*m_r, l) is the
/// product of the rx gain at direction q and the tx gain at direction p for
/// path l. angles is the [aod..., aoa...] layout of PathSet.
ComplexMatrix build_phi(const RealVector& angles, const PilotGrid& grid,
                        const ArrayGeometry& geom);

enum class AngleKind { kAod, kAoa };

/// The only nonzero column of d Phi / d angle_l: for an AoD this is
/// kron(d_tx.col(l), rx.col(l)), for an AoA kron(tx.col(l), d_rx.col(l)).
ComplexVector build_phi_derivative_column(const RealVector& angles,
                                          Eigen::Index l, AngleKind kind,
                                          const PilotGrid& grid,
                                          const ArrayGeometry& geom);

/// y = vec(W^H H F) + v with v ~ CN(0, noise_variance I), columns of
/// W^H H F concatenated (combining index fastest).
ObservationBatch sound_channel(const ComplexMatrix& h, const PilotGrid& grid,
                               double noise_variance, Rng& rng);

/// Direction list, one angle per line, for coverage plots.
void write_grid_directions(std::ostream& os, const PilotGrid& grid);

}  // namespace mmce
