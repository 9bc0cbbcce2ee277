#pragma once

#include <iosfwd>

#include "mmce/numerics.hpp"

namespace mmce {

struct ArrayGeometry {
  int n_t = 16;  // transmit antennas
  int n_r = 16;  // receive antennas
};

/// Ground-truth multipath state: per-path complex gain plus the angle vector
/// laid out as [aod_1 .. aod_L, aoa_1 .. aoa_L], all angles in [0, pi].
struct PathSet {
  ComplexVector gains;  // length L
  RealVector angles;    // length 2L

  Eigen::Index path_count() const { return gains.size(); }
  double aod(Eigen::Index l) const { return angles(l); }
  double aoa(Eigen::Index l) const { return angles(path_count() + l); }
};

struct DynamicsConfig {
  double sigma_u = 0.0;          // angle random-walk std dev per slot, rad
  double arrival_rate = 500.0;   // new paths per second
  double departure_rate = 200.0; // per-path departures per second
  double slot_duration = 1e-4;   // seconds
  double gain_variance = 256.0;  // variance of a new path's complex gain

  double arrival_probability() const { return arrival_rate * slot_duration; }
  double departure_probability() const {
    return departure_rate * slot_duration;
  }
};

/// Half-wavelength ULA response, k-th entry exp(-j pi k cos(angle)) / sqrt(n).
ComplexVector tx_steering_vector(double aod, int n_t);
ComplexVector rx_steering_vector(double aoa, int n_r);

/// H = sum_l gain_l * e_r(aoa_l) e_t^H(aod_l); zero paths give the zero
/// matrix.
ComplexMatrix assemble_channel(const PathSet& paths, const ArrayGeometry& geom);

/// Reflects an angle back into [0, pi]. Reflection preserves the cosine, so
/// the channel seen through the steering vectors is unchanged.
double reflect_into_angle_range(double angle);

/// One slot of channel evolution: independent per-path departures, at most
/// one arrival (slot-level Bernoulli process), and a Gaussian random-walk
/// step on surviving angles. Gains of survivors are untouched. The returned
/// flag is true iff any arrival or departure occurred.
///
/// Draw order is fixed (departures in path order, then arrival, then angle
/// increments) so that a seed pins the whole trajectory.
std::pair<PathSet, bool> evolve_slot(const PathSet& paths,
                                     const DynamicsConfig& cfg, Rng& rng);

/// Draws a fresh path set: gains CN(0, gain_variance), angles uniform on
/// (0, pi).
PathSet random_path_set(Eigen::Index path_count, double gain_variance,
                        Rng& rng);

/// One path per line: Re(gain) Im(gain) aod aoa, 9 significant digits.
void write_path_set(std::ostream& os, const PathSet& paths);
PathSet read_path_set(std::istream& is);

}  // namespace mmce
