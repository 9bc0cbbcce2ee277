#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmce/detection.hpp"

namespace mmce {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// ||h_est - h_true||_F^2 / ||h_true||_F^2. Throws on a zero true channel.
double nmse_ratio(const ComplexMatrix& h_true, const ComplexMatrix& h_est);

/// Per-trial NMSE in dB, floored at -150 dB for exact estimates.
double nmse_db(const ComplexMatrix& h_true, const ComplexMatrix& h_est);

/// Aggregation rule: mean of the raw ratios first, then decibels.
double nmse_db_from_ratios(const std::vector<double>& ratios);

/// SNR = 10 log10(n_t n_r / sigma_v^2) with unit transmit power.
double snr_db(double sigma_v_squared, const ArrayGeometry& geom);
double sigma_v_squared_for_snr_db(double snr, const ArrayGeometry& geom);

struct BeamformerPair {
  ComplexVector f;  // transmit, unit norm
  ComplexVector w;  // receive, unit norm
  bool fallback = false;  // true when the estimate was zero
};

/// Top singular pair of the estimate (the induced-2-norm beamformer); a zero
/// estimate falls back to the first canonical beams, flagged.
BeamformerPair top_singular_beams(const ComplexMatrix& h_est);

/// R = log2(1 + |w^H H_true f|^2 / sigma_v^2) with (f, w) designed on the
/// estimate and applied to the truth.
double spectral_efficiency(const ComplexMatrix& h_true,
                           const ComplexMatrix& h_est,
                           double sigma_v_squared);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  ArrayGeometry geometry{16, 16};
  Eigen::Index m_t = 16;
  Eigen::Index m_r = 16;

  std::vector<double> snr_grid_db = {0, 5, 10, 15, 20, 25, 30};
  // Angle-walk variance sweep in multiples {0.5, 1, 2, 3.5} of (pi/180)^2.
  std::vector<double> sigma_u_sq_grid = {
      1.5230870989335429e-4, 3.0461741978670857e-4, 6.0923483957341714e-4,
      1.0661609692534800e-3};
  std::vector<Eigen::Index> grid_size_grid = {8, 12, 16, 24, 32};

  double arrival_rate = 500.0;    // paths per second
  double departure_rate = 200.0;  // per-path departures per second
  double slot_duration = 1e-4;    // seconds
  double symbol_rate = 2e7;       // symbols per second, for overhead figures

  int trials = 200;          // acquisition trials per grid point
  int blocks = 200;          // tracking blocks per grid point
  int slots_per_block = 50;  // tracking block length
  int slots = 200;           // integrated run length
  int initial_paths = 3;

  double snr_point_db = 20.0;          // operating point for fixed-SNR runs
  double sigma_u = 0.5 * 3.14159265358979323846 / 180.0;  // true walk std dev
  double assumed_xi = 1.2184696791468346e-3;  // (2 pi / 180)^2, tracker prior
  double p_fa = 0.05;
  double gamma_override = 0.0;  // > 0 replaces the derived threshold
  int sic_max_paths = 5;
  double gain_snr_floor_db = 10.0;

  std::uint64_t seed = 1;
  std::string out_dir = ".";

  double gain_variance() const {
    return static_cast<double>(geometry.n_t) * geometry.n_r;
  }
  /// Fraction of each slot spent on pilots: one pilot per beam pair.
  double pilot_overhead() const {
    return static_cast<double>(m_t * m_r) / (slot_duration * symbol_rate);
  }
  DynamicsConfig dynamics() const {
    DynamicsConfig d;
    d.sigma_u = sigma_u;
    d.arrival_rate = arrival_rate;
    d.departure_rate = departure_rate;
    d.slot_duration = slot_duration;
    d.gain_variance = gain_variance();
    return d;
  }
};

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepKind {
  kAcqVsSnr,
  kAcqVsGrid,
  kTrackVsSnr,
  kTrackVsGrid,
  kTrackVsSigma,
};

SweepKind sweep_kind_from_name(const std::string& name);
std::string sweep_kind_name(SweepKind kind);

struct MetricRecord {
  double x_value = 0.0;  // grid point (SNR dB, grid size, or sigma_u^2)
  int trial = 0;         // trial or block index
  double ratio = 0.0;    // raw NMSE ratio
  double value_db = 0.0; // nmse_db of this trial
};

struct ArmSeries {
  std::vector<MetricRecord> records;

  /// mean-of-ratios aggregate at one grid point, in dB
  double aggregate_db(double x_value) const;
  double std_db(double x_value) const;
};

/// arm name -> per-trial series. Arms: acquisition sweeps produce "search"
/// and "lm"; tracking sweeps add "kf" and "kf_acq_error".
using SweepResult = std::map<std::string, ArmSeries>;

/// Runs the requested arms (all of them when the filter is empty). The
/// estimator arms draw no randomness, so any subset sees the same channels
/// and observations as the full run.
SweepResult run_sweep(SweepKind kind, const ExperimentConfig& cfg,
                      const std::vector<std::string>& arm_filter = {});

/// One CSV per arm (per-trial rows) plus an _aggregate companion, written
/// under cfg.out_dir. arm_filter empty means all arms.
void write_sweep_csv(const SweepResult& result, SweepKind kind,
                     const ExperimentConfig& cfg,
                     const std::vector<std::string>& arm_filter = {});

// ---------------------------------------------------------------------------
// Integrated acquisition -> tracking -> detection loop
// ---------------------------------------------------------------------------

struct IntegratedSlotLog {
  int slot = 0;
  int true_paths = 0;
  bool true_change = false;
  bool declared_change = false;
  double statistic = 0.0;
  double threshold = 0.0;
  bool outage = false;        // no usable estimate this slot
  bool acquired = false;      // acquisition ran this slot
  bool zero_channel = false;  // true channel vanished (NMSE undefined)
  double nmse_db_value = 0.0; // integrated-scheme NMSE (NaN on zero channel)
  double r_ideal = 0.0;
  double r_system = 0.0;
  double r_sic = 0.0;
  double r_lm = 0.0;
  double r_kf_genie = 0.0;    // tracker re-seeded from truth at every change
  double trace_covariance = 0.0;
  double innovation = 0.0;
  RealVector theta_hat;       // tracker posterior (empty on outage)
};

struct IntegratedResult {
  std::vector<IntegratedSlotLog> slots;
  int true_changes = 0;
  int detected_true = 0;   // true change and declared
  int missed = 0;          // true change, not declared
  int false_alarms = 0;    // declared without a true change
  int h0_slots = 0;        // slots without a true change
};

IntegratedResult run_integrated(const ExperimentConfig& cfg);

/// integrated_slots.csv, integrated_detection.csv, integrated_tracker.csv and
/// manifest.txt under cfg.out_dir. Byte-stable for a fixed config and seed.
void write_integrated_csv(const IntegratedResult& result,
                          const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Detector calibration
// ---------------------------------------------------------------------------

struct CalibrationResult {
  int slots = 0;
  int false_alarms = 0;
  double rate = 0.0;
  double p_fa = 0.0;
  double threshold = 0.0;
};

/// H0 Monte Carlo with ideal estimates: fresh random channel each slot, the
/// detector fed the exact parameters, so the statistic is pure noise.
CalibrationResult calibrate_detector_ideal(const ExperimentConfig& cfg,
                                           int n_slots);

void write_calibration_csv(const CalibrationResult& result,
                           const ExperimentConfig& cfg);

/// Config echo + seed + library version, for provenance next to every CSV.
void write_manifest(const ExperimentConfig& cfg, const std::string& tool_name);

extern const char* kLibraryVersion;

}  // namespace mmce
