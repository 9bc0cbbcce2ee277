#include "mmce/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace mmce {

const char* kLibraryVersion = "0.1.0";

namespace {

constexpr double kNmseFloorDb = -150.0;

// Stream identifiers for child-seed derivation; trial k of grid point g in
// experiment e owns the seed derive(master, {e, g, k}).
enum StreamId : std::uint64_t {
  kStreamAcqSnr = 1,
  kStreamAcqGrid = 2,
  kStreamTrackSnr = 3,
  kStreamTrackGrid = 4,
  kStreamTrackSigma = 5,
  kStreamIntegrated = 6,
  kStreamCalibrate = 7,
};

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

ChannelEstimate estimate_from_truth(const PathSet& paths) {
  ChannelEstimate est;
  est.gains = paths.gains;
  est.angles = paths.angles;
  est.residual_norm = 0.0;
  return est;
}

ComplexMatrix estimate_channel_matrix(const ChannelEstimate& est,
                                      const ArrayGeometry& geom) {
  if (est.empty()) return ComplexMatrix::Zero(geom.n_r, geom.n_t);
  return assemble_channel(est.as_path_set(), geom);
}

ComplexMatrix tracker_channel_matrix(const TrackerState& tracker,
                                     const ArrayGeometry& geom) {
  return assemble_channel(PathSet{tracker.alpha, tracker.theta_hat}, geom);
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double nmse_ratio(const ComplexMatrix& h_true, const ComplexMatrix& h_est) {
  if (h_true.rows() != h_est.rows() || h_true.cols() != h_est.cols()) {
    throw std::invalid_argument("nmse_ratio: dimension mismatch");
  }
  const double denom = h_true.squaredNorm();
  if (denom == 0.0) {
    throw std::invalid_argument("nmse_ratio: zero true channel");
  }
  return (h_est - h_true).squaredNorm() / denom;
}

double nmse_db(const ComplexMatrix& h_true, const ComplexMatrix& h_est) {
  const double ratio = nmse_ratio(h_true, h_est);
  if (ratio <= 0.0) return kNmseFloorDb;
  return std::max(10.0 * std::log10(ratio), kNmseFloorDb);
}

double nmse_db_from_ratios(const std::vector<double>& ratios) {
  if (ratios.empty()) {
    throw std::invalid_argument("nmse_db_from_ratios: no samples");
  }
  double mean = 0.0;
  for (double r : ratios) mean += r;
  mean /= static_cast<double>(ratios.size());
  if (mean <= 0.0) return kNmseFloorDb;
  return std::max(10.0 * std::log10(mean), kNmseFloorDb);
}

double snr_db(double sigma_v_squared, const ArrayGeometry& geom) {
  if (!(sigma_v_squared > 0.0)) {
    throw std::invalid_argument("snr_db: noise variance must be > 0");
  }
  return 10.0 *
         std::log10(static_cast<double>(geom.n_t) * geom.n_r / sigma_v_squared);
}

double sigma_v_squared_for_snr_db(double snr, const ArrayGeometry& geom) {
  return static_cast<double>(geom.n_t) * geom.n_r *
         std::pow(10.0, -snr / 10.0);
}

BeamformerPair top_singular_beams(const ComplexMatrix& h_est) {
  BeamformerPair pair;
  if (h_est.norm() == 0.0) {
    pair.f = ComplexVector::Zero(h_est.cols());
    pair.w = ComplexVector::Zero(h_est.rows());
    pair.f(0) = Complex(1.0, 0.0);
    pair.w(0) = Complex(1.0, 0.0);
    pair.fallback = true;
    return pair;
  }
  Eigen::JacobiSVD<ComplexMatrix> svd(h_est,
                                      Eigen::ComputeThinU | Eigen::ComputeThinV);
  pair.w = svd.matrixU().col(0);
  pair.f = svd.matrixV().col(0);
  return pair;
}

double spectral_efficiency(const ComplexMatrix& h_true,
                           const ComplexMatrix& h_est,
                           double sigma_v_squared) {
  const BeamformerPair beams = top_singular_beams(h_est);
  const Complex gain = beams.w.dot(h_true * beams.f);
  return std::log2(1.0 + std::norm(gain) / sigma_v_squared);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["n_t"] = cfg.geometry.n_t;
  j["n_r"] = cfg.geometry.n_r;
  j["m_t"] = cfg.m_t;
  j["m_r"] = cfg.m_r;
  j["snr_grid_db"] = cfg.snr_grid_db;
  j["sigma_u_sq_grid"] = cfg.sigma_u_sq_grid;
  j["grid_size_grid"] = cfg.grid_size_grid;
  j["arrival_rate"] = cfg.arrival_rate;
  j["departure_rate"] = cfg.departure_rate;
  j["slot_duration"] = cfg.slot_duration;
  j["symbol_rate"] = cfg.symbol_rate;
  j["trials"] = cfg.trials;
  j["blocks"] = cfg.blocks;
  j["slots_per_block"] = cfg.slots_per_block;
  j["slots"] = cfg.slots;
  j["initial_paths"] = cfg.initial_paths;
  j["snr_point_db"] = cfg.snr_point_db;
  j["sigma_u"] = cfg.sigma_u;
  j["assumed_xi"] = cfg.assumed_xi;
  j["p_fa"] = cfg.p_fa;
  j["gamma_override"] = cfg.gamma_override;
  j["sic_max_paths"] = cfg.sic_max_paths;
  j["gain_snr_floor_db"] = cfg.gain_snr_floor_db;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  return j;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  nlohmann::json j;
  in >> j;

  ExperimentConfig cfg;
  cfg.geometry.n_t = j.value("n_t", cfg.geometry.n_t);
  cfg.geometry.n_r = j.value("n_r", cfg.geometry.n_r);
  cfg.m_t = j.value("m_t", cfg.m_t);
  cfg.m_r = j.value("m_r", cfg.m_r);
  cfg.snr_grid_db = j.value("snr_grid_db", cfg.snr_grid_db);
  cfg.sigma_u_sq_grid = j.value("sigma_u_sq_grid", cfg.sigma_u_sq_grid);
  if (j.contains("grid_size_grid")) {
    cfg.grid_size_grid.clear();
    for (const auto& v : j["grid_size_grid"]) {
      cfg.grid_size_grid.push_back(v.get<Eigen::Index>());
    }
  }
  cfg.arrival_rate = j.value("arrival_rate", cfg.arrival_rate);
  cfg.departure_rate = j.value("departure_rate", cfg.departure_rate);
  cfg.slot_duration = j.value("slot_duration", cfg.slot_duration);
  cfg.symbol_rate = j.value("symbol_rate", cfg.symbol_rate);
  cfg.trials = j.value("trials", cfg.trials);
  cfg.blocks = j.value("blocks", cfg.blocks);
  cfg.slots_per_block = j.value("slots_per_block", cfg.slots_per_block);
  cfg.slots = j.value("slots", cfg.slots);
  cfg.initial_paths = j.value("initial_paths", cfg.initial_paths);
  cfg.snr_point_db = j.value("snr_point_db", cfg.snr_point_db);
  cfg.sigma_u = j.value("sigma_u", cfg.sigma_u);
  cfg.assumed_xi = j.value("assumed_xi", cfg.assumed_xi);
  cfg.p_fa = j.value("p_fa", cfg.p_fa);
  cfg.gamma_override = j.value("gamma_override", cfg.gamma_override);
  cfg.sic_max_paths = j.value("sic_max_paths", cfg.sic_max_paths);
  cfg.gain_snr_floor_db = j.value("gain_snr_floor_db", cfg.gain_snr_floor_db);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_config: cannot open " + path);
  out << config_to_json(cfg).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

SweepKind sweep_kind_from_name(const std::string& name) {
  if (name == "acq_vs_snr") return SweepKind::kAcqVsSnr;
  if (name == "acq_vs_grid") return SweepKind::kAcqVsGrid;
  if (name == "track_vs_snr") return SweepKind::kTrackVsSnr;
  if (name == "track_vs_grid") return SweepKind::kTrackVsGrid;
  if (name == "track_vs_sigma") return SweepKind::kTrackVsSigma;
  throw std::invalid_argument("unknown sweep kind: " + name);
}

std::string sweep_kind_name(SweepKind kind) {
  switch (kind) {
    case SweepKind::kAcqVsSnr: return "acq_vs_snr";
    case SweepKind::kAcqVsGrid: return "acq_vs_grid";
    case SweepKind::kTrackVsSnr: return "track_vs_snr";
    case SweepKind::kTrackVsGrid: return "track_vs_grid";
    case SweepKind::kTrackVsSigma: return "track_vs_sigma";
  }
  return "unknown";
}

double ArmSeries::aggregate_db(double x_value) const {
  std::vector<double> ratios;
  for (const auto& r : records) {
    if (r.x_value == x_value) ratios.push_back(r.ratio);
  }
  return nmse_db_from_ratios(ratios);
}

double ArmSeries::std_db(double x_value) const {
  std::vector<double> dbs;
  for (const auto& r : records) {
    if (r.x_value == x_value) dbs.push_back(r.value_db);
  }
  if (dbs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double d : dbs) mean += d;
  mean /= static_cast<double>(dbs.size());
  double var = 0.0;
  for (double d : dbs) var += (d - mean) * (d - mean);
  var /= static_cast<double>(dbs.size() - 1);
  return std::sqrt(var);
}

namespace {

struct ArmSelect {
  const std::vector<std::string>* filter;
  bool operator()(const char* arm) const {
    if (filter == nullptr || filter->empty()) return true;
    return std::find(filter->begin(), filter->end(), arm) != filter->end();
  }
};

void record(SweepResult& result, const std::string& arm, double x, int trial,
            double ratio) {
  MetricRecord r;
  r.x_value = x;
  r.trial = trial;
  r.ratio = ratio;
  r.value_db = ratio <= 0.0 ? kNmseFloorDb
                            : std::max(10.0 * std::log10(ratio), kNmseFloorDb);
  result[arm].records.push_back(r);
}

void run_acquisition_point(SweepResult& result, const ExperimentConfig& cfg,
                           std::uint64_t stream, std::size_t point_idx,
                           double x_value, const PilotGrid& grid,
                           double sigma_v_sq, const ArmSelect& wanted) {
  const ArrayGeometry geom = cfg.geometry;
  const SicConfig sic{cfg.sic_max_paths, 0.0};  // estimate L_max paths, prune after LM
  for (int trial = 0; trial < cfg.trials; ++trial) {
    Rng rng(Rng::derive(cfg.seed, {stream, point_idx,
                                   static_cast<std::uint64_t>(trial)}));
    const PathSet paths =
        random_path_set(cfg.initial_paths, cfg.gain_variance(), rng);
    const ComplexMatrix h = assemble_channel(paths, geom);
    const ObservationBatch y = sound_channel(h, grid, sigma_v_sq, rng);

    if (wanted("search")) {
      const ChannelEstimate est = sic_starting_point(y, grid, geom, sic);
      record(result, "search", x_value, trial,
             nmse_ratio(h, estimate_channel_matrix(est, geom)));
    }
    if (wanted("lm")) {
      const ChannelEstimate est =
          acquire(y, grid, geom, sic, LMConfig{}, cfg.gain_snr_floor_db);
      record(result, "lm", x_value, trial,
             nmse_ratio(h, estimate_channel_matrix(est, geom)));
    }
  }
}

void run_tracking_point(SweepResult& result, const ExperimentConfig& cfg,
                        std::uint64_t stream, std::size_t point_idx,
                        double x_value, const PilotGrid& grid,
                        double sigma_v_sq, double sigma_u,
                        const ArmSelect& wanted) {
  const ArrayGeometry geom = cfg.geometry;
  const SicConfig sic{cfg.sic_max_paths, 0.0};  // estimate L_max paths, prune after LM
  DynamicsConfig walk;  // angles only: no births or deaths inside a block
  walk.sigma_u = sigma_u;
  walk.arrival_rate = 0.0;
  walk.departure_rate = 0.0;
  walk.slot_duration = cfg.slot_duration;
  walk.gain_variance = cfg.gain_variance();

  for (int block = 0; block < cfg.blocks; ++block) {
    Rng rng(Rng::derive(cfg.seed, {stream, point_idx,
                                   static_cast<std::uint64_t>(block)}));
    PathSet paths =
        random_path_set(cfg.initial_paths, cfg.gain_variance(), rng);

    TrackerState kf = tracker_init(estimate_from_truth(paths), cfg.assumed_xi);
    // Acquisition-error arm: the gain vector the tracker holds is off by one
    // draw of CN(0, sigma_v^2 I_L).
    ChannelEstimate est_err = estimate_from_truth(paths);
    est_err.gains +=
        sample_complex_gaussian(rng, sigma_v_sq, est_err.gains.size());
    TrackerState kf_err = tracker_init(est_err, cfg.assumed_xi);

    double sum_search = 0.0;
    double sum_lm = 0.0;
    double sum_kf = 0.0;
    double sum_kf_err = 0.0;
    for (int slot = 0; slot < cfg.slots_per_block; ++slot) {
      if (slot > 0) {
        paths = evolve_slot(paths, walk, rng).first;
      }
      const ComplexMatrix h = assemble_channel(paths, geom);
      const ObservationBatch y = sound_channel(h, grid, sigma_v_sq, rng);

      if (wanted("search")) {
        const ChannelEstimate est = sic_starting_point(y, grid, geom, sic);
        sum_search += nmse_ratio(h, estimate_channel_matrix(est, geom));
      }
      if (wanted("lm")) {
        const ChannelEstimate est =
            acquire(y, grid, geom, sic, LMConfig{}, cfg.gain_snr_floor_db);
        sum_lm += nmse_ratio(h, estimate_channel_matrix(est, geom));
      }

      if (slot > 0) {
        if (wanted("kf")) kf = tracker_step(kf, y, grid, geom);
        if (wanted("kf_acq_error")) {
          kf_err = tracker_step(kf_err, y, grid, geom);
        }
      }
      if (wanted("kf")) {
        sum_kf += nmse_ratio(h, tracker_channel_matrix(kf, geom));
      }
      if (wanted("kf_acq_error")) {
        sum_kf_err += nmse_ratio(h, tracker_channel_matrix(kf_err, geom));
      }
    }

    const double n = static_cast<double>(cfg.slots_per_block);
    if (wanted("search")) record(result, "search", x_value, block, sum_search / n);
    if (wanted("lm")) record(result, "lm", x_value, block, sum_lm / n);
    if (wanted("kf")) record(result, "kf", x_value, block, sum_kf / n);
    if (wanted("kf_acq_error")) {
      record(result, "kf_acq_error", x_value, block, sum_kf_err / n);
    }
  }
}

}  // namespace

SweepResult run_sweep(SweepKind kind, const ExperimentConfig& cfg,
                      const std::vector<std::string>& arm_filter) {
  SweepResult result;
  const ArrayGeometry geom = cfg.geometry;
  const ArmSelect wanted{&arm_filter};

  switch (kind) {
    case SweepKind::kAcqVsSnr: {
      const PilotGrid grid = design_grid(cfg.m_t, cfg.m_r, geom);
      for (std::size_t i = 0; i < cfg.snr_grid_db.size(); ++i) {
        run_acquisition_point(
            result, cfg, kStreamAcqSnr, i, cfg.snr_grid_db[i], grid,
            sigma_v_squared_for_snr_db(cfg.snr_grid_db[i], geom), wanted);
      }
      break;
    }
    case SweepKind::kAcqVsGrid: {
      const double sv = sigma_v_squared_for_snr_db(cfg.snr_point_db, geom);
      for (std::size_t i = 0; i < cfg.grid_size_grid.size(); ++i) {
        const Eigen::Index m = cfg.grid_size_grid[i];
        run_acquisition_point(result, cfg, kStreamAcqGrid, i,
                              static_cast<double>(m),
                              design_grid(m, m, geom), sv, wanted);
      }
      break;
    }
    case SweepKind::kTrackVsSnr: {
      const PilotGrid grid = design_grid(cfg.m_t, cfg.m_r, geom);
      for (std::size_t i = 0; i < cfg.snr_grid_db.size(); ++i) {
        run_tracking_point(
            result, cfg, kStreamTrackSnr, i, cfg.snr_grid_db[i], grid,
            sigma_v_squared_for_snr_db(cfg.snr_grid_db[i], geom),
            cfg.sigma_u, wanted);
      }
      break;
    }
    case SweepKind::kTrackVsGrid: {
      const double sv = sigma_v_squared_for_snr_db(cfg.snr_point_db, geom);
      for (std::size_t i = 0; i < cfg.grid_size_grid.size(); ++i) {
        const Eigen::Index m = cfg.grid_size_grid[i];
        run_tracking_point(result, cfg, kStreamTrackGrid, i,
                           static_cast<double>(m), design_grid(m, m, geom), sv,
                           cfg.sigma_u, wanted);
      }
      break;
    }
    case SweepKind::kTrackVsSigma: {
      const PilotGrid grid = design_grid(cfg.m_t, cfg.m_r, geom);
      const double sv = sigma_v_squared_for_snr_db(cfg.snr_point_db, geom);
      for (std::size_t i = 0; i < cfg.sigma_u_sq_grid.size(); ++i) {
        run_tracking_point(result, cfg, kStreamTrackSigma, i,
                           cfg.sigma_u_sq_grid[i], grid, sv,
                           std::sqrt(cfg.sigma_u_sq_grid[i]), wanted);
      }
      break;
    }
  }
  return result;
}

namespace {

std::vector<double> distinct_x(const ArmSeries& series) {
  std::vector<double> xs;
  for (const auto& r : series.records) {
    if (xs.empty() || xs.back() != r.x_value) xs.push_back(r.x_value);
  }
  return xs;
}

}  // namespace

void write_sweep_csv(const SweepResult& result, SweepKind kind,
                     const ExperimentConfig& cfg,
                     const std::vector<std::string>& arm_filter) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const std::string base = sweep_kind_name(kind);

  for (const auto& [arm, series] : result) {
    if (!arm_filter.empty() &&
        std::find(arm_filter.begin(), arm_filter.end(), arm) ==
            arm_filter.end()) {
      continue;
    }
    {
      std::ofstream out(fs::path(cfg.out_dir) / (base + "_" + arm + ".csv"));
      out << "experiment,x_value,trial,nmse_db\n";
      for (const auto& r : series.records) {
        out << base << "," << fmt_g(r.x_value) << "," << r.trial << ","
            << fmt_g(r.value_db) << "\n";
      }
    }
    {
      std::ofstream out(fs::path(cfg.out_dir) /
                        (base + "_" + arm + "_aggregate.csv"));
      out << "experiment,x_value,n,mean_db,std_db\n";
      for (double x : distinct_x(series)) {
        int n = 0;
        for (const auto& r : series.records) {
          if (r.x_value == x) ++n;
        }
        out << base << "," << fmt_g(x) << "," << n << ","
            << fmt_g(series.aggregate_db(x)) << "," << fmt_g(series.std_db(x))
            << "\n";
      }
    }
  }
  write_manifest(cfg, base);
}

// ---------------------------------------------------------------------------
// Integrated loop
// ---------------------------------------------------------------------------

IntegratedResult run_integrated(const ExperimentConfig& cfg) {
  const ArrayGeometry geom = cfg.geometry;
  const PilotGrid grid = design_grid(cfg.m_t, cfg.m_r, geom);
  const double sigma_v_sq = sigma_v_squared_for_snr_db(cfg.snr_point_db, geom);
  const SicConfig sic{cfg.sic_max_paths, 0.0};  // estimate L_max paths, prune after LM
  DetectorConfig det = DetectorConfig::for_grid(cfg.p_fa, cfg.m_t, cfg.m_r);
  if (cfg.gamma_override > 0.0) det.gamma = cfg.gamma_override;

  Rng rng(Rng::derive(cfg.seed, {kStreamIntegrated}));
  const DynamicsConfig dynamics = cfg.dynamics();

  IntegratedResult result;
  PathSet paths;
  TrackerState tracker;
  bool have_tracker = false;
  TrackerState genie;
  bool have_genie = false;

  for (int slot = 0; slot < cfg.slots; ++slot) {
    bool true_change = false;
    if (slot == 0) {
      paths = random_path_set(cfg.initial_paths, cfg.gain_variance(), rng);
    } else {
      auto evolved = evolve_slot(paths, dynamics, rng);
      paths = std::move(evolved.first);
      true_change = evolved.second;
    }
    const ComplexMatrix h = assemble_channel(paths, geom);
    const bool zero_channel = paths.path_count() == 0;
    const ObservationBatch y = sound_channel(h, grid, sigma_v_sq, rng);

    // Genie arm for the no-acquisition-error comparison: re-seeded from the
    // truth at every real change, tracked in between.
    if (slot == 0 || true_change) {
      if (zero_channel) {
        have_genie = false;
      } else {
        genie = tracker_init(estimate_from_truth(paths), cfg.assumed_xi);
        have_genie = true;
      }
    } else if (have_genie) {
      genie = tracker_step(genie, y, grid, geom);
    }

    IntegratedSlotLog log;
    log.slot = slot;
    log.true_paths = static_cast<int>(paths.path_count());
    log.true_change = true_change;
    log.zero_channel = zero_channel;
    log.threshold = det.gamma;

    bool acquired = false;
    if (!have_tracker) {
      const ChannelEstimate est =
          acquire(y, grid, geom, sic, LMConfig{}, cfg.gain_snr_floor_db);
      if (est.empty()) {
        log.outage = true;
      } else {
        tracker = tracker_init(est, cfg.assumed_xi);
        have_tracker = true;
        acquired = true;
      }
    } else {
      tracker = tracker_step(tracker, y, grid, geom);
    }

    if (have_tracker) {
      const DetectionDecision decision = detect(y, tracker, det, grid, geom);
      log.statistic = decision.statistic;
      log.declared_change = decision.changed;
      if (decision.changed && !acquired) {
        // Re-acquire from the same slot's pilots.
        const ChannelEstimate est =
            acquire(y, grid, geom, sic, LMConfig{}, cfg.gain_snr_floor_db);
        if (est.empty()) {
          have_tracker = false;
          log.outage = true;
        } else {
          tracker = tracker_init(est, cfg.assumed_xi);
          acquired = true;
        }
      }
    }
    log.acquired = acquired;

    // Per-slot metrics for every arm.
    const ComplexMatrix h_system =
        have_tracker ? tracker_channel_matrix(tracker, geom)
                     : ComplexMatrix::Zero(geom.n_r, geom.n_t);
    const ChannelEstimate est_sic = sic_starting_point(y, grid, geom, sic);
    const ComplexMatrix h_sic = estimate_channel_matrix(est_sic, geom);
    const ChannelEstimate est_lm =
        acquire(y, grid, geom, sic, LMConfig{}, cfg.gain_snr_floor_db);
    const ComplexMatrix h_lm = estimate_channel_matrix(est_lm, geom);
    const ComplexMatrix h_genie =
        have_genie ? tracker_channel_matrix(genie, geom)
                   : ComplexMatrix::Zero(geom.n_r, geom.n_t);

    log.nmse_db_value = zero_channel
                            ? std::numeric_limits<double>::quiet_NaN()
                            : nmse_db(h, h_system);
    log.r_ideal = spectral_efficiency(h, h, sigma_v_sq);
    log.r_system = spectral_efficiency(h, h_system, sigma_v_sq);
    log.r_sic = spectral_efficiency(h, h_sic, sigma_v_sq);
    log.r_lm = spectral_efficiency(h, h_lm, sigma_v_sq);
    log.r_kf_genie = spectral_efficiency(h, h_genie, sigma_v_sq);
    if (have_tracker) {
      log.trace_covariance = tracker.covariance.trace();
      log.innovation = tracker.innovation_last;
      log.theta_hat = tracker.theta_hat;
    }

    if (true_change) {
      ++result.true_changes;
      if (log.declared_change) {
        ++result.detected_true;
      } else {
        ++result.missed;
      }
    } else {
      ++result.h0_slots;
      if (log.declared_change) ++result.false_alarms;
    }
    result.slots.push_back(std::move(log));
  }
  return result;
}

void write_integrated_csv(const IntegratedResult& result,
                          const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  {
    std::ofstream out(fs::path(cfg.out_dir) / "integrated_slots.csv");
    out << "slot,true_paths,true_change,declared_change,statistic,threshold,"
           "outage,acquired,zero_channel,nmse_db,r_ideal,r_system,r_sic,r_lm,"
           "r_kf_genie\n";
    for (const auto& s : result.slots) {
      out << s.slot << "," << s.true_paths << "," << (s.true_change ? 1 : 0)
          << "," << (s.declared_change ? 1 : 0) << "," << fmt_g(s.statistic)
          << "," << fmt_g(s.threshold) << "," << (s.outage ? 1 : 0) << ","
          << (s.acquired ? 1 : 0) << "," << (s.zero_channel ? 1 : 0) << ","
          << fmt_g(s.nmse_db_value) << "," << fmt_g(s.r_ideal) << ","
          << fmt_g(s.r_system) << "," << fmt_g(s.r_sic) << ","
          << fmt_g(s.r_lm) << "," << fmt_g(s.r_kf_genie) << "\n";
    }
  }
  {
    std::ofstream out(fs::path(cfg.out_dir) / "integrated_detection.csv");
    out << "slot,statistic,threshold,decision,true_change\n";
    for (const auto& s : result.slots) {
      out << s.slot << "," << fmt_g(s.statistic) << "," << fmt_g(s.threshold)
          << "," << (s.declared_change ? 1 : 0) << ","
          << (s.true_change ? 1 : 0) << "\n";
    }
  }
  {
    std::ofstream out(fs::path(cfg.out_dir) / "integrated_tracker.csv");
    out << "slot,theta_hat,trace_m,innovation\n";
    for (const auto& s : result.slots) {
      out << s.slot << ",\"";
      for (Eigen::Index i = 0; i < s.theta_hat.size(); ++i) {
        if (i > 0) out << " ";
        out << fmt_g(s.theta_hat(i));
      }
      out << "\"," << fmt_g(s.trace_covariance) << "," << fmt_g(s.innovation)
          << "\n";
    }
  }
  write_manifest(cfg, "integrated");
}

// ---------------------------------------------------------------------------
// Detector calibration
// ---------------------------------------------------------------------------

CalibrationResult calibrate_detector_ideal(const ExperimentConfig& cfg,
                                           int n_slots) {
  const ArrayGeometry geom = cfg.geometry;
  const PilotGrid grid = design_grid(cfg.m_t, cfg.m_r, geom);
  const double sigma_v_sq = sigma_v_squared_for_snr_db(cfg.snr_point_db, geom);
  const double gamma = cfg.gamma_override > 0.0
                           ? cfg.gamma_override
                           : detector_threshold(cfg.p_fa, cfg.m_t, cfg.m_r);

  CalibrationResult result;
  result.slots = n_slots;
  result.p_fa = cfg.p_fa;
  result.threshold = gamma;
  for (int i = 0; i < n_slots; ++i) {
    Rng rng(Rng::derive(cfg.seed,
                        {kStreamCalibrate, static_cast<std::uint64_t>(i)}));
    const PathSet paths =
        random_path_set(cfg.initial_paths, cfg.gain_variance(), rng);
    const ComplexMatrix h = assemble_channel(paths, geom);
    const ObservationBatch y = sound_channel(h, grid, sigma_v_sq, rng);
    const double stat =
        change_statistic(y, paths.gains, paths.angles, grid, geom);
    if (stat > gamma) ++result.false_alarms;
  }
  result.rate = static_cast<double>(result.false_alarms) /
                static_cast<double>(n_slots);
  return result;
}

void write_calibration_csv(const CalibrationResult& result,
                           const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "detector_calibration.csv");
  out << "slots,false_alarms,rate,p_fa,threshold\n";
  out << result.slots << "," << result.false_alarms << ","
      << fmt_g(result.rate) << "," << fmt_g(result.p_fa) << ","
      << fmt_g(result.threshold) << "\n";
  write_manifest(cfg, "calibrate-detector");
}

void write_manifest(const ExperimentConfig& cfg, const std::string& tool_name) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "manifest.txt");
  out << "tool: " << tool_name << "\n";
  out << "library_version: " << kLibraryVersion << "\n";
  out << "seed: " << cfg.seed << "\n";
  out << "pilot_overhead: " << fmt_g(cfg.pilot_overhead()) << "\n";
  out << "config:\n" << config_to_json(cfg).dump(2) << "\n";
}

}  // namespace mmce
