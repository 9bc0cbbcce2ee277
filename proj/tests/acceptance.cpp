// End-to-end acceptance suite. Each criterion prints exactly one PASS/FAIL
// line with its measured numbers; the process exit code is the number of
// failed criteria. Run a single criterion with --criterion N.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmce/harness.hpp"

using namespace mmce;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

// --------------------------------------------------------------------------
// 1. Analytic Jacobian vs central finite differences.
// --------------------------------------------------------------------------
Outcome criterion_jacobian() {
  const ArrayGeometry geom{16, 16};
  const PilotGrid grid = design_grid(16, 16, geom);
  const double sigma_v_sq = sigma_v_squared_for_snr_db(20.0, geom);

  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    Rng rng(Rng::derive(1001, {static_cast<std::uint64_t>(rep)}));
    const PathSet truth = random_path_set(3, 256.0, rng);
    ObservationBatch y;
    y.y = build_phi(truth.angles, grid, geom) * truth.gains +
          sample_complex_gaussian(rng, sigma_v_sq, grid.pilot_count());
    y.noise_variance = sigma_v_sq;

    RealVector probe = truth.angles;
    for (Eigen::Index i = 0; i < probe.size(); ++i) {
      probe(i) = reflect_into_angle_range(probe(i) + 0.02 * rng.normal());
    }

    const RealMatrix analytic = residual_jacobian(probe, y, grid, geom);
    RealMatrix fd(analytic.rows(), analytic.cols());
    const double step = 1e-6;
    for (Eigen::Index k = 0; k < probe.size(); ++k) {
      RealVector plus = probe;
      RealVector minus = probe;
      plus(k) += step;
      minus(k) -= step;
      fd.col(k) = (stack_real(projection_residual(plus, y, grid, geom)) -
                   stack_real(projection_residual(minus, y, grid, geom))) /
                  (2.0 * step);
    }
    worst = std::max(worst, (analytic - fd).norm() / fd.norm());
  }

  Outcome out;
  out.pass = worst < 1e-4;
  char err[32];
  std::snprintf(err, sizeof(err), "%.3g", worst);
  out.detail = std::string("max relative error ") + err +
               " over 50 instances (tolerance 1e-4)";
  return out;
}

// --------------------------------------------------------------------------
// 2. Noiseless off-grid acquisition accuracy.
// --------------------------------------------------------------------------
Outcome criterion_offgrid_acquisition() {
  const ArrayGeometry geom{16, 16};
  const PilotGrid grid = design_grid(16, 16, geom);

  int ok = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    Rng rng(Rng::derive(1002, {static_cast<std::uint64_t>(t)}));
    const PathSet truth = random_path_set(1, 256.0, rng);
    ObservationBatch y;
    y.y = build_phi(truth.angles, grid, geom) * truth.gains;
    y.noise_variance = 1e-12;  // vanishing-noise limit

    const ChannelEstimate est =
        acquire(y, grid, geom, SicConfig::for_noise(y.noise_variance, 5));
    if (est.empty()) continue;

    Eigen::Index best = 0;
    double best_d = 1e300;
    for (Eigen::Index l = 0; l < est.path_count(); ++l) {
      const double d =
          std::abs(std::cos(est.aod(l)) - std::cos(truth.aod(0))) +
          std::abs(std::cos(est.aoa(l)) - std::cos(truth.aoa(0)));
      if (d < best_d) {
        best_d = d;
        best = l;
      }
    }
    const double cos_err =
        std::max(std::abs(std::cos(est.aod(best)) - std::cos(truth.aod(0))),
                 std::abs(std::cos(est.aoa(best)) - std::cos(truth.aoa(0))));
    const double gain_err =
        std::abs(est.gains(best) - truth.gains(0)) / std::abs(truth.gains(0));
    if (cos_err < 1e-4 && gain_err < 1e-3) ++ok;
  }

  Outcome out;
  out.pass = ok >= 95;
  out.detail = std::to_string(ok) + "/100 trials within cos error 1e-4 and "
               "gain error 1e-3 (needs >= 95)";
  return out;
}

// --------------------------------------------------------------------------
// 3. LM acquisition margin over the grid search at 20 dB.
// --------------------------------------------------------------------------
Outcome criterion_acquisition_margin() {
  ExperimentConfig cfg;
  cfg.trials = 200;
  cfg.snr_grid_db = {20.0};
  cfg.seed = 1003;
  const SweepResult result = run_sweep(SweepKind::kAcqVsSnr, cfg);

  const double lm_db = result.at("lm").aggregate_db(20.0);
  const double search_db = result.at("search").aggregate_db(20.0);
  const double margin = search_db - lm_db;

  Outcome out;
  out.pass = margin >= 5.0;
  out.detail = "LM " + fmt(lm_db, 2) + " dB vs search " + fmt(search_db, 2) +
               " dB, margin " + fmt(margin, 2) + " dB";
  if (margin >= 8.0) {
    out.detail += " (>= 8 dB)";
  } else if (margin >= 5.0) {
    out.detail += " (WARNING: below the 8 dB target, above the 5 dB floor)";
  } else {
    out.detail += " (< 5 dB floor)";
  }
  return out;
}

// --------------------------------------------------------------------------
// 4. Tracking beats per-slot estimation at the Fig. 8 operating point.
// --------------------------------------------------------------------------
Outcome criterion_tracking_ordering() {
  ExperimentConfig cfg;
  cfg.blocks = 200;
  cfg.slots_per_block = 50;
  cfg.snr_grid_db = {20.0};
  cfg.sigma_u = 0.5 * kPi / 180.0;
  cfg.seed = 1004;
  const SweepResult result = run_sweep(SweepKind::kTrackVsSnr, cfg);

  const double search_db = result.at("search").aggregate_db(20.0);
  const double lm_db = result.at("lm").aggregate_db(20.0);
  const double kf_db = result.at("kf").aggregate_db(20.0);
  const double kf_err_db = result.at("kf_acq_error").aggregate_db(20.0);

  const bool beats_search = kf_db < search_db && kf_err_db < search_db;
  const bool within_lm_slack = kf_db <= lm_db + 1.0 && kf_err_db <= lm_db + 1.0;

  Outcome out;
  out.pass = beats_search && within_lm_slack;
  out.detail = "NMSE dB: search " + fmt(search_db, 2) + ", lm " +
               fmt(lm_db, 2) + ", kf " + fmt(kf_db, 2) + ", kf+acq-error " +
               fmt(kf_err_db, 2) +
               " (kf arms must beat search and stay within lm + 1 dB)";
  return out;
}

// --------------------------------------------------------------------------
// 5. Tracking NMSE is monotone in the walk variance; largest loses track.
// --------------------------------------------------------------------------
Outcome criterion_sigma_trend() {
  ExperimentConfig cfg;
  cfg.blocks = 100;
  cfg.slots_per_block = 50;
  cfg.seed = 1005;
  // Kalman arm only; the per-slot estimators are not compared here.
  const SweepResult result =
      run_sweep(SweepKind::kTrackVsSigma, cfg, {"kf"});

  std::vector<double> kf_db;
  for (double x : cfg.sigma_u_sq_grid) {
    kf_db.push_back(result.at("kf").aggregate_db(x));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < kf_db.size(); ++i) {
    if (kf_db[i] < kf_db[i - 1] - 1e-12) monotone = false;
  }
  const bool lost_track = kf_db.back() > -10.0;

  Outcome out;
  out.pass = monotone && lost_track;
  std::string values;
  for (double v : kf_db) values += " " + fmt(v, 2);
  out.detail = "kf NMSE dB across sigma_u^2 grid:" + values +
               " (non-decreasing required; last must exceed -10 dB)";
  return out;
}

// --------------------------------------------------------------------------
// 6. Detector calibration: ideal estimates and the integrated tracker.
// --------------------------------------------------------------------------
Outcome criterion_detector_calibration() {
  ExperimentConfig cfg;
  cfg.seed = 1006;
  const int n_slots = 10000;
  const CalibrationResult ideal = calibrate_detector_ideal(cfg, n_slots);
  const double se = std::sqrt(cfg.p_fa * (1.0 - cfg.p_fa) / n_slots);
  const bool ideal_ok = std::abs(ideal.rate - cfg.p_fa) <= 3.0 * se;

  // Integrated loop at the Fig. 10 operating point, pooled over 10 seeds.
  int fa = 0;
  int h0 = 0;
  for (int run = 0; run < 10; ++run) {
    ExperimentConfig icfg;
    icfg.slots = 200;
    icfg.seed = Rng::derive(1006, {static_cast<std::uint64_t>(run) + 1});
    const IntegratedResult r = run_integrated(icfg);
    fa += r.false_alarms;
    h0 += r.h0_slots;
  }
  const double integrated_rate = static_cast<double>(fa) / h0;
  const bool integrated_ok = integrated_rate <= 2.5 * cfg.p_fa;

  Outcome out;
  out.pass = ideal_ok && integrated_ok;
  out.detail = "ideal rate " + fmt(ideal.rate, 4) + " (target 0.05 +- " +
               fmt(3.0 * se, 4) + "), integrated rate " +
               fmt(integrated_rate, 4) + " over " + std::to_string(h0) +
               " H0 slots (limit 0.125)";
  return out;
}

// --------------------------------------------------------------------------
// 7. Chi-squared moments of twice the statistic under H0.
// --------------------------------------------------------------------------
Outcome criterion_statistic_moments() {
  const ArrayGeometry geom{16, 16};
  const PilotGrid grid = design_grid(16, 16, geom);
  const double sigma_v_sq = sigma_v_squared_for_snr_db(20.0, geom);
  const double dof = 2.0 * static_cast<double>(grid.pilot_count());

  double sum = 0.0;
  double sum_sq = 0.0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Rng rng(Rng::derive(1007, {static_cast<std::uint64_t>(t)}));
    const PathSet paths = random_path_set(3, 256.0, rng);
    const ObservationBatch y =
        sound_channel(assemble_channel(paths, geom), grid, sigma_v_sq, rng);
    const double two_l =
        2.0 * change_statistic(y, paths.gains, paths.angles, grid, geom);
    sum += two_l;
    sum_sq += two_l * two_l;
  }
  const double mean = sum / trials;
  const double var = sum_sq / trials - mean * mean;
  const bool mean_ok = std::abs(mean - dof) <= 0.02 * dof;
  const bool var_ok = std::abs(var - 2.0 * dof) <= 0.10 * 2.0 * dof;

  Outcome out;
  out.pass = mean_ok && var_ok;
  out.detail = "mean " + fmt(mean, 2) + " (target 512 +- 2%), variance " +
               fmt(var, 1) + " (target 1024 +- 10%)";
  return out;
}

// --------------------------------------------------------------------------
// 8. Integrated spectral efficiency close to ideal CSI.
// --------------------------------------------------------------------------
Outcome criterion_spectral_efficiency() {
  std::vector<double> system_gaps;
  int sic_large_gap_slots = 0;
  int non_outage = 0;
  for (int run = 0; run < 20; ++run) {
    ExperimentConfig cfg;
    cfg.slots = 200;
    cfg.seed = Rng::derive(1008, {static_cast<std::uint64_t>(run) + 1});
    const IntegratedResult result = run_integrated(cfg);
    for (const auto& s : result.slots) {
      if (s.outage || s.zero_channel) continue;
      ++non_outage;
      system_gaps.push_back(s.r_ideal - s.r_system);
      if (s.r_ideal - s.r_sic >= 0.5) ++sic_large_gap_slots;
    }
  }

  int within = 0;
  for (double g : system_gaps) {
    if (g <= 0.1) ++within;
  }
  std::vector<double> sorted = system_gaps;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double fraction =
      static_cast<double>(within) / static_cast<double>(system_gaps.size());

  Outcome out;
  out.pass = fraction >= 0.8 && median <= 0.2 && sic_large_gap_slots > 0;
  out.detail = fmt(100.0 * fraction, 1) + "% of " +
               std::to_string(non_outage) + " non-outage slots within 0.1 "
               "bits/s/Hz (needs >= 80%), median gap " + fmt(median, 4) +
               " (limit 0.2), SIC-only slots with gap >= 0.5: " +
               std::to_string(sic_large_gap_slots) + " (needs > 0)";
  return out;
}

// --------------------------------------------------------------------------
// 9. Grid coverage with m = n = 16.
// --------------------------------------------------------------------------
Outcome criterion_grid_coverage() {
  const int n = 16;
  const PilotGrid grid = design_grid(n, n, {n, n});
  double worst = 1.0;
  for (int i = 0; i <= 10000; ++i) {
    const double angle = kPi * i / 10000.0;
    double best = 0.0;
    for (Eigen::Index p = 0; p < grid.m_t(); ++p) {
      best = std::max(best,
                      std::abs(beam_gain(angle, grid.tx_directions(p), n)));
    }
    worst = std::min(worst, best);
  }
  Outcome out;
  out.pass = worst >= 0.63;
  out.detail = "worst-case best beam gain " + fmt(worst, 5) +
               " over 10001 angles (needs >= 0.63)";
  return out;
}

// --------------------------------------------------------------------------
// 10. Determinism of the integrated CSV outputs.
// --------------------------------------------------------------------------
Outcome criterion_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mmce_acceptance_det";
  fs::remove_all(dir);

  ExperimentConfig cfg;
  cfg.slots = 60;
  cfg.seed = 1010;
  cfg.out_dir = dir.string();

  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::vector<std::string> files = {
      "integrated_slots.csv", "integrated_detection.csv",
      "integrated_tracker.csv"};

  write_integrated_csv(run_integrated(cfg), cfg);
  std::vector<std::string> first;
  for (const auto& f : files) first.push_back(slurp(dir / f));

  write_integrated_csv(run_integrated(cfg), cfg);
  bool identical = true;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (slurp(dir / files[i]) != first[i]) identical = false;
  }
  fs::remove_all(dir);

  Outcome out;
  out.pass = identical && !first[0].empty();
  out.detail = identical ? "two runs produced byte-identical CSVs"
                         : "CSV outputs differ between identical runs";
  return out;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion> kCriteria = {
    {1, "Jacobian vs finite differences", criterion_jacobian},
    {2, "noiseless off-grid acquisition", criterion_offgrid_acquisition},
    {3, "LM vs search margin at 20 dB", criterion_acquisition_margin},
    {4, "tracking beats per-slot estimates", criterion_tracking_ordering},
    {5, "tracking degrades monotonically", criterion_sigma_trend},
    {6, "detector calibration", criterion_detector_calibration},
    {7, "chi-squared statistic moments", criterion_statistic_moments},
    {8, "integrated spectral efficiency", criterion_spectral_efficiency},
    {9, "grid coverage floor", criterion_grid_coverage},
    {10, "deterministic CSV outputs", criterion_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0) only = std::atoi(argv[i + 1]);
  }

  int failures = 0;
  for (const auto& c : kCriteria) {
    if (only != 0 && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    const Outcome outcome = c.run();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << c.id
              << " (" << c.name << "): " << outcome.detail << " [" << fmt(secs, 1)
              << "s]" << std::endl;
  }
  return failures;
}
