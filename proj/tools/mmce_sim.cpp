// Command-line driver for the channel estimation simulator: acquisition and
// tracking sweeps, the integrated acquisition/tracking/detection loop, and
// detector calibration. All outputs are CSV plus a manifest, deterministic
// for a fixed config and seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmce/harness.hpp"

namespace {

std::vector<std::string> split_arms(const std::string& arms) {
  std::vector<std::string> out;
  std::stringstream ss(arms);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mm-wave channel acquisition, tracking and change detection "
               "simulator"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::string out_dir;
  std::string arms;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int trials = 0;

  app.add_option("--config", config_path, "JSON experiment config");
  app.add_option("--out-dir", out_dir, "output directory for CSV files");
  app.add_option("--seed", seed, "master seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--trials", trials,
                 "override trial/block count from the config");
  app.add_option("--arms", arms, "comma-separated arms to run and write (default: all)");

  std::string acq_kind = "snr";
  auto* acq = app.add_subcommand("acquire-sweep",
                                 "NMSE of SIC-only vs LM acquisition");
  acq->add_option("--kind", acq_kind, "sweep variable: snr or grid");

  std::string track_kind = "snr";
  auto* track = app.add_subcommand(
      "track-sweep", "NMSE of per-slot estimators vs Kalman tracking");
  track->add_option("--kind", track_kind, "sweep variable: snr, grid or sigma");

  auto* integrated = app.add_subcommand(
      "integrated", "full acquisition -> tracking -> detection loop");

  int calib_slots = 10000;
  auto* calib = app.add_subcommand("calibrate-detector",
                                   "H0 false-alarm rate with ideal estimates");
  calib->add_option("--slots", calib_slots, "number of H0 slots");

  auto* dump = app.add_subcommand("dump-grid", "write pilot direction list");

  CLI11_PARSE(app, argc, argv);

  try {
    mmce::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = mmce::load_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (trials > 0) {
      cfg.trials = trials;
      cfg.blocks = trials;
    }
    const std::vector<std::string> arm_filter = split_arms(arms);
    if (cfg.m_t < cfg.geometry.n_t || cfg.m_r < cfg.geometry.n_r) {
      std::cerr << "warning: fewer pilot directions than antennas ("
                << cfg.m_t << "x" << cfg.m_r << " grid, "
                << cfg.geometry.n_t << "x" << cfg.geometry.n_r
                << " arrays); some angles will have weak beam coverage\n";
    }

    if (acq->parsed()) {
      const mmce::SweepKind kind = acq_kind == "grid"
                                       ? mmce::SweepKind::kAcqVsGrid
                                       : mmce::SweepKind::kAcqVsSnr;
      const mmce::SweepResult result = mmce::run_sweep(kind, cfg, arm_filter);
      mmce::write_sweep_csv(result, kind, cfg, arm_filter);
      for (const auto& [arm, series] : result) {
        std::cout << mmce::sweep_kind_name(kind) << " arm=" << arm << ":";
        for (const auto& r : series.records) {
          if (r.trial == 0) {
            std::cout << " " << r.x_value << "->"
                      << series.aggregate_db(r.x_value) << "dB";
          }
        }
        std::cout << "\n";
      }
    } else if (track->parsed()) {
      mmce::SweepKind kind = mmce::SweepKind::kTrackVsSnr;
      if (track_kind == "grid") kind = mmce::SweepKind::kTrackVsGrid;
      if (track_kind == "sigma") kind = mmce::SweepKind::kTrackVsSigma;
      const mmce::SweepResult result = mmce::run_sweep(kind, cfg, arm_filter);
      mmce::write_sweep_csv(result, kind, cfg, arm_filter);
      for (const auto& [arm, series] : result) {
        std::cout << mmce::sweep_kind_name(kind) << " arm=" << arm << ":";
        for (const auto& r : series.records) {
          if (r.trial == 0) {
            std::cout << " " << r.x_value << "->"
                      << series.aggregate_db(r.x_value) << "dB";
          }
        }
        std::cout << "\n";
      }
    } else if (integrated->parsed()) {
      const mmce::IntegratedResult result = mmce::run_integrated(cfg);
      mmce::write_integrated_csv(result, cfg);
      std::cout << "slots=" << result.slots.size()
                << " true_changes=" << result.true_changes
                << " detected=" << result.detected_true
                << " missed=" << result.missed
                << " false_alarms=" << result.false_alarms
                << " h0_slots=" << result.h0_slots << "\n";
    } else if (calib->parsed()) {
      const mmce::CalibrationResult result =
          mmce::calibrate_detector_ideal(cfg, calib_slots);
      mmce::write_calibration_csv(result, cfg);
      std::cout << "slots=" << result.slots
                << " false_alarms=" << result.false_alarms
                << " rate=" << result.rate << " target=" << result.p_fa
                << "\n";
    } else if (dump->parsed()) {
      const mmce::PilotGrid grid =
          mmce::design_grid(cfg.m_t, cfg.m_r, cfg.geometry);
      std::filesystem::create_directories(cfg.out_dir);
      std::ofstream out(std::filesystem::path(cfg.out_dir) /
                        "grid_directions.txt");
      mmce::write_grid_directions(out, grid);
      std::cout << "wrote grid_directions.txt (" << cfg.m_t << " x " << cfg.m_r
                << ")\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
