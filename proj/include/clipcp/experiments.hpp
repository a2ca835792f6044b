#pragma once

// Seeded experiment sweeps behind the command-line subcommands.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clipcp/bias.hpp"
#include "clipcp/config.hpp"
#include "clipcp/core.hpp"
#include "clipcp/dre.hpp"

namespace clipcp::experiments {

struct ResolvedMethod {
  std::string label;
  std::string kind;  // split | wcp | cwcp
  std::optional<double> b;
  core::CalibrationMode mode = core::CalibrationMode::Split;
};

struct ExperimentPlan {
  config::RunConfig config;
  std::vector<std::uint64_t> trial_seeds;
  std::vector<ResolvedMethod> roster;
};

/// Per-trial seeds and the method roster (split, WCP and one CWCP entry per
/// B in b_grid when the config lists no methods).
ExperimentPlan make_plan(const config::RunConfig& cfg);

/// Runs fn(0..n-1) on a bounded pool of worker threads. The first exception
/// thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct FitRatioResult {
  dre::FitReport report;
  std::optional<bias::BiasEstimate> bias;
  std::string summary_json;
};

FitRatioResult cmd_fit_ratio(const config::RunConfig& cfg);

struct CoverageRun {
  core::CoverageReport report;
  std::vector<std::string> errors;
  std::size_t failed_rows = 0;
};

CoverageRun cmd_coverage_experiment(const config::RunConfig& cfg);

struct NeedleCoverageStats {
  std::size_t trials = 0;
  std::size_t m = 0;
  std::size_t events = 0;
  double event_frequency = 0.0;
  double expected_frequency = 0.0;  // 1 - (1 - r^d)^m
  double coverage_bound = 0.0;      // theta + (1 - theta) r^d
  double max_event_coverage = 0.0;
  bool all_events_within_bound = true;
};

struct NeedleErmTrial {
  std::size_t trial = 0;
  bool event = false;
  double beta_hat = 0.0;
  double l1 = 0.0;
};

struct NeedleErmStats {
  std::size_t trials = 0;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t events = 0;
  double event_frequency = 0.0;
  double frequency_std_error = 0.0;
  double beta_max = 0.0;
  bool all_event_beta_max = true;
  double expected_l1 = 0.0;  // 2 (1 - theta)(1 - r^d)
  double max_l1_deviation = 0.0;
};

struct NeedleDemoResult {
  std::optional<NeedleCoverageStats> coverage;
  std::optional<NeedleErmStats> erm;
  core::CoverageReport report;
  std::vector<NeedleErmTrial> erm_trials;
  std::string summary_json;
};

NeedleDemoResult cmd_needle_demo(const config::RunConfig& cfg);

struct SrmRow {
  double b = 0.0;
  double lambda = 0.0;
  std::size_t m = 0;
  std::size_t trial = 0;
  double emp_risk = 0.0;
  double srm_objective = 0.0;
  double test_l2 = 0.0;
  std::string error;
};

struct SrmTable {
  std::vector<SrmRow> rows;
};

SrmTable cmd_srm_experiment(const config::RunConfig& cfg);
std::string format_srm_table(const SrmTable& table);

struct SrmSummary {
  double lambda = 0.0;
  std::vector<std::size_t> m;
  std::vector<double> mean_selected_b;
  /// Mean over trials of the test L2 of each trial's selected fit.
  std::vector<double> mean_selected_l2;
  /// Smallest trial-averaged test L2 over the B grid.
  std::vector<double> best_grid_l2;
  std::vector<double> best_grid_b;
};

SrmSummary summarize_srm(const SrmTable& table, double lambda);

}  // namespace clipcp::experiments
