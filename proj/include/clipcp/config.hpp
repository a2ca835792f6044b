#pragma once

// Run configuration: strict JSON in, JSON echo out.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace clipcp::config {

enum class ExperimentKind { FitRatio, Coverage, NeedleDemo, Srm };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

struct ShiftConfig {
  std::string family = "gaussian";  // gaussian | needle | powerlaw | csv
  std::vector<double> betas{0.0, 0.5, 1.0, 1.5, 2.0};
  int d = 20;
  double r = 0.1;
  double theta = 0.1;
};

/// External data for the csv family. Train/est/cal are draws from P,
/// test/eval from Q; cal and eval need a score column.
struct CsvConfig {
  std::string train;
  std::string test;
  std::string est;
  std::string cal;
  std::string eval;
  std::size_t features = 0;
  bool group = false;
};

struct MethodConfig {
  std::string kind = "split";  // split | wcp | cwcp
  std::optional<double> b;
  std::string mode = "expected";  // expected | conditional (cwcp only)
};

struct SizeConfig {
  std::size_t m_train = 1000;
  std::size_t m_test = 1000;
  std::size_t m_est = 600;
  std::size_t m_cal = 600;
  std::size_t n_eval = 2000;
  std::size_t regressor_n = 2000;
};

struct NeedleDemoConfig {
  std::string part = "both";  // b1 | b2 | both
  double c = 0.01;
  std::size_t m = 50;
  std::size_t n = 50;
};

struct RunConfig {
  ExperimentKind kind = ExperimentKind::Coverage;
  ShiftConfig shift;
  std::optional<CsvConfig> csv;
  std::string ratio_class = "auto";  // auto | tilt | needle | piecewise | piecewise-known-p
  std::size_t k = 10;
  std::vector<MethodConfig> methods;
  double alpha = 0.2;
  double epsilon = 0.01;
  double delta = 0.1;
  double b = 20.0;
  std::vector<double> b_grid{2.5, 5.0, 10.0, 20.0};
  std::vector<double> lambdas{0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  std::vector<std::size_t> m_grid{50, 200, 800};
  NeedleDemoConfig needle_demo;
  SizeConfig sizes;
  std::size_t trials = 30;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::size_t workers = 1;
};

/// Throws ConfigError naming the offending key.
void validate(const RunConfig& cfg);

RunConfig parse_config(const std::string& json_text, const std::string& base_dir = "");
RunConfig load_config(const std::string& path);
std::string to_json_string(const RunConfig& cfg, int indent = 2);

/// Larger dimensions, grids and trial counts matching the full-size runs.
void apply_full_scale(RunConfig& cfg);

}  // namespace clipcp::config
