#pragma once

// Weighted score CDFs and conformal threshold calibration.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clipcp::core {

/// Nonconformity scores paired with nonnegative importance weights.
///
/// The constructor validates the pair and builds a canonical sorted view
/// (ordered by score, then weight) with compensated prefix sums, so every
/// query is a binary search and results do not depend on input order.
class ScoredCalibrationSet {
 public:
  ScoredCalibrationSet(std::vector<double> scores, std::vector<double> weights);

  /// Unit weights: the ordinary split-conformal calibration set.
  static ScoredCalibrationSet unweighted(std::vector<double> scores);

  std::size_t size() const { return scores_.size(); }
  std::span<const double> scores() const { return scores_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> sorted_scores() const { return sorted_scores_; }
  /// Inclusive prefix sums of the weights in sorted order.
  std::span<const double> cumulative_weights() const { return cumulative_; }
  double total_weight() const { return cumulative_.back(); }

 private:
  std::vector<double> scores_;
  std::vector<double> weights_;
  std::vector<double> sorted_scores_;
  std::vector<double> cumulative_;
};

enum class CalibrationMode { Split, Wcp, CwcpExpected, CwcpConditional };

std::string to_string(CalibrationMode mode);
CalibrationMode calibration_mode_from_string(const std::string& name);

struct CalibrationConfig {
  double alpha = 0.1;
  double delta_hat = 0.0;
  double epsilon = 0.0;
  CalibrationMode mode = CalibrationMode::Wcp;

  void validate() const;
};

struct CalibrationResult {
  double tau = 0.0;  // +inf when the set is trivial
  double effective_level = 0.0;
  std::size_t m_cal = 0;
  bool trivial_set = false;
};

/// Sum of w_i over s_i <= t divided by the total weight.
double weighted_cdf(const ScoredCalibrationSet& set, double t);

/// Smallest calibration score whose weighted CDF reaches `level`; +inf when
/// no score does (in particular whenever level > 1).
CalibrationResult calibrate_threshold(const ScoredCalibrationSet& set, double level);

/// Inflated CWCP level 1 - alpha + delta_hat + k*epsilon with k = 3
/// (expected coverage) or k = 5 (dataset-conditional). Not clamped.
double cwcp_effective_level(const CalibrationConfig& cfg);

/// Level used by a calibration mode: 1 - alpha for split/WCP, the inflated
/// level for the CWCP modes.
double target_level(const CalibrationConfig& cfg);

/// Fraction of test scores <= tau.
double evaluate_coverage(double tau, std::span<const double> test_scores);

/// sup_t |F(t, w1) - F(t, w2)| for two weightings of the same score list.
double sup_cdf_gap(const ScoredCalibrationSet& a, const ScoredCalibrationSet& b);

/// One persisted experiment record. A failed trial keeps its identifying
/// fields and carries NaN coverage/tau/level plus an error message.
struct CoverageRow {
  std::string method;
  std::optional<double> param_b;
  double shift = 0.0;
  std::size_t trial = 0;
  double coverage = 0.0;
  std::optional<double> width;
  double tau = 0.0;
  double level = 0.0;
  std::string error;

  bool failed() const { return !error.empty(); }
  static CoverageRow failure(std::string method, std::optional<double> param_b, double shift, std::size_t trial,
                             std::string error);
};

struct CoverageReport {
  std::vector<CoverageRow> rows;

  /// Sort by (method, shift, trial, param_b).
  void sort();
  /// Coverage in [0, 1] for successful rows; trial unique per (method, shift).
  void validate() const;
};

}  // namespace clipcp::core
