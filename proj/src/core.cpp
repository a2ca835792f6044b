#include "clipcp/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>
#include <utility>

#include "clipcp/error.hpp"
#include "clipcp/numeric.hpp"

namespace clipcp::core {

ScoredCalibrationSet::ScoredCalibrationSet(std::vector<double> scores, std::vector<double> weights)
    : scores_(std::move(scores)), weights_(std::move(weights)) {
  if (scores_.empty()) throw InvalidInput("calibration set is empty");
  if (scores_.size() != weights_.size()) {
    throw InvalidInput("calibration set: " + std::to_string(scores_.size()) + " scores but " +
                       std::to_string(weights_.size()) + " weights");
  }
  bool any_positive = false;
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (!std::isfinite(scores_[i])) throw InvalidInput("calibration score " + std::to_string(i) + " is not finite");
    if (!std::isfinite(weights_[i]) || weights_[i] < 0.0) {
      throw InvalidInput("calibration weight " + std::to_string(i) + " must be finite and nonnegative");
    }
    any_positive = any_positive || weights_[i] > 0.0;
  }
  if (!any_positive) throw InvalidInput("calibration weights are all zero");

  std::vector<std::size_t> order(scores_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    return std::tie(scores_[a], weights_[a]) < std::tie(scores_[b], weights_[b]);
  });

  sorted_scores_.reserve(order.size());
  cumulative_.reserve(order.size());
  CompensatedSum running;
  for (std::size_t idx : order) {
    running.add(weights_[idx]);
    sorted_scores_.push_back(scores_[idx]);
    cumulative_.push_back(running.value());
  }
}

ScoredCalibrationSet ScoredCalibrationSet::unweighted(std::vector<double> scores) {
  std::vector<double> weights(scores.size(), 1.0);
  return ScoredCalibrationSet(std::move(scores), std::move(weights));
}

std::string to_string(CalibrationMode mode) {
  switch (mode) {
    case CalibrationMode::Split: return "split";
    case CalibrationMode::Wcp: return "wcp";
    case CalibrationMode::CwcpExpected: return "cwcp-expected";
    case CalibrationMode::CwcpConditional: return "cwcp-conditional";
  }
  return "unknown";
}

CalibrationMode calibration_mode_from_string(const std::string& name) {
  if (name == "split") return CalibrationMode::Split;
  if (name == "wcp") return CalibrationMode::Wcp;
  if (name == "cwcp-expected") return CalibrationMode::CwcpExpected;
  if (name == "cwcp-conditional") return CalibrationMode::CwcpConditional;
  throw InvalidInput("unknown calibration mode '" + name + "'");
}

void CalibrationConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0, 1)");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidInput("epsilon must be finite and >= 0");
  if (!std::isfinite(delta_hat)) throw InvalidInput("delta_hat must be finite");
}

double weighted_cdf(const ScoredCalibrationSet& set, double t) {
  if (std::isnan(t)) throw InvalidInput("weighted_cdf: t is NaN");
  const auto sorted = set.sorted_scores();
  const auto below = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
  if (below == 0) return 0.0;
  return set.cumulative_weights()[below - 1] / set.total_weight();
}

CalibrationResult calibrate_threshold(const ScoredCalibrationSet& set, double level) {
  if (std::isnan(level) || !(level > 0.0)) throw InvalidInput("calibration level must be > 0");
  CalibrationResult result;
  result.effective_level = level;
  result.m_cal = set.size();

  const auto cum = set.cumulative_weights();
  const double total = set.total_weight();
  const auto hit = std::partition_point(cum.begin(), cum.end(), [&](double c) { return c / total < level; });
  if (hit == cum.end()) {
    result.tau = std::numeric_limits<double>::infinity();
    result.trivial_set = true;
  } else {
    result.tau = set.sorted_scores()[static_cast<std::size_t>(hit - cum.begin())];
  }
  return result;
}

double cwcp_effective_level(const CalibrationConfig& cfg) {
  cfg.validate();
  switch (cfg.mode) {
    case CalibrationMode::CwcpExpected: return 1.0 - cfg.alpha + cfg.delta_hat + 3.0 * cfg.epsilon;
    case CalibrationMode::CwcpConditional: return 1.0 - cfg.alpha + cfg.delta_hat + 5.0 * cfg.epsilon;
    default: throw InvalidInput("cwcp_effective_level requires a CWCP mode, got " + to_string(cfg.mode));
  }
}

double target_level(const CalibrationConfig& cfg) {
  cfg.validate();
  if (cfg.mode == CalibrationMode::Split || cfg.mode == CalibrationMode::Wcp) return 1.0 - cfg.alpha;
  return cwcp_effective_level(cfg);
}

double evaluate_coverage(double tau, std::span<const double> test_scores) {
  if (test_scores.empty()) throw InvalidInput("evaluate_coverage: empty test set");
  if (std::isnan(tau)) throw InvalidInput("evaluate_coverage: tau is NaN");
  std::size_t covered = 0;
  for (double s : test_scores) covered += s <= tau ? 1 : 0;
  return static_cast<double>(covered) / static_cast<double>(test_scores.size());
}

double sup_cdf_gap(const ScoredCalibrationSet& a, const ScoredCalibrationSet& b) {
  if (a.size() != b.size() || !std::equal(a.scores().begin(), a.scores().end(), b.scores().begin())) {
    throw InvalidInput("sup_cdf_gap: score lists differ");
  }
  // Both CDFs are right-continuous step functions that only move at the
  // scores, so the supremum is attained on the score grid.
  double gap = 0.0;
  for (double t : a.sorted_scores()) gap = std::max(gap, std::abs(weighted_cdf(a, t) - weighted_cdf(b, t)));
  return gap;
}

CoverageRow CoverageRow::failure(std::string method, std::optional<double> param_b, double shift, std::size_t trial,
                                 std::string error) {
  CoverageRow row;
  row.method = std::move(method);
  row.param_b = param_b;
  row.shift = shift;
  row.trial = trial;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.coverage = nan;
  row.tau = nan;
  row.level = nan;
  row.error = error.empty() ? "error" : std::move(error);
  return row;
}

void CoverageReport::sort() {
  std::stable_sort(rows.begin(), rows.end(), [](const CoverageRow& x, const CoverageRow& y) {
    const double bx = x.param_b.value_or(-std::numeric_limits<double>::infinity());
    const double by = y.param_b.value_or(-std::numeric_limits<double>::infinity());
    return std::tie(x.method, x.shift, x.trial, bx) < std::tie(y.method, y.shift, y.trial, by);
  });
}

void CoverageReport::validate() const {
  std::set<std::tuple<std::string, double, std::size_t>> seen;
  for (const auto& row : rows) {
    if (!row.failed() && !(row.coverage >= 0.0 && row.coverage <= 1.0)) {
      throw InvalidInput("coverage row for '" + row.method + "' has coverage outside [0, 1]");
    }
    if (!seen.emplace(row.method, row.shift, row.trial).second) {
      throw InvalidInput("duplicate trial " + std::to_string(row.trial) + " for method '" + row.method + "'");
    }
  }
}

}  // namespace clipcp::core
