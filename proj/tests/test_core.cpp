#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "catch_amalgamated.hpp"
#include "clipcp/core.hpp"
#include "clipcp/error.hpp"
#include "clipcp/rng.hpp"

using namespace clipcp;
using namespace clipcp::core;
using Catch::Approx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Weighted CDF straight from the definition, no sorting.
double brute_cdf(const std::vector<double>& s, const std::vector<double>& w, double t) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    den += w[i];
    if (s[i] <= t) num += w[i];
  }
  return num / den;
}

// Smallest score whose brute-force CDF reaches level.
double brute_tau(const std::vector<double>& s, const std::vector<double>& w, double level) {
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  for (double t : sorted)
    if (brute_cdf(s, w, t) >= level) return t;
  return kInf;
}

struct Instance {
  std::vector<double> scores;
  std::vector<double> weights;
};

Instance random_instance(std::uint64_t seed, std::size_t max_atoms, double max_weight, bool ties) {
  CounterRng rng(seed, "core-instance");
  const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(max_atoms));
  Instance inst;
  for (std::size_t i = 0; i < n; ++i) {
    double s = rng.normal();
    if (ties) s = std::round(s * 2.0) / 2.0;
    inst.scores.push_back(s);
    inst.weights.push_back(rng.uniform() * max_weight);
  }
  return inst;
}

}  // namespace

TEST_CASE("weighted_cdf on small hand-built sets") {
  const auto uniform = ScoredCalibrationSet::unweighted({1, 2, 3, 4});
  CHECK(weighted_cdf(uniform, 2.0) == 0.5);

  ScoredCalibrationSet skewed({1, 2}, {3, 1});
  CHECK(weighted_cdf(skewed, 1.0) == Approx(brute_cdf({1, 2}, {3, 1}, 1.0)));
  CHECK(weighted_cdf(skewed, 1.0) == 0.75);
  CHECK(weighted_cdf(skewed, kInf) == 1.0);
  CHECK(weighted_cdf(skewed, 0.5) == 0.0);
  CHECK(weighted_cdf(skewed, 2.0) == 1.0);
}

TEST_CASE("calibration sets reject malformed input") {
  CHECK_THROWS_AS(ScoredCalibrationSet({1, 2}, {0, 0}), InvalidInput);
  CHECK_THROWS_AS(ScoredCalibrationSet({1, 2}, {1}), InvalidInput);
  CHECK_THROWS_AS(ScoredCalibrationSet({1, 2}, {1, -1}), InvalidInput);
  CHECK_THROWS_AS(ScoredCalibrationSet({1, std::nan("")}, {1, 1}), InvalidInput);
  CHECK_THROWS_AS(ScoredCalibrationSet({1, kInf}, {1, 1}), InvalidInput);
  CHECK_THROWS_AS(ScoredCalibrationSet({}, {}), InvalidInput);
}

TEST_CASE("calibrate_threshold picks the weighted quantile") {
  const auto r1 = calibrate_threshold(ScoredCalibrationSet::unweighted({0.1, 0.2, 0.3, 0.4}), 0.5);
  CHECK(r1.tau == 0.2);
  CHECK_FALSE(r1.trivial_set);
  CHECK(r1.m_cal == 4);

  ScoredCalibrationSet skewed({1, 2}, {3, 1});
  CHECK(calibrate_threshold(skewed, 0.8).tau == 2.0);
  CHECK(calibrate_threshold(skewed, 0.75).tau == 1.0);

  const auto high = calibrate_threshold(skewed, 1.2);
  CHECK(high.tau == kInf);
  CHECK(high.trivial_set);
  CHECK(high.effective_level == 1.2);

  CHECK_THROWS_AS(calibrate_threshold(skewed, 0.0), InvalidInput);
  CHECK_THROWS_AS(calibrate_threshold(skewed, std::nan("")), InvalidInput);
}

TEST_CASE("cwcp inflation levels") {
  CalibrationConfig cfg{0.2, 0.05, 0.01, CalibrationMode::CwcpExpected};
  CHECK(cwcp_effective_level(cfg) == Approx(0.88).epsilon(1e-14));
  cfg.mode = CalibrationMode::CwcpConditional;
  CHECK(cwcp_effective_level(cfg) == Approx(0.90).epsilon(1e-14));

  for (auto mode : {CalibrationMode::CwcpExpected, CalibrationMode::CwcpConditional}) {
    CalibrationConfig zero{0.2, 0.0, 0.0, mode};
    CHECK(cwcp_effective_level(zero) == Approx(0.8).epsilon(1e-15));
  }

  CalibrationConfig big{0.2, 0.3, 0.05, CalibrationMode::CwcpConditional};
  CHECK(cwcp_effective_level(big) == Approx(1.35));
  CHECK(target_level(big) == cwcp_effective_level(big));

  CalibrationConfig split{0.1, 0.4, 0.2, CalibrationMode::Split};
  CHECK(target_level(split) == Approx(0.9));
  CHECK_THROWS_AS(cwcp_effective_level(split), InvalidInput);

  CHECK_THROWS_AS((CalibrationConfig{1.5, 0.0, 0.0, CalibrationMode::Wcp}.validate()), InvalidInput);
  CHECK_THROWS_AS((CalibrationConfig{0.1, 0.0, -0.1, CalibrationMode::Wcp}.validate()), InvalidInput);
}

TEST_CASE("calibration mode names round-trip") {
  for (auto mode : {CalibrationMode::Split, CalibrationMode::Wcp, CalibrationMode::CwcpExpected,
                    CalibrationMode::CwcpConditional})
    CHECK(calibration_mode_from_string(to_string(mode)) == mode);
  CHECK_THROWS_AS(calibration_mode_from_string("quantile"), InvalidInput);
}

TEST_CASE("evaluate_coverage counts scores at or below tau") {
  const std::vector<double> scores{1, 2, 3, 4};
  CHECK(evaluate_coverage(2.0, scores) == 0.5);
  CHECK(evaluate_coverage(kInf, scores) == 1.0);
  CHECK(evaluate_coverage(0.5, scores) == 0.0);
  CHECK_THROWS_AS(evaluate_coverage(1.0, std::vector<double>{}), InvalidInput);
}

TEST_CASE("sup_cdf_gap examples") {
  ScoredCalibrationSet a({1, 2}, {1, 1});
  ScoredCalibrationSet b({1, 2}, {2, 0});
  CHECK(sup_cdf_gap(a, b) == 0.5);
  CHECK(sup_cdf_gap(a, a) == 0.0);
  ScoredCalibrationSet scaled({1, 2}, {3.7, 3.7});
  CHECK(sup_cdf_gap(a, scaled) == 0.0);
  ScoredCalibrationSet other({1, 3}, {1, 1});
  CHECK_THROWS_AS(sup_cdf_gap(a, other), InvalidInput);
}

TEST_CASE("property: weighted quantities match brute force on random sets") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto inst = random_instance(seed, 40, 3.0, seed % 2 == 0);
    if (std::all_of(inst.weights.begin(), inst.weights.end(), [](double w) { return w == 0.0; })) continue;
    ScoredCalibrationSet set(inst.scores, inst.weights);
    for (double t : inst.scores) CHECK(weighted_cdf(set, t) == Approx(brute_cdf(inst.scores, inst.weights, t)).margin(1e-12));
    for (double level : {0.05, 0.3, 0.5, 0.8, 0.95, 1.0, 1.01}) {
      const auto res = calibrate_threshold(set, level);
      CHECK(res.tau == brute_tau(inst.scores, inst.weights, level));
      CHECK(res.trivial_set == std::isinf(res.tau));
    }
  }
}

TEST_CASE("property: constant weights reproduce the empirical CDF exactly") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto inst = random_instance(seed, 30, 1.0, true);
    const std::vector<double> ones(inst.scores.size(), 1.0);
    const std::vector<double> consts(inst.scores.size(), 0.37);
    ScoredCalibrationSet u(inst.scores, ones);
    ScoredCalibrationSet c(inst.scores, consts);
    for (double t : inst.scores) {
      const double count = static_cast<double>(std::count_if(inst.scores.begin(), inst.scores.end(), [&](double s) { return s <= t; }));
      CHECK(weighted_cdf(u, t) == count / static_cast<double>(inst.scores.size()));
    }
    CHECK(sup_cdf_gap(u, c) <= 1e-15);
  }
}

TEST_CASE("property: positive scaling of weights changes nothing") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto inst = random_instance(seed + 1000, 30, 2.0, false);
    inst.weights[0] += 0.1;
    for (double c : {0.5, 2.0, 1024.0}) {
      std::vector<double> scaled = inst.weights;
      for (auto& w : scaled) w *= c;
      ScoredCalibrationSet a(inst.scores, inst.weights);
      ScoredCalibrationSet b(inst.scores, scaled);
      for (double level : {0.1, 0.5, 0.9}) CHECK(calibrate_threshold(a, level).tau == calibrate_threshold(b, level).tau);
      for (double t : inst.scores) CHECK(weighted_cdf(a, t) == Approx(weighted_cdf(b, t)).margin(1e-13));
    }
  }
}

TEST_CASE("property: threshold is monotone in level and the smallest score for tiny levels") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto inst = random_instance(seed + 2000, 25, 1.0, seed % 3 == 0);
    for (auto& w : inst.weights) w += 0.01;
    ScoredCalibrationSet set(inst.scores, inst.weights);
    double prev = -kInf;
    for (int i = 1; i <= 110; ++i) {
      const double tau = calibrate_threshold(set, i / 100.0).tau;
      CHECK(tau >= prev);
      prev = tau;
    }
    const double min_jump = *std::min_element(inst.weights.begin(), inst.weights.end()) / set.total_weight();
    CHECK(calibrate_threshold(set, min_jump * 0.5).tau == *std::min_element(inst.scores.begin(), inst.scores.end()));
  }
}

TEST_CASE("property: permuting pairs leaves outputs unchanged") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto inst = random_instance(seed + 3000, 30, 5.0, seed % 2 == 1);
    inst.weights[0] += 1.0;
    std::vector<std::size_t> order(inst.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::reverse(order.begin(), order.end());
    std::rotate(order.begin(), order.begin() + static_cast<long>(order.size() / 3), order.end());
    Instance perm;
    for (auto i : order) {
      perm.scores.push_back(inst.scores[i]);
      perm.weights.push_back(inst.weights[i]);
    }
    ScoredCalibrationSet a(inst.scores, inst.weights);
    ScoredCalibrationSet b(perm.scores, perm.weights);
    for (double t : inst.scores) CHECK(weighted_cdf(a, t) == weighted_cdf(b, t));
    for (double level : {0.2, 0.5, 0.77, 0.99}) CHECK(calibrate_threshold(a, level).tau == calibrate_threshold(b, level).tau);
  }
}

TEST_CASE("property: CDF perturbation bound on random discrete instances") {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    CounterRng rng(seed, "gap");
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 50);
    const double b = 1.0 + rng.uniform() * 9.0;
    std::vector<double> s(n), w1(n), w2(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform() * 10.0);
      w1[i] = rng.uniform() * b;
      w2[i] = rng.uniform() * b;
    }
    w1[0] += 1e-3;
    w2[0] += 1e-3;
    double diff = 0.0, mean1 = 0.0, mean2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diff += std::abs(w1[i] - w2[i]);
      mean1 += w1[i];
      mean2 += w2[i];
    }
    const double bound = (diff / n) / (std::max(mean1, mean2) / n);
    CHECK(sup_cdf_gap(ScoredCalibrationSet(s, w1), ScoredCalibrationSet(s, w2)) <= bound + 1e-12);
  }
}

TEST_CASE("coverage rows and reports") {
  auto bad = CoverageRow::failure("wcp", std::nullopt, 0.5, 3, "boom");
  CHECK(bad.failed());
  CHECK(std::isnan(bad.coverage));
  CHECK(std::isnan(bad.tau));

  CoverageReport rep;
  rep.rows.push_back({"split", std::nullopt, 1.0, 1, 0.7, std::nullopt, 1.0, 0.8, ""});
  rep.rows.push_back({"split", std::nullopt, 0.0, 2, 0.8, std::nullopt, 1.0, 0.8, ""});
  rep.rows.push_back({"cwcp-B5", 5.0, 0.0, 0, 0.9, 2.0, 1.0, 0.85, ""});
  rep.rows.push_back(bad);
  rep.sort();
  CHECK(rep.rows[0].method == "cwcp-B5");
  CHECK(rep.rows[1].method == "split");
  CHECK(rep.rows[1].shift == 0.0);
  CHECK_NOTHROW(rep.validate());

  rep.rows.push_back({"split", std::nullopt, 0.0, 2, 0.6, std::nullopt, 1.0, 0.8, ""});
  CHECK_THROWS_AS(rep.validate(), InvalidInput);
  rep.rows.pop_back();
  rep.rows.push_back({"split", std::nullopt, 0.0, 9, 1.2, std::nullopt, 1.0, 0.8, ""});
  CHECK_THROWS_AS(rep.validate(), InvalidInput);
}
