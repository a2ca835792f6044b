#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "catch_amalgamated.hpp"
#include "clipcp/error.hpp"
#include "clipcp/normal.hpp"
#include "clipcp/numeric.hpp"
#include "clipcp/rng.hpp"
#include "clipcp/synth.hpp"

using namespace clipcp;
using namespace clipcp::synth;
using Catch::Approx;

namespace {

double sup_norm(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

double column_mean(const Matrix& x, std::size_t j) {
  CompensatedSum s;
  for (std::size_t i = 0; i < x.rows; ++i) s.add(x(i, j));
  return s.value() / static_cast<double>(x.rows);
}

}  // namespace

TEST_CASE("philox matches the published known-answer vectors") {
  // Random123 KAT for philox4x32-10.
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        std::array<std::uint32_t, 4>{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter streams are reproducible and separated") {
  CounterRng a(5, "x", 3), b(5, "x", 3), c(5, "x", 4), d(5, "y", 3);
  std::vector<std::uint64_t> va, vb, vc, vd;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a());
    vb.push_back(b());
    vc.push_back(c());
    vd.push_back(d());
  }
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(va != vd);
  std::set<std::uint64_t> seeds;
  for (std::uint64_t t = 0; t < 1000; ++t) seeds.insert(derive_seed(0, "trial", t));
  CHECK(seeds.size() == 1000);

  CounterRng u(1, "u");
  RunningMoments m;
  for (int i = 0; i < 200000; ++i) {
    const double x = u.uniform();
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
    m.add(x);
  }
  CHECK(std::abs(m.mean() - 0.5) <= 4.0 * std::sqrt(1.0 / 12.0 / 200000));
}

TEST_CASE("normal cdf and quantile") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963984540054) == Approx(0.975).epsilon(1e-13));
  CHECK(normal_cdf(-8.0) == Approx(6.220960574271784e-16).epsilon(1e-10));
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.8, 0.999, 1 - 1e-9})
    CHECK(normal_cdf(normal_quantile(p)) == Approx(p).epsilon(1e-12));
  CHECK(std::isinf(normal_quantile(0.0)));
  CHECK(std::isnan(normal_quantile(1.5)));
}

TEST_CASE("needle generator") {
  const std::size_t n = 1000000;
  SECTION("P mass of the ball") {
    const auto ds = gen_needle(Source::P, 0.5, 2, 0.3, n, 1);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < n; ++i) inside += sup_norm(ds.x.row(i)) <= 0.5;
    const double f = static_cast<double>(inside) / n;
    CHECK(std::abs(f - 0.25) <= 4.0 * std::sqrt(0.25 * 0.75 / n));
    REQUIRE(ds.scores);
    for (std::size_t i = 0; i < 1000; ++i) CHECK((*ds.scores)[i] == sup_norm(ds.x.row(i)));
    REQUIRE(ds.y);
    CHECK(ds.y->size() == n);
  }
  SECTION("Q mass of the ball") {
    const double r = 0.3, theta = 0.2;
    const auto ds = gen_needle(Source::Q, r, 1, theta, n, 2);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < n; ++i) inside += ds.x(i, 0) <= r;
    const double p = theta + (1 - theta) * r;
    CHECK(std::abs(static_cast<double>(inside) / n - p) <= 4.0 * std::sqrt(p * (1 - p) / n));
  }
  SECTION("theta 1 puts everything in the ball") {
    const auto ds = gen_needle(Source::Q, 0.1, 3, 1.0, 10000, 3);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(sup_norm(ds.x.row(i)) <= 0.1);
  }
  CHECK_THROWS_AS(gen_needle(Source::P, 1.5, 1, 0.5, 10, 0), InvalidInput);
  CHECK_THROWS_AS(gen_needle(Source::P, 0.5, 1, 0.0, 10, 0), InvalidInput);
  CHECK_THROWS_AS(gen_needle(Source::P, 0.5, 0, 0.5, 10, 0), InvalidInput);
}

TEST_CASE("gaussian generator") {
  const std::size_t n = 1000000;
  const auto p = gen_gaussian_shift(Source::P, 2.0, 2, n, 4);
  const auto q = gen_gaussian_shift(Source::Q, 2.0, 2, n, 5);
  CHECK(std::abs(column_mean(p.x, 0)) <= 4.0 / std::sqrt(n));
  CHECK(std::abs(column_mean(q.x, 0) - 2.0) <= 4.0 / std::sqrt(n));
  CHECK(std::abs(column_mean(q.x, 1)) <= 4.0 / std::sqrt(n));
  CHECK_FALSE(p.scores.has_value());
  REQUIRE(p.y);

  // Label model: with coefficients (1, 1; 0) the residual is |exp(x1^2) + noise|.
  AffinePredictor ones{0.0, {1.0, 1.0}};
  const auto small = gen_gaussian_shift(Source::P, 0.0, 2, 2000, 6);
  const auto res = residual_scores(small.x, *small.y, ones);
  RunningMoments noise;
  for (std::size_t i = 0; i < small.size(); ++i) {
    const double signal = std::exp(small.x(i, 0) * small.x(i, 0));
    const double eps = (*small.y)[i] - small.x(i, 0) - small.x(i, 1) - signal;
    noise.add(eps);
    CHECK(res[i] == Approx(std::abs(signal + eps)).margin(1e-10));
  }
  CHECK(std::abs(noise.mean()) <= 4.0 / std::sqrt(2000.0));
  CHECK(std::sqrt(noise.variance()) == Approx(1.0).margin(0.1));
}

TEST_CASE("power-law generator") {
  const std::size_t n = 100000;
  auto q = gen_powerlaw(Source::Q, n, 7);
  std::vector<double> xs(q.x.data);
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = std::sqrt(xs[i]);
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  CHECK(ks <= 1.63 / std::sqrt(static_cast<double>(n)));
  const double below = static_cast<double>(std::upper_bound(xs.begin(), xs.end(), 0.25) - xs.begin()) / n;
  CHECK(std::abs(below - 0.5) <= 4.0 * std::sqrt(0.25 / n));
  REQUIRE(q.scores);
  CHECK(*q.scores == q.x.data);

  const auto p = gen_powerlaw(Source::P, 1000000, 8);
  RunningMoments w, w2;
  for (double x : p.x.data) {
    const double r = true_ratio(PowerLawSpec{}, std::vector<double>{x});
    w.add(r);
    w2.add(r * r);
  }
  CHECK(std::abs(w.mean() - 1.0) <= 4.0 * w.std_error());
  // E[w^2] is infinite: the sample mean of 1/(4U) grows like log(n) / 4.
  CHECK(w2.mean() > 3.0);
  std::vector<double> small_means;
  for (std::uint64_t s = 0; s < 9; ++s) {
    const auto few = gen_powerlaw(Source::P, 100, 100 + s);
    RunningMoments m2;
    for (double x : few.x.data) m2.add(1.0 / (4.0 * x));
    small_means.push_back(m2.mean());
  }
  std::nth_element(small_means.begin(), small_means.begin() + 4, small_means.end());
  CHECK(w2.mean() - small_means[4] > 1.5);
}

TEST_CASE("true ratios") {
  const NeedleSpec needle{0.5, 1, 0.5};
  CHECK(true_ratio(needle, std::vector<double>{0.2}) == 1.5);
  CHECK(true_ratio(needle, std::vector<double>{0.7}) == 0.5);
  CHECK(ratio_supremum(needle) == 1.5);
  CHECK(true_ratio(GaussianTiltSpec{0.0, 3}, std::vector<double>{1.0, -2.0, 0.4}) == 1.0);
  CHECK(true_ratio(GaussianTiltSpec{1.0, 1}, std::vector<double>{0.5}) == Approx(1.0));
  CHECK(true_ratio(PowerLawSpec{}, std::vector<double>{0.25}) == 1.0);
  CHECK(std::isinf(ratio_supremum(PowerLawSpec{})));
  CHECK_THROWS_AS(true_ratio(PowerLawSpec{}, std::vector<double>{0.0}), InvalidInput);
  CHECK_THROWS_AS(true_ratio(GaussianTiltSpec{1.0, 2}, std::vector<double>{0.5}), InvalidInput);
}

TEST_CASE("property: true ratios integrate to one under P") {
  const std::vector<AnalyticShiftSpec> specs{NeedleSpec{0.3, 2, 0.4}, PowerLawSpec{}, GaussianTiltSpec{1.0, 3},
                                             GaussianTiltSpec{0.0, 1}};
  for (const auto& spec : specs) {
    const auto x = sample_inputs(spec, Source::P, 400000, 9);
    RunningMoments m;
    for (std::size_t i = 0; i < x.rows; ++i) m.add(true_ratio(spec, x.row(i)));
    CHECK(std::abs(m.mean() - 1.0) <= 4.0 * m.std_error() + 1e-12);
  }
}

TEST_CASE("property: regeneration is bit-identical and prefix-stable") {
  const std::vector<AnalyticShiftSpec> specs{NeedleSpec{0.3, 2, 0.4}, PowerLawSpec{}, GaussianTiltSpec{1.0, 3}};
  for (const auto& spec : specs)
    for (auto src : {Source::P, Source::Q}) {
      const auto a = generate(spec, src, 500, 42);
      const auto b = generate(spec, src, 500, 42);
      CHECK(a.x == b.x);
      CHECK(a.y == b.y);
      CHECK(a.scores == b.scores);
      CHECK(a.seed == 42);
      const auto head = generate(spec, src, 200, 42);
      CHECK(std::equal(head.x.data.begin(), head.x.data.end(), a.x.data.begin()));
      CHECK(sample_inputs(spec, src, 500, 42) == a.x);
      CHECK(generate(spec, src, 500, 43).x != a.x);
    }
}

TEST_CASE("least squares and residuals") {
  Matrix x(50, 2);
  std::vector<double> y(50);
  CounterRng rng(3, "ls");
  for (std::size_t i = 0; i < 50; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = 0.5 + 2.0 * x(i, 0) - 1.0 * x(i, 1);
  }
  const auto fit = fit_least_squares(x, y);
  CHECK(fit.intercept == Approx(0.5).margin(1e-10));
  CHECK(fit.coef[0] == Approx(2.0).margin(1e-10));
  CHECK(fit.coef[1] == Approx(-1.0).margin(1e-10));
  for (double s : residual_scores(x, y, fit)) CHECK(s <= 1e-9);
  const auto zero = residual_scores(x, y, AffinePredictor{0.0, {0.0, 0.0}});
  for (std::size_t i = 0; i < 50; ++i) CHECK(zero[i] == std::abs(y[i]));
  CHECK_THROWS_AS(residual_scores(x, y, AffinePredictor{0.0, {1.0}}), InvalidInput);
  CHECK_THROWS_AS(fit_least_squares(Matrix(2, 2), std::vector<double>{1, 2}), InvalidInput);
}
