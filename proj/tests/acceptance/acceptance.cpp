// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "clipcp/bias.hpp"
#include "clipcp/config.hpp"
#include "clipcp/core.hpp"
#include "clipcp/dre.hpp"
#include "clipcp/experiments.hpp"
#include "clipcp/numeric.hpp"
#include "clipcp/rng.hpp"
#include "clipcp/synth.hpp"

using namespace clipcp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("clipcp_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double mean_of(const std::vector<double>& v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double mu = mean_of(v);
  CompensatedSum s;
  for (double x : v) s.add((x - mu) * (x - mu));
  return std::sqrt(s.value() / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------

Outcome powerlaw_bias() {
  Outcome out;
  const synth::PowerLawSpec spec;
  for (double b : {1.0, 2.0, 4.0}) {
    const auto mc = bias::mc_delta_b(spec, b, 1000000, derive_seed(1, "powerlaw-bias", static_cast<std::uint64_t>(b)));
    const double exact = 1.0 / (4.0 * b);
    const double z = std::abs(mc.value - exact) / mc.std_error;
    out.require(z <= 4.0, fmt("B=%g within 4 se", b));
    out.note(fmt("B=%g mc=%.5f z=%.2f", b, mc.value, z));
  }
  out.require(bias::analytic_delta_b(spec, 1.0) == 0.25, "analytic Delta_1 == 0.25");
  return out;
}

Outcome needle_wcp_failure() {
  Outcome out;
  config::RunConfig cfg;
  cfg.kind = config::ExperimentKind::NeedleDemo;
  cfg.shift.family = "needle";
  cfg.shift.r = 0.001;
  cfg.shift.d = 1;
  cfg.shift.theta = 0.1;
  cfg.alpha = 0.1;
  cfg.needle_demo.part = "b1";
  cfg.needle_demo.c = 0.01;
  cfg.trials = 10000;
  cfg.seed = 2;
  cfg.out_dir = "";
  const auto res = experiments::cmd_needle_demo(cfg);
  const auto& st = *res.coverage;
  const double vol = 0.001;
  const double expected = 1.0 - std::pow(1.0 - vol, 10.0);
  out.require(st.m == 10, "m == 10");
  out.require(std::abs(st.event_frequency - expected) <= 0.02, "frequency within 0.02 of 1-(1-r^d)^m");
  const double bound = 0.1 + 0.9 * vol;
  std::size_t events = 0, within = 0;
  for (const auto& row : res.report.rows) {
    if (!(row.tau <= cfg.shift.r)) continue;
    ++events;
    within += row.coverage <= bound + 1e-12;
  }
  out.require(events == st.events && within == events, "on-event coverage <= theta + (1-theta) r^d");
  out.note(fmt("freq=%.4f expected=%.4f", st.event_frequency, expected));
  out.note(fmt("events=%g max on-event coverage=%.4f bound=%.4f", static_cast<double>(events), st.max_event_coverage,
               bound));
  return out;
}

Outcome needle_erm() {
  Outcome out;
  config::RunConfig cfg;
  cfg.kind = config::ExperimentKind::NeedleDemo;
  cfg.shift.family = "needle";
  cfg.shift.r = 0.01;
  cfg.shift.d = 1;
  cfg.shift.theta = 0.2;
  cfg.needle_demo.part = "b2";
  cfg.needle_demo.m = 50;
  cfg.needle_demo.n = 50;
  cfg.trials = 10000;
  cfg.seed = 3;
  cfg.out_dir = "";
  const auto res = experiments::cmd_needle_demo(cfg);
  const double p0 = 0.2325;
  const double se = std::sqrt(p0 * (1.0 - p0) / 10000.0);
  const double l1 = 2.0 * 0.8 * 0.99;
  std::size_t events = 0;
  bool beta_ok = true;
  double l1_dev = 0.0;
  for (const auto& t : res.erm_trials) {
    if (!t.event) continue;
    ++events;
    beta_ok = beta_ok && t.beta_hat == 100.0;
    l1_dev = std::max(l1_dev, std::abs(t.l1 - l1));
  }
  const double freq = static_cast<double>(events) / 10000.0;
  out.require(freq >= p0 - 4.0 * se, "joint-event frequency >= 0.2325 - 4 se");
  out.require(events > 0 && beta_ok, "on-event beta_hat == 1/r^d");
  out.require(l1_dev <= 1e-9, "on-event L1 == 2(1-theta)(1-r^d)");
  out.note(fmt("freq=%.4f floor=%.4f max L1 deviation=%.1e", freq, p0 - 4.0 * se, l1_dev));
  return out;
}

struct Counts {
  std::vector<std::size_t> train, test;
  std::vector<double> probs;
  double b = 1.0;
};

Counts random_counts(std::uint64_t seed) {
  CounterRng rng(seed, "acceptance-counts");
  Counts c;
  const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform() * 5.0);
  const double bs[] = {1.0, 2.0, 5.0, 10.0};
  c.b = bs[static_cast<std::size_t>(rng.uniform() * 4.0)];
  double total = 0.0;
  for (std::size_t g = 0; g < k; ++g) {
    c.train.push_back(static_cast<std::size_t>(rng.uniform() * 21.0));
    c.test.push_back(static_cast<std::size_t>(rng.uniform() * 21.0));
    c.probs.push_back(0.05 + rng.uniform());
    total += c.probs.back();
  }
  if (std::accumulate(c.train.begin(), c.train.end(), std::size_t{0}) == 0) c.train[0] = 1;
  if (std::accumulate(c.test.begin(), c.test.end(), std::size_t{0}) == 0) c.test[0] = 1;
  for (auto& p : c.probs) p /= total;
  return c;
}

Outcome piecewise_oracles() {
  Outcome out;
  double worst_free = 0.0, worst_qp = 0.0, worst_kkt = 0.0;
  int two_group = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto c = random_counts(seed);
    const double m = std::accumulate(c.train.begin(), c.train.end(), 0.0);
    const double n = std::accumulate(c.test.begin(), c.test.end(), 0.0);
    const auto k = c.train.size();
    auto f = [&](std::size_t g, double w) { return c.train[g] * w * w / (2 * m) - c.test[g] * w / n; };
    const long steps = std::lround(c.b / 1e-3);

    const auto free_fit = dre::fit_piecewise_unknown_p(c.train, c.test, c.b);
    const auto& wf = std::get<dre::PiecewiseConstant>(free_fit.fit.ratio_class()).weights;
    for (std::size_t g = 0; g < k; ++g) {
      if (c.train[g] == 0 && c.test[g] == 0) continue;
      double best = std::numeric_limits<double>::infinity(), arg = 0.0;
      for (long i = 0; i <= steps; ++i) {
        const double w = i * 1e-3;
        if (f(g, w) < best - 1e-15) {
          best = f(g, w);
          arg = w;
        }
      }
      worst_free = std::max(worst_free, std::abs(wf[g] - arg));
    }

    const auto qp = dre::fit_piecewise_known_p(c.train, c.test, c.probs, c.b);
    const auto& w = std::get<dre::PiecewiseConstant>(qp.fit.ratio_class()).weights;
    const double nu = qp.multiplier;
    double mass = 0.0;
    for (std::size_t g = 0; g < k; ++g) mass += c.probs[g] * w[g];
    double kkt = std::max({0.0, mass - 1.0, -nu, nu * std::abs(1.0 - mass)});
    for (std::size_t g = 0; g < k; ++g) {
      const double grad = c.train[g] / m * w[g] - c.test[g] / n + nu * c.probs[g];
      double r = std::abs(grad);
      if (w[g] <= 1e-12) r = std::max(0.0, -grad);
      if (w[g] >= c.b - 1e-12) r = std::max(0.0, grad);
      kkt = std::max({kkt, r, -w[g], w[g] - c.b});
    }
    worst_kkt = std::max(worst_kkt, kkt);

    if (k != 2) continue;
    ++two_group;
    double best = std::numeric_limits<double>::infinity(), b0 = 0.0, b1 = 0.0;
    for (long i = 0; i <= steps; ++i) {
      const double w0 = i * 1e-3;
      const double cap = (1.0 - c.probs[0] * w0) / c.probs[1];
      if (cap < 0.0) break;
      for (long j = 0; j <= steps && j * 1e-3 <= cap; ++j) {
        const double w1 = j * 1e-3;
        const double v = f(0, w0) + f(1, w1);
        if (v < best) {
          best = v;
          b0 = w0;
          b1 = w1;
        }
      }
    }
    const double fw = f(0, w[0]) + f(1, w[1]);
    out.require(fw <= best + 1e-9, "known-P objective <= grid optimum");
    worst_qp = std::max(worst_qp, best - fw);
    if (nu == 0.0 && c.train[0] > 0 && c.train[1] > 0) {
      worst_qp = std::max({worst_qp, std::abs(w[0] - b0), std::abs(w[1] - b1)});
    }
  }
  out.require(worst_free <= 2e-3, "closed form within 2e-3 of grid");
  out.require(worst_qp <= 1e-3 + 1e-9, "known-P within 1e-3 of 2-D grid (objective; weights when inactive)");
  out.require(worst_kkt <= 1e-6, "KKT residual <= 1e-6");
  out.require(two_group > 0, "some k=2 instances");
  out.note(fmt("closed form dev=%.1e qp dev=%.1e kkt=%.1e", worst_free, worst_qp, worst_kkt));
  out.note(fmt("k=2 instances=%g", two_group));
  return out;
}

Outcome excess_risk_transfer() {
  Outcome out;
  std::size_t holds = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    CounterRng rng(seed, "acceptance-transfer");
    const std::size_t atoms = 1 + static_cast<std::size_t>(rng.uniform() * 10.0);
    const double b = 0.5 + rng.uniform() * 5.0;
    std::vector<double> p(atoms), q(atoms), w(atoms), star(atoms);
    double sp = 0.0, sq = 0.0;
    for (std::size_t a = 0; a < atoms; ++a) {
      p[a] = 0.01 + rng.uniform();
      q[a] = rng.uniform();
      sp += p[a];
      sq += q[a];
    }
    for (std::size_t a = 0; a < atoms; ++a) {
      p[a] /= sp;
      q[a] /= sq;
      star[a] = std::min(q[a] / p[a], b);
      w[a] = rng.uniform() * b;
    }
    double l2 = 0.0;
    for (std::size_t a = 0; a < atoms; ++a) l2 += p[a] * (w[a] - star[a]) * (w[a] - star[a]);
    const double excess = dre::discrete_population_risk(p, q, w) - dre::discrete_population_risk(p, q, star);
    holds += l2 <= 2.0 * excess + 1e-12;
    min_gap = std::min(min_gap, 2.0 * excess - l2);
  }
  out.require(holds == 1000, "L2 <= 2 x excess risk in every instance");
  out.note(fmt("holds=%g/1000 min slack=%.2e", static_cast<double>(holds), min_gap));
  return out;
}

Outcome bias_concentration() {
  Outcome out;
  const synth::PowerLawSpec spec;
  const double b = 2.0, gamma = 0.5, m = 100;
  const dre::RatioFit fit(dre::Custom{"w*", [spec](std::span<const double> x) { return synth::true_ratio(spec, x); }},
                          b);
  const double delta_b = bias::analytic_delta_b(spec, b);
  std::size_t exceed = 0;
  for (std::uint64_t rep = 0; rep < 10000; ++rep) {
    const auto x = synth::sample_inputs(spec, synth::Source::P, 100, derive_seed(6, "concentration", rep));
    exceed += std::abs(bias::estimate_clipping_bias(fit, x).delta_hat - delta_b) > gamma;
  }
  const double freq = static_cast<double>(exceed) / 10000.0;
  const double bound = 2.0 * std::exp(-gamma * gamma * m / (2.0 * b * (1.0 + gamma)));
  out.require(freq <= bound, "deviation frequency <= bound");
  out.require(std::abs(bias::bias_deviation_bound({b, 0.0, gamma, m}).raw - bound) <= 1e-15, "bound calculator agrees");
  out.note(fmt("freq=%.4f bound=%.4f", freq, bound));
  return out;
}

Outcome cdf_perturbation() {
  Outcome out;
  std::size_t holds = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    CounterRng rng(seed, "acceptance-cdf");
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 40.0);
    std::vector<double> s(n), w1(n), w2(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform() * 15.0);
      w1[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform() * 5.0;
      w2[i] = rng.uniform() < 0.5 ? w1[i] : rng.uniform() * 5.0;
    }
    w1[0] += 0.1;
    w2[0] += 0.1;
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) diff += std::abs(w1[i] - w2[i]);
    const double mean1 = std::accumulate(w1.begin(), w1.end(), 0.0) / n;
    const double mean2 = std::accumulate(w2.begin(), w2.end(), 0.0) / n;
    const double rhs = (diff / n) / std::max(mean1, mean2);
    const double gap = core::sup_cdf_gap(core::ScoredCalibrationSet(s, w1), core::ScoredCalibrationSet(s, w2));
    holds += gap <= rhs + 1e-12;
  }
  out.require(holds == 1000, "gap <= mean|w1-w2| / max mean in every instance");
  out.note(fmt("holds=%g/1000", static_cast<double>(holds)));
  return out;
}

Outcome gaussian_sweep() {
  Outcome out;
  config::RunConfig cfg;
  cfg.kind = config::ExperimentKind::Coverage;
  cfg.shift.family = "gaussian";
  cfg.shift.d = 20;
  cfg.shift.betas = {0.0, 0.5, 1.0, 1.5, 2.0};
  cfg.b_grid = {2.5, 5.0, 10.0, 20.0};
  cfg.alpha = 0.2;
  cfg.epsilon = 0.005;
  cfg.sizes.m_train = 1000;
  cfg.sizes.m_test = 1000;
  cfg.sizes.m_est = 600;
  cfg.sizes.m_cal = 600;
  cfg.trials = 30;
  cfg.seed = 0;
  cfg.out_dir = (work_dir() / "gaussian").string();
  const auto run = experiments::cmd_coverage_experiment(cfg);
  out.require(run.failed_rows == 0, "no failed rows");

  std::map<std::pair<std::string, double>, std::vector<double>> cov;
  for (const auto& r : run.report.rows) cov[{r.method, r.shift}].push_back(r.coverage);
  const std::vector<std::string> methods{"split", "wcp", "cwcp-B2.5", "cwcp-B5", "cwcp-B10", "cwcp-B20"};

  std::string means0;
  for (const auto& m : methods) {
    const double mu = mean_of(cov[{m, 0.0}]);
    out.require(std::abs(mu - 0.8) <= 0.03, m + " mean coverage at beta=0 within 0.03 of 0.8");
    means0 += (means0.empty() ? "" : " ") + m + "=" + fmt("%.4f", mu);
  }
  out.note("beta=0 means: " + means0);

  const double split0 = mean_of(cov[{"split", 0.0}]), split2 = mean_of(cov[{"split", 2.0}]);
  out.require(split2 <= split0 - 0.03, "split coverage drops by >= 0.03 from beta=0 to beta=2");
  out.note(fmt("split beta=0 %.4f beta=2 %.4f", split0, split2));

  const double sd_wcp = sd_of(cov[{"wcp", 2.0}]);
  const double sd_b5 = sd_of(cov[{"cwcp-B5", 2.0}]);
  out.require(sd_b5 <= sd_wcp, "sd(CWCP B=5) <= sd(WCP) at beta=2");

  std::vector<double> sds;
  for (const auto* m : {"cwcp-B2.5", "cwcp-B5", "cwcp-B10", "cwcp-B20"}) sds.push_back(sd_of(cov[{m, 2.0}]));
  int inversions = 0;
  for (std::size_t i = 1; i < sds.size(); ++i) inversions += sds[i] < sds[i - 1];
  out.require(inversions <= 1, "CWCP sd nondecreasing in B up to one inversion");
  out.note(fmt("beta=2 sd wcp=%.4f", sd_wcp) + fmt(" cwcp B2.5/5/10/20=%.4f/%.4f/%.4f", sds[0], sds[1], sds[2]) +
           fmt("/%.4f", sds[3]));

  std::vector<double> split_means;
  for (double beta : cfg.shift.betas) split_means.push_back(mean_of(cov[{"split", beta}]));
  bool decreasing = true;
  for (std::size_t i = 1; i < split_means.size(); ++i) decreasing = decreasing && split_means[i] < split_means[i - 1];
  std::printf("INFO 8 split mean coverage by beta: %.4f %.4f %.4f %.4f %.4f (strictly decreasing: %s)\n",
              split_means[0], split_means[1], split_means[2], split_means[3], split_means[4],
              decreasing ? "yes" : "no");
  return out;
}

Outcome bound_calculators() {
  Outcome out;
  const auto size = bias::wcp_calibration_size({1.0, 0.1, 0.1});
  out.require(size == 15320, "wcp_calibration_size(1, 0.1, 0.1) == 15320");
  const auto plan = dre::required_sample_sizes(1.0, 1.0, 2.0 / std::exp(1.0), 1.0, 1.0);
  out.require(plan.m_train == 5760 && plan.m_test == 3456, "required_sample_sizes == (5760, 3456)");
  const double dev = bias::bias_deviation_bound({1.0, 0.0, 1.0, 4.0}).raw;
  out.require(std::abs(dev - 2.0 / std::exp(1.0)) <= 1e-6, "bias_deviation_bound(1, 0, 1, 4) == 2/e");
  out.note(fmt("wcp size=%g", static_cast<double>(size)) +
           fmt(" sizes=(%g, %g)", static_cast<double>(plan.m_train), static_cast<double>(plan.m_test)) +
           fmt(" deviation=%.9f", dev));
  return out;
}

Outcome srm_desk_scale() {
  Outcome out;
  config::RunConfig cfg;
  cfg.kind = config::ExperimentKind::Srm;
  cfg.shift.family = "gaussian";
  cfg.shift.d = 50;
  cfg.shift.betas = {2.0};
  cfg.b_grid = {2.5, 5.0, 10.0, 20.0};
  cfg.m_grid = {50, 200, 800};
  cfg.lambdas = {0.5};
  cfg.trials = 30;
  cfg.seed = 0;
  cfg.out_dir = (work_dir() / "srm").string();
  const auto table = experiments::cmd_srm_experiment(cfg);
  const auto s = experiments::summarize_srm(table, 0.5);
  bool nondecreasing = true;
  for (std::size_t i = 1; i < s.m.size(); ++i) nondecreasing = nondecreasing && s.mean_selected_b[i] >= s.mean_selected_b[i - 1];
  out.require(nondecreasing, "mean selected B nondecreasing in m");
  const std::size_t last = s.m.size() - 1;
  const double ratio = s.mean_selected_l2[last] / s.best_grid_l2[last];
  out.require(s.m[last] == 800 && ratio <= 1.25, "selected L2 <= 1.25 x grid best at m=800");
  out.note(fmt("mean selected B=%.2f/%.2f/%.2f", s.mean_selected_b[0], s.mean_selected_b[1], s.mean_selected_b[2]));
  out.note(fmt("m=800 L2 selected=%.3f best=%.3f ratio=%.3f", s.mean_selected_l2[last], s.best_grid_l2[last], ratio));
  return out;
}

Outcome determinism() {
  Outcome out;
  const auto run = [](config::RunConfig cfg, std::size_t workers, const std::string& tag) {
    cfg.workers = workers;
    cfg.out_dir = (work_dir() / "det" / (tag + "-w" + std::to_string(workers))).string();
    return cfg;
  };

  config::RunConfig cov;
  cov.shift.d = 5;
  cov.shift.betas = {0.0, 1.0};
  cov.sizes = {300, 300, 200, 200, 500, 300};
  cov.trials = 8;
  cov.seed = 5;

  config::RunConfig needle;
  needle.kind = config::ExperimentKind::NeedleDemo;
  needle.shift.family = "needle";
  needle.shift.r = 0.01;
  needle.shift.d = 1;
  needle.shift.theta = 0.2;
  needle.alpha = 0.1;
  needle.needle_demo = {"both", 0.02, 50, 50};
  needle.trials = 200;
  needle.seed = 5;

  config::RunConfig srm;
  srm.kind = config::ExperimentKind::Srm;
  srm.shift.d = 5;
  srm.shift.betas = {1.0};
  srm.m_grid = {50, 200};
  srm.lambdas = {0.0, 0.5};
  srm.sizes.n_eval = 500;
  srm.trials = 4;
  srm.seed = 5;

  std::size_t files = 0;
  for (std::size_t workers : {1, 8}) {
    experiments::cmd_coverage_experiment(run(cov, workers, "coverage"));
    experiments::cmd_coverage_experiment(run(cov, workers, "coverage-again"));
    experiments::cmd_needle_demo(run(needle, workers, "needle"));
    experiments::cmd_srm_experiment(run(srm, workers, "srm"));
  }
  const auto same = [&](const std::string& a, const std::string& b, const std::string& file) {
    const auto x = slurp(work_dir() / "det" / a / file), y = slurp(work_dir() / "det" / b / file);
    out.require(!x.empty() && x == y, file + " identical for " + a + " and " + b);
    ++files;
  };
  same("coverage-w1", "coverage-w8", "coverage.csv");
  same("coverage-w1", "coverage-again-w1", "coverage.csv");
  same("coverage-w8", "coverage-again-w8", "coverage.csv");
  same("needle-w1", "needle-w8", "needle_demo.csv");
  same("needle-w1", "needle-w8", "needle_erm.csv");
  same("srm-w1", "srm-w8", "srm.csv");
  out.note(fmt("compared %g file pairs", static_cast<double>(files)));
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"power-law clipping bias", powerlaw_bias},
      {"needle WCP failure", needle_wcp_failure},
      {"needle ERM overestimation", needle_erm},
      {"piecewise oracle equivalence", piecewise_oracles},
      {"excess-risk transfer", excess_risk_transfer},
      {"bias concentration", bias_concentration},
      {"CDF perturbation", cdf_perturbation},
      {"desk-scale Gaussian sweep", gaussian_sweep},
      {"bound calculators", bound_calculators},
      {"SRM desk scale", srm_desk_scale},
      {"determinism across worker counts", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !out.pass;
    std::printf("%s %zu %s (%.1f s): %s\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), secs,
                out.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(work_dir());
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
