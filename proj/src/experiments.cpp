#include "clipcp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "clipcp/error.hpp"
#include "clipcp/ingest.hpp"
#include "clipcp/rng.hpp"
#include "clipcp/synth.hpp"

namespace clipcp::experiments {

using config::RunConfig;
using nlohmann::json;

namespace {

// Stand-in for an unclipped tilt fit: large enough that clipping never binds
// on desk-scale data, small enough that squared weights stay finite.
constexpr double kUnclippedGuard = 1e6;
constexpr double kMaxNeedleCalibration = 1e8;

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string out_file(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

bool persist(const RunConfig& cfg) { return !cfg.out_dir.empty(); }

std::string resolved_class_name(const RunConfig& cfg) {
  if (cfg.ratio_class != "auto") return cfg.ratio_class;
  const auto& fam = cfg.shift.family;
  if (fam == "gaussian") return "tilt";
  if (fam == "needle") return "needle";
  if (fam == "powerlaw") return "piecewise";
  return cfg.csv && cfg.csv->group ? "piecewise" : "tilt";
}

bool uses_group_column(const RunConfig& cfg) {
  const auto cls = resolved_class_name(cfg);
  return cfg.shift.family == "csv" && cfg.csv && cfg.csv->group && cls.rfind("piecewise", 0) == 0;
}

dre::GroupFn bin_first_coordinate(std::size_t k) {
  return [k](std::span<const double> x) -> std::size_t {
    if (x.empty() || !(x[0] >= 0.0 && x[0] <= 1.0)) {
      throw InvalidInput("binned groups need the first coordinate in [0, 1]");
    }
    return std::min(k - 1, static_cast<std::size_t>(x[0] * static_cast<double>(k)));
  };
}

dre::RatioClass make_class(const RunConfig& cfg, int d, double theta) {
  const auto cls = resolved_class_name(cfg);
  const auto& fam = cfg.shift.family;
  if (cls == "tilt") return dre::ExponentialTilt{std::vector<double>(static_cast<std::size_t>(d), 0.0)};
  if (cls == "needle") {
    if (fam != "needle") throw ConfigError("ratio_class", "the needle class needs the needle family");
    dre::NeedleOneParam nd{cfg.shift.r, d, theta, 0.0};
    nd.beta = nd.beta_min();
    return nd;
  }
  dre::PiecewiseConstant pc;
  pc.k = cfg.k;
  if (uses_group_column(cfg)) {
    pc.group_of = dre::group_from_first_coordinate;
  } else if (fam == "needle" || fam == "powerlaw") {
    pc.group_of = bin_first_coordinate(cfg.k);
  } else {
    throw ConfigError("ratio_class", "piecewise classes need inputs in [0, 1] or a CSV group column");
  }
  if (cls == "piecewise-known-p") {
    if (fam == "csv") throw ConfigError("ratio_class", "known group probabilities exist only for synthetic families");
    // P is uniform in the first coordinate for both [0, 1] families.
    pc.probs = std::vector<double>(cfg.k, 1.0 / static_cast<double>(cfg.k));
  }
  return pc;
}

double unclipped_b(const dre::RatioClass& cls) {
  if (const auto* nd = std::get_if<dre::NeedleOneParam>(&cls)) return nd->beta_max();
  return kUnclippedGuard;
}

synth::AnalyticShiftSpec make_spec(const RunConfig& cfg, double shift) {
  const auto& fam = cfg.shift.family;
  if (fam == "gaussian") return synth::GaussianTiltSpec{shift, cfg.shift.d};
  if (fam == "needle") return synth::NeedleSpec{cfg.shift.r, cfg.shift.d, shift};
  if (fam == "powerlaw") return synth::PowerLawSpec{};
  throw ConfigError("shift.family", "no analytic spec for family '" + fam + "'");
}

/// Shift values swept by the coverage experiment: beta for the Gaussian
/// family, theta for the needle family, a single 0 otherwise.
std::vector<double> shift_values(const RunConfig& cfg) {
  const auto& fam = cfg.shift.family;
  if (fam == "gaussian") return cfg.shift.betas;
  if (fam == "needle") {
    for (double t : cfg.shift.betas) {
      if (!(t > 0.0 && t < 1.0)) throw ConfigError("shift.betas", "needle shift values are theta and must lie in (0, 1)");
    }
    return cfg.shift.betas;
  }
  return {0.0};
}

Matrix group_matrix(const synth::GeneratedDataset& ds, const std::string& path) {
  if (!ds.groups) throw InvalidInput(path + ": dataset has no group column");
  Matrix g(ds.size(), 1);
  for (std::size_t i = 0; i < ds.size(); ++i) g(i, 0) = static_cast<double>((*ds.groups)[i]);
  return g;
}

synth::GeneratedDataset read_csv(const config::CsvConfig& c, const std::string& path, bool score) {
  return ingest::read_dataset(path, ingest::CsvSchema::with_features(c.features, false, score, c.group));
}

synth::AffinePredictor make_regressor(const RunConfig& cfg) {
  const auto ds = synth::gen_gaussian_shift(synth::Source::P, 0.0, cfg.shift.d, cfg.sizes.regressor_n,
                                            derive_seed(cfg.seed, "regressor"));
  return synth::fit_least_squares(ds.x, *ds.y);
}

json predictor_json(const synth::AffinePredictor& p) {
  return {{"intercept", p.intercept}, {"coef", p.coef}};
}

void write_errors(const RunConfig& cfg, const std::vector<std::string>& errors) {
  if (!persist(cfg) || errors.empty()) return;
  std::string text;
  for (const auto& e : errors) text += e + "\n";
  ingest::write_text_file(out_file(cfg, "errors.txt"), text);
}

json fit_json(const dre::FitReport& rep) {
  json params;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, dre::PiecewiseConstant>) {
          params["weights"] = c.weights;
          if (c.probs) params["probs"] = *c.probs;
        } else if constexpr (std::is_same_v<T, dre::ExponentialTilt>) {
          double norm = 0.0;
          for (double v : c.mu) norm += v * v;
          params["mu"] = c.mu;
          params["mu_norm"] = std::sqrt(norm);
        } else if constexpr (std::is_same_v<T, dre::NeedleOneParam>) {
          params["r"] = c.r;
          params["d"] = c.d;
          params["theta"] = c.theta;
          params["beta"] = c.beta;
          params["beta_min"] = c.beta_min();
          params["beta_max"] = c.beta_max();
        } else if constexpr (std::is_same_v<T, dre::Tabulated>) {
          params["values"] = c.values;
        }
      },
      rep.fit.ratio_class());
  return {{"class", dre::class_name(rep.fit.ratio_class())},
          {"b", rep.fit.clip_b()},
          {"params", params},
          {"empirical_risk", rep.empirical_risk},
          {"iterations", rep.iterations},
          {"restarts", rep.restarts},
          {"converged", rep.converged},
          {"gradient_norm", rep.gradient_norm},
          {"warnings", rep.warnings}};
}

/// The four disjoint samples of one coverage trial, already mapped to the
/// inputs the ratio class consumes.
struct TrialData {
  Matrix train;
  Matrix test;
  Matrix est;
  Matrix cal;
  std::vector<double> cal_scores;
  std::vector<double> eval_scores;
  bool residual_scores = false;
};

TrialData synthetic_trial(const RunConfig& cfg, const synth::AnalyticShiftSpec& spec, std::uint64_t trial_seed,
                          const synth::AffinePredictor* predictor) {
  using synth::Source;
  TrialData t;
  t.train = synth::sample_inputs(spec, Source::P, cfg.sizes.m_train, derive_seed(trial_seed, "fit-train"));
  t.test = synth::sample_inputs(spec, Source::Q, cfg.sizes.m_test, derive_seed(trial_seed, "fit-test"));
  t.est = synth::sample_inputs(spec, Source::P, cfg.sizes.m_est, derive_seed(trial_seed, "est"));
  auto cal = synth::generate(spec, Source::P, cfg.sizes.m_cal, derive_seed(trial_seed, "cal"));
  auto eval = synth::generate(spec, Source::Q, cfg.sizes.n_eval, derive_seed(trial_seed, "eval"));
  if (predictor) {
    t.cal_scores = synth::residual_scores(cal.x, *cal.y, *predictor);
    t.eval_scores = synth::residual_scores(eval.x, *eval.y, *predictor);
    t.residual_scores = true;
  } else {
    t.cal_scores = *cal.scores;
    t.eval_scores = *eval.scores;
  }
  t.cal = std::move(cal.x);
  return t;
}

TrialData csv_trial(const RunConfig& cfg) {
  const auto& c = *cfg.csv;
  if (c.est.empty() || c.cal.empty() || c.eval.empty()) {
    throw ConfigError("csv", "coverage runs need est, cal and eval files");
  }
  const bool groups = uses_group_column(cfg);
  auto inputs = [&](const synth::GeneratedDataset& ds, const std::string& path) {
    return groups ? group_matrix(ds, path) : ds.x;
  };
  TrialData t;
  t.train = inputs(read_csv(c, c.train, false), c.train);
  t.test = inputs(read_csv(c, c.test, false), c.test);
  t.est = inputs(read_csv(c, c.est, false), c.est);
  const auto cal = read_csv(c, c.cal, true);
  const auto eval = read_csv(c, c.eval, true);
  t.cal = inputs(cal, c.cal);
  t.cal_scores = *cal.scores;
  t.eval_scores = *eval.scores;
  return t;
}

core::CoverageRow run_method(const ResolvedMethod& method, const TrialData& data, const RunConfig& cfg,
                             const dre::RatioClass& cls, double shift, std::size_t trial,
                             const dre::OptimizerSettings& opt) {
  core::CalibrationResult res;
  std::optional<double> param_b = method.b;
  if (method.kind == "split") {
    res = core::calibrate_threshold(core::ScoredCalibrationSet::unweighted(data.cal_scores), 1.0 - cfg.alpha);
  } else {
    const double b = method.kind == "wcp" ? unclipped_b(cls) : *method.b;
    param_b = b;
    const auto fit = dre::clisf(cls, b, data.train, data.test, opt);
    double level = 1.0 - cfg.alpha;
    if (method.kind == "cwcp") {
      const auto est = bias::estimate_clipping_bias(fit.fit, data.est);
      level = core::cwcp_effective_level({cfg.alpha, est.delta_hat, cfg.epsilon, method.mode});
    }
    res = core::calibrate_threshold(core::ScoredCalibrationSet(data.cal_scores, fit.fit.evaluate(data.cal)), level);
  }
  core::CoverageRow row;
  row.method = method.label;
  row.param_b = param_b;
  row.shift = shift;
  row.trial = trial;
  row.coverage = core::evaluate_coverage(res.tau, data.eval_scores);
  if (data.residual_scores) row.width = 2.0 * res.tau;
  row.tau = res.tau;
  row.level = res.effective_level;
  return row;
}

}  // namespace

ExperimentPlan make_plan(const RunConfig& cfg) {
  config::validate(cfg);
  ExperimentPlan plan;
  plan.config = cfg;
  for (std::size_t t = 0; t < cfg.trials; ++t) plan.trial_seeds.push_back(derive_seed(cfg.seed, "trial", t));

  std::vector<config::MethodConfig> methods = cfg.methods;
  if (methods.empty()) {
    methods.push_back({"split", std::nullopt, "expected"});
    methods.push_back({"wcp", std::nullopt, "expected"});
    for (double b : cfg.b_grid) methods.push_back({"cwcp", b, "expected"});
  }
  std::set<std::string> labels;
  for (const auto& m : methods) {
    ResolvedMethod r;
    r.kind = m.kind;
    if (m.kind == "split") {
      r.label = "split";
      r.mode = core::CalibrationMode::Split;
    } else if (m.kind == "wcp") {
      r.label = "wcp";
      r.mode = core::CalibrationMode::Wcp;
    } else {
      r.b = m.b;
      const bool conditional = m.mode == "conditional";
      r.mode = conditional ? core::CalibrationMode::CwcpConditional : core::CalibrationMode::CwcpExpected;
      r.label = std::string(conditional ? "cwcp-cond-B" : "cwcp-B") + fmt_g(*m.b);
    }
    if (!labels.insert(r.label).second) throw ConfigError("methods", "duplicate method '" + r.label + "'");
    plan.roster.push_back(r);
  }
  return plan;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

FitRatioResult cmd_fit_ratio(const RunConfig& cfg) {
  config::validate(cfg);
  const auto& fam = cfg.shift.family;
  Matrix train, test, est;
  int d = cfg.shift.d;
  json data_json;
  if (fam == "csv") {
    const auto& c = *cfg.csv;
    const bool groups = uses_group_column(cfg);
    auto inputs = [&](const std::string& path) {
      const auto ds = read_csv(c, path, false);
      return groups ? group_matrix(ds, path) : ds.x;
    };
    train = inputs(c.train);
    test = inputs(c.test);
    if (!c.est.empty()) est = inputs(c.est);
    d = static_cast<int>(train.cols);
    data_json = {{"train", c.train}, {"test", c.test}, {"est", c.est}};
  } else {
    const double shift = fam == "gaussian" ? cfg.shift.betas.front() : cfg.shift.theta;
    const auto spec = make_spec(cfg, shift);
    d = synth::dimension(spec);
    train = synth::sample_inputs(spec, synth::Source::P, cfg.sizes.m_train, derive_seed(cfg.seed, "fit-train"));
    test = synth::sample_inputs(spec, synth::Source::Q, cfg.sizes.m_test, derive_seed(cfg.seed, "fit-test"));
    est = synth::sample_inputs(spec, synth::Source::P, cfg.sizes.m_est, derive_seed(cfg.seed, "est"));
    data_json = {{"family", fam}, {"shift", shift}, {"d", d}};
  }

  const auto cls = make_class(cfg, d, cfg.shift.theta);
  dre::OptimizerSettings opt;
  opt.seed = derive_seed(cfg.seed, "optimizer");
  FitRatioResult result{dre::clisf(cls, cfg.b, train, test, opt), std::nullopt, {}};
  if (!est.empty()) result.bias = bias::estimate_clipping_bias(result.report.fit, est);

  json summary = fit_json(result.report);
  summary["data"] = data_json;
  summary["m_train"] = train.rows;
  summary["m_test"] = test.rows;
  if (result.bias) {
    summary["delta_hat"] = result.bias->delta_hat;
    summary["m_est"] = result.bias->m_est;
  }
  summary["seed"] = cfg.seed;
  result.summary_json = summary.dump(2);
  if (persist(cfg)) ingest::write_text_file(out_file(cfg, "fit_summary.json"), result.summary_json + "\n");
  return result;
}

CoverageRun cmd_coverage_experiment(const RunConfig& cfg) {
  const auto plan = make_plan(cfg);
  const auto shifts = shift_values(cfg);
  const bool csv = cfg.shift.family == "csv";
  const std::size_t trials = csv ? 1 : cfg.trials;

  std::optional<synth::AffinePredictor> predictor;
  if (cfg.shift.family == "gaussian") {
    predictor = make_regressor(cfg);
    if (persist(cfg)) {
      ingest::write_text_file(out_file(cfg, "regressor.json"), predictor_json(*predictor).dump(2) + "\n");
    }
  }
  std::optional<TrialData> csv_data;
  int d = cfg.shift.d;
  if (csv) {
    csv_data = csv_trial(cfg);
    d = static_cast<int>(csv_data->train.cols);
  }

  const std::size_t n_tasks = shifts.size() * trials;
  std::vector<std::vector<core::CoverageRow>> slots(n_tasks);
  parallel_for(n_tasks, cfg.workers, [&](std::size_t task) {
    const std::size_t s = task / trials;
    const std::size_t trial = task % trials;
    const double shift = shifts[s];
    const std::uint64_t trial_seed = plan.trial_seeds[trial];
    auto& rows = slots[task];
    try {
      const auto cls = make_class(cfg, d, cfg.shift.family == "needle" ? shift : cfg.shift.theta);
      const TrialData data = csv ? *csv_data
                                 : synthetic_trial(cfg, make_spec(cfg, shift), trial_seed,
                                                   predictor ? &*predictor : nullptr);
      dre::OptimizerSettings opt;
      opt.seed = derive_seed(trial_seed, "optimizer");
      for (const auto& method : plan.roster) {
        try {
          rows.push_back(run_method(method, data, cfg, cls, shift, trial, opt));
        } catch (const std::exception& e) {
          rows.push_back(core::CoverageRow::failure(method.label, method.b, shift, trial, e.what()));
        }
      }
    } catch (const std::exception& e) {
      for (const auto& method : plan.roster) {
        rows.push_back(core::CoverageRow::failure(method.label, method.b, shift, trial, e.what()));
      }
    }
  });

  CoverageRun run;
  for (auto& slot : slots) {
    for (auto& row : slot) {
      if (row.failed()) {
        ++run.failed_rows;
        run.errors.push_back(row.method + " shift=" + fmt_g(row.shift) + " trial=" + std::to_string(row.trial) +
                             ": " + row.error);
      }
      run.report.rows.push_back(std::move(row));
    }
  }
  run.report.sort();
  run.report.validate();
  if (persist(cfg)) {
    ingest::write_results(run.report, out_file(cfg, "coverage.csv"));
    write_errors(cfg, run.errors);
  }
  return run;
}

NeedleDemoResult cmd_needle_demo(const RunConfig& cfg) {
  const auto plan = make_plan(cfg);
  const synth::NeedleSpec spec{cfg.shift.r, cfg.shift.d, cfg.shift.theta};
  const double vol = spec.volume();
  const double theta = spec.theta;
  const double alpha = cfg.alpha;
  const auto& demo = cfg.needle_demo;
  NeedleDemoResult result;
  json summary{{"r", spec.r}, {"d", spec.d}, {"theta", theta}, {"alpha", alpha}, {"trials", cfg.trials}};

  if (demo.part == "b1" || demo.part == "both") {
    const double limit = alpha * theta / ((1.0 - alpha) * (1.0 - theta));
    if (!(demo.c < limit)) {
      throw InvalidInput("needle demo: the threshold failure needs c < alpha*theta/((1-alpha)(1-theta)) = " +
                         fmt_g(limit) + ", got c = " + fmt_g(demo.c));
    }
    if (!(demo.c / vol <= kMaxNeedleCalibration)) {
      throw InvalidInput("needle demo: calibration size floor(c / r^d) = " + fmt_g(demo.c / vol) +
                         " is too large; raise r or lower d");
    }
    const auto m = static_cast<std::size_t>(std::floor(demo.c / vol + 1e-9));
    if (m == 0) throw InvalidInput("needle demo: floor(c / r^d) must be at least 1");

    std::vector<core::CoverageRow> rows(cfg.trials);
    std::vector<char> events(cfg.trials, 0);
    parallel_for(cfg.trials, cfg.workers, [&](std::size_t t) {
      const auto cal = synth::gen_needle(synth::Source::P, spec.r, spec.d, theta, m, derive_seed(plan.trial_seeds[t], "cal"));
      std::vector<double> w(m);
      for (std::size_t i = 0; i < m; ++i) w[i] = synth::true_ratio(spec, cal.x.row(i));
      const auto res = core::calibrate_threshold(core::ScoredCalibrationSet(*cal.scores, w), 1.0 - alpha);
      // Exact Q-probability of the prediction set {x : |x|_inf <= tau}.
      const double tau = std::min(res.tau, 1.0);
      const double coverage = theta * std::pow(std::min(tau / spec.r, 1.0), spec.d) +
                              (1.0 - theta) * std::pow(tau, spec.d);
      auto& row = rows[t];
      row.method = "wcp-exact";
      row.param_b = spec.inside_ratio();
      row.shift = theta;
      row.trial = t;
      row.coverage = coverage;
      row.tau = res.tau;
      row.level = res.effective_level;
      events[t] = res.tau <= spec.r ? 1 : 0;
    });

    NeedleCoverageStats st;
    st.trials = cfg.trials;
    st.m = m;
    st.expected_frequency = 1.0 - std::pow(1.0 - vol, static_cast<double>(m));
    st.coverage_bound = theta + (1.0 - theta) * vol;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      if (!events[t]) continue;
      ++st.events;
      st.max_event_coverage = std::max(st.max_event_coverage, rows[t].coverage);
      if (rows[t].coverage > st.coverage_bound) st.all_events_within_bound = false;
    }
    st.event_frequency = static_cast<double>(st.events) / static_cast<double>(st.trials);
    result.coverage = st;
    result.report.rows = std::move(rows);
    summary["threshold_failure"] = {{"c", demo.c},
                                    {"m", m},
                                    {"events", st.events},
                                    {"event_frequency", st.event_frequency},
                                    {"expected_frequency", st.expected_frequency},
                                    {"coverage_bound", st.coverage_bound},
                                    {"max_event_coverage", st.max_event_coverage},
                                    {"all_events_within_bound", st.all_events_within_bound}};
  }

  if (demo.part == "b2" || demo.part == "both") {
    const double m = static_cast<double>(demo.m);
    if (!(1.0 / theta <= m && m < 1.0 / vol)) {
      throw InvalidInput("needle demo: the ERM failure needs 1/theta <= m < 1/r^d, got m = " + std::to_string(demo.m));
    }
    dre::NeedleOneParam probe{spec.r, spec.d, theta, 0.0};
    const double b = probe.beta_max();
    std::vector<NeedleErmTrial> trials(cfg.trials);
    parallel_for(cfg.trials, cfg.workers, [&](std::size_t t) {
      const auto seed = plan.trial_seeds[t];
      const auto train = synth::gen_needle(synth::Source::P, spec.r, spec.d, theta, demo.m, derive_seed(seed, "erm-train"));
      const auto test = synth::gen_needle(synth::Source::Q, spec.r, spec.d, theta, demo.n, derive_seed(seed, "erm-test"));
      auto in_ball = [&](double score) { return score <= spec.r; };
      const bool train_misses = std::none_of(train.scores->begin(), train.scores->end(), in_ball);
      const bool test_hits = std::any_of(test.scores->begin(), test.scores->end(), in_ball);
      const auto fit = dre::fit_needle_class(train.x, test.x, b, spec.r, spec.d, theta);
      const auto& fitted = std::get<dre::NeedleOneParam>(fit.fit.ratio_class());
      trials[t] = {t, train_misses && test_hits, fitted.beta,
                   bias::needle_l1_error(fitted, b, spec, bias::ErrorTarget::Star)};
    });

    NeedleErmStats st;
    st.trials = cfg.trials;
    st.m = demo.m;
    st.n = demo.n;
    st.beta_max = b;
    st.expected_l1 = 2.0 * (1.0 - theta) * (1.0 - vol);
    for (const auto& tr : trials) {
      if (!tr.event) continue;
      ++st.events;
      if (tr.beta_hat != b) st.all_event_beta_max = false;
      st.max_l1_deviation = std::max(st.max_l1_deviation, std::abs(tr.l1 - st.expected_l1));
    }
    const double p = static_cast<double>(st.events) / static_cast<double>(st.trials);
    st.event_frequency = p;
    st.frequency_std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(st.trials));
    result.erm = st;
    result.erm_trials = std::move(trials);
    summary["erm_failure"] = {{"m", st.m},
                              {"n", st.n},
                              {"b", b},
                              {"events", st.events},
                              {"event_frequency", st.event_frequency},
                              {"frequency_std_error", st.frequency_std_error},
                              {"all_event_beta_max", st.all_event_beta_max},
                              {"expected_l1", st.expected_l1},
                              {"max_l1_deviation", st.max_l1_deviation}};
  }

  result.report.sort();
  result.summary_json = summary.dump(2);
  if (persist(cfg)) {
    if (result.coverage) ingest::write_results(result.report, out_file(cfg, "needle_demo.csv"));
    if (result.erm) {
      std::ostringstream out;
      out << "trial,event,beta_hat,l1\n";
      for (const auto& tr : result.erm_trials) {
        out << tr.trial << ',' << (tr.event ? 1 : 0) << ',' << ingest::format_double(tr.beta_hat) << ','
            << ingest::format_double(tr.l1) << '\n';
      }
      ingest::write_text_file(out_file(cfg, "needle_erm.csv"), out.str());
    }
    ingest::write_text_file(out_file(cfg, "needle_demo.json"), result.summary_json + "\n");
  }
  return result;
}

SrmTable cmd_srm_experiment(const RunConfig& cfg) {
  const auto plan = make_plan(cfg);
  if (cfg.shift.family != "gaussian") throw ConfigError("shift.family", "the SRM experiment uses the gaussian family");
  const synth::GaussianTiltSpec spec{cfg.shift.betas.front(), cfg.shift.d};
  const double d = static_cast<double>(spec.d);

  const std::uint64_t mc_seed = derive_seed(cfg.seed, "srm-mc");
  const std::size_t n_tasks = cfg.m_grid.size() * cfg.trials;
  std::vector<std::vector<SrmRow>> slots(n_tasks);
  parallel_for(n_tasks, cfg.workers, [&](std::size_t task) {
    const std::size_t m = cfg.m_grid[task / cfg.trials];
    const std::size_t trial = task % cfg.trials;
    const auto seed = plan.trial_seeds[trial];
    const auto train = synth::sample_inputs(spec, synth::Source::P, m, derive_seed(seed, "srm-train", m));
    const auto test = synth::sample_inputs(spec, synth::Source::Q, m, derive_seed(seed, "srm-test", m));
    dre::OptimizerSettings opt;
    opt.seed = derive_seed(seed, "optimizer", m);
    const dre::RatioClass cls = dre::ExponentialTilt{std::vector<double>(static_cast<std::size_t>(spec.d), 0.0)};
    const double rate = std::sqrt(d / static_cast<double>(m));
    for (double b : cfg.b_grid) {
      SrmRow base;
      base.b = b;
      base.m = m;
      base.trial = trial;
      try {
        const auto fit = dre::clisf(cls, b, train, test, opt);
        base.emp_risk = fit.empirical_risk;
        base.test_l2 =
            bias::mc_l1_l2_error(fit.fit, spec, bias::ErrorTarget::Star, cfg.sizes.n_eval, mc_seed)
                .l2;
      } catch (const std::exception& e) {
        base.emp_risk = base.test_l2 = std::numeric_limits<double>::quiet_NaN();
        base.error = e.what();
      }
      for (double lambda : cfg.lambdas) {
        SrmRow row = base;
        row.lambda = lambda;
        row.srm_objective = row.error.empty() ? row.emp_risk + lambda * b * rate : std::numeric_limits<double>::quiet_NaN();
        slots[task].push_back(row);
      }
    }
  });

  SrmTable table;
  std::vector<std::string> errors;
  for (auto& slot : slots) {
    for (auto& row : slot) {
      if (!row.error.empty()) {
        errors.push_back("b=" + fmt_g(row.b) + " lambda=" + fmt_g(row.lambda) + " m=" + std::to_string(row.m) +
                         " trial=" + std::to_string(row.trial) + ": " + row.error);
      }
      table.rows.push_back(std::move(row));
    }
  }
  if (persist(cfg)) {
    ingest::write_text_file(out_file(cfg, "srm.csv"), format_srm_table(table));
    write_errors(cfg, errors);
  }
  return table;
}

std::string format_srm_table(const SrmTable& table) {
  std::ostringstream out;
  out << "b,lambda,m,trial,emp_risk,srm_objective,test_l2\n";
  for (const auto& r : table.rows) {
    out << ingest::format_double(r.b) << ',' << ingest::format_double(r.lambda) << ',' << r.m << ',' << r.trial << ','
        << ingest::format_double(r.emp_risk) << ',' << ingest::format_double(r.srm_objective) << ','
        << ingest::format_double(r.test_l2) << '\n';
  }
  return out.str();
}

SrmSummary summarize_srm(const SrmTable& table, double lambda) {
  SrmSummary s;
  s.lambda = lambda;
  // (m, trial) -> rows for this lambda, in ascending B order.
  std::map<std::size_t, std::map<std::size_t, std::vector<const SrmRow*>>> cells;
  for (const auto& r : table.rows) {
    if (r.lambda == lambda && r.error.empty()) cells[r.m][r.trial].push_back(&r);
  }
  if (cells.empty()) throw InvalidInput("summarize_srm: no successful rows for lambda " + fmt_g(lambda));
  for (auto& [m, trials] : cells) {
    double sel_b = 0.0, sel_l2 = 0.0;
    std::map<double, std::pair<double, std::size_t>> per_b;
    for (auto& [trial, rows] : trials) {
      std::sort(rows.begin(), rows.end(), [](const SrmRow* a, const SrmRow* b) { return a->b < b->b; });
      const SrmRow* best = rows.front();
      for (const auto* r : rows) {
        if (r->srm_objective < best->srm_objective) best = r;
        auto& acc = per_b[r->b];
        acc.first += r->test_l2;
        ++acc.second;
      }
      sel_b += best->b;
      sel_l2 += best->test_l2;
    }
    const auto n = static_cast<double>(trials.size());
    s.m.push_back(m);
    s.mean_selected_b.push_back(sel_b / n);
    s.mean_selected_l2.push_back(sel_l2 / n);
    double best_l2 = std::numeric_limits<double>::infinity(), best_b = 0.0;
    for (const auto& [b, acc] : per_b) {
      const double mean = acc.first / static_cast<double>(acc.second);
      if (mean < best_l2) {
        best_l2 = mean;
        best_b = b;
      }
    }
    s.best_grid_l2.push_back(best_l2);
    s.best_grid_b.push_back(best_b);
  }
  return s;
}

}  // namespace clipcp::experiments
