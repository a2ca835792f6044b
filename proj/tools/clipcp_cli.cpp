#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "clipcp/bias.hpp"
#include "clipcp/config.hpp"
#include "clipcp/dre.hpp"
#include "clipcp/error.hpp"
#include "clipcp/experiments.hpp"
#include "clipcp/numeric.hpp"

namespace {

using clipcp::config::ExperimentKind;
using clipcp::config::RunConfig;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> workers;
  bool full_scale = false;
  bool json = false;
  bool print_config = false;
};

RunConfig resolve_config(const GlobalFlags& g, ExperimentKind kind) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : clipcp::config::load_config(g.config_path);
  cfg.kind = kind;
  if (kind == ExperimentKind::Srm && g.config_path.empty()) {
    cfg.shift.d = 50;
    cfg.shift.betas = {2.0};
    cfg.lambdas = {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  }
  if (kind == ExperimentKind::NeedleDemo && g.config_path.empty()) {
    cfg.shift.family = "needle";
    cfg.shift.d = 1;
    cfg.shift.r = 0.01;
    cfg.shift.theta = 0.2;
    cfg.alpha = 0.1;
  }
  if (g.full_scale) clipcp::config::apply_full_scale(cfg);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.out_dir = *g.out;
  if (g.trials) cfg.trials = *g.trials;
  if (g.workers) cfg.workers = *g.workers;
  clipcp::config::validate(cfg);
  return cfg;
}

void print_coverage_table(const clipcp::core::CoverageReport& report, bool as_json) {
  struct Acc {
    clipcp::RunningMoments cov;
    std::size_t failed = 0;
  };
  std::map<std::pair<std::string, double>, Acc> acc;
  for (const auto& r : report.rows) {
    auto& a = acc[{r.method, r.shift}];
    if (r.failed()) {
      ++a.failed;
    } else {
      a.cov.add(r.coverage);
    }
  }
  if (as_json) {
    json out = json::array();
    for (const auto& [key, a] : acc) {
      out.push_back({{"method", key.first},
                     {"shift", key.second},
                     {"trials", a.cov.count()},
                     {"failed", a.failed},
                     {"mean_coverage", a.cov.mean()},
                     {"sd_coverage", std::sqrt(a.cov.variance())}});
    }
    std::cout << out.dump(2) << "\n";
    return;
  }
  std::printf("%-16s %8s %7s %7s %10s %10s\n", "method", "shift", "trials", "failed", "mean_cov", "sd_cov");
  for (const auto& [key, a] : acc) {
    std::printf("%-16s %8g %7zu %7zu %10.4f %10.4f\n", key.first.c_str(), key.second, a.cov.count(), a.failed,
                a.cov.mean(), std::sqrt(a.cov.variance()));
  }
}

int run_experiment(const GlobalFlags& g, ExperimentKind kind) {
  RunConfig cfg;
  try {
    cfg = resolve_config(g, kind);
  } catch (const clipcp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (g.print_config) {
    std::cout << clipcp::config::to_json_string(cfg) << "\n";
    return kExitOk;
  }
  try {
    switch (kind) {
      case ExperimentKind::FitRatio: {
        const auto res = clipcp::experiments::cmd_fit_ratio(cfg);
        std::cout << res.summary_json << "\n";
        return kExitOk;
      }
      case ExperimentKind::Coverage: {
        const auto run = clipcp::experiments::cmd_coverage_experiment(cfg);
        print_coverage_table(run.report, g.json);
        for (const auto& e : run.errors) std::cerr << "trial failed: " << e << "\n";
        return !run.report.rows.empty() && run.failed_rows == run.report.rows.size() ? kExitRuntime : kExitOk;
      }
      case ExperimentKind::NeedleDemo: {
        const auto res = clipcp::experiments::cmd_needle_demo(cfg);
        std::cout << res.summary_json << "\n";
        return kExitOk;
      }
      case ExperimentKind::Srm: {
        const auto table = clipcp::experiments::cmd_srm_experiment(cfg);
        std::size_t failed = 0;
        for (const auto& r : table.rows) failed += r.error.empty() ? 0 : 1;
        if (!table.rows.empty() && failed == table.rows.size()) {
          std::cerr << "every SRM cell failed\n";
          return kExitRuntime;
        }
        json out = json::array();
        for (double lambda : cfg.lambdas) {
          const auto s = clipcp::experiments::summarize_srm(table, lambda);
          out.push_back({{"lambda", lambda},
                         {"m", s.m},
                         {"mean_selected_b", s.mean_selected_b},
                         {"mean_selected_l2", s.mean_selected_l2},
                         {"best_grid_b", s.best_grid_b},
                         {"best_grid_l2", s.best_grid_l2}});
        }
        std::cout << out.dump(g.json ? -1 : 2) << "\n";
        return kExitOk;
      }
    }
  } catch (const clipcp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const clipcp::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

void print_bound(const clipcp::bias::BoundValue& v, bool as_json) {
  if (as_json) {
    json inputs;
    for (const auto& [k, x] : v.inputs) inputs[k] = x;
    std::cout << json{{"bound", v.name}, {"formula", v.formula}, {"inputs", inputs}, {"value", v.value}, {"raw", v.raw}}
                     .dump()
              << "\n";
    return;
  }
  std::cout << "bound:   " << v.name << "\n" << "formula: " << v.formula << "\n";
  for (const auto& [k, x] : v.inputs) std::printf("  %-10s %.17g\n", k.c_str(), x);
  std::printf("value:   %.17g\n", v.value);
  if (v.raw != v.value) std::printf("raw:     %.17g\n", v.raw);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clipped density-ratio conformal prediction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--trials", g.trials, "Trial count");
  app.add_option("--workers", g.workers, "Worker threads");
  app.add_flag("--paper-scale", g.full_scale, "Use full-size dimensions and grids");
  app.add_flag("--json", g.json, "Machine-readable output");
  app.add_flag("--print-config", g.print_config, "Print the resolved configuration and exit");

  auto* fit = app.add_subcommand("fit-ratio", "Fit a clipped density ratio");
  auto* cov = app.add_subcommand("coverage-exp", "Coverage sweep over shifts, trials and methods");
  auto* needle = app.add_subcommand("needle-demo", "Needle-example failure demonstrations");
  auto* srm = app.add_subcommand("srm-exp", "Structural risk minimisation sweep over B");

  auto* bounds = app.add_subcommand("bounds", "Evaluate a finite-sample bound");
  bounds->require_subcommand(1);
  double b = 1.0, eps = 0.1, delta = 0.1, gamma = 0.1, m = 1.0, bprime = 1.0, cb = 1.0, ctb = 1.0;
  double c = 1.0, p = 2.0, b0 = 0.0, rho = 1.0;

  auto* wcp_size = bounds->add_subcommand("wcp-size", "Calibration size for dataset-conditional CWCP");
  wcp_size->add_option("--b", b)->required();
  wcp_size->add_option("--eps", eps)->required();
  wcp_size->add_option("--delta", delta)->required();

  auto* bias_dev = bounds->add_subcommand("bias-dev", "Deviation probability of the bias estimate");
  bias_dev->add_option("--b", b)->required();
  bias_dev->add_option("--eps", eps)->required();
  bias_dev->add_option("--gamma", gamma)->required();
  bias_dev->add_option("--m", m)->required();

  auto* dkw = bounds->add_subcommand("dkw", "Weighted DKW deviation probability");
  dkw->add_option("--m", m)->required();
  dkw->add_option("--gamma", gamma)->required();
  dkw->add_option("--bprime", bprime, "Weight bound divided by the mean weight")->required();

  auto* samples = bounds->add_subcommand("samples", "Train/test sizes for the L2 generalization bound");
  samples->add_option("--b", b)->required();
  samples->add_option("--cb", cb)->required();
  samples->add_option("--ctb", ctb)->required();
  samples->add_option("--eps", eps)->required();
  samples->add_option("--delta", delta)->required();

  auto* moment = bounds->add_subcommand("moment", "Clipping bias bound from a moment condition");
  moment->add_option("--c", c)->required();
  moment->add_option("--p", p)->required();
  moment->add_option("--b0", b0)->required();
  moment->add_option("--rho", rho)->required();
  moment->add_option("--b", b)->required();

  CLI11_PARSE(app, argc, argv);

  if (*fit) return run_experiment(g, ExperimentKind::FitRatio);
  if (*cov) return run_experiment(g, ExperimentKind::Coverage);
  if (*needle) return run_experiment(g, ExperimentKind::NeedleDemo);
  if (*srm) return run_experiment(g, ExperimentKind::Srm);

  try {
    namespace bs = clipcp::bias;
    if (*samples) {
      const auto plan = clipcp::dre::required_sample_sizes(b, eps, delta, cb, ctb);
      if (g.json) {
        std::cout << json{{"bound", "samples"},
                          {"inputs", {{"b", b}, {"cb", cb}, {"ctb", ctb}, {"eps", eps}, {"delta", delta}}},
                          {"m_train", plan.m_train},
                          {"m_test", plan.m_test}}
                         .dump()
                  << "\n";
      } else {
        std::cout << "bound:   samples\n";
        std::printf("  %-10s %.17g\n  %-10s %.17g\n  %-10s %.17g\n  %-10s %.17g\n  %-10s %.17g\n", "b", b, "cb", cb,
                    "ctb", ctb, "eps", eps, "delta", delta);
        std::cout << "m_train: " << plan.m_train << "\nm_test:  " << plan.m_test << "\n";
      }
      return kExitOk;
    }
    bs::BoundQuery q;
    if (*wcp_size) {
      q = bs::WcpCalibrationSizeQuery{b, eps, delta};
    } else if (*bias_dev) {
      q = bs::BiasDeviationQuery{b, eps, gamma, m};
    } else if (*dkw) {
      q = bs::WeightedDkwQuery{m, gamma, bprime};
    } else {
      q = bs::MomentBiasQuery{c, p, b0, rho, b};
    }
    print_bound(bs::evaluate_bound(q), g.json);
  } catch (const clipcp::InvalidInput& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
