#include "clipcp/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "clipcp/error.hpp"

namespace clipcp::config {

using nlohmann::json;

namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& prefix) {
  if (!obj.is_object()) throw ConfigError(prefix, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) throw ConfigError(join(prefix, key), "unknown key");
  }
}

template <class T>
void read(const json& obj, const std::string& key, T& out, const std::string& prefix) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(join(prefix, key), std::string("wrong type: ") + e.what());
  }
}

template <class T>
void read_optional(const json& obj, const std::string& key, std::optional<T>& out, const std::string& prefix) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T v{};
  read(obj, key, v, prefix);
  out = v;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty()) return path;
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).string();
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::FitRatio: return "fit-ratio";
    case ExperimentKind::Coverage: return "coverage";
    case ExperimentKind::NeedleDemo: return "needle-demo";
    case ExperimentKind::Srm: return "srm";
  }
  return "coverage";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  if (name == "fit-ratio") return ExperimentKind::FitRatio;
  if (name == "coverage") return ExperimentKind::Coverage;
  if (name == "needle-demo") return ExperimentKind::NeedleDemo;
  if (name == "srm") return ExperimentKind::Srm;
  throw ConfigError("kind", "unknown experiment kind '" + name + "'");
}

void validate(const RunConfig& cfg) {
  static const std::set<std::string> families{"gaussian", "needle", "powerlaw", "csv"};
  require(families.count(cfg.shift.family) > 0, "shift.family", "must be gaussian, needle, powerlaw or csv");
  require(!cfg.shift.betas.empty(), "shift.betas", "must be nonempty");
  for (double b : cfg.shift.betas) require(std::isfinite(b), "shift.betas", "values must be finite");
  require(cfg.shift.d >= 1, "shift.d", "must be >= 1");
  require(cfg.shift.r > 0.0 && cfg.shift.r < 1.0, "shift.r", "must lie in (0, 1)");
  require(cfg.shift.theta > 0.0 && cfg.shift.theta < 1.0, "shift.theta", "must lie in (0, 1)");

  if (cfg.shift.family == "csv") {
    require(cfg.csv.has_value(), "csv", "required when shift.family is csv");
  }
  if (cfg.csv) {
    const auto& c = *cfg.csv;
    require(!c.train.empty(), "csv.train", "path required");
    require(!c.test.empty(), "csv.test", "path required");
    const std::pair<const char*, const std::string*> files[] = {
        {"csv.train", &c.train}, {"csv.test", &c.test}, {"csv.est", &c.est}, {"csv.cal", &c.cal}, {"csv.eval", &c.eval}};
    for (const auto& [key, path] : files) {
      if (!path->empty()) require(std::filesystem::exists(*path), key, "file '" + *path + "' does not exist");
    }
    require(c.features > 0 || c.group, "csv.features", "need feature columns or a group column");
  }

  static const std::set<std::string> classes{"auto", "tilt", "needle", "piecewise", "piecewise-known-p"};
  require(classes.count(cfg.ratio_class) > 0, "ratio_class",
          "must be auto, tilt, needle, piecewise or piecewise-known-p");
  require(cfg.k >= 1, "k", "must be >= 1");

  for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
    const auto& m = cfg.methods[i];
    const std::string key = "methods[" + std::to_string(i) + "]";
    require(m.kind == "split" || m.kind == "wcp" || m.kind == "cwcp", key + ".kind", "must be split, wcp or cwcp");
    require(m.mode == "expected" || m.mode == "conditional", key + ".mode", "must be expected or conditional");
    if (m.kind == "cwcp") {
      require(m.b.has_value(), key + ".b", "required for cwcp");
      require(std::isfinite(*m.b) && *m.b >= 1.0, key + ".b", "must be finite and >= 1");
    }
  }

  require(cfg.alpha > 0.0 && cfg.alpha < 1.0, "alpha", "must lie in (0, 1)");
  require(cfg.epsilon >= 0.0 && std::isfinite(cfg.epsilon), "epsilon", "must be >= 0");
  require(cfg.delta > 0.0 && cfg.delta < 1.0, "delta", "must lie in (0, 1)");
  require(std::isfinite(cfg.b) && cfg.b >= 1.0, "b", "must be finite and >= 1");
  require(!cfg.b_grid.empty(), "b_grid", "must be nonempty");
  for (std::size_t i = 0; i < cfg.b_grid.size(); ++i) {
    require(std::isfinite(cfg.b_grid[i]) && cfg.b_grid[i] >= 1.0, "b_grid", "values must be finite and >= 1");
    if (i > 0) require(cfg.b_grid[i] > cfg.b_grid[i - 1], "b_grid", "must be strictly ascending");
  }
  require(!cfg.lambdas.empty(), "lambdas", "must be nonempty");
  for (double l : cfg.lambdas) require(l >= 0.0 && std::isfinite(l), "lambdas", "values must be >= 0");
  require(!cfg.m_grid.empty(), "m_grid", "must be nonempty");
  for (auto m : cfg.m_grid) require(m >= 1, "m_grid", "values must be >= 1");

  const auto& nd = cfg.needle_demo;
  require(nd.part == "b1" || nd.part == "b2" || nd.part == "both", "needle_demo.part", "must be b1, b2 or both");
  require(nd.c > 0.0, "needle_demo.c", "must be > 0");
  require(nd.m >= 1, "needle_demo.m", "must be >= 1");
  require(nd.n >= 1, "needle_demo.n", "must be >= 1");

  const auto& s = cfg.sizes;
  require(s.m_train >= 1, "sizes.m_train", "must be >= 1");
  require(s.m_test >= 1, "sizes.m_test", "must be >= 1");
  require(s.m_est >= 1, "sizes.m_est", "must be >= 1");
  require(s.m_cal >= 1, "sizes.m_cal", "must be >= 1");
  require(s.n_eval >= 1, "sizes.n_eval", "must be >= 1");
  require(s.regressor_n > static_cast<std::size_t>(cfg.shift.d), "sizes.regressor_n", "must exceed shift.d");
  require(cfg.trials >= 1, "trials", "must be >= 1");
  require(cfg.workers >= 1, "workers", "must be >= 1");
}

RunConfig parse_config(const std::string& json_text, const std::string& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  reject_unknown(root,
                 {"kind", "shift", "csv", "ratio_class", "k", "methods", "alpha", "epsilon", "delta", "b", "b_grid",
                  "lambdas", "m_grid", "needle_demo", "sizes", "trials", "seed", "out_dir", "workers"},
                 "");
  RunConfig cfg;
  if (root.contains("kind")) {
    std::string kind;
    read(root, "kind", kind, "");
    cfg.kind = experiment_kind_from_string(kind);
  }
  if (root.contains("shift")) {
    const auto& s = root.at("shift");
    reject_unknown(s, {"family", "betas", "d", "r", "theta"}, "shift");
    read(s, "family", cfg.shift.family, "shift");
    read(s, "betas", cfg.shift.betas, "shift");
    read(s, "d", cfg.shift.d, "shift");
    read(s, "r", cfg.shift.r, "shift");
    read(s, "theta", cfg.shift.theta, "shift");
  }
  if (root.contains("csv") && !root.at("csv").is_null()) {
    const auto& c = root.at("csv");
    reject_unknown(c, {"train", "test", "est", "cal", "eval", "features", "group"}, "csv");
    CsvConfig csv;
    read(c, "train", csv.train, "csv");
    read(c, "test", csv.test, "csv");
    read(c, "est", csv.est, "csv");
    read(c, "cal", csv.cal, "csv");
    read(c, "eval", csv.eval, "csv");
    read(c, "features", csv.features, "csv");
    read(c, "group", csv.group, "csv");
    for (auto* p : {&csv.train, &csv.test, &csv.est, &csv.cal, &csv.eval}) *p = resolve(base_dir, *p);
    cfg.csv = csv;
  }
  read(root, "ratio_class", cfg.ratio_class, "");
  read(root, "k", cfg.k, "");
  if (root.contains("methods")) {
    const auto& ms = root.at("methods");
    if (!ms.is_array()) throw ConfigError("methods", "expected an array");
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const std::string key = "methods[" + std::to_string(i) + "]";
      reject_unknown(ms[i], {"kind", "b", "mode"}, key);
      MethodConfig m;
      read(ms[i], "kind", m.kind, key);
      read_optional(ms[i], "b", m.b, key);
      read(ms[i], "mode", m.mode, key);
      cfg.methods.push_back(m);
    }
  }
  read(root, "alpha", cfg.alpha, "");
  read(root, "epsilon", cfg.epsilon, "");
  read(root, "delta", cfg.delta, "");
  read(root, "b", cfg.b, "");
  read(root, "b_grid", cfg.b_grid, "");
  read(root, "lambdas", cfg.lambdas, "");
  read(root, "m_grid", cfg.m_grid, "");
  if (root.contains("needle_demo")) {
    const auto& n = root.at("needle_demo");
    reject_unknown(n, {"part", "c", "m", "n"}, "needle_demo");
    read(n, "part", cfg.needle_demo.part, "needle_demo");
    read(n, "c", cfg.needle_demo.c, "needle_demo");
    read(n, "m", cfg.needle_demo.m, "needle_demo");
    read(n, "n", cfg.needle_demo.n, "needle_demo");
  }
  if (root.contains("sizes")) {
    const auto& s = root.at("sizes");
    reject_unknown(s, {"m_train", "m_test", "m_est", "m_cal", "n_eval", "regressor_n"}, "sizes");
    read(s, "m_train", cfg.sizes.m_train, "sizes");
    read(s, "m_test", cfg.sizes.m_test, "sizes");
    read(s, "m_est", cfg.sizes.m_est, "sizes");
    read(s, "m_cal", cfg.sizes.m_cal, "sizes");
    read(s, "n_eval", cfg.sizes.n_eval, "sizes");
    read(s, "regressor_n", cfg.sizes.regressor_n, "sizes");
  }
  read(root, "trials", cfg.trials, "");
  read(root, "seed", cfg.seed, "");
  read(root, "out_dir", cfg.out_dir, "");
  read(root, "workers", cfg.workers, "");
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", path + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), std::filesystem::path(path).parent_path().string());
}

std::string to_json_string(const RunConfig& cfg, int indent) {
  json root;
  root["kind"] = to_string(cfg.kind);
  root["shift"] = {{"family", cfg.shift.family},
                   {"betas", cfg.shift.betas},
                   {"d", cfg.shift.d},
                   {"r", cfg.shift.r},
                   {"theta", cfg.shift.theta}};
  if (cfg.csv) {
    const auto& c = *cfg.csv;
    root["csv"] = {{"train", c.train}, {"test", c.test},         {"est", c.est},    {"cal", c.cal},
                   {"eval", c.eval},   {"features", c.features}, {"group", c.group}};
  }
  root["ratio_class"] = cfg.ratio_class;
  root["k"] = cfg.k;
  root["methods"] = json::array();
  for (const auto& m : cfg.methods) {
    json jm{{"kind", m.kind}, {"mode", m.mode}};
    if (m.b) jm["b"] = *m.b;
    root["methods"].push_back(jm);
  }
  root["alpha"] = cfg.alpha;
  root["epsilon"] = cfg.epsilon;
  root["delta"] = cfg.delta;
  root["b"] = cfg.b;
  root["b_grid"] = cfg.b_grid;
  root["lambdas"] = cfg.lambdas;
  root["m_grid"] = cfg.m_grid;
  root["needle_demo"] = {
      {"part", cfg.needle_demo.part}, {"c", cfg.needle_demo.c}, {"m", cfg.needle_demo.m}, {"n", cfg.needle_demo.n}};
  root["sizes"] = {{"m_train", cfg.sizes.m_train}, {"m_test", cfg.sizes.m_test}, {"m_est", cfg.sizes.m_est},
                   {"m_cal", cfg.sizes.m_cal},     {"n_eval", cfg.sizes.n_eval}, {"regressor_n", cfg.sizes.regressor_n}};
  root["trials"] = cfg.trials;
  root["seed"] = cfg.seed;
  root["out_dir"] = cfg.out_dir;
  root["workers"] = cfg.workers;
  return root.dump(indent);
}

void apply_full_scale(RunConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::Coverage:
      cfg.shift.d = 100;
      cfg.sizes.m_cal = 600;
      cfg.trials = 30;
      break;
    case ExperimentKind::Srm:
      cfg.shift.d = 200;
      cfg.shift.betas = {2.0};
      cfg.b_grid = {2.5, 5.0, 10.0, 20.0, 40.0};
      cfg.lambdas = {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
      cfg.trials = 100;
      break;
    case ExperimentKind::FitRatio:
    case ExperimentKind::NeedleDemo:
      break;
  }
  if (cfg.sizes.regressor_n <= static_cast<std::size_t>(cfg.shift.d)) {
    cfg.sizes.regressor_n = 20 * static_cast<std::size_t>(cfg.shift.d);
  }
}

}  // namespace clipcp::config
