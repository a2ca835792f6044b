#include "clipcp/dre.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <type_traits>

#include "clipcp/error.hpp"
#include "clipcp/rng.hpp"

namespace clipcp::dre {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_clip(double b, const char* where) {
  if (std::isnan(b) || b < 1.0) throw InvalidInput(std::string(where) + ": clip level B must be >= 1");
}

void require_finite_clip(double b, const char* where) {
  require_clip(b, where);
  if (!std::isfinite(b)) throw InvalidInput(std::string(where) + ": clip level B must be finite");
}

void require_samples(const Matrix& x_train, const Matrix& x_test, const char* where) {
  if (x_train.empty() || x_test.empty()) throw InvalidInput(std::string(where) + ": samples must be nonempty");
  if (x_train.cols != x_test.cols) {
    throw InvalidInput(std::string(where) + ": train has " + std::to_string(x_train.cols) + " columns, test has " +
                       std::to_string(x_test.cols));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

double piecewise_risk(std::span<const std::size_t> train_counts, std::span<const std::size_t> test_counts,
                      std::span<const double> w) {
  double m = 0.0, n = 0.0;
  for (auto c : train_counts) m += static_cast<double>(c);
  for (auto c : test_counts) n += static_cast<double>(c);
  CompensatedSum quad, lin;
  for (std::size_t g = 0; g < w.size(); ++g) {
    if (m > 0.0) quad.add(static_cast<double>(train_counts[g]) * w[g] * w[g]);
    if (n > 0.0) lin.add(static_cast<double>(test_counts[g]) * w[g]);
  }
  return (m > 0.0 ? quad.value() / (2.0 * m) : 0.0) - (n > 0.0 ? lin.value() / n : 0.0);
}

void check_counts(std::span<const std::size_t> train_counts, std::span<const std::size_t> test_counts,
                  const char* where) {
  if (train_counts.empty()) throw InvalidInput(std::string(where) + ": no groups");
  if (train_counts.size() != test_counts.size()) {
    throw InvalidInput(std::string(where) + ": train and test count vectors differ in length");
  }
}

}  // namespace

std::size_t group_from_first_coordinate(std::span<const double> x) {
  if (x.empty() || !std::isfinite(x[0]) || x[0] < -0.5) {
    throw InvalidInput("group id must be a nonnegative integer in the first column");
  }
  return static_cast<std::size_t>(std::llround(x[0]));
}

double NeedleOneParam::volume() const { return std::pow(r, d); }
double NeedleOneParam::beta_min() const { return 1.0 - theta + theta / volume(); }
double NeedleOneParam::beta_max() const { return 1.0 / volume(); }
double NeedleOneParam::outside_value() const {
  const double v = volume();
  return (1.0 - v * beta) / (1.0 - v);
}
bool NeedleOneParam::in_ball(std::span<const double> x) const {
  for (double xi : x) {
    if (std::abs(xi) > r) return false;
  }
  return true;
}

std::string class_name(const RatioClass& cls) {
  return std::visit(overloaded{[](const PiecewiseConstant&) { return std::string("piecewise"); },
                               [](const ExponentialTilt&) { return std::string("tilt"); },
                               [](const NeedleOneParam&) { return std::string("needle"); },
                               [](const Tabulated&) { return std::string("tabulated"); },
                               [](const Custom& c) { return "custom:" + c.name; }},
                    cls);
}

void validate(const RatioClass& cls) {
  std::visit(overloaded{
                 [](const PiecewiseConstant& pc) {
                   if (pc.k == 0) throw InvalidInput("piecewise class needs k >= 1 groups");
                   if (!pc.group_of) throw InvalidInput("piecewise class needs a group function");
                   if (pc.probs) {
                     if (pc.probs->size() != pc.k) throw InvalidInput("piecewise probabilities must have k entries");
                     CompensatedSum total;
                     for (double p : *pc.probs) {
                       if (!(p >= 0.0) || !std::isfinite(p)) {
                         throw InvalidInput("piecewise probabilities must be nonnegative");
                       }
                       total.add(p);
                     }
                     if (std::abs(total.value() - 1.0) > 1e-9) {
                       throw InvalidInput("piecewise probabilities must sum to 1");
                     }
                   }
                 },
                 [](const ExponentialTilt& t) {
                   for (double v : t.mu) {
                     if (!std::isfinite(v)) throw InvalidInput("tilt parameter must be finite");
                   }
                 },
                 [](const NeedleOneParam& nd) {
                   if (!(nd.r > 0.0 && nd.r < 1.0)) throw InvalidInput("needle radius r must lie in (0, 1)");
                   if (!(nd.theta > 0.0 && nd.theta < 1.0)) throw InvalidInput("needle theta must lie in (0, 1)");
                   if (nd.d < 1) throw InvalidInput("needle dimension d must be >= 1");
                   const double lo = nd.beta_min(), hi = nd.beta_max();
                   const double slack = 1e-12 * hi;
                   if (!(nd.beta >= lo - slack && nd.beta <= hi + slack)) {
                     throw InvalidInput("needle beta outside [1 - theta + theta/r^d, 1/r^d]");
                   }
                 },
                 [](const Tabulated& t) {
                   for (double v : t.values) {
                     if (!(v >= 0.0)) throw InvalidInput("tabulated ratio values must be >= 0");
                   }
                 },
                 [](const Custom& c) {
                   if (!c.fn) throw InvalidInput("custom ratio needs an evaluator");
                 }},
             cls);
}

RatioFit::RatioFit(RatioClass cls, double clip_b) : class_(std::move(cls)), clip_b_(clip_b) {
  require_clip(clip_b_, "RatioFit");
  validate(class_);
}

double RatioFit::operator()(std::span<const double> x) const {
  const double b = clip_b_;
  const double raw = std::visit(
      overloaded{[&](const PiecewiseConstant& pc) {
                   const std::size_t g = pc.group_of(x);
                   if (g >= pc.weights.size()) throw InvalidInput("group id " + std::to_string(g) + " out of range");
                   return pc.weights[g];
                 },
                 [&](const ExponentialTilt& t) {
                   if (x.size() != t.mu.size()) throw InvalidInput("tilt ratio: input dimension mismatch");
                   // Compare in log space so large exponents never overflow.
                   const double e = dot(x, t.mu) - 0.5 * dot(t.mu, t.mu);
                   if (e >= std::log(b)) return b;
                   return std::exp(e);
                 },
                 [&](const NeedleOneParam& nd) {
                   if (x.size() != static_cast<std::size_t>(nd.d)) {
                     throw InvalidInput("needle ratio: input dimension mismatch");
                   }
                   return nd.in_ball(x) ? nd.beta : nd.outside_value();
                 },
                 [&](const Tabulated& t) {
                   const std::size_t idx = group_from_first_coordinate(x);
                   if (idx >= t.values.size()) throw InvalidInput("tabulated ratio: index out of range");
                   return t.values[idx];
                 },
                 [&](const Custom& c) { return c.fn(x); }},
      class_);
  if (std::isnan(raw)) throw InvalidInput("ratio evaluated to NaN");
  return std::clamp(raw, 0.0, b);
}

std::vector<double> RatioFit::evaluate(const Matrix& x) const {
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = (*this)(x.row(i));
  return out;
}

double lsif_empirical_risk(const RatioFit& fit, const Matrix& x_train, const Matrix& x_test) {
  if (x_train.empty() || x_test.empty()) throw InvalidInput("lsif_empirical_risk: samples must be nonempty");
  CompensatedSum quad, lin;
  for (std::size_t i = 0; i < x_train.rows; ++i) {
    const double w = fit(x_train.row(i));
    quad.add(w * w);
  }
  for (std::size_t j = 0; j < x_test.rows; ++j) lin.add(fit(x_test.row(j)));
  return quad.value() / (2.0 * static_cast<double>(x_train.rows)) - lin.value() / static_cast<double>(x_test.rows);
}

double discrete_population_risk(std::span<const double> p, std::span<const double> q, std::span<const double> w) {
  if (p.size() != q.size() || p.size() != w.size()) throw InvalidInput("discrete_population_risk: size mismatch");
  CompensatedSum acc;
  for (std::size_t a = 0; a < p.size(); ++a) {
    acc.add(0.5 * p[a] * w[a] * w[a]);
    acc.add(-q[a] * w[a]);
  }
  return acc.value();
}

std::vector<std::size_t> group_counts(const Matrix& x, const GroupFn& group_of, std::size_t k) {
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const std::size_t g = group_of(x.row(i));
    if (g >= k) throw InvalidInput("row " + std::to_string(i) + " has group id " + std::to_string(g) + " >= k");
    ++counts[g];
  }
  return counts;
}

FitReport fit_piecewise_unknown_p(std::span<const std::size_t> train_counts, std::span<const std::size_t> test_counts,
                                  double clip_b) {
  check_counts(train_counts, test_counts, "fit_piecewise_unknown_p");
  require_finite_clip(clip_b, "fit_piecewise_unknown_p");

  double m = 0.0, n = 0.0;
  for (auto c : train_counts) m += static_cast<double>(c);
  for (auto c : test_counts) n += static_cast<double>(c);

  const std::size_t k = train_counts.size();
  std::vector<double> w(k, 0.0);
  for (std::size_t g = 0; g < k; ++g) {
    const auto mg = static_cast<double>(train_counts[g]);
    const auto tg = static_cast<double>(test_counts[g]);
    if (mg > 0.0) {
      w[g] = n > 0.0 ? std::min(tg * m / (n * mg), clip_b) : 0.0;
    } else {
      w[g] = tg > 0.0 ? clip_b : 0.0;
    }
  }

  PiecewiseConstant cls;
  cls.k = k;
  cls.weights = w;
  FitReport report{RatioFit(std::move(cls), clip_b)};
  report.empirical_risk = piecewise_risk(train_counts, test_counts, w);
  report.converged = true;
  if (m == 0.0) report.warnings.push_back("degenerate fit: every train count is zero");
  return report;
}

FitReport fit_piecewise_known_p(std::span<const std::size_t> train_counts, std::span<const std::size_t> test_counts,
                                std::span<const double> probs, double clip_b) {
  check_counts(train_counts, test_counts, "fit_piecewise_known_p");
  require_finite_clip(clip_b, "fit_piecewise_known_p");
  const std::size_t k = train_counts.size();
  {
    PiecewiseConstant probe;
    probe.k = k;
    probe.probs = std::vector<double>(probs.begin(), probs.end());
    validate(probe);
  }

  double m = 0.0, n = 0.0;
  for (auto c : train_counts) m += static_cast<double>(c);
  for (auto c : test_counts) n += static_cast<double>(c);

  // Normalised frequencies: the objective is sum_g a_g w_g^2 / 2 - c_g w_g.
  std::vector<double> a(k, 0.0), c(k, 0.0);
  for (std::size_t g = 0; g < k; ++g) {
    if (m > 0.0) a[g] = static_cast<double>(train_counts[g]) / m;
    if (n > 0.0) c[g] = static_cast<double>(test_counts[g]) / n;
  }

  auto weights_at = [&](double nu) {
    std::vector<double> w(k);
    for (std::size_t g = 0; g < k; ++g) {
      const double pull = c[g] - nu * probs[g];
      if (a[g] > 0.0) {
        w[g] = std::clamp(pull / a[g], 0.0, clip_b);
      } else {
        w[g] = pull > 0.0 ? clip_b : 0.0;
      }
    }
    return w;
  };
  auto mass = [&](const std::vector<double>& w) {
    CompensatedSum s;
    for (std::size_t g = 0; g < k; ++g) s.add(probs[g] * w[g]);
    return s.value();
  };

  constexpr double kResidualTol = 1e-10;
  constexpr int kMaxIter = 200;

  double nu = 0.0;
  std::vector<double> w = weights_at(0.0);
  int iterations = 0;
  bool converged = true;
  if (mass(w) > 1.0 + kResidualTol) {
    double lo = 0.0;
    double hi = 0.0;
    for (std::size_t g = 0; g < k; ++g) {
      if (probs[g] > 0.0) hi = std::max(hi, c[g] / probs[g]);
    }
    hi = 2.0 * hi + 1.0;  // every group with p_g > 0 sits at zero here
    converged = false;
    for (iterations = 0; iterations < kMaxIter; ++iterations) {
      const double mid = 0.5 * (lo + hi);
      if (!(lo < mid && mid < hi)) break;
      const double resid = mass(weights_at(mid)) - 1.0;
      if (std::abs(resid) <= kResidualTol) {
        lo = hi = mid;
        converged = true;
        break;
      }
      if (resid > 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    nu = hi;
    w = weights_at(nu);
    if (!converged) {
      // The mass function jumps where a group with no train points switches
      // from B to 0. Such a group has a linear objective at the multiplier,
      // so any value is optimal there; spend the remaining budget on it.
      const std::vector<double> w_lo = weights_at(lo);
      double budget = 1.0 - mass(w);
      for (std::size_t g = 0; g < k && budget > kResidualTol; ++g) {
        if (a[g] == 0.0 && probs[g] > 0.0 && w_lo[g] > w[g]) {
          const double add = std::min(w_lo[g] - w[g], budget / probs[g]);
          w[g] += add;
          budget -= add * probs[g];
        }
      }
      converged = std::abs(mass(w) - 1.0) <= 1e-9;
    }
  }

  PiecewiseConstant cls;
  cls.k = k;
  cls.probs = std::vector<double>(probs.begin(), probs.end());
  cls.weights = w;
  FitReport report{RatioFit(std::move(cls), clip_b)};
  report.empirical_risk = piecewise_risk(train_counts, test_counts, w);
  report.iterations = iterations;
  report.converged = converged;
  report.multiplier = nu;
  report.slack.assign(k, std::max(0.0, 1.0 - mass(w)));
  if (m == 0.0) report.warnings.push_back("degenerate fit: every train count is zero");
  return report;
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<const RowMajor>;

MatrixView view(const Matrix& x) {
  return MatrixView(x.data.data(), static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(x.cols));
}

/// Clipped objective from the exponents x'mu - |mu|^2/2 of both samples.
double objective_from_exponents(const Eigen::ArrayXd& etr, const Eigen::ArrayXd& ete, double clip_b) {
  const double log_b = std::log(clip_b);
  const double sq = (etr < log_b).select((2.0 * etr).exp(), clip_b * clip_b).sum();
  const double lin = (ete < log_b).select(ete.exp(), clip_b).sum();
  return sq / (2.0 * static_cast<double>(etr.size())) - lin / static_cast<double>(ete.size());
}

struct TiltState {
  Eigen::VectorXd mu;
  Eigen::VectorXd ztr;  // x_train * mu
  Eigen::VectorXd zte;  // x_test * mu
  Eigen::VectorXd grad;
  double objective = 0.0;
};

/// Objective and sub-gradient at mu, evaluated directly from the data.
TiltState tilt_state(const MatrixView& xtr, const MatrixView& xte, Eigen::VectorXd mu, double clip_b) {
  TiltState s;
  s.ztr = xtr * mu;
  s.zte = xte * mu;
  const double log_b = std::log(clip_b);
  const double half_norm = 0.5 * mu.squaredNorm();
  const Eigen::ArrayXd etr = s.ztr.array() - half_norm;
  const Eigen::ArrayXd ete = s.zte.array() - half_norm;
  const auto active_tr = etr < log_b;
  const auto active_te = ete < log_b;
  const Eigen::ArrayXd w2 = (2.0 * etr).exp();
  const Eigen::ArrayXd w = ete.exp();
  const Eigen::VectorXd a = active_tr.select(w2, 0.0).matrix();
  const Eigen::VectorXd b = active_te.select(w, 0.0).matrix();
  s.objective = active_tr.select(w2, clip_b * clip_b).sum() / (2.0 * static_cast<double>(etr.size())) -
                active_te.select(w, clip_b).sum() / static_cast<double>(ete.size());
  const auto m = static_cast<double>(xtr.rows());
  const auto n = static_cast<double>(xte.rows());
  s.grad = (xtr.transpose() * a - a.sum() * mu) / m - (xte.transpose() * b - b.sum() * mu) / n;
  s.mu = std::move(mu);
  return s;
}

struct DescentRun {
  Eigen::VectorXd mu;
  double objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

DescentRun descend(const MatrixView& xtr, const MatrixView& xte, double clip_b, Eigen::VectorXd mu0,
                   const OptimizerSettings& opt) {
  DescentRun run;
  TiltState s = tilt_state(xtr, xte, std::move(mu0), clip_b);
  run.trace.push_back(s.objective);
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (s.grad.norm() <= opt.gradient_tolerance) break;
    // Exponents along the ray mu - t g are affine in t up to the norm term,
    // so trial steps cost O(m + n) once x*g is known.
    const Eigen::ArrayXd vtr = (xtr * s.grad).array();
    const Eigen::ArrayXd vte = (xte * s.grad).array();
    double step = opt.initial_step;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, step *= 0.5) {
      Eigen::VectorXd cand = s.mu - step * s.grad;
      const double half_norm = 0.5 * cand.squaredNorm();
      const double trial = objective_from_exponents(s.ztr.array() - step * vtr - half_norm,
                                                    s.zte.array() - step * vte - half_norm, clip_b);
      if (!(trial < s.objective)) continue;
      TiltState next = tilt_state(xtr, xte, std::move(cand), clip_b);
      if (next.objective < s.objective) {
        s = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++run.iterations;
    run.trace.push_back(s.objective);
  }
  run.gradient_norm = s.grad.norm();
  run.converged = run.gradient_norm <= opt.gradient_tolerance;
  run.mu = std::move(s.mu);
  run.objective = s.objective;
  return run;
}

}  // namespace

double tilt_objective(const Matrix& x_train, const Matrix& x_test, std::span<const double> mu, double clip_b,
                      std::vector<double>* gradient) {
  require_samples(x_train, x_test, "tilt_objective");
  if (x_train.cols != mu.size()) throw InvalidInput("tilt_objective: parameter dimension mismatch");
  Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  const TiltState s = tilt_state(view(x_train), view(x_test), std::move(m), clip_b);
  if (gradient) gradient->assign(s.grad.data(), s.grad.data() + s.grad.size());
  return s.objective;
}

FitReport fit_exponential_tilt(const Matrix& x_train, const Matrix& x_test, double clip_b,
                               const OptimizerSettings& opt) {
  require_samples(x_train, x_test, "fit_exponential_tilt");
  require_finite_clip(clip_b, "fit_exponential_tilt");
  const std::size_t d = x_train.cols;
  if (d == 0) throw InvalidInput("fit_exponential_tilt: inputs have no columns");
  const auto xtr = view(x_train);
  const auto xte = view(x_test);
  const auto dd = static_cast<Eigen::Index>(d);

  std::vector<DescentRun> runs;
  runs.push_back(descend(xtr, xte, clip_b, Eigen::VectorXd::Zero(dd), opt));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int r = 0; r < opt.random_restarts; ++r) {
    CounterRng rng(opt.seed, "tilt-restart", static_cast<std::uint64_t>(r));
    Eigen::VectorXd start(dd);
    for (Eigen::Index j = 0; j < dd; ++j) start(j) = scale * rng.normal();
    runs.push_back(descend(xtr, xte, clip_b, std::move(start), opt));
  }

  std::size_t best = 0;
  int total_iterations = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    total_iterations += runs[r].iterations;
    if (runs[r].objective < runs[best].objective) best = r;
  }

  const auto& win = runs[best];
  FitReport report{RatioFit(ExponentialTilt{std::vector<double>(win.mu.data(), win.mu.data() + win.mu.size())}, clip_b)};
  report.empirical_risk = win.objective;
  report.iterations = total_iterations;
  report.restarts = static_cast<int>(runs.size());
  report.converged = win.converged;
  report.gradient_norm = win.gradient_norm;
  report.objective_trace = win.trace;
  return report;
}

FitReport fit_needle_class(const Matrix& x_train, const Matrix& x_test, double clip_b, double r, int d, double theta) {
  require_samples(x_train, x_test, "fit_needle_class");
  require_finite_clip(clip_b, "fit_needle_class");
  NeedleOneParam nd{r, d, theta, 0.0};
  nd.beta = nd.beta_min();
  validate(nd);
  if (x_train.cols != static_cast<std::size_t>(d)) throw InvalidInput("fit_needle_class: input dimension != d");

  double m_in = 0.0, n_in = 0.0;
  for (std::size_t i = 0; i < x_train.rows; ++i) m_in += nd.in_ball(x_train.row(i)) ? 1.0 : 0.0;
  for (std::size_t j = 0; j < x_test.rows; ++j) n_in += nd.in_ball(x_test.row(j)) ? 1.0 : 0.0;
  const auto m = static_cast<double>(x_train.rows);
  const auto n = static_cast<double>(x_test.rows);
  const double m_out = m - m_in, n_out = n - n_in;

  const double vol = nd.volume();
  const double s = vol / (1.0 - vol);
  const double lo = nd.beta_min(), hi = nd.beta_max();

  auto v_out = [&](double beta) { return (1.0 - vol * beta) / (1.0 - vol); };
  auto risk = [&](double beta) {
    const double vi = std::min(beta, clip_b), vo = std::min(v_out(beta), clip_b);
    return (m_in * vi * vi + m_out * vo * vo) / (2.0 * m) - (n_in * vi + n_out * vo) / n;
  };

  std::vector<double> candidates{lo, hi};
  if (clip_b > lo && clip_b < hi) candidates.push_back(clip_b);
  // Stationary point of the unclipped piece (beta <= B).
  const double coef = m_in / m + (m_out / m) * s * s;
  if (coef > 0.0) {
    const double beta1 = ((m_out / m) * s / (1.0 - vol) + n_in / n - (n_out / n) * s) / coef;
    candidates.push_back(std::clamp(beta1, lo, std::min(hi, std::max(lo, clip_b))));
  }
  // Stationary point of the clipped piece (beta >= B), where only v_out moves.
  if (m_out > 0.0 && clip_b < hi) {
    const double target = (n_out / n) / (m_out / m);
    const double beta2 = (1.0 / (1.0 - vol) - target) / s;
    candidates.push_back(std::clamp(beta2, std::max(lo, clip_b), hi));
  }

  double best_beta = candidates.front();
  double best_risk = risk(best_beta);
  for (double beta : candidates) {
    const double rb = risk(beta);
    if (rb < best_risk || (rb == best_risk && beta < best_beta)) {
      best_risk = rb;
      best_beta = beta;
    }
  }

  nd.beta = best_beta;
  FitReport report{RatioFit(nd, clip_b)};
  report.empirical_risk = best_risk;
  report.converged = true;
  return report;
}

FitReport clisf(const RatioClass& cls, double clip_b, const Matrix& x_train, const Matrix& x_test,
                const OptimizerSettings& opt) {
  require_finite_clip(clip_b, "clisf");
  return std::visit(
      overloaded{
          [&](const PiecewiseConstant& pc) {
            if (pc.k == 0 || !pc.group_of) throw InvalidInput("clisf: piecewise class needs k and a group function");
            const auto train = group_counts(x_train, pc.group_of, pc.k);
            const auto test = group_counts(x_test, pc.group_of, pc.k);
            FitReport rep = pc.probs ? fit_piecewise_known_p(train, test, *pc.probs, clip_b)
                                     : fit_piecewise_unknown_p(train, test, clip_b);
            auto fitted = std::get<PiecewiseConstant>(rep.fit.ratio_class());
            fitted.group_of = pc.group_of;
            rep.fit = RatioFit(std::move(fitted), clip_b);
            return rep;
          },
          [&](const ExponentialTilt& t) {
            if (!t.mu.empty() && t.mu.size() != x_train.cols) {
              throw InvalidInput("clisf: tilt class dimension does not match the inputs");
            }
            return fit_exponential_tilt(x_train, x_test, clip_b, opt);
          },
          [&](const NeedleOneParam& nd) { return fit_needle_class(x_train, x_test, clip_b, nd.r, nd.d, nd.theta); },
          [&](const Tabulated& t) {
            FitReport rep{RatioFit(t, clip_b)};
            rep.empirical_risk = lsif_empirical_risk(rep.fit, x_train, x_test);
            rep.converged = true;
            return rep;
          },
          [&](const Custom& c) -> FitReport {
            throw InvalidInput("clisf: class '" + c.name + "' is not a fittable ratio class");
          }},
      cls);
}

std::size_t srm_argmin(std::span<const double> b_grid, std::span<const double> risks, double lambda, double d,
                       double m) {
  if (b_grid.empty() || b_grid.size() != risks.size()) throw InvalidInput("srm_argmin: grid/risk size mismatch");
  const double rate = std::sqrt(d / m);
  std::size_t best = 0;
  for (std::size_t i = 1; i < b_grid.size(); ++i) {
    if (risks[i] + lambda * b_grid[i] * rate < risks[best] + lambda * b_grid[best] * rate) best = i;
  }
  return best;
}

SrmSelection srm_select(const RatioClass& cls, std::span<const double> b_grid, double lambda, double d, double m,
                        const Matrix& x_train, const Matrix& x_test, const OptimizerSettings& opt) {
  if (b_grid.empty()) throw InvalidInput("srm_select: empty B grid");
  for (std::size_t i = 1; i < b_grid.size(); ++i) {
    if (!(b_grid[i] > b_grid[i - 1])) throw InvalidInput("srm_select: B grid must be strictly ascending");
  }
  if (!(lambda >= 0.0)) throw InvalidInput("srm_select: lambda must be >= 0");
  if (!(d > 0.0)) throw InvalidInput("srm_select: d must be > 0");
  if (m != static_cast<double>(x_train.rows)) throw InvalidInput("srm_select: m must equal the train sample size");

  const double rate = std::sqrt(d / m);
  SrmSelection sel{0.0, FitReport{RatioFit(Tabulated{}, 1.0)}, {}, {}};
  std::optional<std::size_t> best;
  std::vector<FitReport> fits;
  for (double b : b_grid) {
    SrmCandidate cand;
    cand.b = b;
    try {
      fits.push_back(clisf(cls, b, x_train, x_test, opt));
      cand.ok = true;
      cand.empirical_risk = fits.back().empirical_risk;
      cand.objective = cand.empirical_risk + lambda * b * rate;
      if (!best || cand.objective < sel.candidates[*best].objective) best = sel.candidates.size();
    } catch (const std::exception& e) {
      fits.push_back(FitReport{RatioFit(Tabulated{}, 1.0)});
      cand.error = e.what();
      sel.warnings.push_back("B=" + std::to_string(b) + " skipped: " + e.what());
    }
    sel.candidates.push_back(cand);
  }
  if (!best) throw std::runtime_error("srm_select: every grid point failed");
  sel.selected_b = sel.candidates[*best].b;
  sel.fit = std::move(fits[*best]);
  return sel;
}

SampleSizePlan required_sample_sizes(double b, double epsilon, double delta, double c_b, double c_tilde_b) {
  if (!(b >= 1.0) || !std::isfinite(b)) throw InvalidInput("required_sample_sizes: B must be finite and >= 1");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw InvalidInput("required_sample_sizes: epsilon must lie in (0, 1]");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("required_sample_sizes: delta must lie in (0, 1)");
  if (!(c_b > 0.0) || !(c_tilde_b > 0.0)) throw InvalidInput("required_sample_sizes: constants must be > 0");

  const double log_term = std::log(2.0 / delta);
  const double eps2 = epsilon * epsilon;
  const double b2 = b * b;
  const double train = std::max({2304.0 * b2 * c_b * c_b / eps2, 5760.0 * b2 * b2 * log_term / eps2,
                                 8.0 * b2 * log_term / epsilon});
  const double test = std::max({2304.0 * c_tilde_b * c_tilde_b / eps2, 3456.0 * b2 * log_term / eps2,
                                16.0 * b * log_term / epsilon});
  SampleSizePlan plan;
  plan.m_train = static_cast<std::uint64_t>(ceil_tolerant(train));
  plan.m_test = static_cast<std::uint64_t>(ceil_tolerant(test));
  plan.b = b;
  plan.epsilon = epsilon;
  plan.delta = delta;
  plan.c_b = c_b;
  plan.c_tilde_b = c_tilde_b;
  return plan;
}

McEstimate mc_population_risk(const RatioFit& fit, const Sampler& p_sampler, const Sampler& q_sampler, std::size_t n,
                              std::uint64_t seed) {
  if (n == 0) throw InvalidInput("mc_population_risk: n must be >= 1");
  const Matrix xp = p_sampler(n, derive_seed(seed, "risk-p"));
  const Matrix xq = q_sampler(n, derive_seed(seed, "risk-q"));
  RunningMoments quad, lin;
  CompensatedSum quad_sum, lin_sum;
  for (std::size_t i = 0; i < xp.rows; ++i) {
    const double w = fit(xp.row(i));
    quad.add(0.5 * w * w);
    quad_sum.add(0.5 * w * w);
  }
  for (std::size_t j = 0; j < xq.rows; ++j) {
    const double w = fit(xq.row(j));
    lin.add(w);
    lin_sum.add(w);
  }
  McEstimate est;
  est.n = n;
  est.value = quad_sum.value() / static_cast<double>(xp.rows) - lin_sum.value() / static_cast<double>(xq.rows);
  est.std_error = std::sqrt(quad.std_error() * quad.std_error() + lin.std_error() * lin.std_error());
  return est;
}

}  // namespace clipcp::dre
