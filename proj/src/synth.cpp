#include "clipcp/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "clipcp/error.hpp"
#include "clipcp/rng.hpp"

namespace clipcp::synth {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const char* source_tag(Source s, const char* p_tag, const char* q_tag) { return s == Source::P ? p_tag : q_tag; }

void check_n(std::size_t n) {
  if (n == 0) throw InvalidInput("sample size n must be >= 1");
}

}  // namespace

double NeedleSpec::volume() const { return std::pow(r, d); }
double NeedleSpec::inside_ratio() const { return 1.0 - theta + theta / volume(); }
double NeedleSpec::outside_ratio() const { return 1.0 - theta; }

void validate(const AnalyticShiftSpec& spec) {
  std::visit(overloaded{[](const NeedleSpec& s) {
                          if (!(s.r > 0.0 && s.r < 1.0)) throw InvalidInput("needle r must lie in (0, 1)");
                          if (!(s.theta > 0.0 && s.theta <= 1.0)) throw InvalidInput("needle theta must lie in (0, 1]");
                          if (s.d < 1) throw InvalidInput("needle d must be >= 1");
                        },
                        [](const PowerLawSpec&) {},
                        [](const GaussianTiltSpec& s) {
                          if (!std::isfinite(s.beta)) throw InvalidInput("gaussian beta must be finite");
                          if (s.d < 1) throw InvalidInput("gaussian d must be >= 1");
                        }},
             spec);
}

int dimension(const AnalyticShiftSpec& spec) {
  return std::visit(overloaded{[](const NeedleSpec& s) { return s.d; }, [](const PowerLawSpec&) { return 1; },
                               [](const GaussianTiltSpec& s) { return s.d; }},
                    spec);
}

std::string family_name(const AnalyticShiftSpec& spec) {
  return std::visit(overloaded{[](const NeedleSpec&) { return std::string("needle"); },
                               [](const PowerLawSpec&) { return std::string("powerlaw"); },
                               [](const GaussianTiltSpec&) { return std::string("gaussian"); }},
                    spec);
}

double true_ratio(const AnalyticShiftSpec& spec, std::span<const double> x) {
  return std::visit(overloaded{[&](const NeedleSpec& s) {
                                 if (x.size() != static_cast<std::size_t>(s.d)) {
                                   throw InvalidInput("needle ratio: input dimension mismatch");
                                 }
                                 const bool inside =
                                     std::all_of(x.begin(), x.end(), [&](double v) { return std::abs(v) <= s.r; });
                                 return inside ? s.inside_ratio() : s.outside_ratio();
                               },
                               [&](const PowerLawSpec&) {
                                 if (x.empty() || !(x[0] > 0.0)) {
                                   throw InvalidInput("power-law ratio is defined for x > 0 only");
                                 }
                                 return 0.5 / std::sqrt(x[0]);
                               },
                               [&](const GaussianTiltSpec& s) {
                                 if (x.size() != static_cast<std::size_t>(s.d)) {
                                   throw InvalidInput("gaussian ratio: input dimension mismatch");
                                 }
                                 return std::exp(s.beta * x[0] - 0.5 * s.beta * s.beta);
                               }},
                    spec);
}

double ratio_supremum(const AnalyticShiftSpec& spec) {
  return std::visit(overloaded{[](const NeedleSpec& s) { return s.inside_ratio(); },
                               [](const PowerLawSpec&) { return std::numeric_limits<double>::infinity(); },
                               [](const GaussianTiltSpec& s) {
                                 return s.beta == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
                               }},
                    spec);
}

std::string to_string(Source s) { return s == Source::P ? "P" : "Q"; }

GeneratedDataset gen_needle(Source source, double r, int d, double theta, std::size_t n, std::uint64_t seed) {
  const NeedleSpec spec{r, d, theta};
  validate(spec);
  check_n(n);
  GeneratedDataset ds;
  ds.x = Matrix(n, static_cast<std::size_t>(d));
  ds.y.emplace(n);
  ds.scores.emplace(n);
  ds.source = source;
  ds.seed = seed;
  ds.spec = spec;
  const char* tag = source_tag(source, "needle-P", "needle-Q");
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(seed, tag, i);
    const bool from_ball = source == Source::Q && rng.uniform() < theta;
    const double scale = from_ball ? r : 1.0;
    double sup = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = scale * rng.uniform();
      ds.x(i, static_cast<std::size_t>(j)) = v;
      sup = std::max(sup, v);
    }
    (*ds.y)[i] = rng.uniform();
    (*ds.scores)[i] = sup;
  }
  return ds;
}

GeneratedDataset gen_gaussian_shift(Source source, double beta, int d, std::size_t n, std::uint64_t seed) {
  const GaussianTiltSpec spec{beta, d};
  validate(spec);
  check_n(n);
  GeneratedDataset ds;
  ds.x = Matrix(n, static_cast<std::size_t>(d));
  ds.y.emplace(n);
  ds.source = source;
  ds.seed = seed;
  ds.spec = spec;
  const double shift = source == Source::Q ? beta : 0.0;
  const char* x_tag = source_tag(source, "gauss-P", "gauss-Q");
  const char* y_tag = source_tag(source, "gauss-label-P", "gauss-label-Q");
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(seed, x_tag, i);
    double total = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = rng.normal() + (j == 0 ? shift : 0.0);
      ds.x(i, static_cast<std::size_t>(j)) = v;
      total += v;
    }
    CounterRng noise(seed, y_tag, i);
    const double x1 = ds.x(i, 0);
    (*ds.y)[i] = total + std::exp(x1 * x1) + noise.normal();
  }
  return ds;
}

GeneratedDataset gen_powerlaw(Source source, std::size_t n, std::uint64_t seed) {
  check_n(n);
  GeneratedDataset ds;
  ds.x = Matrix(n, 1);
  ds.scores.emplace(n);
  ds.source = source;
  ds.seed = seed;
  ds.spec = PowerLawSpec{};
  const char* tag = source_tag(source, "powerlaw-P", "powerlaw-Q");
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(seed, tag, i);
    const double u = rng.uniform();
    const double v = source == Source::P ? u : u * u;
    ds.x(i, 0) = v;
    (*ds.scores)[i] = v;
  }
  return ds;
}

GeneratedDataset generate(const AnalyticShiftSpec& spec, Source source, std::size_t n, std::uint64_t seed) {
  return std::visit(
      overloaded{[&](const NeedleSpec& s) { return gen_needle(source, s.r, s.d, s.theta, n, seed); },
                 [&](const PowerLawSpec&) { return gen_powerlaw(source, n, seed); },
                 [&](const GaussianTiltSpec& s) { return gen_gaussian_shift(source, s.beta, s.d, n, seed); }},
      spec);
}

Matrix sample_inputs(const AnalyticShiftSpec& spec, Source source, std::size_t n, std::uint64_t seed) {
  return generate(spec, source, n, seed).x;
}

double AffinePredictor::predict(std::span<const double> x) const {
  if (x.size() != coef.size()) throw InvalidInput("predictor dimension does not match the input");
  double v = intercept;
  for (std::size_t j = 0; j < x.size(); ++j) v += coef[j] * x[j];
  return v;
}

AffinePredictor fit_least_squares(const Matrix& x, std::span<const double> y) {
  if (x.rows != y.size()) throw InvalidInput("fit_least_squares: row count differs from label count");
  if (x.rows <= x.cols) throw InvalidInput("fit_least_squares: need more rows than columns");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(x.cols + 1));
  Eigen::VectorXd target(static_cast<Eigen::Index>(x.rows));
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    design(ii, 0) = 1.0;
    for (std::size_t j = 0; j < x.cols; ++j) design(ii, static_cast<Eigen::Index>(j + 1)) = x(i, j);
    target(ii) = y[i];
  }
  const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(target);
  AffinePredictor p;
  p.intercept = beta(0);
  p.coef.resize(x.cols);
  for (std::size_t j = 0; j < x.cols; ++j) p.coef[j] = beta(static_cast<Eigen::Index>(j + 1));
  return p;
}

std::vector<double> residual_scores(const Matrix& x, std::span<const double> y, const AffinePredictor& predictor) {
  if (x.rows != y.size()) throw InvalidInput("residual_scores: row count differs from label count");
  if (x.rows > 0 && x.cols != predictor.coef.size()) {
    throw InvalidInput("residual_scores: predictor has " + std::to_string(predictor.coef.size()) +
                       " coefficients for " + std::to_string(x.cols) + " features");
  }
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = std::abs(y[i] - predictor.predict(x.row(i)));
  return out;
}

}  // namespace clipcp::synth
