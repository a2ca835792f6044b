#pragma once

// Clipped least-squares importance fitting (CLISF) over concrete ratio classes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "clipcp/matrix.hpp"
#include "clipcp/numeric.hpp"

namespace clipcp::dre {

using GroupFn = std::function<std::size_t(std::span<const double>)>;

/// Group id taken from the first coordinate of the input (rounded).
std::size_t group_from_first_coordinate(std::span<const double> x);

/// One constant weight per group. `weights` holds the fitted values;
/// `probs`, when present, are the known group probabilities under P.
struct PiecewiseConstant {
  std::size_t k = 0;
  GroupFn group_of = group_from_first_coordinate;
  std::optional<std::vector<double>> probs;
  std::vector<double> weights;
};

/// x -> exp(x'mu - |mu|^2 / 2): the change of measure N(0, I) -> N(mu, I).
struct ExponentialTilt {
  std::vector<double> mu;
  std::size_t dimension() const { return mu.size(); }
};

/// Two-valued ratio on the unit cube: beta on the sup-norm ball of radius r,
/// (1 - r^d beta) / (1 - r^d) outside, with beta in [1 - theta + theta/r^d, 1/r^d].
struct NeedleOneParam {
  double r = 0.5;
  int d = 1;
  double theta = 0.5;
  double beta = 1.0;

  double volume() const;  // r^d
  double beta_min() const;
  double beta_max() const;
  double outside_value() const;
  bool in_ball(std::span<const double> x) const;
};

/// Explicit value per input; the input's first coordinate indexes `values`.
struct Tabulated {
  std::vector<double> values;
};

/// Arbitrary evaluator (analytic oracles in experiments). Not fittable.
struct Custom {
  std::string name;
  std::function<double(std::span<const double>)> fn;
};

using RatioClass = std::variant<PiecewiseConstant, ExponentialTilt, NeedleOneParam, Tabulated, Custom>;

std::string class_name(const RatioClass& cls);
void validate(const RatioClass& cls);

/// A ratio from `cls` clipped to [0, B].
class RatioFit {
 public:
  RatioFit(RatioClass cls, double clip_b);

  double operator()(std::span<const double> x) const;
  std::vector<double> evaluate(const Matrix& x) const;

  const RatioClass& ratio_class() const { return class_; }
  double clip_b() const { return clip_b_; }

 private:
  RatioClass class_;
  double clip_b_;
};

struct FitReport {
  explicit FitReport(RatioFit f) : fit(std::move(f)) {}

  RatioFit fit;
  double empirical_risk = 0.0;
  int iterations = 0;
  int restarts = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  /// Known-P piecewise solver: Lagrange multiplier and slacks.
  double multiplier = 0.0;
  std::vector<double> slack;
  /// Tilt solver: objective after each accepted step of the winning start.
  std::vector<double> objective_trace;
  std::vector<std::string> warnings;
};

/// (1/2m) sum w(X_i)^2 - (1/n) sum w(X~_j).
double lsif_empirical_risk(const RatioFit& fit, const Matrix& x_train, const Matrix& x_test);

/// Exact population LSIF risk sum_a p_a w_a^2 / 2 - sum_a q_a w_a on a finite space.
double discrete_population_risk(std::span<const double> p, std::span<const double> q, std::span<const double> w);

/// Per-group counts of a sample under `group_of`; ids >= k are rejected.
std::vector<std::size_t> group_counts(const Matrix& x, const GroupFn& group_of, std::size_t k);

/// Closed-form piecewise-constant CLISF without knowledge of P:
/// w_g = min((m~_g / n) / (m_g / m), B), B for groups seen only in the test
/// sample, 0 for groups seen in neither.
FitReport fit_piecewise_unknown_p(std::span<const std::size_t> train_counts, std::span<const std::size_t> test_counts,
                                  double clip_b);

/// Piecewise-constant CLISF with known group probabilities: adds the
/// constraint sum_g p_g w_g <= 1 (the slack form of the integrate-to-one
/// equality) and solves by bisection on its multiplier.
FitReport fit_piecewise_known_p(std::span<const std::size_t> train_counts, std::span<const std::size_t> test_counts,
                                std::span<const double> probs, double clip_b);

struct OptimizerSettings {
  double initial_step = 0.1;
  int max_halvings = 30;
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  int random_restarts = 5;
  std::uint64_t seed = 0;
};

/// Clipped exponential-tilt CLISF by full-batch sub-gradient descent with
/// backtracking, from mu = 0 and `random_restarts` seeded starts; the best
/// restart wins.
FitReport fit_exponential_tilt(const Matrix& x_train, const Matrix& x_test, double clip_b,
                               const OptimizerSettings& opt = {});

/// Clipped objective of the tilt class and its sub-gradient (zero where clipped).
double tilt_objective(const Matrix& x_train, const Matrix& x_test, std::span<const double> mu, double clip_b,
                      std::vector<double>* gradient = nullptr);

/// Global minimiser over beta of the clipped needle-class empirical risk.
FitReport fit_needle_class(const Matrix& x_train, const Matrix& x_test, double clip_b, double r, int d, double theta);

/// Algorithm dispatch: fits `cls` (used as a template; fitted parameters are
/// ignored) on the two samples and returns the clipped fit.
FitReport clisf(const RatioClass& cls, double clip_b, const Matrix& x_train, const Matrix& x_test,
                const OptimizerSettings& opt = {});

struct SrmCandidate {
  double b = 0.0;
  bool ok = false;
  double empirical_risk = 0.0;
  double objective = 0.0;
  std::string error;
};

struct SrmSelection {
  double selected_b = 0.0;
  FitReport fit;
  std::vector<SrmCandidate> candidates;
  std::vector<std::string> warnings;
};

/// Structural risk minimisation over an ascending B grid: minimises
/// R^(w_B) + lambda * B * sqrt(d / m), ties toward the smaller B.
SrmSelection srm_select(const RatioClass& cls, std::span<const double> b_grid, double lambda, double d, double m,
                        const Matrix& x_train, const Matrix& x_test, const OptimizerSettings& opt = {});

/// Same selection from already-computed per-B empirical risks.
std::size_t srm_argmin(std::span<const double> b_grid, std::span<const double> risks, double lambda, double d,
                       double m);

struct SampleSizePlan {
  std::uint64_t m_train = 0;
  std::uint64_t m_test = 0;
  double b = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  double c_b = 0.0;
  double c_tilde_b = 0.0;
};

/// Training and test sample sizes that make every term of the uniform
/// deviation bound at most epsilon / 24.
SampleSizePlan required_sample_sizes(double b, double epsilon, double delta, double c_b, double c_tilde_b);

/// Draws n inputs using `seed`.
using Sampler = std::function<Matrix(std::size_t n, std::uint64_t seed)>;

/// Monte Carlo E_P[w^2/2] - E_Q[w] with its standard error.
McEstimate mc_population_risk(const RatioFit& fit, const Sampler& p_sampler, const Sampler& q_sampler, std::size_t n,
                              std::uint64_t seed);

}  // namespace clipcp::dre
