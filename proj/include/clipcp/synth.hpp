#pragma once

// Seeded generators and ground-truth density ratios for the synthetic families.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "clipcp/matrix.hpp"

namespace clipcp::synth {

/// P uniform on the unit cube; Q mixes P with weight 1 - theta and the
/// sup-norm ball [0, r]^d with weight theta.
struct NeedleSpec {
  double r = 0.5;
  int d = 1;
  double theta = 0.5;

  double volume() const;         // r^d = P(ball)
  double inside_ratio() const;   // 1 - theta + theta / r^d
  double outside_ratio() const;  // 1 - theta
};

/// P = U(0, 1), w*(x) = 1 / (2 sqrt(x)), so Q has CDF sqrt(x).
struct PowerLawSpec {};

/// P = N(0, I_d), Q = N(beta e_1, I_d).
struct GaussianTiltSpec {
  double beta = 0.0;
  int d = 1;
};

using AnalyticShiftSpec = std::variant<NeedleSpec, PowerLawSpec, GaussianTiltSpec>;

void validate(const AnalyticShiftSpec& spec);
int dimension(const AnalyticShiftSpec& spec);
std::string family_name(const AnalyticShiftSpec& spec);

/// Exact dQ/dP at x.
double true_ratio(const AnalyticShiftSpec& spec, std::span<const double> x);
/// Essential supremum of the true ratio (+inf when unbounded).
double ratio_supremum(const AnalyticShiftSpec& spec);

enum class Source { P, Q };
std::string to_string(Source s);

struct GeneratedDataset {
  Matrix x;
  std::optional<std::vector<double>> y;
  std::optional<std::vector<double>> scores;
  std::optional<std::vector<std::size_t>> groups;
  Source source = Source::P;
  std::uint64_t seed = 0;
  std::optional<AnalyticShiftSpec> spec;

  std::size_t size() const { return x.rows; }
};

GeneratedDataset gen_needle(Source source, double r, int d, double theta, std::size_t n, std::uint64_t seed);
GeneratedDataset gen_gaussian_shift(Source source, double beta, int d, std::size_t n, std::uint64_t seed);
GeneratedDataset gen_powerlaw(Source source, std::size_t n, std::uint64_t seed);
GeneratedDataset generate(const AnalyticShiftSpec& spec, Source source, std::size_t n, std::uint64_t seed);

/// Inputs only; the same rows `generate` would produce.
Matrix sample_inputs(const AnalyticShiftSpec& spec, Source source, std::size_t n, std::uint64_t seed);

struct AffinePredictor {
  double intercept = 0.0;
  std::vector<double> coef;

  double predict(std::span<const double> x) const;
};

/// Ordinary least squares with an intercept.
AffinePredictor fit_least_squares(const Matrix& x, std::span<const double> y);

/// |y_i - predict(x_i)|.
std::vector<double> residual_scores(const Matrix& x, std::span<const double> y, const AffinePredictor& predictor);

}  // namespace clipcp::synth
