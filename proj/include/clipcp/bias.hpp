#pragma once

// Clipping-bias estimation, closed-form bias oracles and finite-sample bound evaluators.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "clipcp/dre.hpp"
#include "clipcp/matrix.hpp"
#include "clipcp/numeric.hpp"
#include "clipcp/synth.hpp"

namespace clipcp::bias {

struct BiasEstimate {
  double delta_hat = 0.0;
  std::size_t m_est = 0;
  double clip_b = 1.0;
};

/// 1 - mean of the fitted ratio over a sample from P.
BiasEstimate estimate_clipping_bias(const dre::RatioFit& fit, const Matrix& x_sample);

/// E_P[(w*(X) - B)^+] in closed form.
double analytic_delta_b(const synth::AnalyticShiftSpec& spec, double clip_b);

/// Total variation distance between P and Q.
double analytic_tv(const synth::AnalyticShiftSpec& spec);

/// A probability bound: `raw` is the formula value, which may exceed 1.
struct ProbabilityBound {
  double raw = 0.0;
  double reported() const { return raw < 0.0 ? 0.0 : (raw > 1.0 ? 1.0 : raw); }
};

struct BiasDeviationQuery {
  double b = 1.0;
  double epsilon = 0.0;
  double gamma = 0.1;
  double m = 1.0;
};

/// `b_over_mu` bounds the weight divided by its mean under P.
struct WeightedDkwQuery {
  double m = 1.0;
  double gamma = 0.1;
  double b_over_mu = 1.0;
};

struct WcpCalibrationSizeQuery {
  double b = 1.0;
  double epsilon = 0.1;
  double delta = 0.1;
};

struct MomentBiasQuery {
  double c = 1.0;
  double p = 2.0;
  double b0 = 0.0;
  double rho = 1.0;
  double b = 2.0;
};

using BoundQuery = std::variant<BiasDeviationQuery, WeightedDkwQuery, WcpCalibrationSizeQuery, MomentBiasQuery>;

/// P(|estimate - Delta_B| > gamma) <= 2 exp(-gamma^2 m / (2B(1 + eps + gamma))).
ProbabilityBound bias_deviation_bound(const BiasDeviationQuery& q);

/// (72/gamma) exp(-m gamma^2 / (4B')) + 2 exp(-m gamma^2 / (2B'^2)).
ProbabilityBound weighted_dkw_bound(const WeightedDkwQuery& q);

/// ceil(max(16B/eps^2 log(144/(eps delta)), 32B^2/eps^2 log(4/delta))).
std::uint64_t wcp_calibration_size(const WcpCalibrationSizeQuery& q);

/// rho / (C (p - 1) (B - B0)^(p - 1)).
double moment_bias_bound(const MomentBiasQuery& q);

struct BoundValue {
  std::string name;
  std::string formula;
  std::vector<std::pair<std::string, double>> inputs;
  double value = 0.0;  // reported (clamped for probability bounds)
  double raw = 0.0;
};

BoundValue evaluate_bound(const BoundQuery& q);

/// Monte Carlo E_P[(w*(X) - B)^+] over n seeded draws.
McEstimate mc_delta_b(const synth::AnalyticShiftSpec& spec, double clip_b, std::size_t n, std::uint64_t seed);

enum class ErrorTarget { Star, StarClipped };

struct ErrorEstimate {
  double l1 = 0.0;
  double l2 = 0.0;
  double l1_se = 0.0;
  double l2_se = 0.0;
  std::size_t n = 0;
};

/// Monte Carlo E_P|w^ - t| and E_P[(w^ - t)^2], t = w* or w* clipped at the fit's B.
ErrorEstimate mc_l1_l2_error(const dre::RatioFit& fit, const synth::AnalyticShiftSpec& spec, ErrorTarget target,
                             std::size_t n, std::uint64_t seed);

/// Exact E_P|w^ - t| for a needle-class fit against the needle family.
double needle_l1_error(const dre::NeedleOneParam& fitted, double clip_b, const synth::NeedleSpec& spec,
                       ErrorTarget target);

}  // namespace clipcp::bias
