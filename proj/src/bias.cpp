#include "clipcp/bias.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clipcp/error.hpp"
#include "clipcp/normal.hpp"
#include "clipcp/rng.hpp"

namespace clipcp::bias {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double clipped_target(const synth::AnalyticShiftSpec& spec, std::span<const double> x, ErrorTarget target,
                      double clip_b) {
  const double w = synth::true_ratio(spec, x);
  return target == ErrorTarget::StarClipped ? std::min(w, clip_b) : w;
}

}  // namespace

BiasEstimate estimate_clipping_bias(const dre::RatioFit& fit, const Matrix& x_sample) {
  if (x_sample.empty()) throw InvalidInput("estimate_clipping_bias: sample must be nonempty");
  CompensatedSum total;
  for (std::size_t i = 0; i < x_sample.rows; ++i) total.add(fit(x_sample.row(i)));
  return {1.0 - total.value() / static_cast<double>(x_sample.rows), x_sample.rows, fit.clip_b()};
}

double analytic_delta_b(const synth::AnalyticShiftSpec& spec, double clip_b) {
  synth::validate(spec);
  return std::visit(
      overloaded{[&](const synth::NeedleSpec& s) {
                   if (!(clip_b >= 1.0)) throw InvalidInput("analytic_delta_b: B must be >= 1");
                   return s.volume() * std::max(0.0, s.inside_ratio() - clip_b);
                 },
                 [&](const synth::PowerLawSpec&) {
                   if (!(clip_b >= 0.5)) throw InvalidInput("analytic_delta_b: power-law B must be >= 1/2");
                   return 0.25 / clip_b;
                 },
                 [&](const synth::GaussianTiltSpec& s) {
                   if (!(clip_b >= 1.0)) throw InvalidInput("analytic_delta_b: B must be >= 1");
                   const double beta = std::abs(s.beta);
                   if (beta == 0.0) return 0.0;
                   if (std::isinf(clip_b)) return 0.0;
                   // w* is lognormal: log w* ~ N(-beta^2/2, beta^2).
                   const double k = std::log(clip_b) / beta;
                   return normal_cdf(beta / 2.0 - k) - clip_b * normal_cdf(-beta / 2.0 - k);
                 }},
      spec);
}

double analytic_tv(const synth::AnalyticShiftSpec& spec) {
  synth::validate(spec);
  return std::visit(overloaded{[](const synth::NeedleSpec& s) { return s.theta * (1.0 - s.volume()); },
                               [](const synth::PowerLawSpec&) { return 0.25; },
                               [](const synth::GaussianTiltSpec& s) {
                                 return std::erf(std::abs(s.beta) / (2.0 * std::sqrt(2.0)));
                               }},
                    spec);
}

ProbabilityBound bias_deviation_bound(const BiasDeviationQuery& q) {
  if (!(q.gamma > 0.0)) throw InvalidInput("bias deviation bound: gamma must be > 0");
  if (!(q.m >= 1.0)) throw InvalidInput("bias deviation bound: m must be >= 1");
  if (!(q.b >= 1.0)) throw InvalidInput("bias deviation bound: B must be >= 1");
  if (!(q.epsilon >= 0.0)) throw InvalidInput("bias deviation bound: epsilon must be >= 0");
  return {2.0 * std::exp(-q.gamma * q.gamma * q.m / (2.0 * q.b * (1.0 + q.epsilon + q.gamma)))};
}

ProbabilityBound weighted_dkw_bound(const WeightedDkwQuery& q) {
  if (!(q.gamma > 0.0)) throw InvalidInput("weighted DKW bound: gamma must be > 0");
  if (!(q.m >= 1.0)) throw InvalidInput("weighted DKW bound: m must be >= 1");
  if (!(q.b_over_mu >= 1.0)) throw InvalidInput("weighted DKW bound: B' must be >= 1");
  const double g2m = q.m * q.gamma * q.gamma;
  return {(72.0 / q.gamma) * std::exp(-g2m / (4.0 * q.b_over_mu)) +
          2.0 * std::exp(-g2m / (2.0 * q.b_over_mu * q.b_over_mu))};
}

std::uint64_t wcp_calibration_size(const WcpCalibrationSizeQuery& q) {
  if (!(q.b >= 1.0) || !std::isfinite(q.b)) throw InvalidInput("wcp calibration size: B must be finite and >= 1");
  if (!(q.epsilon > 0.0 && q.epsilon < 1.0)) throw InvalidInput("wcp calibration size: epsilon must lie in (0, 1)");
  if (!(q.delta > 0.0 && q.delta < 1.0)) throw InvalidInput("wcp calibration size: delta must lie in (0, 1)");
  const double eps2 = q.epsilon * q.epsilon;
  const double first = 16.0 * q.b / eps2 * std::log(144.0 / (q.epsilon * q.delta));
  const double second = 32.0 * q.b * q.b / eps2 * std::log(4.0 / q.delta);
  return static_cast<std::uint64_t>(ceil_tolerant(std::max(first, second)));
}

double moment_bias_bound(const MomentBiasQuery& q) {
  if (!(q.p > 1.0)) throw InvalidInput("moment bias bound: p must be > 1");
  if (!(q.c > 0.0)) throw InvalidInput("moment bias bound: C must be > 0");
  if (!(q.b0 >= 0.0)) throw InvalidInput("moment bias bound: B0 must be >= 0");
  if (!(q.b > q.b0)) throw InvalidInput("moment bias bound: B must exceed B0");
  if (!(q.rho >= 0.0)) throw InvalidInput("moment bias bound: rho must be >= 0");
  return q.rho / (q.c * (q.p - 1.0) * std::pow(q.b - q.b0, q.p - 1.0));
}

BoundValue evaluate_bound(const BoundQuery& q) {
  return std::visit(
      overloaded{[](const BiasDeviationQuery& b) {
                   const auto v = bias_deviation_bound(b);
                   return BoundValue{"bias-dev",
                                     "2 exp(-gamma^2 m / (2 B (1 + eps + gamma)))",
                                     {{"b", b.b}, {"eps", b.epsilon}, {"gamma", b.gamma}, {"m", b.m}},
                                     v.reported(),
                                     v.raw};
                 },
                 [](const WeightedDkwQuery& b) {
                   const auto v = weighted_dkw_bound(b);
                   return BoundValue{"dkw",
                                     "(72/gamma) exp(-m gamma^2 / (4 B')) + 2 exp(-m gamma^2 / (2 B'^2))",
                                     {{"m", b.m}, {"gamma", b.gamma}, {"b_over_mu", b.b_over_mu}},
                                     v.reported(),
                                     v.raw};
                 },
                 [](const WcpCalibrationSizeQuery& b) {
                   const auto v = static_cast<double>(wcp_calibration_size(b));
                   return BoundValue{"wcp-size",
                                     "ceil(max(16 B / eps^2 log(144 / (eps delta)), 32 B^2 / eps^2 log(4 / delta)))",
                                     {{"b", b.b}, {"eps", b.epsilon}, {"delta", b.delta}},
                                     v,
                                     v};
                 },
                 [](const MomentBiasQuery& b) {
                   const double v = moment_bias_bound(b);
                   return BoundValue{"moment",
                                     "rho / (C (p - 1) (B - B0)^(p - 1))",
                                     {{"c", b.c}, {"p", b.p}, {"b0", b.b0}, {"rho", b.rho}, {"b", b.b}},
                                     v,
                                     v};
                 }},
      q);
}

McEstimate mc_delta_b(const synth::AnalyticShiftSpec& spec, double clip_b, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidInput("mc_delta_b: n must be >= 1");
  if (std::isnan(clip_b)) throw InvalidInput("mc_delta_b: B must be a number");
  const Matrix x = synth::sample_inputs(spec, synth::Source::P, n, seed);
  RunningMoments moments;
  CompensatedSum total;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double excess = std::max(0.0, synth::true_ratio(spec, x.row(i)) - clip_b);
    moments.add(excess);
    total.add(excess);
  }
  return {total.value() / static_cast<double>(n), moments.std_error(), n};
}

ErrorEstimate mc_l1_l2_error(const dre::RatioFit& fit, const synth::AnalyticShiftSpec& spec, ErrorTarget target,
                             std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidInput("mc_l1_l2_error: n must be >= 1");
  const Matrix x = synth::sample_inputs(spec, synth::Source::P, n, seed);
  RunningMoments abs_err, sq_err;
  CompensatedSum abs_total, sq_total;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double e = fit(x.row(i)) - clipped_target(spec, x.row(i), target, fit.clip_b());
    abs_err.add(std::abs(e));
    sq_err.add(e * e);
    abs_total.add(std::abs(e));
    sq_total.add(e * e);
  }
  const auto nn = static_cast<double>(n);
  return {abs_total.value() / nn, sq_total.value() / nn, abs_err.std_error(), sq_err.std_error(), n};
}

double needle_l1_error(const dre::NeedleOneParam& fitted, double clip_b, const synth::NeedleSpec& spec,
                       ErrorTarget target) {
  synth::validate(spec);
  if (fitted.r != spec.r || fitted.d != spec.d) throw InvalidInput("needle_l1_error: fit and spec use different balls");
  const double b = target == ErrorTarget::StarClipped ? clip_b : std::numeric_limits<double>::infinity();
  const double fit_in = std::clamp(fitted.beta, 0.0, clip_b);
  const double fit_out = std::clamp(fitted.outside_value(), 0.0, clip_b);
  const double star_in = std::min(spec.inside_ratio(), b);
  const double star_out = std::min(spec.outside_ratio(), b);
  const double vol = spec.volume();
  return vol * std::abs(fit_in - star_in) + (1.0 - vol) * std::abs(fit_out - star_out);
}

}  // namespace clipcp::bias
