#pragma once

namespace clipcp {

/// Standard normal CDF, computed through erfc (absolute error well below 1e-15).
double normal_cdf(double x);

/// Standard normal quantile (Wichura's AS241, about 1e-16 relative accuracy).
/// p must lie in (0, 1); the endpoints map to -inf / +inf.
double normal_quantile(double p);

}  // namespace clipcp
