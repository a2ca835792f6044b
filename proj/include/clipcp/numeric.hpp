#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace clipcp {

/// Neumaier compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

/// Monte Carlo mean with its standard error.
struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Streaming mean/variance (Welford), used for standard errors.
class RunningMoments {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double std_error() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Ceiling that ignores floating-point noise within `rel_tol` of an integer,
/// so that e.g. 5760 * log(e) rounding to 5760.000000000001 still yields 5760.
inline double ceil_tolerant(double x, double rel_tol = 1e-12) {
  const double r = std::round(x);
  if (std::abs(x - r) <= rel_tol * std::max(1.0, std::abs(x))) return r;
  return std::ceil(x);
}

}  // namespace clipcp
