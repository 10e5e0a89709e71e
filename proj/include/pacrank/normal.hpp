#pragma once

#include <cmath>
#include <numbers>

namespace pacrank::normal {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// log N(x; mean, var)
inline double log_density(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * r * r / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

// log(exp(a) + exp(b)) without overflow.
inline double log_add_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace pacrank::normal
