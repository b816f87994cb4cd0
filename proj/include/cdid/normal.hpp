#pragma once

#include <cmath>

namespace cdid {

inline constexpr double kInvSqrt2 = 0.7071067811865476;
inline constexpr double kLogSqrt2Pi = 0.9189385332046727;

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

inline double norm_logpdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

// log Phi(x), stable across the whole real line. erfc underflows near
// x = -38, below that an asymptotic expansion takes over.
inline double norm_logcdf(double x) {
  if (x > 8.0) return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
  if (x > -37.0) return std::log(0.5 * std::erfc(-x * kInvSqrt2));
  const double x2 = x * x;
  return -0.5 * x2 - std::log(-x) - kLogSqrt2Pi + std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

// phi(x) / Phi(x); decays to 0 for large x and grows like -x in the left tail.
inline double inverse_mills(double x) { return std::exp(norm_logpdf(x) - norm_logcdf(x)); }

// Inverse normal CDF (Wichura's PPND16), |error| ~ 1e-15. Throws
// std::domain_error outside (0, 1).
double norm_quantile(double p);

}  // namespace cdid
