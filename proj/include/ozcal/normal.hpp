#pragma once

#include <cmath>

namespace ozcal {

inline constexpr double kSqrt2 = 1.4142135623730951;
inline constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2*pi))

/// Standard normal CDF via the complementary error function.
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

/// Standard normal density.
inline double norm_pdf(double z) {
  return std::exp(-0.5 * z * z - kLogSqrt2Pi);
}

inline double norm_log_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

/// Standard normal quantile function, Wichura (1988) algorithm AS 241,
/// routine PPND16 (relative error ~1e-16, far below the 1e-9 target).
/// Requires 0 < p < 1; callers clamp.
double norm_quantile(double p);

}  // namespace ozcal
