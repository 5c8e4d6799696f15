#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace seqdisc {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

inline void log_accumulate(double& acc, double x) { acc = log_add(acc, x); }

inline double log_sum_exp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs) m = std::max(m, x);
  if (m == kLogZero) return kLogZero;
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// In-place log-softmax; returns the normalizer.
inline double log_normalize(std::span<double> xs) {
  const double z = log_sum_exp(xs);
  for (double& x : xs) x -= z;
  return z;
}

}  // namespace seqdisc
