#pragma once

#include <cmath>
#include <numbers>

namespace fairaug {

// Overflow-safe logistic function.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// The 1e-9 slack keeps products such as 0.35 * 10 at the half-way point
// instead of just below it.
inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5 + 1e-9)); }

// Sample size round(psi * n), at least 0 and at most n.
inline int sample_size(double psi, int n) {
  const long s = round_half_up(psi * n);
  return static_cast<int>(s < 0 ? 0 : (s > n ? n : s));
}

}  // namespace fairaug
