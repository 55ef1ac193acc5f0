#pragma once
// The C-infinity building blocks shared by the dyadic partition, the
// Lagrangian cutoff, the test data and the smoothing operators.

#include <cmath>

namespace mhdlab::profiles {

/// exp(-1/(1-u^2)) on |u| < 1, zero outside.
inline double bump(double u) {
  const double s = 1 - u * u;
  return s > 0 ? std::exp(-1 / s) : 0.0;
}
inline double bump_d1(double u) {
  const double s = 1 - u * u;
  return s > 0 ? bump(u) * (-2 * u / (s * s)) : 0.0;
}
inline double bump_d2(double u) {
  const double s = 1 - u * u;
  if (s <= 0) return 0.0;
  const double g1 = -2 * u / (s * s);
  const double g2 = -2 / (s * s) - 8 * u * u / (s * s * s);
  return bump(u) * (g1 * g1 + g2);
}

namespace detail {
inline double edge(double x) { return x > 0 ? std::exp(-1 / x) : 0.0; }
}  // namespace detail

/// Monotone C-infinity step: 0 for x <= 0, 1 for x >= 1.
inline double smoothstep(double x) {
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  const double a = detail::edge(x), b = detail::edge(1 - x);
  return a / (a + b);
}
inline double smoothstep_d1(double x) {
  if (x <= 0 || x >= 1) return 0.0;
  const double s = smoothstep(x);
  return s * (1 - s) * (1 / (x * x) + 1 / ((1 - x) * (1 - x)));
}
inline double smoothstep_d2(double x) {
  if (x <= 0 || x >= 1) return 0.0;
  const double s = smoothstep(x);
  const double g = 1 / (x * x) + 1 / ((1 - x) * (1 - x));
  const double dg = -2 / (x * x * x) + 2 / ((1 - x) * (1 - x) * (1 - x));
  const double d1 = s * (1 - s) * g;
  return d1 * (1 - 2 * s) * g + s * (1 - s) * dg;
}

}  // namespace mhdlab::profiles
