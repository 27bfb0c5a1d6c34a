// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace bbmld::interp {

namespace detail {
inline double pchip_slope(std::span<const double> y, std::size_t i, double h) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  if (i == 0) return (y[1] - y[0]) / h;
  if (i + 1 == n) return (y[n - 1] - y[n - 2]) / h;
  const double a = (y[i] - y[i - 1]) / h, b = (y[i + 1] - y[i]) / h;
  if (a * b <= 0.0) return 0.0;
  return 2.0 * a * b / (a + b);  // harmonic mean keeps the interpolant monotone
}
}  // namespace detail

/// Monotone piecewise-cubic Hermite interpolation (Fritsch-Carlson slopes)
/// of samples y_i at x0 + i h. Clamped to the end values outside the range.
inline double pchip_uniform(std::span<const double> y, double x0, double h, double x) {
  const std::size_t n = y.size();
  if (n == 0) return 0.0;
  if (n == 1 || x <= x0) return y.front();
  const double s = (x - x0) / h;
  if (s >= static_cast<double>(n - 1)) return y.back();
  const auto i = static_cast<std::size_t>(s);
  const double t = s - static_cast<double>(i);
  const double m0 = detail::pchip_slope(y, i, h), m1 = detail::pchip_slope(y, i + 1, h);
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y[i] + (t3 - 2 * t2 + t) * h * m0 + (-2 * t3 + 3 * t2) * y[i + 1] +
         (t3 - t2) * h * m1;
}

/// First x where the monotone interpolant reaches `level`; samples must be
/// nondecreasing and bracket the level.
inline double pchip_crossing(std::span<const double> y, double x0, double h, double level) {
  const auto it = std::lower_bound(y.begin(), y.end(), level);
  if (it == y.begin()) return x0;
  if (it == y.end()) return x0 + h * static_cast<double>(y.size() - 1);
  const auto j = static_cast<std::size_t>(it - y.begin());
  double a = x0 + h * static_cast<double>(j - 1), b = a + h;
  for (int k = 0; k < 80 && b - a > 1e-15 * (1.0 + std::abs(a)); ++k) {
    const double m = 0.5 * (a + b);
    (pchip_uniform(y, x0, h, m) < level ? a : b) = m;
  }
  return 0.5 * (a + b);
}

}  // namespace bbmld::interp
