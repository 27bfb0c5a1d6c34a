// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

// Free propagator of the single-particle motion: exact Gaussian, Fourier
// inversion with the no-jump part split off, or the saddle-point form.
#pragma once

#include <cmath>
#include <algorithm>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bbmld/error.hpp"
#include "bbmld/front.hpp"
#include "bbmld/model.hpp"

namespace bbmld {

enum class PropagatorMode { automatic, gaussian, fourier, saddle };

struct PropagatorValue {
  double density = 0.0;      // absolutely continuous part at x
  double atom = 0.0;         // mass sitting exactly at the origin (D = 0 only)
  double error_bound = 0.0;  // quadrature estimate for the Fourier mode
};

namespace detail {

/// Smallest n with P(Poisson(mu) > n) below tol.
inline int poisson_cutoff(double mu, double tol) {
  double term = std::exp(-mu), cdf = term;
  int n = 0;
  while (1.0 - cdf > tol && n < 10000) {
    ++n;
    term *= mu / n;
    cdf += term;
    if (term < tol * 1e-3 && n > mu) break;
  }
  return n;
}

inline double gaussian_density(double x, double var) {
  return std::exp(-x * x / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// Jump part of the density for D > 0: the inverse transform of
/// phi(theta) - e^{-lambda t - D t theta^2}, i.e. the paths with at least one jump.
inline PropagatorValue fourier_density(const BranchingModel& m, double x, double t) {
  const double D = m.diffusion();
  const double lam = m.jump_rate();
  const double var = 2.0 * D * t;
  PropagatorValue out;
  out.density = std::exp(-lam * t) * gaussian_density(x, var);
  if (!m.has_jumps()) return out;

  double drift_rate = 0.0;
  for (const auto& a : m.jumps()) drift_rate += a.rate * std::abs(a.y);
  const double theta_max = std::sqrt(40.0 / (D * t));
  const double h = std::min(theta_max / 64.0, 1.0 / (std::abs(x) + t * drift_rate + 1.0));
  const int panels = static_cast<int>(std::ceil(theta_max / h));
  static const auto gl = gauss_legendre(16);
  const auto& [nodes, weights] = gl;
  auto integrand = [&](double th) {
    double re = 0.0, im = 0.0;
    for (const auto& a : m.jumps()) {
      re += a.rate * (std::cos(th * a.y) - 1.0);
      im += a.rate * std::sin(th * a.y);
    }
    const double gauss = -D * t * th * th;
    const std::complex<double> phi = std::exp(std::complex<double>(gauss + t * re, t * im - th * x));
    const std::complex<double> base = std::exp(std::complex<double>(gauss - lam * t, -th * x));
    return (phi - base).real();
  };
  double sum = 0.0, abs_sum = 0.0;
  const double hp = theta_max / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * hp;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double v = integrand(mid + 0.5 * hp * nodes[q]) * 0.5 * hp * weights[q];
      sum += v;
      abs_sum += std::abs(v);
    }
  }
  out.density += sum / std::numbers::pi;
  out.error_bound = 1e-14 * abs_sum / std::numbers::pi;
  return out;
}

}  // namespace detail

/// Density of the displacement after time t, e^{t g} being its moment generator.
inline PropagatorValue propagator(const BranchingModel& m, double x, double t,
                                  PropagatorMode mode = PropagatorMode::automatic) {
  if (!(t > 0.0)) throw DomainError("propagator needs t > 0");
  if (mode == PropagatorMode::automatic)
    mode = m.has_jumps() ? PropagatorMode::fourier : PropagatorMode::gaussian;
  switch (mode) {
    case PropagatorMode::gaussian:
      if (m.has_jumps()) throw ConfigError("gaussian propagator mode requires a model without jumps");
      if (!(m.diffusion() > 0.0)) throw ConfigError("gaussian propagator mode requires D > 0");
      return {detail::gaussian_density(x, 2.0 * m.diffusion() * t), 0.0, 0.0};
    case PropagatorMode::fourier:
      if (!(m.diffusion() > 0.0)) {
        // Atomic jump measures give a purely atomic law: no density to invert for.
        throw ConvergenceError("Fourier inversion does not converge for D = 0 (oscillatory tail of size " +
                               std::to_string(1.0 - std::exp(-m.jump_rate() * t)) +
                               "); the origin atom has weight " + std::to_string(std::exp(-m.jump_rate() * t)));
      }
      return detail::fourier_density(m, x, t);
    case PropagatorMode::saddle: {
      const RatePoint rp = RateFunction(m)(x / t);
      return {std::sqrt(rp.d2f / (2.0 * std::numbers::pi * t)) * std::exp(-t * rp.f), 0.0, 0.0};
    }
    default:
      break;
  }
  throw ConfigError("unknown propagator mode");
}

/// The propagator as a discrete convolution kernel on the lattice dx Z:
/// weights[j] is the mass at x = (offset + j) dx.
struct GridKernel {
  long offset = 0;
  double dx = 0.0;
  std::vector<double> weights;

  [[nodiscard]] double mass() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
  [[nodiscard]] double moment(int k) const {
    double s = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j)
      s += weights[j] * std::pow((offset + static_cast<long>(j)) * dx, k);
    return s;
  }
};

/// D > 0: the density sampled on the lattice times dx (spectrally accurate once
/// sqrt(2 D t) is comparable to dx). D = 0: the exact lattice law, which needs
/// every jump to be a multiple of dx.
inline GridKernel grid_kernel(const BranchingModel& m, double t, double dx) {
  if (!(t > 0.0 && dx > 0.0)) throw ConfigError("grid_kernel needs t > 0 and dx > 0");
  const double D = m.diffusion();
  const int n_max = m.has_jumps() ? detail::poisson_cutoff(m.jump_rate() * t, 1e-18) : 0;
  GridKernel k;
  k.dx = dx;
  if (D > 0.0) {
    const double half = 12.0 * std::sqrt(2.0 * D * t) + n_max * m.max_abs_jump() + dx;
    const long n = static_cast<long>(std::ceil(half / dx));
    k.offset = -n;
    k.weights.resize(static_cast<std::size_t>(2 * n + 1));
    double peak = 0.0;
    for (long j = -n; j <= n; ++j) {
      const double v = propagator(m, j * dx, t).density * dx;
      k.weights[static_cast<std::size_t>(j + n)] = v;
      peak = std::max(peak, v);
    }
    for (double& w : k.weights) {
      if (w < -1e-10 * peak) throw ConfigError("grid_kernel: negative propagator weight; refine the quadrature");
      if (w < 0.0) w = 0.0;
    }
    // Weights below 1e-18 sit at the quadrature noise floor.
    for (double& w : k.weights)
      if (w < 1e-18) w = 0.0;
    std::size_t lo = 0, hi = k.weights.size();
    while (lo + 1 < hi && k.weights[lo] < 1e-18) ++lo;
    while (hi - 1 > lo && k.weights[hi - 1] < 1e-18) --hi;
    k.weights = std::vector<double>(k.weights.begin() + static_cast<long>(lo), k.weights.begin() + static_cast<long>(hi));
    k.offset += static_cast<long>(lo);
    return k;
  }
  if (!m.has_jumps()) throw ConfigError("grid_kernel: the model does not move");
  std::vector<std::pair<long, double>> steps;
  for (const auto& a : m.jumps()) {
    const double s = a.y / dx;
    const double r = std::round(s);
    if (std::abs(s - r) > 1e-9) throw ConfigError("grid_kernel: with D = 0 every jump must be a multiple of dx");
    steps.emplace_back(static_cast<long>(r), a.rate);
  }
  long reach = 0;
  for (const auto& s : steps) reach = std::max(reach, std::abs(s.first));
  const long n = reach * n_max;
  k.offset = -n;
  std::vector<double> term(static_cast<std::size_t>(2 * n + 1), 0.0), next(term.size());
  term[static_cast<std::size_t>(n)] = std::exp(-m.jump_rate() * t);
  k.weights = term;
  for (int p = 1; p <= n_max; ++p) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < term.size(); ++i) {
      if (term[i] == 0.0) continue;
      for (const auto& [off, rate] : steps) {
        const long j = static_cast<long>(i) + off;
        if (j >= 0 && j < static_cast<long>(next.size())) next[static_cast<std::size_t>(j)] += term[i] * rate * t / p;
      }
    }
    term.swap(next);
    for (std::size_t i = 0; i < term.size(); ++i) k.weights[i] += term[i];
  }
  return k;
}

/// Law of the jump part after time t as (position, probability) pairs, or an
/// empty vector when it has more than `max_points` support points.
inline std::vector<std::pair<double, double>> jump_law(const BranchingModel& m, double t,
                                                       std::size_t max_points = 100000) {
  std::vector<std::pair<double, double>> law{{0.0, std::exp(-m.jump_rate() * t)}};
  if (!m.has_jumps()) return law;
  const int n_max = detail::poisson_cutoff(m.jump_rate() * t, 1e-18);
  std::vector<std::pair<double, double>> layer = law, next;
  for (int p = 1; p <= n_max; ++p) {
    next.clear();
    for (const auto& [y, w] : layer)
      for (const auto& a : m.jumps()) next.emplace_back(y + a.y, w * a.rate * t / p);
    std::sort(next.begin(), next.end());
    layer.clear();
    for (const auto& e : next) {
      if (!layer.empty() && std::abs(layer.back().first - e.first) < 1e-12)
        layer.back().second += e.second;
      else
        layer.push_back(e);
    }
    if (layer.size() + law.size() > max_points) return {};
    law.insert(law.end(), layer.begin(), layer.end());
  }
  return law;
}

/// P(Y_t < x) for D > 0, from the jump law and the Gaussian distribution function.
inline double propagator_cdf(const BranchingModel& m, std::span<const std::pair<double, double>> law, double x,
                             double t) {
  const double s = std::sqrt(4.0 * m.diffusion() * t);
  double p = 0.0;
  for (const auto& [y, w] : law) p += w * 0.5 * std::erfc(-(x - y) / s);
  return p;
}

/// out_i = scale * sum_j w_j u(x_i - x_j). Left of the grid u continues
/// geometrically, right of it u is held at its last value.
inline void apply_kernel(const GridKernel& k, std::span<const double> u, std::span<double> out, double scale = 1.0) {
  const long n = static_cast<long>(u.size());
  const long kw = static_cast<long>(k.weights.size());
  const double q = (n > 1 && u[1] > 0.0) ? std::min(1.0, u[0] / u[1]) : 0.0;
  // ext[p] holds u at index p + lo, lo = -(offset + kw - 1).
  const long lo = std::min(0L, -(k.offset + kw - 1));
  const long hi = std::max(n - 1, n - 1 - k.offset);
  std::vector<double> ext(static_cast<std::size_t>(hi - lo + 1));
  for (long p = lo; p <= hi; ++p) {
    double v;
    if (p < 0)
      v = u[0] * std::pow(q, static_cast<double>(-p));
    else if (p >= n)
      v = u[static_cast<std::size_t>(n - 1)];
    else
      v = u[static_cast<std::size_t>(p)];
    ext[static_cast<std::size_t>(p - lo)] = v;
  }
  std::vector<std::pair<long, double>> live;
  for (long j = 0; j < kw; ++j)
    if (k.weights[static_cast<std::size_t>(j)] != 0.0) live.emplace_back(j, k.weights[static_cast<std::size_t>(j)]);
  for (long i = 0; i < n; ++i) {
    const double* base = ext.data() + (i - k.offset - lo);
    double s = 0.0;
    for (const auto& [j, w] : live) s += w * base[-j];
    out[static_cast<std::size_t>(i)] = scale * s;
  }
}

}  // namespace bbmld
