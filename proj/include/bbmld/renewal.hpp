// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

// Renewal (first-branching-event) form of the evolution, stepped in time,
// and the amplitude of the tail below the transition velocity.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "bbmld/error.hpp"
#include "bbmld/front.hpp"
#include "bbmld/model.hpp"
#include "bbmld/pde.hpp"
#include "bbmld/propagator.hpp"

namespace bbmld {

struct RenewalSpec {
  double x_min = -40.0;
  double x_max = 40.0;
  double dx = 0.05;
  double dt = 0.01;
  double t_end = 5.0;
  int store_every = 10;
  double picard_tol = 1e-4;  // largest allowed change from the Picard correction
  std::function<double(double)> initial;  // default: the step theta(x)
};

struct RenewalTable {
  double x_lo = 0.0;
  double dx = 0.0;
  double dt_store = 0.0;
  std::vector<std::vector<double>> u;  // u[k] at t = k dt_store
  double max_correction = 0.0;         // largest Picard correction seen

  [[nodiscard]] std::size_t times() const { return u.size(); }
  [[nodiscard]] std::size_t points() const { return u.empty() ? 0 : u.front().size(); }
  [[nodiscard]] double t(std::size_t k) const { return static_cast<double>(k) * dt_store; }
  [[nodiscard]] double x(std::size_t i) const { return x_lo + static_cast<double>(i) * dx; }

  /// Row k in the log-domain snapshot layout shared with the PDE solver.
  [[nodiscard]] FieldSnapshot snapshot(std::size_t k) const {
    FieldSnapshot s;
    s.t = t(k);
    s.x_lo = x_lo;
    s.dx = dx;
    s.logu.reserve(points());
    for (double v : u.at(k)) s.logu.push_back(v > 0.0 ? std::log(v) : -745.0);
    return s;
  }

  /// Linear interpolation in x on stored row k.
  [[nodiscard]] double value(double xv, std::size_t k) const {
    const auto& row = u.at(k);
    const double s = (xv - x_lo) / dx;
    if (s < 0.0 || s > static_cast<double>(row.size() - 1)) throw DomainError("renewal table: x outside the grid");
    const auto i = std::min(static_cast<std::size_t>(s), row.size() - 2);
    const double f = s - static_cast<double>(i);
    return (1.0 - f) * row[i] + f * row[i + 1];
  }
};

namespace detail {

inline void branching_source(const BranchingModel& m, std::span<const double> u, std::span<double> out) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    double s = 0.0;
    for (const auto& ch : m.offspring()) s += ch.rate * std::pow(u[i], ch.k);
    out[i] = s;
  }
}

}  // namespace detail

/// Steps u(t + dt) = e^{-alpha dt} K_dt * u(t)
///                   + int_0^dt dtau e^{-alpha tau} K_tau * sum_k p_k u^k(t + dt - tau)
/// with two-point Gauss in tau. The interior values of u are predicted from
/// the free part plus a source term that is constant in the first pass and
/// quadratic (matching u(t + dt) from the first pass) in the Picard correction.
inline RenewalTable solve_renewal(const BranchingModel& m, const RenewalSpec& spec) {
  if (!(spec.dx > 0.0 && spec.dt > 0.0 && spec.t_end > 0.0 && spec.x_max > spec.x_min && spec.store_every >= 1))
    throw ConfigError("solve_renewal: bad grid");
  const auto n = static_cast<std::size_t>(std::floor((spec.x_max - spec.x_min) / spec.dx + 1e-9)) + 1;
  if (n < 8) throw ConfigError("solve_renewal: fewer than 8 grid points");
  const long steps = std::lround(spec.t_end / spec.dt);
  if (std::abs(static_cast<double>(steps) * spec.dt - spec.t_end) > 1e-9 * spec.t_end)
    throw ConfigError("solve_renewal: t_end must be a multiple of dt");

  const double h = spec.dt;
  const double alpha = m.alpha();
  const double tau[2] = {0.5 * h * (1.0 - 1.0 / std::sqrt(3.0)), 0.5 * h * (1.0 + 1.0 / std::sqrt(3.0))};
  // Sampled Gaussian kernels lose mass and variance once their width drops below dx.
  if (m.diffusion() > 0.0 && std::sqrt(2.0 * m.diffusion() * tau[0]) < 0.85 * spec.dx)
    throw ConfigError("solve_renewal: dt too small for dx (sub-step kernel narrower than the grid)");
  const GridKernel k_full = grid_kernel(m, h, spec.dx);
  const GridKernel k_tau[2] = {grid_kernel(m, tau[0], spec.dx), grid_kernel(m, tau[1], spec.dx)};

  RenewalTable tab;
  tab.x_lo = spec.x_min;
  tab.dx = spec.dx;
  tab.dt_store = h * spec.store_every;

  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xv = spec.x_min + static_cast<double>(i) * spec.dx;
    u[i] = spec.initial ? spec.initial(xv) : (xv > 0.0 ? 1.0 : (xv < 0.0 ? 0.0 : 0.5));
    if (!(u[i] >= 0.0 && u[i] <= 1.0)) throw ConfigError("solve_renewal: initial data must lie in [0, 1]");
  }
  tab.u.push_back(u);

  std::vector<double> free_end(n), free_mid[2] = {std::vector<double>(n), std::vector<double>(n)};
  std::vector<double> n0(n), guess(n), src(n), conv(n), first(n), second(n);
  // Mid-step value at time t + dt - tau[j] = t + tau[1 - j].
  auto pass = [&](const std::vector<double>* end, std::vector<double>& out) {
    out = free_end;
    for (int j = 0; j < 2; ++j) {
      const double s = tau[1 - j];
      const auto& fm = free_mid[1 - j];
      for (std::size_t i = 0; i < n; ++i) {
        double g = fm[i] + s * n0[i];
        if (end) g += (s / h) * (s / h) * (((*end)[i] - free_end[i]) - h * n0[i]);
        guess[i] = std::clamp(g, 0.0, 1.0);
      }
      detail::branching_source(m, guess, src);
      apply_kernel(k_tau[j], src, conv, 0.5 * h * std::exp(-alpha * tau[j]));
      for (std::size_t i = 0; i < n; ++i) out[i] += conv[i];
    }
    for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  };

  // Sampling the step and convolving is only second order in dx; the first
  // free evolution of the default step uses the exact distribution function.
  const bool exact_start = !spec.initial && m.diffusion() > 0.0;
  auto exact_free = [&](double t, std::vector<double>& out) {
    const auto law = jump_law(m, t);
    if (law.empty()) return false;
    for (std::size_t i = 0; i < n; ++i)
      out[i] = std::exp(-alpha * t) * propagator_cdf(m, law, spec.x_min + static_cast<double>(i) * spec.dx, t);
    return true;
  };

  for (long step = 1; step <= steps; ++step) {
    if (!(step == 1 && exact_start && exact_free(h, free_end) && exact_free(tau[0], free_mid[0]) &&
          exact_free(tau[1], free_mid[1]))) {
      apply_kernel(k_full, u, free_end, std::exp(-alpha * h));
      for (int j = 0; j < 2; ++j) apply_kernel(k_tau[j], u, free_mid[j], std::exp(-alpha * tau[j]));
    }
    detail::branching_source(m, u, n0);
    pass(nullptr, first);
    pass(&first, second);
    double corr = 0.0;
    for (std::size_t i = 0; i < n; ++i) corr = std::max(corr, std::abs(second[i] - first[i]));
    tab.max_correction = std::max(tab.max_correction, corr);
    if (corr > spec.picard_tol)
      throw ConvergenceError("solve_renewal: Picard correction " + std::to_string(corr) +
                             " exceeds tolerance; reduce dt");
    u.swap(second);
    if (step % spec.store_every == 0) tab.u.push_back(u);
  }
  return tab;
}

struct BelowWAmplitude {
  double c = 0.0;
  double first_term = 0.0;   // -1 / f'(c), the paths that never branch
  double integral = 0.0;     // branching part, truncated at t_star
  double bracket = 0.0;      // first_term + integral
  double tail_bound = 0.0;   // estimate of the truncated remainder
  double last_octave = 0.0;  // share of the integral from [t_star / 2, t_star]
  double t_star = 0.0;
  double psi = 0.0;          // alpha + f(c)
  double theta = -0.5;
  double amplitude = 0.0;    // bracket sqrt(f''(c) / 2 pi)

  /// Predicted u(ct, t).
  [[nodiscard]] double predict(double t) const { return amplitude * std::pow(t, theta) * std::exp(-psi * t); }
};

/// Bracket of the below-transition tail:
///   -1/f'(c) + int_0^T dtau int dz e^{tau (alpha + f(c) - c f'(c)) + z f'(c)} sum_k p_k u^k(z, tau),
/// trapezoid in (tau, z) on the table, with exponential tail completion in z.
inline BelowWAmplitude amplitude_below_W(const BranchingModel& m, double c, const RenewalTable& tab) {
  if (m.alpha() > 0.0) {
    const FrontConstants fc = front_constants(m);
    if (!(c < fc.w)) throw DomainError("amplitude_below_W requires c < W");
  }
  const RatePoint rp = RateFunction(m)(c);
  const double fp = rp.df;
  if (!(fp < 0.0)) throw DomainError("amplitude_below_W requires f'(c) < 0");
  if (tab.times() < 3) throw DomainError("amplitude_below_W: table too short");

  BelowWAmplitude out;
  out.c = c;
  out.first_term = -1.0 / fp;
  out.psi = m.alpha() + rp.f;
  out.t_star = tab.t(tab.times() - 1);
  const double rate = m.alpha() + rp.f - c * fp;

  std::vector<double> inner(tab.times());
  std::vector<double> src(tab.points());
  for (std::size_t k = 0; k < tab.times(); ++k) {
    const auto& u = tab.u[k];
    detail::branching_source(m, u, src);
    const std::size_t n = u.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (i == 0 || i == n - 1 ? 0.5 : 1.0) * std::exp(tab.x(i) * fp) * src[i];
    s *= tab.dx;
    // Right of the grid u = 1: sum_k p_k = alpha.
    s += m.alpha() * std::exp(tab.x(n - 1) * fp) / (-fp);
    // Left of the grid u continues like u_0 e^{rho (z - x_0)}.
    if (u[0] > 0.0) {
      const double rho = std::log(u[1] / u[0]) / tab.dx;
      for (const auto& ch : m.offspring()) {
        const double e = ch.k * rho + fp;
        if (!(e > 0.0))
          throw DomainError("amplitude_below_W: left tail of u too shallow for the weight; lower x_min");
        s += ch.rate * std::pow(u[0], ch.k) * std::exp(tab.x(0) * fp) / e;
      }
    }
    inner[k] = std::exp(rate * tab.t(k)) * s;
  }
  auto trap = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = a; k < b; ++k) s += 0.5 * (inner[k] + inner[k + 1]);
    return s * tab.dt_store;
  };
  const std::size_t last = tab.times() - 1;
  out.integral = trap(0, last);
  if (out.integral != 0.0) out.last_octave = trap(last / 2, last) / std::abs(out.integral);

  // Decay of the tau integrand from its last quarter.
  const std::size_t q = last - last / 4;
  if (inner[last] > 0.0 && inner[q] > 0.0 && last > q) {
    const double kappa = -std::log(inner[last] / inner[q]) / (tab.t(last) - tab.t(q));
    out.tail_bound = kappa > 0.0 ? inner[last] / kappa : std::numeric_limits<double>::infinity();
  } else if (inner[last] != 0.0) {
    out.tail_bound = std::numeric_limits<double>::infinity();
  }
  if (out.integral != 0.0 && out.tail_bound > 0.05 * std::abs(out.integral))
    throw ConvergenceError("amplitude_below_W: truncated tail exceeds 5% of the integral; increase t_star");
  out.bracket = out.first_term + out.integral;
  out.amplitude = out.bracket * std::sqrt(rp.d2f / (2.0 * std::numbers::pi));
  return out;
}

/// Doubles the horizon from t_start until the last octave contributes < 1%,
/// widening the grid so the dominant region stays inside it.
inline BelowWAmplitude amplitude_below_W_adaptive(const BranchingModel& m, double c, RenewalSpec spec,
                                                  double t_start = 4.0, double t_limit = 64.0) {
  const double v_max = m.alpha() > 0.0 ? critical_front(m).v_c : spectral_g_prime(m, 0.0);
  const RatePoint rp = RateFunction(m)(c);
  for (double T = t_start; T <= t_limit * (1.0 + 1e-12); T *= 2.0) {
    spec.t_end = std::round(T / spec.dt) * spec.dt;
    spec.store_every = 1;
    spec.x_max = std::max(spec.x_max, v_max * T + 20.0);
    spec.x_min = std::min(spec.x_min, -(std::abs(c) + std::abs(rp.df) + 2.0) * T - 20.0);
    const RenewalTable tab = solve_renewal(m, spec);
    try {
      BelowWAmplitude a = amplitude_below_W(m, c, tab);
      if (a.last_octave < 0.01) return a;
    } catch (const ConvergenceError&) {
      // tail still too heavy: keep doubling
    }
  }
  throw ConvergenceError("amplitude_below_W: no convergence up to t_star = " + std::to_string(t_limit));
}

}  // namespace bbmld
