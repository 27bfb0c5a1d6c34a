// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bbmld/error.hpp"
#include "bbmld/front.hpp"
#include "bbmld/model.hpp"

namespace bbmld {

struct WaveGridSpec {
  double z_min = -60.0;
  double z_max = 30.0;
  double h = 0.01;
  double anchor = 0.5;  // F(0)
  int max_newton = 200;
  double newton_tol = 1e-12;
  double accept_tol = 1e-9;  // residual above this after Newton is a failure
  double fit_slope_tol = 5e-3;  // relative deviation of the local log-slope from eta
};

/// Travelling wave F(z) on a uniform grid, F(0) = anchor.
struct WaveProfile {
  double z_min = 0.0;
  double h = 0.0;
  std::vector<double> values;
  double anchor = 0.5;
  double B = 0.0;        // F(z) ~ B e^{eta z} as z -> -inf
  double eta_fit = 0.0;  // fitted left-tail exponent
  double residual = 0.0; // max pointwise residual of the discrete front equation
  double fit_lo = 0.0, fit_hi = 0.0;
  int newton_iterations = 0;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] double z(std::size_t i) const { return z_min + static_cast<double>(i) * h; }
  [[nodiscard]] double z_max() const { return z(values.size() - 1); }

  /// Linear interpolation, asymptotic forms outside the grid.
  [[nodiscard]] double operator()(double zz) const {
    if (zz <= z_min) return values.front() * std::exp(eta_fit * (zz - z_min));
    if (zz >= z_max()) return 1.0;
    const double s = (zz - z_min) / h;
    const auto j = static_cast<std::size_t>(s);
    const double th = s - static_cast<double>(j);
    return (1.0 - th) * values[j] + th * values[std::min(j + 1, values.size() - 1)];
  }
};

namespace detail {

/// Discrete front equation
///   D F'' + v_c F' + sum_j r_j (F(z - y_j) - F(z)) + sum_k p_k (F^k - F) = 0
/// on nodes 0..N-1 with unknowns x = (F_0..F_{N-1}, a, b). Left of the grid
/// F = F_0 e^{eta (z - z_0)}; right of it 1 - F = (a + b (z - z_R)) e^{-gamma_c (z - z_R)}.
class FrontSystem {
 public:
  FrontSystem(const BranchingModel& model, const FrontConstants& fc, std::size_t n, double h,
              std::size_t anchor_index, double anchor)
      : model_(model), fc_(fc), n_(n), h_(h), i0_(anchor_index), q_(anchor) {}

  [[nodiscard]] std::size_t unknowns() const { return n_ + 2; }

  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::SparseMatrix<double>* jac) const {
    r.setZero(static_cast<Eigen::Index>(n_ + 2));
    std::vector<Eigen::Triplet<double>> trip;
    if (jac) trip.reserve(n_ * (6 + 4 * model_.jumps().size()) + 8);
    const double D = model_.diffusion();
    const double vc = fc_.v_c;
    Term deps[3];
    for (std::size_t i = 0; i < n_; ++i) {
      double ri = 0.0;
      auto add = [&](long j, double coef) {
        const int nd = value(j, deps);
        for (int d = 0; d < nd; ++d) {
          if (deps[d].col < 0) {
            ri += coef * deps[d].w;
            continue;
          }
          ri += coef * deps[d].w * x[deps[d].col];
          if (jac) trip.emplace_back(static_cast<int>(i), static_cast<int>(deps[d].col), coef * deps[d].w);
        }
      };
      const long li = static_cast<long>(i);
      if (D > 0.0) {
        add(li + 1, D / (h_ * h_));
        add(li, -2.0 * D / (h_ * h_));
        add(li - 1, D / (h_ * h_));
      }
      if (D > 0.0) {
        add(li + 1, vc / (2.0 * h_));
        add(li - 1, -vc / (2.0 * h_));
      } else {
        // Without diffusion the centred stencil leaves an odd-even mode
        // nearly undamped; a one-sided second-order stencil does not.
        add(li, -1.5 * vc / h_);
        add(li + 1, 2.0 * vc / h_);
        add(li + 2, -0.5 * vc / h_);
      }
      for (const auto& a : model_.jumps()) {
        const double s = static_cast<double>(i) - a.y / h_;
        const double fl = std::floor(s);
        const double th = s - fl;
        const long j0 = static_cast<long>(fl);
        add(j0, a.rate * (1.0 - th));
        if (th > 1e-13) add(j0 + 1, a.rate * th);
        add(li, -a.rate);
      }
      const double F = x[static_cast<Eigen::Index>(i)];
      double react = 0.0, dreact = 0.0;
      for (const auto& ch : model_.offspring()) {
        const double pk1 = std::pow(F, ch.k - 1);
        react += ch.rate * (pk1 * F - F);
        dreact += ch.rate * (ch.k * pk1 - 1.0);
      }
      ri += react;
      if (jac) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), dreact);
      r[static_cast<Eigen::Index>(i)] = ri;
    }
    // Right matching: F_{N-1} = 1 - a.
    const auto N = static_cast<Eigen::Index>(n_);
    r[N] = x[N - 1] + x[N] - 1.0;
    // Anchor: F(0) = q.
    r[N + 1] = x[static_cast<Eigen::Index>(i0_)] - q_;
    if (jac) {
      trip.emplace_back(static_cast<int>(N), static_cast<int>(N - 1), 1.0);
      trip.emplace_back(static_cast<int>(N), static_cast<int>(N), 1.0);
      trip.emplace_back(static_cast<int>(N + 1), static_cast<int>(i0_), 1.0);
      jac->resize(N + 2, N + 2);
      jac->setFromTriplets(trip.begin(), trip.end());
    }
  }

 private:
  struct Term {
    long col;
    double w;
  };

  // F at node j as a linear combination of unknowns (col < 0 is the constant 1).
  int value(long j, Term* deps) const {
    const long n = static_cast<long>(n_);
    if (j >= 0 && j < n) {
      deps[0] = {j, 1.0};
      return 1;
    }
    if (j < 0) {
      deps[0] = {0, std::exp(fc_.eta * static_cast<double>(j) * h_)};
      return 1;
    }
    const double dz = static_cast<double>(j - (n - 1)) * h_;
    const double e = std::exp(-fc_.gamma_c * dz);
    deps[0] = {-1, 1.0};
    deps[1] = {n, -e};
    deps[2] = {n + 1, -dz * e};
    return 3;
  }

  const BranchingModel& model_;
  FrontConstants fc_;
  std::size_t n_;
  double h_;
  std::size_t i0_;
  double q_;
};

inline void fit_left_tail(WaveProfile& p, double eta, double slope_tol) {
  const std::size_t n = p.size();
  const auto i0 = static_cast<std::size_t>(std::llround(-p.z_min / p.h));
  std::size_t best_lo = 0, best_len = 0, run_lo = 1, run_len = 0;
  for (std::size_t i = 1; i + 1 < n && i < i0; ++i) {
    const double s = (std::log(p.values[i + 1]) - std::log(p.values[i - 1])) / (2.0 * p.h);
    if (std::abs(s - eta) < slope_tol * eta) {
      if (run_len == 0) run_lo = i;
      ++run_len;
      if (run_len > best_len) {
        best_len = run_len;
        best_lo = run_lo;
      }
    } else {
      run_len = 0;
    }
  }
  const double len = static_cast<double>(best_len) * p.h;
  if (best_len < 20 || len < 1.0 / eta)
    throw ConvergenceError("wave: no left-tail fit window (extend z_min)");
  double sz = 0, sy = 0, szz = 0, szy = 0, sres = 0;
  for (std::size_t i = best_lo; i < best_lo + best_len; ++i) {
    const double z = p.z(i), y = std::log(p.values[i]);
    sz += z;
    sy += y;
    szz += z * z;
    szy += z * y;
    sres += y - eta * z;
  }
  const auto m = static_cast<double>(best_len);
  p.eta_fit = (m * szy - sz * sy) / (m * szz - sz * sz);
  p.B = std::exp(sres / m);
  p.fit_lo = p.z(best_lo);
  p.fit_hi = p.z(best_lo + best_len - 1);
}

/// Damped Newton with backtracking on the front system. Returns false when
/// the residual cannot be brought below `accept_tol`.
inline bool newton_front(const FrontSystem& sys, std::size_t n, Eigen::VectorXd& x,
                         const WaveGridSpec& spec, double& norm, int& iterations) {
  Eigen::VectorXd r, trial_r;
  Eigen::SparseMatrix<double> J;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  sys.evaluate(x, r, &J);
  norm = r.lpNorm<Eigen::Infinity>();
  iterations = 0;
  while (iterations < spec.max_newton && norm > spec.newton_tol) {
    ++iterations;
    lu.compute(J);
    if (lu.info() != Eigen::Success) return false;
    const Eigen::VectorXd dx = lu.solve(r);
    double lambda = 1.0, trial_norm = 0.0;
    Eigen::VectorXd trial;
    for (;;) {
      trial = x - lambda * dx;
      for (std::size_t i = 0; i < n; ++i) {
        auto& v = trial[static_cast<Eigen::Index>(i)];
        v = std::clamp(v, 1e-300, 1.0);
      }
      sys.evaluate(trial, trial_r, nullptr);
      trial_norm = trial_r.lpNorm<Eigen::Infinity>();
      if (trial_norm < (1.0 - 1e-4 * lambda) * norm || lambda < 1e-4) break;
      lambda *= 0.5;
    }
    if (!(trial_norm < norm)) break;  // stalled, at best on the roundoff floor
    x = std::move(trial);
    sys.evaluate(x, r, &J);
    norm = r.lpNorm<Eigen::Infinity>();
  }
  return norm <= spec.accept_tol;
}

inline Eigen::VectorXd logistic_guess(const FrontConstants& fc, const WaveProfile& p, std::size_t n,
                                      double anchor) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(n + 2));
  const double shift = std::log((1.0 - anchor) / anchor) / fc.eta;
  for (std::size_t i = 0; i < n; ++i)
    x[static_cast<Eigen::Index>(i)] = 1.0 / (1.0 + std::exp(-fc.eta * (p.z(i) - shift)));
  x[static_cast<Eigen::Index>(n)] = 1.0 - x[static_cast<Eigen::Index>(n - 1)];
  x[static_cast<Eigen::Index>(n + 1)] = 0.0;
  return x;
}

}  // namespace detail

/// Solves the travelling-wave equation at the selected velocity v_c by
/// damped Newton on the discretized two-point problem, then extracts the
/// left-tail amplitude B by least squares on log F - eta z. Pure-jump
/// kernels are reached by continuation from models with added diffusion.
inline WaveProfile solve_wave(const BranchingModel& model, const FrontConstants& fc,
                              const WaveGridSpec& spec = {}) {
  if (!(spec.h > 0.0) || !(spec.z_min < 0.0) || !(spec.z_max > 0.0))
    throw ConfigError("wave grid must satisfy h > 0 and z_min < 0 < z_max");
  if (!(spec.anchor > 0.0 && spec.anchor < 1.0)) throw ConfigError("wave anchor must lie in (0, 1)");
  const auto i0 = static_cast<std::size_t>(std::llround(-spec.z_min / spec.h));
  const auto n = i0 + static_cast<std::size_t>(std::llround(spec.z_max / spec.h)) + 1;
  WaveProfile p;
  p.h = spec.h;
  p.z_min = -static_cast<double>(i0) * spec.h;
  p.anchor = spec.anchor;

  const detail::FrontSystem sys(model, fc, n, spec.h, i0, spec.anchor);
  Eigen::VectorXd x = detail::logistic_guess(fc, p, n, spec.anchor);
  double norm = 0.0;
  int its = 0, total = 0;
  bool ok = detail::newton_front(sys, n, x, spec, norm, its);
  total += its;
  if (!ok && model.has_jumps()) {
    // Homotopy in the diffusion coefficient, each stage seeding the next.
    const double scale = model.jump_rate() * model.max_abs_jump() * model.max_abs_jump();
    std::vector<double> extra;
    for (double e = 0.5 * scale; e > 1e-3 * scale; e *= 0.25) extra.push_back(e);
    extra.push_back(0.0);
    bool seeded = false;
    for (const double e : extra) {
      const BranchingModel m2(model.diffusion() + e, {model.jumps().begin(), model.jumps().end()},
                              {model.offspring().begin(), model.offspring().end()});
      const FrontConstants fc2 = e > 0.0 ? front_constants(m2) : fc;
      const detail::FrontSystem sys2(m2, fc2, n, spec.h, i0, spec.anchor);
      if (!seeded) x = detail::logistic_guess(fc2, p, n, spec.anchor);
      ok = detail::newton_front(sys2, n, x, spec, norm, its);
      total += its;
      if (!ok) break;
      seeded = true;
    }
  }
  if (!ok)
    throw ConvergenceError("wave: front equation did not converge (residual " + std::to_string(norm) + ")");
  Eigen::VectorXd r;
  sys.evaluate(x, r, nullptr);
  p.newton_iterations = total;
  p.values.assign(x.data(), x.data() + n);
  p.residual = r.head(static_cast<Eigen::Index>(n)).lpNorm<Eigen::Infinity>();
  for (std::size_t i = 1; i < n; ++i)
    if (p.values[i] < p.values[i - 1] - 1e-12) throw ConvergenceError("wave: profile is not monotone");
  // Remaining dips are roundoff next to F = 1.
  for (std::size_t i = 1; i < n; ++i) p.values[i] = std::max(p.values[i], p.values[i - 1]);
  detail::fit_left_tail(p, fc.eta, spec.fit_slope_tol);
  return p;
}

struct IdentityCheck {
  double integral = 0.0;      // int sum_k p_k F^k e^{-eta z} dz
  double expected = 0.0;      // (v_c - W) B
  double relative_residual = 0.0;
  double tail_fraction = 0.0; // share of the integral supplied by the analytic tails
};

/// Checks int sum_k p_k F^k(z) e^{-eta z} dz = (v_c - W) B by trapezoid
/// quadrature plus closed-form tails (B e^{eta z} on the left, F = 1 on the right).
inline IdentityCheck left_identity(const WaveProfile& p, const BranchingModel& model,
                                   const FrontConstants& fc) {
  const double eta = fc.eta;
  const std::size_t n = p.size();
  double body = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    body += w * model.branching_source(p.values[i]) * std::exp(-eta * p.z(i));
  }
  body *= p.h;
  double left = 0.0;
  for (const auto& ch : model.offspring())
    left += ch.rate * std::pow(p.B, ch.k) * std::exp((ch.k - 1) * eta * p.z_min) / ((ch.k - 1) * eta);
  const double right = model.alpha() * std::exp(-eta * p.z_max()) / eta;
  IdentityCheck out;
  out.integral = body + left + right;
  out.expected = (fc.v_c - fc.w) * p.B;
  out.relative_residual = std::abs(out.integral - out.expected) / out.expected;
  out.tail_fraction = (left + right) / out.integral;
  return out;
}

/// Relative residual of the left-tail identity; refuses when the analytic
/// tails carry more than 10% of the integral.
inline double verify_left_identity(const WaveProfile& p, const BranchingModel& model,
                                   const FrontConstants& fc) {
  const IdentityCheck chk = left_identity(p, model, fc);
  if (chk.tail_fraction > 0.1)
    throw ConvergenceError("identity check: tails contribute " + std::to_string(100 * chk.tail_fraction) +
                           "% (grid too short to certify)");
  return chk.relative_residual;
}

}  // namespace bbmld
