// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "bbmld/error.hpp"
#include "bbmld/model.hpp"
#include "bbmld/roots.hpp"

namespace bbmld {

struct Tolerances {
  double root_xtol = 1e-13;  // absolute tolerance of the scalar root solves
  double check = 1e-10;      // postcondition residuals
};

namespace detail {
inline void require_gamma(const BranchingModel& model, double gamma) {
  if (!model.gamma_domain().contains(gamma))
    throw DomainError("gamma=" + std::to_string(gamma) + " outside the exponential-moment domain");
}
inline void require_branching(const BranchingModel& model) {
  if (!model.branching()) throw DomainError("model has no branching channel (alpha = 0)");
}
}  // namespace detail

/// Cumulant function of the free motion, g(gamma) = D gamma^2 + int (e^{gamma y} - 1) rho(y) dy.
inline double spectral_g(const BranchingModel& model, double gamma) {
  detail::require_gamma(model, gamma);
  double g = model.diffusion() * gamma * gamma;
  for (const auto& a : model.jumps()) g += a.rate * std::expm1(gamma * a.y);
  return g;
}

inline double spectral_g_prime(const BranchingModel& model, double gamma) {
  detail::require_gamma(model, gamma);
  double g = 2.0 * model.diffusion() * gamma;
  for (const auto& a : model.jumps()) g += a.rate * a.y * std::exp(gamma * a.y);
  return g;
}

inline double spectral_g_second(const BranchingModel& model, double gamma) {
  detail::require_gamma(model, gamma);
  double g = 2.0 * model.diffusion();
  for (const auto& a : model.jumps()) g += a.rate * a.y * a.y * std::exp(gamma * a.y);
  return g;
}

/// Velocity of a front whose leading edge decays like e^{-gamma z}:
/// V(gamma) = (beta + g(gamma)) / gamma.
inline double velocity_V(const BranchingModel& model, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("velocity_V requires gamma > 0");
  return (model.beta() + spectral_g(model, gamma)) / gamma;
}

struct CriticalFront {
  double gamma_c = 0.0;
  double v_c = 0.0;
};

/// Minimizer of V. gamma g'(gamma) - g(gamma) - beta is increasing on
/// gamma > 0 and negative at 0, so the minimum is bracketed by doubling.
inline CriticalFront critical_front(const BranchingModel& model, const Tolerances& tol = {}) {
  detail::require_branching(model);
  const double gmax = model.gamma_domain().hi;
  auto h = [&](double g) {
    return g * spectral_g_prime(model, g) - spectral_g(model, g) - model.beta();
  };
  double hi = 1.0;
  while (h(hi) <= 0.0) {
    hi *= 2.0;
    if (!(hi < gmax)) throw ConvergenceError("critical_front: V has no interior minimum in the gamma domain");
  }
  double lo = 0.5 * hi;
  while (lo > 1e-300 && h(lo) >= 0.0) lo *= 0.5;
  const auto V = [&](double g) { return velocity_V(model, g); };
  double gc = roots::golden_section(V, lo, hi, 1e-9);
  for (int it = 0; it < 5; ++it) {
    const double step = h(gc) / (gc * spectral_g_second(model, gc));
    gc -= step;
    if (std::abs(step) <= tol.root_xtol * std::max(1.0, gc)) break;
  }
  if (!(gc > lo * 0.5 && gc < hi * 2.0) || !std::isfinite(gc))
    throw ConvergenceError("critical_front: Newton polish left the bracket");
  return {gc, velocity_V(model, gc)};
}

struct RatePoint {
  double gamma = 0.0;  // conjugate slope, f'(v)
  double f = 0.0;
  double df = 0.0;
  double d2f = 0.0;
};

/// Large-deviation rate function f of the free motion, the Legendre
/// transform of g in parametric form: v = g'(gamma), f = gamma v - g.
class RateFunction {
 public:
  explicit RateFunction(const BranchingModel& model) : model_(&model) {
    const Interval gd = model.gamma_domain();
    v_domain_ = {std::isfinite(gd.lo) ? spectral_g_prime(model, std::nextafter(gd.lo, 0.0)) : -inf(),
                 std::isfinite(gd.hi) ? spectral_g_prime(model, std::nextafter(gd.hi, 0.0)) : inf()};
    if (model.diffusion() > 0.0 && !model.has_jumps()) v_domain_ = {-inf(), inf()};
  }

  [[nodiscard]] Interval v_domain() const { return v_domain_; }
  [[nodiscard]] Interval gamma_domain() const { return model_->gamma_domain(); }
  [[nodiscard]] double mean_velocity() const { return spectral_g_prime(*model_, 0.0); }

  /// Solves g'(gamma) = v; g' is strictly increasing.
  [[nodiscard]] double gamma_of(double v) const {
    if (!v_domain_.contains(v))
      throw DomainError("velocity " + std::to_string(v) + " outside the range of g'");
    const Interval gd = model_->gamma_domain();
    auto r = [&](double g) { return spectral_g_prime(*model_, g) - v; };
    double r0 = r(0.0);
    if (r0 == 0.0) return 0.0;
    const double dir = r0 < 0.0 ? 1.0 : -1.0;
    double a = 0.0, b = dir;
    while (r(b) * dir < 0.0) {
      a = b;
      b *= 2.0;
      if (!gd.contains(b)) {
        b = dir > 0 ? std::nextafter(gd.hi, 0.0) : std::nextafter(gd.lo, 0.0);
        if (r(b) * dir < 0.0) throw DomainError("velocity outside the attainable range");
        break;
      }
    }
    double g = roots::brent(r, std::min(a, b), std::max(a, b), 1e-16);
    // One Newton step removes the last bracketing ulps.
    const double d2 = spectral_g_second(*model_, g);
    if (d2 > 0.0) {
      const double ng = g - r(g) / d2;
      if (std::abs(ng - g) < 1e-8 * std::max(1.0, std::abs(g))) g = ng;
    }
    return g;
  }

  [[nodiscard]] RatePoint operator()(double v) const {
    const double g = gamma_of(v);
    return {g, g * v - spectral_g(*model_, g), g, 1.0 / spectral_g_second(*model_, g)};
  }

  [[nodiscard]] double f(double v) const { return (*this)(v).f; }

 private:
  static constexpr double inf() { return std::numeric_limits<double>::infinity(); }
  const BranchingModel* model_;
  Interval v_domain_{};
};

struct Transition {
  double w = 0.0;    // transition velocity W
  double eta = 0.0;  // left-tail decay of the travelling wave, -f'(W)
};

/// Smaller root of the concave G(u) = -g(u) + v_c u + alpha. G(0) = alpha > 0,
/// so the root is bracketed by doubling leftward from 0.
inline Transition transition_W(const BranchingModel& model, const CriticalFront& cf,
                               const Tolerances& tol = {}) {
  detail::require_branching(model);
  const Interval gd = model.gamma_domain();
  auto G = [&](double u) { return -spectral_g(model, u) + cf.v_c * u + model.alpha(); };
  double hi = 0.0, lo = -1.0;
  while (G(lo) > 0.0) {
    hi = lo;
    lo *= 2.0;
    if (!gd.contains(lo)) throw ConvergenceError("transition_W: no sign change of G in the gamma domain");
  }
  const double u = roots::brent(G, lo, hi, tol.root_xtol * 0.1);
  const Transition tr{spectral_g_prime(model, u), -u};
  const double scale = std::max(1.0, model.alpha());
  if (std::abs(G(u)) > tol.check * scale)
    throw ConvergenceError("transition_W: |G(u*)| above tolerance");
  if (!(tr.w < cf.v_c)) throw ConvergenceError("transition_W: W >= v_c");
  return tr;
}

/// The five scalars that organize the large-deviation picture.
struct FrontConstants {
  double gamma_c = 0.0;
  double v_c = 0.0;
  double eta = 0.0;
  double w = 0.0;
  double theta = 0.0;  // 3 eta / (2 gamma_c)
};

inline FrontConstants front_constants(const BranchingModel& model, const Tolerances& tol = {}) {
  const CriticalFront cf = critical_front(model, tol);
  const Transition tr = transition_W(model, cf, tol);
  return {cf.gamma_c, cf.v_c, tr.eta, tr.w, 1.5 * tr.eta / cf.gamma_c};
}

/// alpha + f(W) + (v_c - W) f'(W); vanishes at the saddle-point velocity W.
inline double saddle_residual(const BranchingModel& model, const FrontConstants& fc) {
  const RatePoint rp = RateFunction(model)(fc.w);
  return model.alpha() + rp.f + (fc.v_c - fc.w) * rp.df;
}

enum class Regime { BelowW, Intermediate, AboveVc };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::BelowW: return "below-W";
    case Regime::Intermediate: return "intermediate";
    case Regime::AboveVc: return "above-v_c";
  }
  return "?";
}

inline Regime regime_of(const FrontConstants& fc, double c) {
  if (c >= fc.v_c) return Regime::AboveVc;
  if (c > fc.w) return Regime::Intermediate;
  return Regime::BelowW;
}

/// Large-deviation function of X_max(t)/t. Returns +inf for velocities the
/// free motion cannot reach.
inline double psi(const BranchingModel& model, const FrontConstants& fc, double c) {
  const RateFunction rf(model);
  switch (regime_of(fc, c)) {
    case Regime::AboveVc:
      if (!rf.v_domain().contains(c)) return std::numeric_limits<double>::infinity();
      return rf.f(c) - model.beta();
    case Regime::Intermediate:
      return (fc.v_c - c) * fc.eta;
    case Regime::BelowW:
      if (!rf.v_domain().contains(c)) return std::numeric_limits<double>::infinity();
      return model.alpha() + rf.f(c);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline double psi(const BranchingModel& model, double c) {
  return psi(model, front_constants(model), c);
}

/// Power of t in front of e^{-psi t} in the intermediate regime.
inline double prefactor_exponent(const FrontConstants& fc) { return fc.theta; }

/// ((c - W)/(v_c - W))^theta B e^{-eta A}, valid for W < c < v_c. The bracket is
/// tau_0 / t, where tau_0 is the time at which the dominant signal left the front.
inline double prefactor_amplitude_intermediate(const FrontConstants& fc, double c, double A,
                                               double B) {
  if (!(c > fc.w && c < fc.v_c))
    throw DomainError("intermediate amplitude requires W < c < v_c");
  return std::pow((c - fc.w) / (fc.v_c - fc.w), fc.theta) * B * std::exp(-fc.eta * A);
}

}  // namespace bbmld
