// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

// Tail fits log u(ct, t) = -psi t + theta ln t + ln C and the assembled
// theoretical predictions they are confronted with.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bbmld/error.hpp"
#include "bbmld/front.hpp"
#include "bbmld/lsq.hpp"
#include "bbmld/model.hpp"
#include "bbmld/pde.hpp"

namespace bbmld {

enum class FitMode {
  unconstrained,  // psi, theta, ln C
  constrained,    // psi fixed; theta, ln C
  amplitude,      // psi and theta fixed; ln C
};

inline const char* to_string(FitMode m) {
  switch (m) {
    case FitMode::unconstrained: return "unconstrained";
    case FitMode::constrained: return "constrained";
    case FitMode::amplitude: return "amplitude";
  }
  return "?";
}

struct TailFitOptions {
  FitMode mode = FitMode::constrained;
  double psi = std::numeric_limits<double>::quiet_NaN();    // fixed value unless unconstrained
  double theta = std::numeric_limits<double>::quiet_NaN();  // fixed value in amplitude mode
  std::vector<double> corrections;  // extra t^{-p} columns, e.g. {0.5, 1}
  double t_lo = 0.0;
  double t_hi = std::numeric_limits<double>::infinity();
  std::size_t min_points = 10;
  // Required t_max / t_min of the used points; default one decade when psi or
  // theta is fitted, a factor 2 in amplitude mode (no t versus ln t separation).
  std::optional<double> min_span;
  double max_condition = 1e3;    // unconstrained mode only
  std::vector<double> sigma;     // per-point standard errors of log u; empty: from the scatter
};

struct TailFit {
  FitMode mode = FitMode::constrained;
  double psi = 0.0, theta = 0.0, log_c = 0.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();  // over (psi, theta, ln C); fixed entries are zero
  std::vector<double> correction_coef;
  double rms = 0.0;
  double condition = 0.0;
  double t_min = 0.0, t_max = 0.0;
  std::size_t points = 0;

  [[nodiscard]] double amplitude() const { return std::exp(log_c); }
  [[nodiscard]] double sigma_psi() const { return std::sqrt(cov(0, 0)); }
  [[nodiscard]] double sigma_theta() const { return std::sqrt(cov(1, 1)); }
  [[nodiscard]] double sigma_log_c() const { return std::sqrt(cov(2, 2)); }
};

/// Weighted linear least squares of the tail model on the points with
/// t in [t_lo, t_hi]. Unconstrained fits are refused when the column-scaled
/// design is worse conditioned than max_condition: -psi t and theta ln t are
/// nearly collinear over short windows.
inline TailFit fit_tail(std::span<const TracePoint> series, const TailFitOptions& opt = {}) {
  std::vector<TracePoint> pts;
  std::vector<double> sig;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& p = series[i];
    if (p.t < opt.t_lo || p.t > opt.t_hi) continue;
    if (!(p.t > 0.0) || !std::isfinite(p.value)) throw DomainError("fit_tail: needs t > 0 and finite log u");
    pts.push_back(p);
    if (!opt.sigma.empty()) {
      if (opt.sigma.size() != series.size()) throw ConfigError("fit_tail: sigma must match the series length");
      sig.push_back(opt.sigma[i]);
    }
  }
  if (pts.size() < opt.min_points)
    throw DomainError("fit_tail: " + std::to_string(pts.size()) + " points in the window, need " +
                      std::to_string(opt.min_points));
  const auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(),
                                            [](const TracePoint& a, const TracePoint& b) { return a.t < b.t; });
  const double span = opt.min_span.value_or(opt.mode == FitMode::amplitude ? 2.0 : 10.0);
  if (hi->t < span * lo->t)
    throw DomainError("fit_tail: window [" + std::to_string(lo->t) + ", " + std::to_string(hi->t) +
                      "] spans less than the required ratio " + std::to_string(span));
  const bool fix_psi = opt.mode != FitMode::unconstrained;
  const bool fix_theta = opt.mode == FitMode::amplitude;
  if (fix_psi && !std::isfinite(opt.psi)) throw ConfigError("fit_tail: constrained modes need psi");
  if (fix_theta && !std::isfinite(opt.theta)) throw ConfigError("fit_tail: amplitude mode needs theta");

  const auto n = static_cast<Eigen::Index>(pts.size());
  const Eigen::Index p = (fix_psi ? 0 : 1) + (fix_theta ? 0 : 1) + 1 + static_cast<Eigen::Index>(opt.corrections.size());
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n), s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = pts[static_cast<std::size_t>(i)].t;
    y[i] = pts[static_cast<std::size_t>(i)].value;
    s[i] = sig.empty() ? 1.0 : sig[static_cast<std::size_t>(i)];
    Eigen::Index j = 0;
    if (fix_psi) y[i] += opt.psi * t;
    else X(i, j++) = -t;
    if (fix_theta) y[i] -= opt.theta * std::log(t);
    else X(i, j++) = std::log(t);
    X(i, j++) = 1.0;
    for (double q : opt.corrections) X(i, j++) = std::pow(t, -q);
  }
  const LsqFit f = weighted_lsq(X, y, s, !sig.empty());
  if (opt.mode == FitMode::unconstrained && f.condition > opt.max_condition)
    throw ConvergenceError("fit_tail: design condition number " + std::to_string(f.condition) +
                           " exceeds " + std::to_string(opt.max_condition) +
                           "; t cannot be separated from ln t on this window (use the constrained mode)");
  TailFit out;
  out.mode = opt.mode;
  std::vector<int> slot;  // coefficient index -> (psi, theta, ln C) index
  if (!fix_psi) slot.push_back(0);
  if (!fix_theta) slot.push_back(1);
  slot.push_back(2);
  out.psi = fix_psi ? opt.psi : 0.0;
  out.theta = fix_theta ? opt.theta : 0.0;
  for (std::size_t a = 0; a < slot.size(); ++a) {
    const double v = f.coef[static_cast<Eigen::Index>(a)];
    if (slot[a] == 0) out.psi = v;
    if (slot[a] == 1) out.theta = v;
    if (slot[a] == 2) out.log_c = v;
    for (std::size_t b = 0; b < slot.size(); ++b)
      out.cov(slot[a], slot[b]) = f.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  for (std::size_t k = 0; k < opt.corrections.size(); ++k)
    out.correction_coef.push_back(f.coef[static_cast<Eigen::Index>(slot.size() + k)]);
  out.rms = f.rms;
  out.condition = f.condition;
  out.t_min = lo->t;
  out.t_max = hi->t;
  out.points = pts.size();
  return out;
}

/// Theoretical (psi, theta, C) along x = c t. In the above-v_c regime the
/// prediction concerns 1 - u and carries no amplitude.
struct Prediction {
  double c = 0.0;
  Regime regime = Regime::Intermediate;
  double psi = 0.0;
  double theta = 0.0;
  std::optional<double> amplitude;
};

/// Intermediate: amplitude ((c - W)/(v_c - W))^theta B e^{-eta A}, needing A and B.
/// Below W: (alpha + f(c), -1/2, bracket sqrt(f''(c) / 2 pi)), needing the bracket.
inline Prediction assemble_prediction(const BranchingModel& model, const FrontConstants& fc, double c,
                                      std::optional<double> A, std::optional<double> B,
                                      std::optional<double> bracket) {
  Prediction p;
  p.c = c;
  p.regime = regime_of(fc, c);
  p.psi = psi(model, fc, c);
  switch (p.regime) {
    case Regime::Intermediate:
      if (!A || !B) throw ConfigError("intermediate prediction at c=" + std::to_string(c) + " needs A and B");
      p.theta = prefactor_exponent(fc);
      p.amplitude = prefactor_amplitude_intermediate(fc, c, *A, *B);
      break;
    case Regime::BelowW: {
      if (!bracket) throw ConfigError("below-W prediction at c=" + std::to_string(c) + " needs the bracket");
      p.theta = -0.5;
      const RatePoint rp = RateFunction(model)(c);
      p.amplitude = *bracket * std::sqrt(rp.d2f / (2.0 * std::numbers::pi));
      break;
    }
    case Regime::AboveVc:
      p.theta = -0.5;
      break;
  }
  return p;
}

/// A measured quantity next to its theoretical value; either may be absent.
struct Quantity {
  std::optional<double> theory;
  std::optional<double> fit;
  double err = 0.0;
};

struct DeviationEstimate {
  double c = 0.0;
  Regime regime = Regime::Intermediate;
  Quantity psi, theta, amp;
  double t_lo = 0.0, t_hi = 0.0;
  std::string source = "pde";  // pde | renewal | mc
};

/// Refuses estimates whose regime tag disagrees with c or that carry negative errors.
inline void check_estimate(const FrontConstants& fc, const DeviationEstimate& e) {
  if (regime_of(fc, e.c) != e.regime)
    throw ConfigError(std::string("estimate at c=") + std::to_string(e.c) + " tagged " + to_string(e.regime) +
                      " but lies in the " + to_string(regime_of(fc, e.c)) + " regime");
  for (const Quantity* q : {&e.psi, &e.theta, &e.amp})
    if (!(q->err >= 0.0)) throw ConfigError("estimate at c=" + std::to_string(e.c) + " has a negative error");
  if (e.source != "pde" && e.source != "renewal" && e.source != "mc")
    throw ConfigError("unknown estimate source '" + e.source + "'");
}

struct EstimateOptions {
  // Windows end at t_hi (default: the last sample, T). psi and theta are fitted
  // from t_lo (default T / 10), the amplitude from amp_t_lo (default T / 5).
  std::optional<double> t_lo, amp_t_lo, t_hi;
  // Relaxation terms of the amplitude fit: the pulled front feeds 1/sqrt(t)
  // corrections into the intermediate regime, the saddle point 1/t ones below W.
  std::vector<double> intermediate_corrections{0.5, 1.0};
  std::vector<double> below_w_corrections{1.0};
  double max_condition = 1e3;
};

/// Fits one ray and pairs the result with the prediction. psi comes from the
/// unconstrained fit, theta from the fit with psi fixed at theory and the
/// amplitude from the fit with both fixed. Every error is the statistical one
/// combined with the change caused by doubling the window start (reported,
/// so the window sensitivity is visible). For the above-v_c regime `series`
/// must hold log(1 - u).
inline DeviationEstimate estimate_deviation(const Prediction& pred, std::span<const TracePoint> series,
                                            const EstimateOptions& opt = {}, const std::string& source = "pde") {
  if (series.empty()) throw DomainError("estimate_deviation: empty series");
  double t_end = 0.0;
  for (const auto& p : series) t_end = std::max(t_end, p.t);
  const double t_hi = opt.t_hi.value_or(t_end);
  const double t_lo = opt.t_lo.value_or(0.1 * t_hi);
  const double amp_t_lo = opt.amp_t_lo.value_or(0.2 * t_hi);
  DeviationEstimate e;
  e.c = pred.c;
  e.regime = pred.regime;
  e.source = source;
  e.psi.theory = pred.psi;
  e.theta.theory = pred.theta;
  e.amp.theory = pred.amplitude;
  auto with_drift = [&](TailFitOptions o, double start, auto&& pick, auto&& sigma) {
    o.t_lo = start;
    o.t_hi = t_hi;
    const TailFit a = fit_tail(series, o);
    o.t_lo = 2.0 * start;
    o.min_span = 1.0;  // sensitivity probe only
    const TailFit b = fit_tail(series, o);
    return std::pair{pick(a), std::hypot(sigma(a), pick(a) - pick(b))};
  };
  TailFitOptions base;
  base.max_condition = opt.max_condition;
  {
    TailFitOptions o = base;
    o.mode = FitMode::unconstrained;
    const auto [v, err] = with_drift(o, t_lo, [](const TailFit& f) { return f.psi; },
                                     [](const TailFit& f) { return f.sigma_psi(); });
    e.psi.fit = v;
    e.psi.err = err;
  }
  {
    TailFitOptions o = base;
    o.mode = FitMode::constrained;
    o.psi = pred.psi;
    const auto [v, err] = with_drift(o, t_lo, [](const TailFit& f) { return f.theta; },
                                     [](const TailFit& f) { return f.sigma_theta(); });
    e.theta.fit = v;
    e.theta.err = err;
  }
  if (pred.regime != Regime::AboveVc) {
    TailFitOptions o = base;
    o.mode = FitMode::amplitude;
    o.psi = pred.psi;
    o.theta = pred.theta;
    o.corrections = pred.regime == Regime::Intermediate ? opt.intermediate_corrections : opt.below_w_corrections;
    const auto [v, err] = with_drift(o, amp_t_lo, [](const TailFit& f) { return f.amplitude(); },
                                     [](const TailFit& f) { return f.amplitude() * f.sigma_log_c(); });
    e.amp.fit = v;
    e.amp.err = err;
  }
  e.t_lo = t_lo;
  e.t_hi = t_hi;
  return e;
}

}  // namespace bbmld
