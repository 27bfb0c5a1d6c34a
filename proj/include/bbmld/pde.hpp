// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bbmld/error.hpp"
#include "bbmld/front.hpp"
#include "bbmld/interp.hpp"
#include "bbmld/lsq.hpp"
#include "bbmld/model.hpp"

namespace bbmld {

/// log u(x, t) on the uniform lattice x_lo + i dx.
struct FieldSnapshot {
  double t = 0.0;
  double x_lo = 0.0;
  double dx = 0.0;
  std::vector<double> logu;

  [[nodiscard]] std::size_t size() const { return logu.size(); }
  [[nodiscard]] double x(std::size_t i) const { return x_lo + static_cast<double>(i) * dx; }
  [[nodiscard]] double x_hi() const { return x(logu.size() - 1); }
  [[nodiscard]] bool contains(double xx) const { return xx >= x_lo && xx <= x_hi(); }

  /// Monotone cubic interpolation of log u.
  [[nodiscard]] double log_u_at(double xx) const {
    if (!contains(xx)) throw DomainError("x=" + std::to_string(xx) + " outside the snapshot window");
    return interp::pchip_uniform(logu, x_lo, dx, xx);
  }
};

struct EvolveSpec {
  double t_end = 10.0;
  double dx = 0.05;
  double dt = 0.01;          // log-domain step; the linear phase adds a positivity bound
  double sample_dt = 0.1;    // observer cadence
  double t_switch = 1.0;     // linear-domain start, then log domain
  // Window [left_velocity t - left_margin, right_velocity t + right_margin].
  double left_velocity = 0.0;
  double left_margin = 20.0;
  std::optional<double> right_velocity;  // default v_c, or the mean drift without branching
  double right_margin = 30.0;
  // Extra right room right_spread sqrt(t) for the diffusive leading edge;
  // default 8 sqrt(g''(gamma_c) / 2).
  std::optional<double> right_spread;
  double max_log_change = 0.05;  // per step; the stages are nonlinear in log u
  double log_floor = -745.0;     // log of the smallest subnormal
  std::function<double(double)> initial;  // default: the step theta(x)
};

namespace detail {

/// Right-hand sides of the semi-discrete equation in u and in w = log u.
/// The log form is algebraically the linear one divided by u, so both
/// phases integrate the same semi-discretization.
class FkppOperator {
 public:
  FkppOperator(const BranchingModel& model, double dx) : model_(&model), dx_(dx) {
    for (const auto& a : model.jumps()) {
      const double s = a.y / dx;
      const double fl = std::floor(s);
      stencils_.push_back({static_cast<long>(fl), s - fl, a.rate});
    }
  }

  // Linear phase: u = 0 left of the window and 1 right of it.
  void rhs_linear(const Eigen::ArrayXd& u, Eigen::ArrayXd& out) const {
    const long n = static_cast<long>(u.size());
    out.resize(n);
    const double d = model_->diffusion() / (dx_ * dx_);
    auto at = [&](long j) { return j < 0 ? 0.0 : (j >= n ? 1.0 : u[j]); };
    for (long i = 0; i < n; ++i) {
      const double ui = u[i];
      double r = d * (at(i + 1) - 2.0 * ui + at(i - 1));
      for (const auto& st : stencils_) {
        // x_i - y lies between nodes i - m - 1 and i - m.
        const long j = i - st.m;
        r += st.rate * (st.phi * at(j - 1) + (1.0 - st.phi) * at(j) - ui);
      }
      for (const auto& ch : model_->offspring()) r += ch.rate * (std::pow(ui, ch.k) - ui);
      out[i] = r;
    }
  }

  // Log phase; returns a Gershgorin bound on the Jacobian spectral radius.
  double rhs_log(const Eigen::ArrayXd& w, Eigen::ArrayXd& out) const {
    const long n = static_cast<long>(w.size());
    out.resize(n);
    const double d = model_->diffusion() / (dx_ * dx_);
    const double left_slope = n > 1 ? w[1] - w[0] : 0.0;
    auto at = [&](long j) {
      if (j >= n) return 0.0;
      if (j >= 0) return w[j];
      // Linear in w (geometric in u): the outflow closure that keeps the
      // boundary row diagonally dominant.
      return w[0] + static_cast<double>(j) * left_slope;
    };
    double radius = 0.0;
    for (long i = 0; i < n; ++i) {
      const double wi = w[i];
      double r = 0.0, off = 0.0;
      if (d > 0.0) {
        const double a = at(i + 1) - wi, b = at(i - 1) - wi;
        r += d * (std::expm1(a) + std::expm1(b));
        off += d * (std::exp(a) + std::exp(b));
      }
      for (const auto& st : stencils_) {
        const long j = i - st.m;
        const double ea = std::expm1(at(j - 1) - wi), eb = std::expm1(at(j) - wi);
        const double ratio_m1 = st.phi * ea + (1.0 - st.phi) * eb;
        r += st.rate * ratio_m1;
        off += st.rate * (1.0 + ratio_m1);
      }
      double grow = 0.0;
      for (const auto& ch : model_->offspring()) {
        const double e = std::expm1((ch.k - 1) * wi);
        r += ch.rate * e;
        grow += ch.rate * (ch.k - 1) * (1.0 + e);
      }
      out[i] = r;
      radius = std::max(radius, 2.0 * off + grow);
    }
    return radius;
  }

  // Positivity bound for one forward-Euler stage in the linear domain.
  [[nodiscard]] double linear_dt_bound() const {
    return 1.0 / (2.0 * model_->diffusion() / (dx_ * dx_) + model_->jump_rate() + model_->alpha());
  }

 private:
  struct Stencil {
    long m;
    double phi;
    double rate;
  };
  const BranchingModel* model_;
  double dx_;
  std::vector<Stencil> stencils_;
};

/// Second-order Runge-Kutta-Chebyshev step with damping 2/13.
class Rkc2 {
 public:
  static int stages_for(double dt, double radius) {
    return std::max(2, 1 + static_cast<int>(std::ceil(std::sqrt(1.0 + 1.54 * dt * radius))));
  }

  template <class Rhs>
  void step(Rhs&& rhs, Eigen::ArrayXd& y, const Eigen::ArrayXd& f0, double dt, int s) {
    coefficients(s);
    y0_ = y;
    yjm2_ = y;
    yjm1_ = y + mut_[1] * dt * f0;
    for (int j = 2; j <= s; ++j) {
      rhs(yjm1_, fj_);
      yj_ = (1.0 - mu_[j] - nu_[j]) * y0_ + mu_[j] * yjm1_ + nu_[j] * yjm2_ + mut_[j] * dt * fj_ +
            gt_[j] * dt * f0;
      std::swap(yjm2_, yjm1_);
      std::swap(yjm1_, yj_);
    }
    y = yjm1_;
  }

 private:
  void coefficients(int s) {
    if (s == cached_s_) return;
    cached_s_ = s;
    const double eps = 2.0 / 13.0;
    const double w0 = 1.0 + eps / (s * s);
    std::vector<double> T(s + 1), dT(s + 1), ddT(s + 1);
    T[0] = 1.0;
    T[1] = w0;
    dT[0] = 0.0;
    dT[1] = 1.0;
    ddT[0] = ddT[1] = 0.0;
    for (int j = 2; j <= s; ++j) {
      T[j] = 2.0 * w0 * T[j - 1] - T[j - 2];
      dT[j] = 2.0 * T[j - 1] + 2.0 * w0 * dT[j - 1] - dT[j - 2];
      ddT[j] = 4.0 * dT[j - 1] + 2.0 * w0 * ddT[j - 1] - ddT[j - 2];
    }
    const double w1 = dT[s] / ddT[s];
    std::vector<double> b(s + 1);
    for (int j = 2; j <= s; ++j) b[j] = ddT[j] / (dT[j] * dT[j]);
    b[0] = b[1] = b[2];
    mu_.assign(s + 1, 0.0);
    nu_.assign(s + 1, 0.0);
    mut_.assign(s + 1, 0.0);
    gt_.assign(s + 1, 0.0);
    mut_[1] = b[1] * w1;
    for (int j = 2; j <= s; ++j) {
      mu_[j] = 2.0 * b[j] * w0 / b[j - 1];
      nu_[j] = -b[j] / b[j - 2];
      mut_[j] = 2.0 * b[j] * w1 / b[j - 1];
      gt_[j] = -(1.0 - b[j - 1] * T[j - 1]) * mut_[j];
    }
  }

  int cached_s_ = -1;
  std::vector<double> mu_, nu_, mut_, gt_;
  Eigen::ArrayXd y0_, yjm1_, yjm2_, yj_, fj_;
};

}  // namespace detail

/// Integrates the evolution equation for u(x, t) = P(X_max(t) < x) from the
/// step, first in u and then in w = log u so deep tails stay representable.
/// The window lives on the fixed lattice x = i dx and follows [x_lo(t), x_hi(t)].
class FkppEvolver {
 public:
  FkppEvolver(const BranchingModel& model, EvolveSpec spec)
      : model_(model), spec_(std::move(spec)), op_(model_, spec_.dx) {
    if (!(spec_.dx > 0.0) || !(spec_.dt > 0.0) || !(spec_.t_end >= 0.0) || !(spec_.sample_dt > 0.0) ||
        !(spec_.max_log_change > 0.0))
      throw ConfigError("evolve: dx, dt, sample_dt, max_log_change must be positive and t_end nonnegative");
    if (!(spec_.t_switch >= 0.0)) throw ConfigError("evolve: t_switch must be nonnegative");
    if (!(spec_.left_margin > 0.0) || !(spec_.right_margin > 0.0))
      throw ConfigError("evolve: window margins must be positive");
    if (model_.branching()) {
      const CriticalFront cf = critical_front(model_);
      if (!spec_.right_velocity) spec_.right_velocity = cf.v_c;
      if (!spec_.right_spread) spec_.right_spread = 8.0 * std::sqrt(0.5 * spectral_g_second(model_, cf.gamma_c));
    } else {
      if (!spec_.right_velocity) spec_.right_velocity = RateFunction(model_).mean_velocity();
      if (!spec_.right_spread) spec_.right_spread = 8.0 * std::sqrt(0.5 * spectral_g_second(model_, 0.0));
    }
    if (!(*spec_.right_spread >= 0.0)) throw ConfigError("evolve: right_spread must be nonnegative");
    if (spec_.left_velocity > *spec_.right_velocity)
      throw ConfigError("evolve: left window velocity exceeds the right one");
    const double ts = spec_.t_switch;
    const double pad = 8.0 * std::sqrt(2.0 * model_.diffusion() * ts) + 2.0 * model_.max_abs_jump() + 2.0;
    i_lo_ = static_cast<long>(std::floor((x_lo_at(ts) - pad) / spec_.dx));
    const long i_hi = static_cast<long>(std::ceil(x_hi_at(ts) / spec_.dx));
    y_.resize(i_hi - i_lo_ + 1);
    for (long i = 0; i < y_.size(); ++i) {
      const double x = static_cast<double>(i_lo_ + i) * spec_.dx;
      double u = spec_.initial ? spec_.initial(x) : (x > 0.0 ? 1.0 : (x < 0.0 ? 0.0 : 0.5));
      if (!(u >= 0.0 && u <= 1.0)) throw ConfigError("evolve: initial data must lie in [0, 1]");
      y_[i] = u;
    }
    if (ts == 0.0) to_log_domain();
  }

  FkppEvolver(const FkppEvolver&) = delete;
  FkppEvolver& operator=(const FkppEvolver&) = delete;

  [[nodiscard]] double time() const { return t_; }
  [[nodiscard]] bool in_log_domain() const { return log_; }
  [[nodiscard]] long steps() const { return steps_; }
  [[nodiscard]] int max_stages() const { return max_stages_; }
  [[nodiscard]] const EvolveSpec& spec() const { return spec_; }
  [[nodiscard]] double x_lo_at(double t) const { return spec_.left_velocity * t - spec_.left_margin; }
  [[nodiscard]] double x_hi_at(double t) const {
    return *spec_.right_velocity * t + spec_.right_margin + *spec_.right_spread * std::sqrt(t);
  }

  /// Steps until time() == t (never overshoots).
  void advance_to(double t) {
    while (t_ < t) {
      if (!log_) {
        const double limit = std::min(t, spec_.t_switch);
        const double dt = std::min({spec_.dt, 0.9 * op_.linear_dt_bound(), limit - t_});
        linear_step(dt);
        t_ = (limit - t_ - dt) < 1e-14 * std::max(1.0, t_) ? limit : t_ + dt;
        if (t_ >= spec_.t_switch) to_log_domain();
        continue;
      }
      const double dt = log_step(t - t_);
      t_ = (t - t_ - dt) < 1e-14 * std::max(1.0, t_) ? t : t_ + dt;
      update_window();
    }
  }

  [[nodiscard]] FieldSnapshot snapshot() const {
    FieldSnapshot s;
    s.t = t_;
    s.dx = spec_.dx;
    long first = 0, last = static_cast<long>(y_.size()) - 1;
    if (!log_) {
      // The linear phase carries padding left of the requested window.
      first = std::max(0L, static_cast<long>(std::floor(x_lo_at(t_) / spec_.dx)) - i_lo_);
    }
    s.x_lo = static_cast<double>(i_lo_ + first) * spec_.dx;
    s.logu.resize(static_cast<std::size_t>(last - first + 1));
    for (long i = first; i <= last; ++i)
      s.logu[static_cast<std::size_t>(i - first)] = log_ ? y_[i] : std::max(std::log(y_[i]), spec_.log_floor);
    return s;
  }

 private:
  void linear_step(double dt) {
    // Strong-stability-preserving RK3; each Euler stage keeps 0 <= u <= 1.
    auto rhs = [&](const Eigen::ArrayXd& u, Eigen::ArrayXd& out) { op_.rhs_linear(u, out); };
    rhs(y_, f_);
    Eigen::ArrayXd u1 = y_ + dt * f_;
    rhs(u1, f_);
    Eigen::ArrayXd u2 = 0.75 * y_ + 0.25 * (u1 + dt * f_);
    rhs(u2, f_);
    y_ = (y_ + 2.0 * (u2 + dt * f_)) / 3.0;
    y_ = y_.max(0.0).min(1.0);
    ++steps_;
  }

  // Returns the step taken: at most spec.dt and `remaining`, and small
  // enough that no node changes log u by more than max_log_change.
  double log_step(double remaining) {
    const double radius = op_.rhs_log(y_, f_);
    const double rate = f_.abs().maxCoeff();
    double dt = std::min(spec_.dt, remaining);
    if (rate * dt > spec_.max_log_change) dt = spec_.max_log_change / rate;
    const int s = detail::Rkc2::stages_for(dt, radius);
    max_stages_ = std::max(max_stages_, s);
    rkc_.step([&](const Eigen::ArrayXd& w, Eigen::ArrayXd& out) { op_.rhs_log(w, out); }, y_, f_, dt, s);
    y_ = y_.min(0.0);
    if (!y_.allFinite()) throw ConvergenceError("evolve: non-finite field at t=" + std::to_string(t_));
    ++steps_;
    return dt;
  }

  void to_log_domain() {
    // Drop the linear-phase padding, then take logs.
    const long target = static_cast<long>(std::floor(x_lo_at(t_) / spec_.dx));
    if (target > i_lo_) {
      y_ = Eigen::ArrayXd(y_.tail(y_.size() - (target - i_lo_)));
      i_lo_ = target;
    }
    for (long i = 0; i < y_.size(); ++i) y_[i] = y_[i] > 0.0 ? std::max(std::log(y_[i]), spec_.log_floor) : spec_.log_floor;
    log_ = true;
  }

  void update_window() {
    const long lo = static_cast<long>(std::floor(x_lo_at(t_) / spec_.dx));
    const long hi = static_cast<long>(std::ceil(x_hi_at(t_) / spec_.dx));
    const long cur_hi = i_lo_ + static_cast<long>(y_.size()) - 1;
    if (lo == i_lo_ && hi == cur_hi) return;
    Eigen::ArrayXd next(hi - lo + 1);
    for (long i = lo; i <= hi; ++i) {
      double v;
      if (i > cur_hi) {
        v = 0.0;
      } else if (i >= i_lo_) {
        v = y_[i - i_lo_];
      } else {
        // Quadratic extrapolation into the outflow region.
        const long k = i - i_lo_;
        const double w0 = y_[0], w1 = y_[1], w2 = y_[2];
        const double d1 = w1 - w0, d2 = w2 - 2.0 * w1 + w0;
        v = w0 + static_cast<double>(k) * d1 + 0.5 * static_cast<double>(k * (k - 1)) * d2;
        v = std::min(v, w0);
      }
      next[i - lo] = v;
    }
    y_ = std::move(next);
    i_lo_ = lo;
  }

  BranchingModel model_;
  EvolveSpec spec_;
  detail::FkppOperator op_;
  detail::Rkc2 rkc_;
  Eigen::ArrayXd y_, f_;
  long i_lo_ = 0;
  double t_ = 0.0;
  bool log_ = false;
  long steps_ = 0;
  int max_stages_ = 0;
};

/// Position where u crosses `level`, by monotone cubic interpolation of log u.
inline double front_position(const FieldSnapshot& snap, double level = 0.5) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("front level must lie in (0, 1)");
  const double target = std::log(level);
  if (snap.logu.empty() || snap.logu.front() >= target || snap.logu.back() < target)
    throw DomainError("snapshot does not bracket the front level");
  return interp::pchip_crossing(snap.logu, snap.x_lo, snap.dx, target);
}

/// Largest decrease of log u between neighbouring nodes (0 when monotone).
inline double monotonicity_defect(const FieldSnapshot& snap) {
  double worst = 0.0;
  for (std::size_t i = 1; i < snap.size(); ++i) worst = std::max(worst, snap.logu[i - 1] - snap.logu[i]);
  return worst;
}

struct TracePoint {
  double t = 0.0;
  double value = 0.0;
};

struct EvolveResult {
  std::vector<TracePoint> front;               // (t, x_{1/2})
  std::vector<std::vector<TracePoint>> rays;   // per velocity: (t, log u(ct, t))
  std::vector<FieldSnapshot> dumps;
  long steps = 0;
  int max_stages = 0;
};

/// Runs to spec.t_end, sampling the front and the rays x = c t every
/// sample_dt and keeping full snapshots at `dump_times`. `observer`, if set,
/// sees every sampled snapshot.
inline EvolveResult evolve(const BranchingModel& model, const EvolveSpec& spec,
                           const std::vector<double>& rays = {},
                           const std::vector<double>& dump_times = {},
                           const std::function<void(const FieldSnapshot&)>& observer = {}) {
  FkppEvolver ev(model, spec);
  EvolveResult out;
  out.rays.resize(rays.size());
  std::vector<double> times;
  const auto n = static_cast<long>(std::floor(spec.t_end / spec.sample_dt + 1e-9));
  for (long k = 1; k <= n; ++k) times.push_back(static_cast<double>(k) * spec.sample_dt);
  if (times.empty() || times.back() < spec.t_end - 1e-12) times.push_back(spec.t_end);
  for (double d : dump_times) times.push_back(d);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-12; }),
              times.end());
  for (double t : times) {
    if (t > spec.t_end + 1e-12) break;
    ev.advance_to(t);
    const FieldSnapshot snap = ev.snapshot();
    if (ev.in_log_domain() && monotonicity_defect(snap) > 1e-9)
      throw ConvergenceError("evolve: log u lost monotonicity at t=" + std::to_string(t));
    if (snap.logu.front() < 0.0 && snap.logu.back() >= std::log(0.5)) out.front.push_back({t, front_position(snap)});
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const double x = rays[r] * t;
      if (snap.contains(x)) out.rays[r].push_back({t, snap.log_u_at(x)});
    }
    for (double d : dump_times)
      if (std::abs(d - t) < 1e-12) out.dumps.push_back(snap);
    if (observer) observer(snap);
  }
  out.steps = ev.steps();
  out.max_stages = ev.max_stages();
  return out;
}

/// Samples log u along x = c t from stored snapshots.
inline std::vector<TracePoint> tail_sample(const std::vector<FieldSnapshot>& snaps, double c) {
  std::vector<TracePoint> out;
  for (const auto& s : snaps) {
    if (!s.contains(c * s.t)) throw DomainError("ray x = c t left the window at t=" + std::to_string(s.t));
    out.push_back({s.t, s.log_u_at(c * s.t)});
  }
  return out;
}

/// Front constants of the semi-discrete operator on a lattice of spacing
/// dx: the continuum g with the three-point Laplacian and interpolated jump
/// shifts. The lattice front moves at v_c + O(dx^2).
struct FrontAsymptotics {
  double v = 0.0;      // selected velocity
  double gamma = 0.0;  // leading-edge decay rate
  double g2 = 0.0;     // g''(gamma), the leading-edge spreading
  [[nodiscard]] double kappa() const { return 1.5 / gamma; }
  /// Universal t^{-1/2} coefficient of pulled fronts (Ebert-van Saarloos).
  [[nodiscard]] double sqrt_coefficient() const {
    return -3.0 * std::sqrt(2.0 * std::numbers::pi / g2) / (gamma * gamma);
  }
};

inline FrontAsymptotics continuum_front(const BranchingModel& model) {
  const CriticalFront cf = critical_front(model);
  return {cf.v_c, cf.gamma_c, spectral_g_second(model, cf.gamma_c)};
}

inline FrontAsymptotics lattice_front(const BranchingModel& model, double dx) {
  const CriticalFront cf = critical_front(model);
  const double D = model.diffusion();
  struct Term {
    double shift;
    double weight;
  };
  std::vector<Term> terms;
  for (const auto& a : model.jumps()) {
    const double sh = a.y / dx;
    const double m = std::floor(sh);
    const double phi = sh - m;
    terms.push_back({(m + 1.0) * dx, a.rate * phi});
    terms.push_back({m * dx, a.rate * (1.0 - phi)});
  }
  auto g = [&](double y, int order) {
    double r = 0.0;
    if (order == 0) r = 2.0 * D * (std::cosh(y * dx) - 1.0) / (dx * dx);
    if (order == 1) r = 2.0 * D * std::sinh(y * dx) / dx;
    if (order == 2) r = 2.0 * D * std::cosh(y * dx);
    for (const auto& t : terms) {
      const double e = std::exp(y * t.shift);
      r += t.weight * (order == 0 ? e : std::pow(t.shift, order) * e);
    }
    if (order == 0) r -= model.jump_rate();
    return r;
  };
  auto V = [&](double y) { return (model.beta() + g(y, 0)) / y; };
  double gc = roots::golden_section(V, 0.5 * cf.gamma_c, 2.0 * cf.gamma_c, 1e-10);
  for (int it = 0; it < 5; ++it) gc -= (gc * g(gc, 1) - g(gc, 0) - model.beta()) / (gc * g(gc, 2));
  return {V(gc), gc, g(gc, 2)};
}

struct FrontFit {
  double A = 0.0;
  double sigma_A = 0.0;
  double kappa = 0.0;  // log-correction coefficient
  double sigma_kappa = 0.0;
  double a = 0.0;      // t^{-1/2} coefficient (fitted or universal)
  double b = 0.0;      // 1/t
  double c = 0.0;      // ln t / t
  double rms = 0.0;
  double window_drift = 0.0;  // |A(all) - A(later half)|
  std::size_t points = 0;
};

struct FrontFitOptions {
  double t_min = 10.0;
  bool free_kappa = false;   // otherwise kappa = 3 / (2 gamma)
  bool free_sqrt = false;    // otherwise a is the universal coefficient
  bool higher_order = true;  // b / t + c ln t / t
  double max_rms = 1e-2;
};

/// Fits x_{1/2}(t) = v t - kappa ln t + A + a / sqrt(t) [+ b / t + c ln t / t]
/// for t >= t_min. sigma_A combines the fit standard error with the change
/// of A when the earlier half of the window is dropped.
inline FrontFit extract_A(const std::vector<TracePoint>& trace, const FrontAsymptotics& fa,
                          const FrontFitOptions& opt = {}) {
  auto fit = [&](double t_lo) {
    std::vector<TracePoint> pts;
    for (const auto& p : trace)
      if (p.t >= t_lo) pts.push_back(p);
    const auto n = static_cast<Eigen::Index>(pts.size());
    std::vector<std::function<double(double)>> cols{[](double) { return 1.0; }};
    if (opt.free_kappa) cols.emplace_back([](double t) { return -std::log(t); });
    if (opt.free_sqrt) cols.emplace_back([](double t) { return 1.0 / std::sqrt(t); });
    if (opt.higher_order) {
      cols.emplace_back([](double t) { return 1.0 / t; });
      cols.emplace_back([](double t) { return std::log(t) / t; });
    }
    const auto p = static_cast<Eigen::Index>(cols.size());
    if (n < 2 * p) throw DomainError("extract_A: too few trace points past t_min");
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = pts[static_cast<std::size_t>(i)].t;
      y[i] = pts[static_cast<std::size_t>(i)].value - fa.v * t;
      if (!opt.free_kappa) y[i] += fa.kappa() * std::log(t);
      if (!opt.free_sqrt) y[i] -= fa.sqrt_coefficient() / std::sqrt(t);
      for (Eigen::Index j = 0; j < p; ++j) X(i, j) = cols[static_cast<std::size_t>(j)](t);
    }
    const LsqFit f = weighted_lsq(X, y, Eigen::VectorXd::Ones(n), false);
    FrontFit out;
    Eigen::Index j = 0;
    out.A = f.coef[j];
    out.sigma_A = std::sqrt(f.cov(j, j));
    ++j;
    out.kappa = fa.kappa();
    if (opt.free_kappa) {
      out.kappa = f.coef[j];
      out.sigma_kappa = std::sqrt(f.cov(j, j));
      ++j;
    }
    out.a = opt.free_sqrt ? f.coef[j++] : fa.sqrt_coefficient();
    if (opt.higher_order) {
      out.b = f.coef[j++];
      out.c = f.coef[j++];
    }
    out.rms = f.rms;
    out.points = static_cast<std::size_t>(n);
    return out;
  };
  if (trace.empty()) throw DomainError("extract_A: empty trace");
  FrontFit all = fit(opt.t_min);
  const FrontFit late = fit(0.5 * (opt.t_min + trace.back().t));
  all.window_drift = std::abs(all.A - late.A);
  all.sigma_A = std::hypot(all.sigma_A, all.window_drift);
  if (all.rms > opt.max_rms)
    throw ConvergenceError("extract_A: fit residual " + std::to_string(all.rms) + " above threshold");
  return all;
}

}  // namespace bbmld
