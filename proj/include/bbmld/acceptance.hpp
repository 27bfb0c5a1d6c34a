// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

// End-to-end validation checks shared by the acceptance suite and the
// `pipeline` command. Each check returns a verdict with the numbers behind it.
#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bbmld/analysis.hpp"
#include "bbmld/front.hpp"
#include "bbmld/mc.hpp"
#include "bbmld/model.hpp"
#include "bbmld/pde.hpp"
#include "bbmld/renewal.hpp"
#include "bbmld/wave.hpp"

namespace bbmld {

struct Criterion {
  std::string name;
  bool passed = false;
  std::string detail;
  nlohmann::json values = nlohmann::json::object();

  [[nodiscard]] std::string line() const { return std::string(passed ? "PASS " : "FAIL ") + name + ": " + detail; }
};

namespace detail {

inline std::string num(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace detail

/// m when the model is standard BBM splitting into m at rate 1, else nullopt.
inline std::optional<int> bbm_arity(const BranchingModel& m) {
  if (m.diffusion() != 1.0 || m.has_jumps() || m.offspring().size() != 1 || m.offspring()[0].rate != 1.0)
    return std::nullopt;
  return m.offspring()[0].k;
}

/// gamma_c, v_c, eta, W and theta of BBM against their closed forms in m.
inline Criterion check_closed_forms(const std::vector<int>& ms, double tol = 1e-10) {
  Criterion c{"closed-form constants", true, "", nlohmann::json::object()};
  double worst = 0.0;
  for (int m : ms) {
    const FrontConstants fc = front_constants(BranchingModel::bbm(m));
    const double s = std::sqrt(m - 1.0), r = std::sqrt(static_cast<double>(m));
    const double expect[5] = {s, 2.0 * s, r - s, -2.0 * (r - s), 1.5 * (std::sqrt(m / (m - 1.0)) - 1.0)};
    const double got[5] = {fc.gamma_c, fc.v_c, fc.eta, fc.w, fc.theta};
    double err = 0.0;
    for (int i = 0; i < 5; ++i) err = std::max(err, std::abs(got[i] - expect[i]));
    worst = std::max(worst, err);
    c.values[std::to_string(m)] = {{"gamma_c", fc.gamma_c}, {"v_c", fc.v_c}, {"eta", fc.eta},
                                   {"W", fc.w},             {"theta", fc.theta}, {"max_error", err}};
  }
  c.passed = worst < tol;
  c.detail = "max |computed - closed form| = " + detail::num(worst, 3) + " over m in {";
  for (std::size_t i = 0; i < ms.size(); ++i) c.detail += (i ? "," : "") + std::to_string(ms[i]);
  c.detail += "} (tol " + detail::num(tol, 2) + ")";
  return c;
}

/// psi is continuous, C^1 at W with slope -eta and jumps to f'(v_c) at v_c.
/// For BBM the values at c = 0, -2 and 3 are compared with closed forms.
inline Criterion check_psi_regression(const BranchingModel& model) {
  const FrontConstants fc = front_constants(model);
  const RateFunction rf(model);
  Criterion c{"psi regression", true, "", nlohmann::json::object()};
  double value_err = 0.0;
  if (const auto m = bbm_arity(model)) {
    auto closed = [&](double v) {
      if (v <= fc.w) return 1.0 + v * v / 4.0;
      if (v < fc.v_c) return (fc.v_c - v) * fc.eta;
      return v * v / 4.0 - (*m - 1.0);
    };
    for (double v : {0.0, -2.0, 3.0}) {
      value_err = std::max(value_err, std::abs(psi(model, fc, v) - closed(v)));
      c.values["psi"][detail::num(v)] = psi(model, fc, v);
    }
  }
  const double e = 1e-12, h = 1e-7;
  const double jump_w = std::abs(psi(model, fc, fc.w - e) - psi(model, fc, fc.w + e));
  const double at_vc = std::abs(psi(model, fc, fc.v_c - e));
  const double lw = (psi(model, fc, fc.w) - psi(model, fc, fc.w - h)) / h;
  const double rw = (psi(model, fc, fc.w + h) - psi(model, fc, fc.w)) / h;
  const double lv = (psi(model, fc, fc.v_c) - psi(model, fc, fc.v_c - h)) / h;
  const double rv = (psi(model, fc, fc.v_c + h) - psi(model, fc, fc.v_c)) / h;
  const double kink = std::abs(rv) - std::abs(lv);
  const double kink_expected = rf(fc.v_c).df - fc.eta;
  c.passed = value_err < 1e-10 && jump_w < 1e-10 && at_vc < 1e-10 && std::abs(lw - rw) < 1e-6 &&
             std::abs(kink - kink_expected) < 1e-6 && kink > 0.1;
  c.values["slopes"] = {{"W-", lw}, {"W+", rw}, {"v_c-", lv}, {"v_c+", rv}};
  c.values["kink"] = kink;
  c.detail = "value error " + detail::num(value_err, 2) + ", C1 gap at W " + detail::num(std::abs(lw - rw), 2) +
             ", slope jump at v_c " + detail::num(kink) + " (expected " + detail::num(kink_expected) + ")";
  return c;
}

/// int sum_k p_k F^k e^{-eta z} dz = (v_c - W) B for every model.
inline Criterion check_appendix_identity(const std::vector<std::pair<std::string, BranchingModel>>& models,
                                         double tol = 5e-3) {
  Criterion c{"appendix identity", true, "", nlohmann::json::object()};
  double worst = 0.0;
  for (const auto& [name, m] : models) {
    const FrontConstants fc = front_constants(m);
    const WaveProfile p = solve_wave(m, fc, WaveGridSpec{});
    double r = 0.0;
    try {
      r = verify_left_identity(p, m, fc);
    } catch (const ConvergenceError&) {
      r = std::numeric_limits<double>::infinity();
    }
    worst = std::max(worst, r);
    c.values[name] = {{"B", p.B}, {"relative_residual", r}};
    c.detail += (c.detail.empty() ? "" : ", ") + name + " " + detail::num(r, 3);
  }
  c.passed = worst < tol;
  c.detail = "relative residuals " + c.detail + " (tol " + detail::num(tol, 2) + ")";
  return c;
}

/// eta = -f'(W): both are the smaller root of the same concave function.
inline Criterion check_root_identity(const std::vector<std::pair<std::string, BranchingModel>>& models,
                                     double tol = 1e-10) {
  Criterion c{"root identity", true, "", nlohmann::json::object()};
  double worst = 0.0;
  for (const auto& [name, m] : models) {
    const FrontConstants fc = front_constants(m);
    const double r = std::abs(fc.eta + RateFunction(m)(fc.w).df);
    worst = std::max(worst, r);
    c.values[name] = r;
  }
  c.passed = worst < tol && models.size() >= 1;
  c.detail = "max |eta + f'(W)| = " + detail::num(worst, 3) + " over " + std::to_string(models.size()) +
             " models (tol " + detail::num(tol, 2) + ")";
  return c;
}

struct FrontRunSpec {
  double t_end = 200.0;
  double dx = 0.05;
  double dt = 0.01;
  std::vector<double> levels{0.3, 0.5, 0.7};  // front positions recorded at u = level
  std::vector<double> rays;
  double left_velocity = 0.0;
};

/// One log-domain run: front traces at several levels plus log u along rays.
struct FrontRun {
  FrontRunSpec spec;
  FrontAsymptotics lattice;
  std::map<double, std::vector<TracePoint>> traces;  // level -> (t, x_level)
  std::map<double, std::vector<TracePoint>> rays;    // c -> (t, log u)
};

inline FrontRun run_front(const BranchingModel& model, const FrontRunSpec& spec) {
  FrontRun run;
  run.spec = spec;
  run.lattice = lattice_front(model, spec.dx);
  EvolveSpec es;
  es.t_end = spec.t_end;
  es.dx = spec.dx;
  es.dt = spec.dt;
  es.sample_dt = 0.1;
  es.left_velocity = spec.left_velocity;
  const EvolveResult res = evolve(model, es, spec.rays, {}, [&](const FieldSnapshot& s) {
    for (double a : spec.levels)
      if (s.logu.front() < std::log(a) && s.logu.back() >= std::log(a))
        run.traces[a].push_back({s.t, front_position(s, a)});
  });
  for (std::size_t k = 0; k < spec.rays.size(); ++k) run.rays[spec.rays[k]] = res.rays[k];
  return run;
}

/// Log-correction coefficient from a free fit of x_{1/2}(t) and the
/// uncertainty of A from the default fit.
inline Criterion check_bramson(const FrontRun& run, double kappa_tol = 0.03, double sigma_tol = 0.02) {
  const auto& trace = run.traces.at(0.5);
  FrontFitOptions free;
  free.free_kappa = true;
  const FrontFit fk = extract_A(trace, run.lattice, free);
  const FrontFit fa = extract_A(trace, run.lattice);
  const double kappa_theory = run.lattice.kappa();
  Criterion c{"Bramson front", false, "", nlohmann::json::object()};
  c.passed = detail::rel(fk.kappa, kappa_theory) < kappa_tol && fa.sigma_A < sigma_tol;
  c.values = {{"kappa", fk.kappa}, {"kappa_theory", kappa_theory}, {"A", fa.A}, {"sigma_A", fa.sigma_A},
              {"t_end", run.spec.t_end}, {"dx", run.spec.dx}};
  c.detail = "kappa " + detail::num(fk.kappa) + " vs " + detail::num(kappa_theory) + " (" +
             detail::num(100 * detail::rel(fk.kappa, kappa_theory), 3) + "%, tol " + detail::num(100 * kappa_tol) +
             "%); A = " + detail::num(fa.A) + " +- " + detail::num(fa.sigma_A, 3) + " (tol " +
             detail::num(sigma_tol) + ")";
  return c;
}

struct TailTolerances {
  double psi_rel = 0.01;
  double theta = 0.1;  // relative in the intermediate regime, absolute below W
  double amp_rel = 0.15;
};

/// Fitted psi, theta and amplitude along one ray against the assembled prediction.
inline Criterion check_tail(const std::string& name, const Prediction& pred, const std::vector<TracePoint>& ray,
                            double t_hi, const TailTolerances& tol) {
  EstimateOptions eo;
  eo.t_hi = t_hi;
  const DeviationEstimate e = estimate_deviation(pred, ray, eo);
  const double dpsi = detail::rel(*e.psi.fit, pred.psi);
  const bool theta_rel = pred.regime == Regime::Intermediate;
  const double dtheta = theta_rel ? detail::rel(*e.theta.fit, pred.theta) : std::abs(*e.theta.fit - pred.theta);
  const double damp = detail::rel(*e.amp.fit, *pred.amplitude);
  Criterion c{name, false, "", nlohmann::json::object()};
  c.passed = dpsi < tol.psi_rel && dtheta < tol.theta && damp < tol.amp_rel;
  c.values = {{"c", pred.c},
              {"window", {e.t_lo, e.t_hi}},
              {"psi", {{"fit", *e.psi.fit}, {"err", e.psi.err}, {"theory", pred.psi}}},
              {"theta", {{"fit", *e.theta.fit}, {"err", e.theta.err}, {"theory", pred.theta}}},
              {"amplitude", {{"fit", *e.amp.fit}, {"err", e.amp.err}, {"theory", *pred.amplitude}}}};
  c.detail = "c=" + detail::num(pred.c) + ": psi " + detail::num(*e.psi.fit) + " vs " + detail::num(pred.psi) + " (" +
             detail::num(100 * dpsi, 2) + "%), theta " + detail::num(*e.theta.fit, 4) + " vs " +
             detail::num(pred.theta, 4) + (theta_rel ? " (" + detail::num(100 * dtheta, 2) + "%)" : " (|d|=" + detail::num(dtheta, 2) + ")") +
             ", amplitude " + detail::num(*e.amp.fit, 4) + " vs " + detail::num(*pred.amplitude, 4) + " (" +
             detail::num(100 * damp, 2) + "%)";
  return c;
}

/// Log u along x = c t from a dedicated run whose window follows the ray.
inline std::vector<TracePoint> ray_series(const BranchingModel& model, double c, double t_end, double dx, double dt) {
  EvolveSpec es;
  es.t_end = t_end;
  es.dx = dx;
  es.dt = dt;
  es.sample_dt = 0.5;
  es.left_velocity = std::min(0.0, c - 0.3);
  return evolve(model, es, {c}).rays[0];
}

struct TriangleSpec {
  double t = 5.0;
  std::vector<double> xs{-2.0, 0.0, 2.0, 5.0};
  double pde_dx = 0.02, pde_dt = 2e-3;
  double renewal_dx = 0.025, renewal_dt = 0.01;
  std::uint64_t n = 1'000'000;
  std::uint64_t seed = 20260514;
  unsigned workers = 1;
  double abs_tol = 1e-4;
  double z_tol = 3.0;
};

/// u(x, t) from the PDE, the renewal iteration and Monte Carlo.
inline Criterion check_oracle_triangle(const BranchingModel& model, const TriangleSpec& ts) {
  EvolveSpec es;
  es.dx = ts.pde_dx;
  es.dt = ts.pde_dt;
  es.t_end = ts.t;
  es.left_velocity = std::min(0.0, *std::min_element(ts.xs.begin(), ts.xs.end()) / ts.t - 1.0);
  FkppEvolver ev(model, es);
  ev.advance_to(ts.t);
  const FieldSnapshot snap = ev.snapshot();
  RenewalSpec rs;
  rs.dx = ts.renewal_dx;
  rs.dt = ts.renewal_dt;
  rs.t_end = ts.t;
  rs.store_every = static_cast<int>(std::lround(ts.t / ts.renewal_dt));
  const RenewalTable tab = solve_renewal(model, rs);
  const auto mc = estimate_cdf(model, ts.t, ts.xs, ts.n, ts.seed, ts.workers);
  Criterion c{"oracle triangle", true, "", nlohmann::json::array()};
  double worst_abs = 0.0, worst_z = 0.0;
  for (std::size_t j = 0; j < ts.xs.size(); ++j) {
    const double x = ts.xs[j];
    const double up = std::exp(snap.log_u_at(x));
    const double ur = tab.value(x, tab.times() - 1);
    const double se = mc[j].stderr_;
    const double d = std::abs(up - ur);
    // A sample proportion of exactly 0 or 1 has no binomial spread; use one sample's worth.
    const double scale = std::max(se, 1.0 / static_cast<double>(mc[j].n_eff));
    const double z = std::max(std::abs(mc[j].estimate - up), std::abs(mc[j].estimate - ur)) / scale;
    worst_abs = std::max(worst_abs, d);
    worst_z = std::max(worst_z, z);
    c.values.push_back({{"x", x}, {"pde", up}, {"renewal", ur}, {"mc", mc[j].estimate}, {"stderr", se}, {"z", z}});
  }
  c.passed = worst_abs < ts.abs_tol && worst_z < ts.z_tol;
  c.detail = "t=" + detail::num(ts.t) + ": max |pde - renewal| " + detail::num(worst_abs, 3) + " (tol " +
             detail::num(ts.abs_tol, 2) + "), max mc deviation " + detail::num(worst_z, 3) + " stderr (n=" +
             std::to_string(ts.n) + ")";
  return c;
}

/// C(c) assembled from (A_a, B_a) measured at several normalizations F(0) = a.
inline Criterion check_normalization(const BranchingModel& model, const FrontRun& run, double c_ray,
                                     double tol = 0.01) {
  const FrontConstants fc = front_constants(model);
  Criterion crit{"normalization invariance", false, "", nlohmann::json::array()};
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double a : run.spec.levels) {
    const FrontFit f = extract_A(run.traces.at(a), run.lattice);
    WaveGridSpec ws;
    ws.anchor = a;
    const WaveProfile p = solve_wave(model, fc, ws);
    const double amp = prefactor_amplitude_intermediate(fc, c_ray, f.A, p.B);
    lo = std::min(lo, amp);
    hi = std::max(hi, amp);
    crit.values.push_back({{"F0", a}, {"A", f.A}, {"B", p.B}, {"C", amp}});
  }
  crit.passed = hi / lo - 1.0 < tol;
  crit.detail = "C(" + detail::num(c_ray) + ") spread " + detail::num(100 * (hi / lo - 1.0), 3) + "% over " +
                std::to_string(run.spec.levels.size()) + " normalizations (tol " + detail::num(100 * tol) + "%)";
  return crit;
}

}  // namespace bbmld
