// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bbmld/pde.hpp"
#include "bbmld/propagator.hpp"
#include "bbmld/renewal.hpp"
#include "test_models.hpp"

using namespace bbmld;
using bbmld::testing::asymmetric_mixed;
using bbmld::testing::two_atom;

namespace {

// Explicit Poisson series for two atoms plus diffusion.
double two_atom_series(const BranchingModel& m, double x, double t) {
  const auto j = m.jumps();
  const double var = 2.0 * m.diffusion() * t;
  double s = 0.0, pn = std::exp(-m.jump_rate() * t);
  for (int n = 0; n < 40; ++n) {
    if (n > 0) pn *= t / n;
    for (int a = 0; a <= n; ++a) {
      const double mult = std::tgamma(n + 1.0) / (std::tgamma(a + 1.0) * std::tgamma(n - a + 1.0));
      const double w = mult * std::pow(j[0].rate, a) * std::pow(j[1].rate, n - a);
      const double z = x - a * j[0].y - (n - a) * j[1].y;
      s += pn * w * std::exp(-z * z / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
    }
  }
  return s;
}

std::vector<double> step_on(const RenewalTable& tab) {
  std::vector<double> u(tab.points());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = tab.x(i) > 0.0 ? 1.0 : (tab.x(i) < 0.0 ? 0.0 : 0.5);
  return u;
}

}  // namespace

TEST(Propagator, GaussianAtOrigin) {
  const auto m = BranchingModel::free_walk(1.0);
  EXPECT_NEAR(propagator(m, 0.0, 1.0).density, 0.2820948, 1e-7);
  EXPECT_NEAR(propagator(m, 0.7, 2.0).density, propagator(m, 0.7, 2.0, PropagatorMode::gaussian).density, 1e-15);
}

TEST(Propagator, FourierMatchesPoissonSeries) {
  const auto m = asymmetric_mixed();
  for (double t : {0.01, 0.3, 2.0})
    for (double x : {-1.3, 0.0, 0.45, 2.0}) {
      const auto p = propagator(m, x, t);
      EXPECT_NEAR(p.density, two_atom_series(m, x, t), 1e-10) << "t=" << t << " x=" << x;
      EXPECT_LT(p.error_bound, 1e-10);
    }
}

TEST(Propagator, SaddleApproximatesGaussian) {
  const auto m = BranchingModel::free_walk(1.0);
  const double t = 10.0, x = 30.0;
  const double ratio = propagator(m, x, t, PropagatorMode::saddle).density / propagator(m, x, t).density;
  EXPECT_NEAR(ratio, 1.0, 0.03);
}

TEST(Propagator, FourierRefusesPureJumps) {
  EXPECT_THROW((void)propagator(two_atom(), 0.0, 1.0), ConvergenceError);
  EXPECT_THROW((void)propagator(two_atom(), 0.0, 1.0, PropagatorMode::gaussian), ConfigError);
  EXPECT_THROW((void)propagator(BranchingModel::bbm(2), 0.0, 0.0), DomainError);
}

TEST(Propagator, GridKernelMassAndMean) {
  for (const auto& m : {asymmetric_mixed(), two_atom(), BranchingModel::bbm(2)}) {
    for (double t : {0.01, 1.0}) {
      const auto k = grid_kernel(m, t, 0.05);
      EXPECT_NEAR(k.mass(), 1.0, 1e-8) << m.describe();
      EXPECT_NEAR(k.moment(1), t * spectral_g_prime(m, 0.0), 1e-8) << m.describe();
      EXPECT_NEAR(k.moment(2) - k.moment(1) * k.moment(1), t * spectral_g_second(m, 0.0), 1e-8) << m.describe();
      for (double w : k.weights) ASSERT_GE(w, 0.0);
    }
  }
}

TEST(Propagator, TwoAtomOneJumpWeight) {
  const auto m = two_atom();
  const double t = 0.01, lam = m.jump_rate();
  const auto k = grid_kernel(m, t, 0.05);
  const auto at = [&](double x) { return k.weights[static_cast<std::size_t>(std::lround(x / k.dx) - k.offset)]; };
  const double one = 0.5 * lam * t * std::exp(-lam * t);
  EXPECT_NEAR(at(1.0) / one, 1.0, 1e-4);
  EXPECT_NEAR(at(-1.0) / one, 1.0, 1e-4);
  EXPECT_NEAR(at(0.0), std::exp(-lam * t) * (1.0 + t * t * 0.5 * 0.5), 1e-8);
  EXPECT_THROW((void)grid_kernel(m, t, 0.3), ConfigError);
}

TEST(Renewal, NoBranchingIsTheHeatSemigroup) {
  const auto m = BranchingModel::free_walk(1.0);
  RenewalSpec s;
  s.t_end = 1.0;
  s.x_min = -15.0;
  s.x_max = 15.0;
  const auto tab = solve_renewal(m, s);
  double worst = 0.0;
  for (std::size_t i = 0; i < tab.points(); ++i)
    worst = std::max(worst, std::abs(tab.u.back()[i] - 0.5 * std::erfc(-tab.x(i) / 2.0)));
  EXPECT_LT(worst, 1e-10);
  EXPECT_EQ(tab.max_correction, 0.0);

  // A smooth start goes through the sampled kernels only.
  s.initial = [](double x) { return 0.5 * std::erfc(-x / 2.0); };
  const auto smooth = solve_renewal(m, s);
  worst = 0.0;
  for (std::size_t i = 0; i < smooth.points(); ++i)
    worst = std::max(worst, std::abs(smooth.u.back()[i] - 0.5 * std::erfc(-smooth.x(i) / std::sqrt(8.0))));
  EXPECT_LT(worst, 1e-10);
}

TEST(Renewal, FirstStepIsFreePartPlusOrderDt) {
  for (const auto& m : {BranchingModel::bbm(2), asymmetric_mixed(), two_atom()}) {
    RenewalSpec s;
    s.dt = 0.01;
    s.t_end = 0.01;
    s.store_every = 1;
    s.x_min = -10.0;
    s.x_max = 10.0;
    const auto tab = solve_renewal(m, s);
    std::vector<double> free(tab.points());
    if (m.diffusion() > 0.0) {
      const auto law = jump_law(m, s.dt);
      for (std::size_t i = 0; i < free.size(); ++i)
        free[i] = std::exp(-m.alpha() * s.dt) * propagator_cdf(m, law, tab.x(i), s.dt);
    } else {
      apply_kernel(grid_kernel(m, s.dt, s.dx), step_on(tab), free, std::exp(-m.alpha() * s.dt));
    }
    double coeff = 0.0;
    for (std::size_t i = 0; i < free.size(); ++i) coeff = std::max(coeff, (tab.u[1][i] - free[i]) / s.dt);
    EXPECT_GT(coeff, 0.0);
    EXPECT_LE(coeff, m.alpha()) << m.describe();
  }
}

TEST(Renewal, AgreesWithPdeAtShortTimes) {
  for (const auto& m : {BranchingModel::bbm(2), asymmetric_mixed(), two_atom()}) {
    // With D = 0 both solvers are exact on the same lattice (jumps of +-1).
    const bool lattice = m.diffusion() == 0.0;
    RenewalSpec rs;
    rs.x_min = -30.0;
    rs.x_max = 30.0;
    rs.dx = lattice ? 0.05 : 0.025;
    const auto tab = solve_renewal(m, rs);
    EvolveSpec es;
    es.dx = lattice ? 0.05 : 0.02;
    es.dt = 2e-3;
    es.left_velocity = -4.0;
    FkppEvolver ev(m, es);
    for (std::size_t k = 1; k < tab.times(); ++k) {
      ev.advance_to(tab.t(k));
      const auto snap = ev.snapshot();
      double worst = 0.0;
      for (std::size_t i = 0; i < tab.points(); ++i)
        if (snap.contains(tab.x(i))) worst = std::max(worst, std::abs(tab.u[k][i] - std::exp(snap.log_u_at(tab.x(i)))));
      EXPECT_LT(worst, 1e-4) << m.describe() << " t=" << tab.t(k);
    }
  }
}

TEST(Renewal, FreeEvolutionIsALowerBound) {
  const auto m = BranchingModel::bbm(2);
  RenewalSpec rs;
  rs.t_end = 3.0;
  rs.store_every = 50;
  rs.x_min = -25.0;
  rs.x_max = 25.0;
  const auto tab = solve_renewal(m, rs);
  const std::size_t last = tab.times() - 1;
  std::vector<double> low(tab.points());
  for (std::size_t k = 0; k < last; ++k) {
    const double gap = tab.t(last) - tab.t(k);
    apply_kernel(grid_kernel(m, gap, rs.dx), tab.u[k], low, std::exp(-m.alpha() * gap));
    for (std::size_t i = 0; i < low.size(); i += 7) ASSERT_LE(low[i], tab.u[last][i] + 1e-9) << "tau=" << tab.t(k);
  }
}

TEST(Renewal, PicardToleranceIsEnforced) {
  RenewalSpec rs;
  rs.dt = 0.5;
  rs.t_end = 1.0;
  rs.picard_tol = 1e-6;
  EXPECT_THROW((void)solve_renewal(BranchingModel::bbm(2), rs), ConvergenceError);
  rs = {};
  rs.dx = 0.0;
  EXPECT_THROW((void)solve_renewal(BranchingModel::bbm(2), rs), ConfigError);
  rs = {};
  rs.dt = 0.005;
  EXPECT_THROW((void)solve_renewal(asymmetric_mixed(), rs), ConfigError);
  rs = {};
  rs.t_end = 1.005;
  EXPECT_THROW((void)solve_renewal(BranchingModel::bbm(2), rs), ConfigError);
}

TEST(BelowW, BracketMatchesBinaryForm) {
  const auto m = BranchingModel::bbm(2);
  const double c = -3.0;
  RenewalSpec rs;
  rs.t_end = 8.0;
  rs.store_every = 1;
  rs.x_min = -70.0;
  rs.x_max = 36.0;
  const auto tab = solve_renewal(m, rs);
  const auto a = amplitude_below_W(m, c, tab);
  EXPECT_NEAR(a.first_term, -2.0 / c, 1e-12);
  EXPECT_NEAR(a.psi, 1.0 + c * c / 4.0, 1e-12);

  // The same bracket written for BBM: -2/c + int dtau int dy e^{(1 - c^2/4) tau + c y / 2} u^2.
  std::vector<double> inner(tab.times());
  for (std::size_t k = 0; k < tab.times(); ++k) {
    const auto& u = tab.u[k];
    const std::size_t n = u.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += (i == 0 || i == n - 1 ? 0.5 : 1.0) * std::exp(0.5 * c * tab.x(i)) * u[i] * u[i];
    s = s * tab.dx + std::exp(0.5 * c * tab.x(n - 1)) / (-0.5 * c);
    if (u[0] > 0.0) s += u[0] * u[0] * std::exp(0.5 * c * tab.x(0)) / (2.0 * std::log(u[1] / u[0]) / tab.dx + 0.5 * c);
    inner[k] = std::exp((1.0 - 0.25 * c * c) * tab.t(k)) * s;
  }
  double integral = 0.0;
  for (std::size_t k = 0; k + 1 < inner.size(); ++k) integral += 0.5 * (inner[k] + inner[k + 1]) * tab.dt_store;
  EXPECT_NEAR(a.bracket, -2.0 / c + integral, 1e-10);
  EXPECT_NEAR(a.amplitude, a.bracket * std::sqrt(0.5 / (2.0 * std::numbers::pi)), 1e-12);
  EXPECT_GT(a.amplitude, 0.0);
  EXPECT_LT(a.last_octave, 0.01);
  EXPECT_LT(a.tail_bound, 1e-3 * a.integral);
}

TEST(BelowW, NoBranchingLeavesFirstTerm) {
  const auto m = BranchingModel::free_walk(1.0);
  RenewalSpec rs;
  rs.t_end = 2.0;
  rs.x_min = -30.0;
  const auto a = amplitude_below_W(m, -3.0, solve_renewal(m, rs));
  EXPECT_EQ(a.integral, 0.0);
  EXPECT_NEAR(a.bracket, 2.0 / 3.0, 1e-12);
}

TEST(BelowW, PredictsPdeTail) {
  const auto m = BranchingModel::bbm(2);
  const auto a = amplitude_below_W_adaptive(m, -3.0, {});
  EXPECT_GT(a.amplitude, 0.0);
  EvolveSpec es;
  es.t_end = 30.0;
  es.dx = 0.05;
  es.sample_dt = 30.0;
  es.left_velocity = -3.2;
  const auto r = evolve(m, es, {-3.0});
  const double measured = std::exp(r.rays[0].back().value);
  EXPECT_NEAR(measured / a.predict(30.0), 1.0, 0.10);
}

TEST(BelowW, Refusals) {
  const auto m = BranchingModel::bbm(2);
  RenewalSpec rs;
  rs.t_end = 0.5;
  rs.store_every = 1;
  rs.x_min = -20.0;
  const auto tab = solve_renewal(m, rs);
  EXPECT_THROW((void)amplitude_below_W(m, 0.0, tab), DomainError);
  EXPECT_THROW((void)amplitude_below_W(m, -3.0, tab), ConvergenceError);
}
