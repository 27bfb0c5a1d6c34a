// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "bbmld/mc.hpp"
#include "bbmld/pde.hpp"
#include "bbmld/renewal.hpp"
#include "test_models.hpp"

using namespace bbmld;
using bbmld::testing::asymmetric_mixed;
using bbmld::testing::two_atom;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
};

template <class F>
Moments moments(const std::vector<SampleResult>& rs, F&& f) {
  Moments m;
  for (const auto& r : rs) m.mean += f(r);
  m.n = rs.size();
  m.mean /= static_cast<double>(m.n);
  for (const auto& r : rs) m.var += (f(r) - m.mean) * (f(r) - m.mean);
  m.var /= static_cast<double>(m.n - 1);
  return m;
}

}  // namespace

TEST(MonteCarlo, DeterministicAcrossWorkerPartitions) {
  const auto m = asymmetric_mixed();
  const std::vector<double> xs{-1.0, 0.0, 2.0};
  const auto a = estimate_cdf(m, 2.0, xs, 4000, 42, 1);
  const auto b = estimate_cdf(m, 2.0, xs, 4000, 42, 3);
  const auto c = estimate_cdf(m, 2.0, xs, 4000, 43, 1);
  bool differs = false;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    EXPECT_EQ(a[j].estimate, b[j].estimate);
    EXPECT_EQ(a[j].stderr_, b[j].stderr_);
    differs = differs || a[j].estimate != c[j].estimate;
  }
  EXPECT_TRUE(differs);
  const auto s1 = simulate_samples(m, 2.0, 50, 7, 1), s2 = simulate_samples(m, 2.0, 50, 7, 4);
  for (std::size_t i = 0; i < s1.size(); ++i) EXPECT_EQ(s1[i].x_max, s2[i].x_max);
}

TEST(MonteCarlo, SingleBrownianParticle) {
  const auto m = BranchingModel::free_walk(1.0);
  const double t = 3.0;
  const auto rs = simulate_samples(m, t, 40000, 1);
  const auto mo = moments(rs, [](const SampleResult& r) { return r.x_max; });
  EXPECT_NEAR(mo.mean, 0.0, 3.0 * std::sqrt(2.0 * t / mo.n));
  EXPECT_NEAR(mo.var, 2.0 * t, 3.0 * 2.0 * t * std::sqrt(2.0 / (mo.n - 1)));
  for (const auto& r : rs) ASSERT_EQ(r.population, 1u);
}

TEST(MonteCarlo, ZeroBranchFraction) {
  for (const auto& m : {BranchingModel::bbm(2), asymmetric_mixed(), two_atom()}) {
    const double t = 1.5;
    const std::size_t n = 40000;
    const auto rs = simulate_samples(m, t, n, 11);
    const double p = std::exp(-m.alpha() * t);
    const double frac =
        static_cast<double>(std::count_if(rs.begin(), rs.end(), [](const auto& r) { return r.branch_events == 0; })) / n;
    EXPECT_NEAR(frac, p, 3.0 * std::sqrt(p * (1.0 - p) / n)) << m.describe();
  }
}

TEST(MonteCarlo, PopulationGrowsLikeExpBetaT) {
  for (const auto& m : {BranchingModel::bbm(2), asymmetric_mixed()}) {
    const double t = 2.0;
    const auto rs = simulate_samples(m, t, 40000, 5);
    const auto mo = moments(rs, [](const SampleResult& r) { return static_cast<double>(r.population); });
    EXPECT_NEAR(mo.mean, std::exp(m.beta() * t), 3.0 * std::sqrt(mo.var / mo.n)) << m.describe();
  }
}

TEST(MonteCarlo, FirstBranchTimeIsExponential) {
  const auto m = asymmetric_mixed();
  const double t = 3.0, a = m.alpha();
  const auto rs = simulate_samples(m, t, 20000, 9);
  std::vector<double> tau;
  for (const auto& r : rs)
    if (r.branch_events > 0) tau.push_back(r.first_branch);
  std::sort(tau.begin(), tau.end());
  const double norm = 1.0 - std::exp(-a * t);
  double d = 0.0;
  const double n = static_cast<double>(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double f = (1.0 - std::exp(-a * tau[i])) / norm;
    d = std::max({d, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  // Kolmogorov-Smirnov at the 1% level.
  EXPECT_LT(d, 1.628 / std::sqrt(n));
}

TEST(MonteCarlo, MatchesRenewalForLatticeWalk) {
  const auto m = two_atom();
  const double t = 2.0;
  RenewalSpec rs;
  rs.dx = 0.5;
  rs.t_end = t;
  rs.x_min = -20.0;
  rs.x_max = 20.0;
  const auto tab = solve_renewal(m, rs);
  const std::vector<double> xs{-1.5, 0.5, 2.5};
  const auto est = estimate_cdf(m, t, xs, 100000, 3);
  for (const auto& e : est) {
    const double ref = tab.value(e.x, tab.times() - 1);
    EXPECT_NEAR(e.estimate, ref, 3.0 * std::max(e.stderr_, 1e-4)) << "x=" << e.x;
  }
}

TEST(MonteCarlo, MeanMaximumMatchesPde) {
  const auto m = BranchingModel::bbm(2);
  const double t = 5.0;
  EvolveSpec es;
  es.dx = 0.02;
  es.dt = 2e-3;
  es.left_velocity = -3.0;
  FkppEvolver ev(m, es);
  ev.advance_to(t);
  const auto snap = ev.snapshot();
  double mean = 0.0;
  for (std::size_t i = 0; i + 1 < snap.size(); ++i)
    mean += 0.5 * (snap.x(i) + snap.x(i + 1)) * (std::exp(snap.logu[i + 1]) - std::exp(snap.logu[i]));
  const auto rs = simulate_samples(m, t, 20000, 17);
  const auto mo = moments(rs, [](const SampleResult& r) { return r.x_max; });
  EXPECT_NEAR(mo.mean, mean, 3.0 * std::sqrt(mo.var / mo.n));
  // Far ahead of the front every sample lies below x.
  const auto far = estimate_cdf(m, t, {critical_front(m).v_c * t + 20.0}, 2000, 1);
  EXPECT_EQ(far[0].estimate, 1.0);
}

TEST(MonteCarlo, PopulationCap) {
  const auto m = BranchingModel::bbm(2);
  const Simulator sim(m, 20);
  auto rng = sample_rng(1, 0);
  bool aborted = false;
  for (int i = 0; i < 50 && !aborted; ++i) aborted = sim.simulate_once(6.0, rng).aborted;
  EXPECT_TRUE(aborted);
  EXPECT_THROW((void)estimate_cdf(m, 3.0, {0.0}, 1000, 1, 1, 30), ConvergenceError);
  EXPECT_THROW((void)estimate_cdf(m, 20.0, {0.0}, 10, 1), ConfigError);
  EXPECT_THROW((void)estimate_cdf(m, 1.0, {0.0}, 0, 1), ConfigError);
}
