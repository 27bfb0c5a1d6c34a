// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "bbmld/wave.hpp"
#include "test_models.hpp"

using namespace bbmld;
using bbmld::testing::asymmetric_mixed;
using bbmld::testing::two_atom;

namespace {

WaveProfile solve(const BranchingModel& m, double h = 0.01, double anchor = 0.5) {
  WaveGridSpec spec;
  spec.h = h;
  spec.anchor = anchor;
  return solve_wave(m, front_constants(m), spec);
}

// Max |D F'' + v_c F' + F^2 - F| over interior nodes with centred differences.
double bbm_residual(const WaveProfile& p) {
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < p.size(); ++i) {
    const double f = p.values[i];
    const double d2 = (p.values[i + 1] - 2.0 * f + p.values[i - 1]) / (p.h * p.h);
    const double d1 = (p.values[i + 1] - p.values[i - 1]) / (2.0 * p.h);
    worst = std::max(worst, std::abs(d2 + 2.0 * d1 + f * f - f));
  }
  return worst;
}

// Node where F crosses q, by linear interpolation.
double crossing(const WaveProfile& p, double q) {
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p.values[i] >= q) {
      const double th = (q - p.values[i - 1]) / (p.values[i] - p.values[i - 1]);
      return p.z(i - 1) + th * p.h;
    }
  return p.z_max();
}

}  // namespace

TEST(Wave, BinaryBbmSolvesFrontEquation) {
  const auto p = solve(BranchingModel::bbm(2));
  EXPECT_LT(p.residual, 1e-8);
  EXPECT_LT(bbm_residual(p), 1e-8);
  EXPECT_NEAR(p(0.0), 0.5, 1e-14);
}

TEST(Wave, ProfileInvariants) {
  for (const auto& m : {BranchingModel::bbm(2), BranchingModel::bbm(3), two_atom(), asymmetric_mixed()}) {
    const auto fc = front_constants(m);
    const auto p = solve(m);
    for (std::size_t i = 0; i < p.size(); ++i) {
      ASSERT_GE(p.values[i], 0.0);
      ASSERT_LE(p.values[i], 1.0);
      if (i > 0) ASSERT_GE(p.values[i], p.values[i - 1]);
    }
    EXPECT_GT(p.values.back(), 1.0 - 1e-8) << m.describe();
    EXPECT_LT(std::abs(p.eta_fit - fc.eta) / fc.eta, 1e-3) << m.describe();
    EXPECT_LT(p.residual, 1e-8) << m.describe();
  }
}

TEST(Wave, LeftTailSlopeBbm) {
  const auto p = solve(BranchingModel::bbm(2));
  EXPECT_NEAR(p.eta_fit, std::sqrt(2.0) - 1.0, 1e-3 * (std::sqrt(2.0) - 1.0));
}

TEST(Wave, IdentityBinaryBbm) {
  const auto m = BranchingModel::bbm(2);
  const auto fc = front_constants(m);
  const auto p = solve(m);
  // v_c - W = 2 sqrt 2 for binary BBM.
  EXPECT_NEAR(fc.v_c - fc.w, std::sqrt(8.0), 1e-12);
  const auto chk = left_identity(p, m, fc);
  EXPECT_NEAR(chk.expected, std::sqrt(8.0) * p.B, 1e-12);
  EXPECT_LT(verify_left_identity(p, m, fc), 5e-3);
}

TEST(Wave, IdentityGeneralModels) {
  for (const auto& m : {BranchingModel::bbm(3), two_atom(), asymmetric_mixed()}) {
    const auto fc = front_constants(m);
    const auto p = solve(m);
    EXPECT_LT(verify_left_identity(p, m, fc), 5e-3) << m.describe();
  }
}

TEST(Wave, IdentityDetectsWrongProfile) {
  const auto m = BranchingModel::bbm(2);
  const auto fc = front_constants(m);
  auto p = solve(m);
  // A logistic with the right tail exponent but the wrong shape.
  for (std::size_t i = 0; i < p.size(); ++i) p.values[i] = 1.0 / (1.0 + std::exp(-fc.eta * p.z(i)));
  detail::fit_left_tail(p, fc.eta, 5e-3);
  EXPECT_GT(left_identity(p, m, fc).relative_residual, 0.1);
}

TEST(Wave, IdentityRefusesShortGrid) {
  const auto m = BranchingModel::bbm(2);
  const auto fc = front_constants(m);
  WaveGridSpec spec;
  spec.z_min = -12.0;
  spec.z_max = 4.0;
  spec.fit_slope_tol = 0.05;
  const auto p = solve_wave(m, fc, spec);
  EXPECT_THROW((void)verify_left_identity(p, m, fc), ConvergenceError);
}

TEST(Wave, GridRefinementIsSecondOrder) {
  for (const auto& m : {BranchingModel::bbm(2), two_atom()}) {
    const double b4 = solve(m, 0.04).B, b2 = solve(m, 0.02).B, b1 = solve(m, 0.01).B;
    // Halving h should shrink the change by about 4; allow a factor 4 slack.
    const double expected = std::abs(b4 - b2) / 4.0;
    EXPECT_LT(std::abs(b2 - b1), 4.0 * expected) << m.describe();
  }
}

TEST(Wave, AnchorTranslatesProfile) {
  const auto m = BranchingModel::bbm(2);
  const auto fc = front_constants(m);
  const auto half = solve(m);
  for (double q : {0.3, 0.7}) {
    const auto p = solve(m, 0.01, q);
    // F_q(z) = F_{1/2}(z + s) with F_{1/2}(s) = q, so B_q = B_{1/2} e^{eta s}.
    const double s = crossing(half, q);
    EXPECT_NEAR(p.B / (half.B * std::exp(fc.eta * s)), 1.0, 1e-3) << "q=" << q;
    EXPECT_NEAR(p(-3.0), half(-3.0 + s), 1e-4);
  }
}

TEST(Wave, RegressionFixtureB) {
  // Frozen from this solver at h = 0.01 on [-60, 30]; certified by the identity test.
  EXPECT_NEAR(solve(BranchingModel::bbm(2)).B, 0.8246500021, 1e-8);
}

TEST(Wave, RejectsBadGrid) {
  const auto m = BranchingModel::bbm(2);
  const auto fc = front_constants(m);
  WaveGridSpec spec;
  spec.h = 0.0;
  EXPECT_THROW((void)solve_wave(m, fc, spec), ConfigError);
  spec = {};
  spec.anchor = 1.0;
  EXPECT_THROW((void)solve_wave(m, fc, spec), ConfigError);
}
