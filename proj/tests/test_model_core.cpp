// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bbmld/front.hpp"
#include "test_models.hpp"

using namespace bbmld;
using bbmld::testing::asymmetric_mixed;
using bbmld::testing::density_kernel;
using bbmld::testing::two_atom;

namespace {

// Closed forms for m-ary BBM (D = 1, p_m = 1).
struct MaryClosedForm {
  double gamma_c, v_c, eta, w, theta;
};

MaryClosedForm mary(int m) {
  const double s1 = std::sqrt(m - 1.0), sm = std::sqrt(static_cast<double>(m));
  return {s1, 2.0 * s1, sm - s1, -2.0 * (sm - s1), 1.5 * (std::sqrt(m / (m - 1.0)) - 1.0)};
}

// Two-atom model: gamma_c solves gamma tanh(gamma) = 1; frozen from a
// 30-digit mpmath root solve.
constexpr double kTwoAtomGammaC = 1.19967864025773383;
constexpr double kTwoAtomVc = 1.50887956153831993;
constexpr double kTwoAtomW = -0.586460279546354805;
constexpr double kTwoAtomEta = 0.557180063638085429;

}  // namespace

TEST(SpectralG, PureDiffusion) {
  const auto bbm = BranchingModel::bbm(2);
  EXPECT_DOUBLE_EQ(spectral_g(bbm, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(spectral_g(bbm, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(spectral_g(bbm, -2.5), 6.25);
}

TEST(SpectralG, TwoAtomIsCoshMinusOne) {
  const auto m = two_atom();
  for (double g : {-3.0, -0.7, 0.0, 0.2, 1.0, 4.5}) EXPECT_NEAR(spectral_g(m, g), std::cosh(g) - 1.0, 1e-14 * std::cosh(g));
  EXPECT_EQ(spectral_g(asymmetric_mixed(), 0.0), 0.0);
  EXPECT_EQ(spectral_g(density_kernel(), 0.0), 0.0);
}

TEST(SpectralG, DomainError) {
  const auto m = two_atom();
  EXPECT_THROW(spectral_g(m, 701.0), DomainError);
  EXPECT_THROW(velocity_V(m, -1.0), DomainError);
}

TEST(VelocityV, Examples) {
  EXPECT_DOUBLE_EQ(velocity_V(BranchingModel::bbm(2), 1.0), 2.0);
  for (int m : {2, 3, 4, 5})
    EXPECT_NEAR(velocity_V(BranchingModel::bbm(m), std::sqrt(m - 1.0)), 2.0 * std::sqrt(m - 1.0), 1e-14);
  EXPECT_NEAR(velocity_V(two_atom(), 1.0), std::cosh(1.0), 1e-14);
  EXPECT_NEAR(velocity_V(two_atom(), 1.0), 1.5430806, 1e-7);
  EXPECT_GT(velocity_V(BranchingModel::bbm(2), 1e-6), 1e5);
}

TEST(CriticalFront, Mary) {
  for (int m : {2, 3, 4, 5}) {
    const auto cf = critical_front(BranchingModel::bbm(m));
    const auto ref = mary(m);
    EXPECT_NEAR(cf.gamma_c, ref.gamma_c, 1e-12 * ref.gamma_c) << m;
    EXPECT_NEAR(cf.v_c, ref.v_c, 1e-12 * ref.v_c) << m;
  }
  const auto cf3 = critical_front(BranchingModel::bbm(3));
  EXPECT_NEAR(cf3.gamma_c, 1.41421356, 1e-8);
  EXPECT_NEAR(cf3.v_c, 2.82842712, 1e-8);
}

TEST(CriticalFront, TwoAtomAgainstHighPrecisionRoot) {
  const auto cf = critical_front(two_atom());
  EXPECT_NEAR(cf.gamma_c, kTwoAtomGammaC, 1e-12);
  EXPECT_NEAR(cf.v_c, kTwoAtomVc, 1e-12);
}

TEST(CriticalFront, StationarityHolds) {
  for (const auto& model : {asymmetric_mixed(), density_kernel(), two_atom()}) {
    const auto cf = critical_front(model);
    const double h = 1e-5;
    const double dV = (velocity_V(model, cf.gamma_c + h) - velocity_V(model, cf.gamma_c - h)) / (2 * h);
    EXPECT_NEAR(dV, 0.0, 1e-8);
    EXPECT_NEAR(cf.v_c, velocity_V(model, cf.gamma_c), 1e-14);
  }
}

TEST(CriticalFront, RejectsFreeWalk) {
  EXPECT_THROW(critical_front(BranchingModel::free_walk(1.0)), DomainError);
}

TEST(RateFunction, BbmClosedForm) {
  const auto bbm = BranchingModel::bbm(2);
  const RateFunction f(bbm);
  const auto p = f(2.0);
  EXPECT_NEAR(p.f, 1.0, 1e-14);
  EXPECT_NEAR(p.df, 1.0, 1e-14);
  EXPECT_NEAR(p.d2f, 0.5, 1e-14);
  EXPECT_NEAR(f.f(-2.0), 1.0, 1e-14);
  EXPECT_NEAR(f.f(-3.0), 2.25, 1e-13);
}

TEST(RateFunction, VanishesAtMeanDrift) {
  for (const auto& model : {BranchingModel::bbm(2), two_atom(), asymmetric_mixed(), density_kernel()}) {
    const RateFunction f(model);
    const auto p = f(f.mean_velocity());
    EXPECT_NEAR(p.f, 0.0, 1e-14);
    EXPECT_NEAR(p.df, 0.0, 1e-12);
  }
}

TEST(RateFunction, OutsideRange) {
  // All jumps positive and no diffusion: the walk only moves right.
  const BranchingModel right_only(0.0, {{1.0, 1.0}}, {{2, 1.0}});
  const RateFunction f(right_only);
  EXPECT_THROW((void)f(-0.5), DomainError);
  EXPECT_NO_THROW((void)f(0.5));
}

TEST(RateFunction, LegendreRoundTripProperty) {
  std::mt19937_64 rng(20261014);
  for (const auto& model : {BranchingModel::bbm(2), two_atom(), asymmetric_mixed(), density_kernel()}) {
    const RateFunction f(model);
    std::uniform_real_distribution<double> gam(-3.0, 3.0);
    for (int i = 0; i < 100; ++i) {
      const double g = gam(rng);
      const double v = spectral_g_prime(model, g);
      const double lhs = f.f(v);
      const double rhs = g * v - spectral_g(model, g);
      EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(rhs))) << model.describe() << " gamma=" << g;
    }
  }
}

TEST(RateFunction, ConvexityProperty) {
  std::mt19937_64 rng(7);
  for (const auto& model : {BranchingModel::bbm(2), two_atom(), asymmetric_mixed(), density_kernel()}) {
    std::uniform_real_distribution<double> gam(-4.0, 4.0);
    for (int i = 0; i < 100; ++i) {
      const double a = gam(rng), b = gam(rng);
      const double mid = spectral_g(model, 0.5 * (a + b));
      const double avg = 0.5 * (spectral_g(model, a) + spectral_g(model, b));
      EXPECT_LE(mid, avg + 1e-14 * std::abs(avg));
    }
    const RateFunction f(model);
    for (double v = -2.0; v <= 2.0; v += 0.25)
      if (f.v_domain().contains(v)) EXPECT_GT(f(v).d2f, 0.0);
  }
}

TEST(TransitionW, Mary) {
  for (int m : {2, 3, 4, 5}) {
    const auto model = BranchingModel::bbm(m);
    const auto fc = front_constants(model);
    const auto ref = mary(m);
    EXPECT_NEAR(fc.w, ref.w, 1e-10) << m;
    EXPECT_NEAR(fc.eta, ref.eta, 1e-10) << m;
    EXPECT_NEAR(fc.theta, ref.theta, 1e-10) << m;
    EXPECT_NEAR(fc.gamma_c, ref.gamma_c, 1e-10) << m;
    EXPECT_NEAR(fc.v_c, ref.v_c, 1e-10) << m;
  }
  const auto fc2 = front_constants(BranchingModel::bbm(2));
  EXPECT_NEAR(fc2.w, 2.0 - 2.0 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(fc2.w, -0.8284271, 1e-7);
  EXPECT_NEAR(fc2.eta, 0.4142136, 1e-7);
  const auto fc3 = front_constants(BranchingModel::bbm(3));
  EXPECT_NEAR(fc3.eta, 0.3178372, 1e-7);
  EXPECT_NEAR(fc3.w, -2.0 * (std::sqrt(3.0) - std::sqrt(2.0)), 1e-12);
}

TEST(TransitionW, TwoAtom) {
  const auto fc = front_constants(two_atom());
  EXPECT_NEAR(fc.w, kTwoAtomW, 1e-12);
  EXPECT_NEAR(fc.eta, kTwoAtomEta, 1e-12);
}

TEST(TransitionW, RootIdentityFiveModels) {
  for (const auto& model : {BranchingModel::bbm(2), BranchingModel::bbm(3), two_atom(), asymmetric_mixed(),
                            density_kernel()}) {
    const auto fc = front_constants(model);
    const RateFunction f(model);
    const double fpw = f(fc.w).df;
    auto G = [&](double u) { return -spectral_g(model, u) + fc.v_c * u + model.alpha(); };
    EXPECT_LT(std::abs(fc.eta + fpw), 1e-10) << model.describe();
    EXPECT_LT(std::abs(G(-fc.eta)), 1e-10);
    EXPECT_LT(std::abs(G(fpw)), 1e-10);
    EXPECT_LT(std::abs(saddle_residual(model, fc)), 1e-10);
    EXPECT_LT(fc.w, fc.v_c);
    if (model.symmetric() && fc.v_c > 0) EXPECT_LT(fc.w, 0.0);
  }
}

TEST(Psi, BbmRegression) {
  const auto model = BranchingModel::bbm(2);
  const auto fc = front_constants(model);
  EXPECT_NEAR(psi(model, fc, 0.0), 2.0 * (std::sqrt(2.0) - 1.0), 1e-10);
  EXPECT_NEAR(psi(model, fc, 0.0), 0.8284271, 1e-7);
  EXPECT_NEAR(psi(model, fc, -2.0), 2.0, 1e-10);
  EXPECT_NEAR(psi(model, fc, 3.0), 1.25, 1e-10);
  EXPECT_NEAR(psi(model, fc, fc.v_c), 0.0, 1e-12);
  EXPECT_EQ(regime_of(fc, -2.0), Regime::BelowW);
  EXPECT_EQ(regime_of(fc, 0.0), Regime::Intermediate);
  EXPECT_EQ(regime_of(fc, 3.0), Regime::AboveVc);
}

TEST(Psi, ContinuityAndKinks) {
  for (const auto& model : {BranchingModel::bbm(2), BranchingModel::bbm(3), two_atom(), asymmetric_mixed()}) {
    const auto fc = front_constants(model);
    const double e = 1e-12;
    EXPECT_NEAR(psi(model, fc, fc.w - e), psi(model, fc, fc.w + e), 1e-10);
    EXPECT_LT(std::abs(psi(model, fc, fc.v_c - e)), 1e-10);
    const double h = 1e-7;
    const double left = (psi(model, fc, fc.w) - psi(model, fc, fc.w - h)) / h;
    const double right = (psi(model, fc, fc.w + h) - psi(model, fc, fc.w)) / h;
    EXPECT_NEAR(left, right, 1e-6) << model.describe();
    EXPECT_NEAR(right, -fc.eta, 1e-6);
  }
  const auto bbm = BranchingModel::bbm(2);
  const auto fc = front_constants(bbm);
  const double h = 1e-7;
  const double left = (psi(bbm, fc, fc.v_c) - psi(bbm, fc, fc.v_c - h)) / h;
  const double right = (psi(bbm, fc, fc.v_c + h) - psi(bbm, fc, fc.v_c)) / h;
  EXPECT_NEAR(left, -(std::sqrt(2.0) - 1.0), 1e-6);
  EXPECT_NEAR(right, 1.0, 1e-6);
  EXPECT_NEAR(std::abs(right) - std::abs(left), 2.0 - std::sqrt(2.0), 1e-6);
}

TEST(Psi, NonNegativeOnScan) {
  for (const auto& model : {BranchingModel::bbm(2), two_atom(), asymmetric_mixed(), density_kernel()}) {
    const auto fc = front_constants(model);
    for (double c = -6.0; c <= 6.0; c += 0.05) EXPECT_GE(psi(model, fc, c), -1e-12) << c;
  }
}

TEST(Psi, UnreachableVelocityIsInfinite) {
  const BranchingModel right_only(0.0, {{1.0, 1.0}}, {{2, 1.0}});
  const auto fc = front_constants(right_only);
  EXPECT_TRUE(std::isinf(psi(right_only, fc, -1.0)));
}

TEST(Prefactor, Exponent) {
  EXPECT_NEAR(prefactor_exponent(front_constants(BranchingModel::bbm(2))), 1.5 * (std::sqrt(2.0) - 1.0), 1e-12);
  EXPECT_NEAR(prefactor_exponent(front_constants(BranchingModel::bbm(2))), 0.6213203, 1e-7);
  EXPECT_NEAR(prefactor_exponent(front_constants(BranchingModel::bbm(3))), 0.3371173, 1e-7);
  for (int m : {4, 5}) EXPECT_NEAR(front_constants(BranchingModel::bbm(m)).theta, mary(m).theta, 1e-12);
}

TEST(Prefactor, AmplitudeIntermediate) {
  const auto fc = front_constants(BranchingModel::bbm(2));
  const double A = 0.37, B = 1.9;
  // c -> v_c: base of the power -> 1.
  EXPECT_NEAR(prefactor_amplitude_intermediate(fc, fc.v_c - 1e-12, A, B), B * std::exp(-fc.eta * A), 1e-10);
  // c = 0: the signal left the front at tau_0 = t (c - W)/(v_c - W) = t (1 - 1/sqrt 2).
  const double ratio = (std::sqrt(2.0) - 1.0) / std::sqrt(2.0);
  EXPECT_NEAR(1.0 / ratio, 3.4142136, 1e-7);
  EXPECT_NEAR(prefactor_amplitude_intermediate(fc, 0.0, A, B),
              std::pow(ratio, 1.5 * (std::sqrt(2.0) - 1.0)) * B * std::exp(-(std::sqrt(2.0) - 1.0) * A), 1e-12);
  // Same bracket written as in the BBM form: (1 - (2 - c)/(2 sqrt 2))^{theta}.
  for (double c : {-0.5, 0.7, 1.9})
    EXPECT_NEAR(prefactor_amplitude_intermediate(fc, c, A, B),
                std::pow(1.0 - (2.0 - c) / (2.0 * std::sqrt(2.0)), fc.theta) * B * std::exp(-fc.eta * A), 1e-12);
  // Vanishes at the transition and is increasing in c.
  EXPECT_LT(prefactor_amplitude_intermediate(fc, fc.w + 1e-9, A, B), 1e-5);
  EXPECT_LT(prefactor_amplitude_intermediate(fc, 0.0, A, B), prefactor_amplitude_intermediate(fc, 1.0, A, B));
  EXPECT_EQ(prefactor_amplitude_intermediate(fc, 0.0, A, 0.0), 0.0);
  EXPECT_THROW(prefactor_amplitude_intermediate(fc, fc.w, A, B), DomainError);
  EXPECT_THROW(prefactor_amplitude_intermediate(fc, fc.v_c, A, B), DomainError);
}

TEST(Model, ValidationErrors) {
  EXPECT_THROW(BranchingModel(1.0, {}, {{1, 1.0}}), ConfigError);
  EXPECT_THROW(BranchingModel(1.0, {}, {}), ConfigError);
  EXPECT_THROW(BranchingModel(-1.0, {}, {{2, 1.0}}), ConfigError);
  EXPECT_THROW(BranchingModel(0.0, {}, {{2, 1.0}}), ConfigError);
  EXPECT_THROW(BranchingModel(1.0, {{1.0, -0.5}}, {{2, 1.0}}), ConfigError);
  const auto m = BranchingModel(1.0, {}, {{2, 0.25}, {4, 0.5}});
  EXPECT_DOUBLE_EQ(m.alpha(), 0.75);
  EXPECT_DOUBLE_EQ(m.beta(), 0.25 + 1.5);
}

TEST(Model, DensityQuadrature) {
  // Uniform density of total mass 1 on [-1, 1]: g(gamma) = sinh(gamma)/gamma - 1.
  const BranchingModel m(0.0, atoms_from_density([](double) { return 0.5; }, -1.0, 1.0, 4, 8), {{2, 1.0}});
  EXPECT_NEAR(m.jump_rate(), 1.0, 1e-14);
  for (double g : {0.3, 1.0, 2.5}) EXPECT_NEAR(spectral_g(m, g), std::sinh(g) / g - 1.0, 1e-13);
}
