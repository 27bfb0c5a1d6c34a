// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bbmld/error.hpp"

namespace bbmld {

/// One atom of the jump-rate measure: displacement y taken at rate `rate`.
struct JumpAtom {
  double y = 0.0;
  double rate = 0.0;
};

/// Branching channel: one particle becomes k at rate `rate` (k >= 2).
struct OffspringChannel {
  int k = 2;
  double rate = 0.0;
};

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  [[nodiscard]] bool contains(double x) const { return x > lo && x < hi; }
};

/// Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> nodes(n), weights(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return {nodes, weights};
}

/// Discretize a jump-rate density on [a, b] into atoms with composite
/// Gauss-Legendre quadrature (`panels` panels of `order` nodes each).
inline std::vector<JumpAtom> atoms_from_density(const std::function<double(double)>& density,
                                                double a, double b, int panels = 16,
                                                int order = 8) {
  if (!(b > a) || panels < 1 || order < 1) throw ConfigError("atoms_from_density: bad support");
  const auto [xs, ws] = gauss_legendre(order);
  std::vector<JumpAtom> atoms;
  const double width = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * width;
    for (int i = 0; i < order; ++i) {
      const double y = mid + 0.5 * width * xs[i];
      const double w = 0.5 * width * ws[i] * density(y);
      if (w != 0.0) atoms.push_back({y, w});
    }
  }
  return atoms;
}

/// Discretize a tabulated density (uniform or not) with the trapezoid rule.
inline std::vector<JumpAtom> atoms_from_table(std::span<const double> y,
                                              std::span<const double> density) {
  if (y.size() != density.size() || y.size() < 2)
    throw ConfigError("density_table: y and density must have equal length >= 2");
  std::vector<JumpAtom> atoms(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i > 0 && !(y[i] > y[i - 1])) throw ConfigError("density_table: y must be increasing");
    const double left = i > 0 ? y[i] - y[i - 1] : 0.0;
    const double right = i + 1 < y.size() ? y[i + 1] - y[i] : 0.0;
    atoms[i] = {y[i], 0.5 * (left + right) * density[i]};
  }
  std::erase_if(atoms, [](const JumpAtom& a) { return a.rate == 0.0; });
  return atoms;
}

/// A continuous-time branching random walk: diffusion with coefficient D
/// (free motion has <(X(t)-X(s))^2> = 2D|t-s|, so standard BBM is D = 1),
/// jumps from the rate measure rho, and k-fold branching at rates p_k.
class BranchingModel {
 public:
  BranchingModel(double diffusion, std::vector<JumpAtom> jumps,
                 std::vector<OffspringChannel> offspring)
      : diffusion_(diffusion), jumps_(std::move(jumps)), offspring_(std::move(offspring)) {
    validate();
  }

  /// Branching Brownian motion splitting into m particles at rate 1.
  static BranchingModel bbm(int m = 2) { return BranchingModel(1.0, {}, {{m, 1.0}}); }

  /// The same motion without any branching (alpha = 0). Only valid as a
  /// control for the solvers; front and rate computations reject it.
  static BranchingModel free_walk(double diffusion, std::vector<JumpAtom> jumps = {}) {
    return BranchingModel(diffusion, std::move(jumps), {}, NoBranching{});
  }

  [[nodiscard]] bool branching() const { return alpha_ > 0.0; }

  [[nodiscard]] double diffusion() const { return diffusion_; }
  [[nodiscard]] std::span<const JumpAtom> jumps() const { return jumps_; }
  [[nodiscard]] std::span<const OffspringChannel> offspring() const { return offspring_; }

  /// Total branching rate, sum_k p_k.
  [[nodiscard]] double alpha() const { return alpha_; }
  /// Malthusian rate of the mean population, sum_k (k-1) p_k.
  [[nodiscard]] double beta() const { return beta_; }
  /// Total jump rate, integral of rho.
  [[nodiscard]] double jump_rate() const { return lambda_; }
  [[nodiscard]] bool has_jumps() const { return !jumps_.empty(); }
  [[nodiscard]] double max_abs_jump() const { return max_abs_y_; }

  /// Open interval of gamma on which the exponential moments are finite
  /// (and representable without overflow).
  [[nodiscard]] Interval gamma_domain() const { return gamma_domain_; }

  /// Sum_k p_k u^k.
  [[nodiscard]] double branching_source(double u) const {
    double s = 0.0;
    for (const auto& ch : offspring_) s += ch.rate * std::pow(u, ch.k);
    return s;
  }

  [[nodiscard]] bool symmetric() const {
    for (const auto& a : jumps_) {
      const bool mirrored = std::any_of(jumps_.begin(), jumps_.end(), [&](const JumpAtom& b) {
        return std::abs(b.y + a.y) < 1e-14 && std::abs(b.rate - a.rate) < 1e-14 * (1 + a.rate);
      });
      if (!mirrored) return false;
    }
    return true;
  }

  [[nodiscard]] std::string describe() const {
    std::ostringstream os;
    os << "D=" << diffusion_ << " jumps=" << jumps_.size() << " (lambda=" << lambda_
       << ") alpha=" << alpha_ << " beta=" << beta_;
    return os.str();
  }

 private:
  struct NoBranching {};
  BranchingModel(double diffusion, std::vector<JumpAtom> jumps,
                 std::vector<OffspringChannel> offspring, NoBranching)
      : diffusion_(diffusion), jumps_(std::move(jumps)), offspring_(std::move(offspring)) {
    validate(false);
  }

  void validate(bool require_branching = true) {
    if (!(diffusion_ >= 0.0) || !std::isfinite(diffusion_))
      throw ConfigError("diffusion must be a finite nonnegative number");
    alpha_ = beta_ = lambda_ = max_abs_y_ = 0.0;
    for (const auto& ch : offspring_) {
      if (ch.k < 2) throw ConfigError("offspring k must satisfy k >= 2 (got k=" + std::to_string(ch.k) + ")");
      if (!(ch.rate >= 0.0) || !std::isfinite(ch.rate))
        throw ConfigError("offspring rate for k=" + std::to_string(ch.k) + " must be >= 0");
      alpha_ += ch.rate;
      beta_ += (ch.k - 1) * ch.rate;
    }
    if (require_branching && !(alpha_ > 0.0)) throw ConfigError("at least one branching channel with positive rate is required");
    for (const auto& a : jumps_) {
      if (!std::isfinite(a.y)) throw ConfigError("jump displacement must be finite");
      if (!(a.rate >= 0.0) || !std::isfinite(a.rate)) throw ConfigError("jump rate must be >= 0");
    }
    // Zero-size or zero-rate atoms do not move the particle.
    std::erase_if(jumps_, [](const JumpAtom& a) { return a.rate == 0.0 || a.y == 0.0; });
    for (const auto& a : jumps_) {
      lambda_ += a.rate;
      max_abs_y_ = std::max(max_abs_y_, std::abs(a.y));
    }
    if (!(diffusion_ > 0.0) && jumps_.empty())
      throw ConfigError("degenerate motion: need diffusion > 0 or a nonzero jump kernel");
    // e^{gamma y} stays representable for |gamma y| < 700.
    if (max_abs_y_ > 0.0) gamma_domain_ = {-700.0 / max_abs_y_, 700.0 / max_abs_y_};
    // Probe the moment generating function on a grid of the domain.
    for (double frac : {-0.5, -0.1, 0.1, 0.5}) {
      const double g = frac * (std::isfinite(gamma_domain_.hi) ? gamma_domain_.hi : 1.0);
      double m = 0.0;
      for (const auto& a : jumps_) m += a.rate * std::exp(g * a.y);
      if (!std::isfinite(m)) throw ConfigError("jump kernel has no finite exponential moments");
    }
  }

  double diffusion_;
  std::vector<JumpAtom> jumps_;
  std::vector<OffspringChannel> offspring_;
  double alpha_ = 0.0, beta_ = 0.0, lambda_ = 0.0, max_abs_y_ = 0.0;
  Interval gamma_domain_{};
};

}  // namespace bbmld
