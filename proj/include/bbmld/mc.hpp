// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

// Event-driven simulation of the branching process and Monte Carlo
// estimates of u(x, t) = P(X_max(t) < x).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "bbmld/error.hpp"
#include "bbmld/model.hpp"

namespace bbmld {

/// Independent stream for sample `index`; partitioning samples across
/// workers cannot change what any sample sees.
inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct SampleResult {
  double x_max = -std::numeric_limits<double>::infinity();
  std::size_t population = 1;
  std::size_t branch_events = 0;
  double first_branch = std::numeric_limits<double>::infinity();  // +inf if none before t
  bool aborted = false;
};

/// Samples the event tables once so simulate_once does no setup work.
class Simulator {
 public:
  explicit Simulator(const BranchingModel& model, std::size_t cap = 10'000'000)
      : model_(&model), cap_(cap), alpha_(model.alpha()), lambda_(model.jump_rate()) {
    double acc = 0.0;
    for (const auto& ch : model.offspring()) {
      acc += ch.rate;
      branch_cdf_.push_back(acc);
      branch_k_.push_back(ch.k);
    }
    acc = 0.0;
    for (const auto& a : model.jumps()) {
      acc += a.rate;
      jump_cdf_.push_back(acc);
      jump_y_.push_back(a.y);
    }
  }

  [[nodiscard]] std::size_t cap() const { return cap_; }

  /// Exact in distribution: each particle runs an exponential clock of rate
  /// alpha + lambda and diffuses with variance 2 D per unit time in between.
  template <class Rng>
  SampleResult simulate_once(double t, Rng& rng) const {
    SampleResult r;
    const double total = alpha_ + lambda_;
    const double sd_rate = std::sqrt(2.0 * model_->diffusion());
    std::exponential_distribution<double> clock(total > 0.0 ? total : 1.0);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    stack_.clear();
    stack_.push_back({0.0, 0.0});
    while (!stack_.empty()) {
      auto [x, s] = stack_.back();
      stack_.pop_back();
      for (;;) {
        const double e = total > 0.0 ? clock(rng) : std::numeric_limits<double>::infinity();
        if (s + e >= t) {
          if (sd_rate > 0.0) x += sd_rate * std::sqrt(t - s) * normal(rng);
          r.x_max = std::max(r.x_max, x);
          break;
        }
        if (sd_rate > 0.0) x += sd_rate * std::sqrt(e) * normal(rng);
        s += e;
        const double pick = unif(rng) * total;
        if (pick < alpha_) {
          const auto c = static_cast<std::size_t>(std::upper_bound(branch_cdf_.begin(), branch_cdf_.end(), pick) -
                                                  branch_cdf_.begin());
          const int k = branch_k_[std::min(c, branch_k_.size() - 1)];
          if (r.branch_events == 0) r.first_branch = s;
          ++r.branch_events;
          r.population += static_cast<std::size_t>(k - 1);
          if (r.population > cap_) {
            r.aborted = true;
            return r;
          }
          for (int j = 1; j < k; ++j) stack_.push_back({x, s});
        } else {
          const double p = pick - alpha_;
          const auto c = static_cast<std::size_t>(std::upper_bound(jump_cdf_.begin(), jump_cdf_.end(), p) -
                                                  jump_cdf_.begin());
          x += jump_y_[std::min(c, jump_y_.size() - 1)];
        }
      }
    }
    return r;
  }

 private:
  struct Particle {
    double x;
    double s;
  };
  const BranchingModel* model_;
  std::size_t cap_;
  double alpha_, lambda_;
  std::vector<double> branch_cdf_, jump_cdf_, jump_y_;
  std::vector<int> branch_k_;
  mutable std::vector<Particle> stack_;
};

inline void check_horizon(const BranchingModel& m, double t, std::size_t cap) {
  if (!(t > 0.0)) throw ConfigError("simulation horizon must be positive");
  if (m.beta() * t > std::log(static_cast<double>(cap)))
    throw ConfigError("expected population e^{beta t} exceeds the cap " + std::to_string(cap));
}

/// Runs samples [0, n) split into contiguous blocks over `workers` threads and
/// hands each result to visit(index, result) from the owning thread.
template <class Visit>
void run_samples(const BranchingModel& m, double t, std::uint64_t n, std::uint64_t seed, unsigned workers,
                 std::size_t cap, Visit&& visit) {
  check_horizon(m, t, cap);
  if (n < 1) throw ConfigError("need at least one sample");
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::min<std::uint64_t>(n, 1024))));
  auto block = [&](unsigned w) {
    const Simulator sim(m, cap);
    const std::uint64_t lo = n * w / workers, hi = n * (w + 1) / workers;
    for (std::uint64_t i = lo; i < hi; ++i) {
      auto rng = sample_rng(seed, i);
      visit(w, i, sim.simulate_once(t, rng));
    }
  };
  if (workers == 1) {
    block(0);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(block, w);
  for (auto& th : pool) th.join();
}

/// All samples in index order.
inline std::vector<SampleResult> simulate_samples(const BranchingModel& m, double t, std::uint64_t n,
                                                  std::uint64_t seed, unsigned workers = 1,
                                                  std::size_t cap = 10'000'000) {
  std::vector<SampleResult> out(n);
  run_samples(m, t, n, seed, workers, cap,
              [&](unsigned, std::uint64_t i, const SampleResult& r) { out[i] = r; });
  return out;
}

struct CdfEstimate {
  double x = 0.0;
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::uint64_t n_eff = 0;
  std::uint64_t aborts = 0;
};

/// Proportions of samples with X_max < x and their binomial standard errors.
/// Counts are integers merged per worker, so the result does not depend on
/// the number of workers.
inline std::vector<CdfEstimate> estimate_cdf(const BranchingModel& m, double t, const std::vector<double>& xs,
                                             std::uint64_t n, std::uint64_t seed, unsigned workers = 1,
                                             std::size_t cap = 10'000'000) {
  const unsigned w = std::max(1u, workers);
  std::vector<std::vector<std::uint64_t>> below(w, std::vector<std::uint64_t>(xs.size(), 0));
  std::vector<std::uint64_t> aborts(w, 0);
  run_samples(m, t, n, seed, w, cap, [&](unsigned k, std::uint64_t, const SampleResult& r) {
    if (r.aborted) {
      ++aborts[k];
      return;
    }
    for (std::size_t j = 0; j < xs.size(); ++j)
      if (r.x_max < xs[j]) ++below[k][j];
  });
  std::uint64_t total_aborts = 0;
  for (auto a : aborts) total_aborts += a;
  if (static_cast<double>(total_aborts) > 1e-3 * static_cast<double>(n))
    throw ConvergenceError("estimate_cdf: " + std::to_string(total_aborts) +
                           " samples hit the population cap (more than 0.1%)");
  const std::uint64_t n_eff = n - total_aborts;
  std::vector<CdfEstimate> out;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    std::uint64_t c = 0;
    for (const auto& b : below) c += b[j];
    const double p = n_eff > 0 ? static_cast<double>(c) / static_cast<double>(n_eff) : 0.0;
    out.push_back({xs[j], p, std::sqrt(p * (1.0 - p) / static_cast<double>(std::max<std::uint64_t>(n_eff, 1))),
                   n_eff, total_aborts});
  }
  return out;
}

}  // namespace bbmld
