// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

// Theory versus fit comparison tables as CSV and JSON.
#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bbmld/analysis.hpp"
#include "bbmld/error.hpp"

namespace bbmld {

/// z = |fit - theory| / sqrt(err^2 + tol^2): each tolerance acts as a
/// systematic error floor for fits whose statistical error is negligible.
struct ReportOptions {
  double z_fail = 4.0;
  double psi_rel_tol = 0.0025;
  double theta_abs_tol = 0.025;
  double amp_rel_tol = 0.0375;
};

struct ReportRow {
  DeviationEstimate estimate;
  std::optional<double> z_psi, z_theta, z_amp;

  [[nodiscard]] bool comparable() const { return z_psi || z_theta || z_amp; }
  [[nodiscard]] double z_max() const {
    double z = 0.0;
    for (const auto& v : {z_psi, z_theta, z_amp})
      if (v) z = std::max(z, *v);
    return z;
  }
};

namespace detail {

inline std::optional<double> z_score(const Quantity& q, double tol) {
  if (!q.theory || !q.fit) return std::nullopt;
  const double scale = std::hypot(q.err, tol);
  const double d = std::abs(*q.fit - *q.theory);
  if (scale == 0.0) return d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return d / scale;
}

inline std::string fmt(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

inline nlohmann::json opt_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace detail

class Report {
 public:
  Report(std::span<const DeviationEstimate> estimates, ReportOptions opt = {}) : opt_(opt) {
    if (estimates.empty()) throw DomainError("report: no estimates");
    for (const auto& e : estimates) {
      ReportRow r{e, {}, {}, {}};
      if (e.psi.theory) r.z_psi = detail::z_score(e.psi, opt_.psi_rel_tol * std::abs(*e.psi.theory));
      r.z_theta = detail::z_score(e.theta, opt_.theta_abs_tol);
      if (e.amp.theory) r.z_amp = detail::z_score(e.amp, opt_.amp_rel_tol * std::abs(*e.amp.theory));
      rows_.push_back(std::move(r));
    }
  }

  [[nodiscard]] const std::vector<ReportRow>& rows() const { return rows_; }
  [[nodiscard]] const ReportOptions& options() const { return opt_; }

  /// Rows without any theory-fit pair are incomparable and never fail the report.
  [[nodiscard]] bool passed() const {
    return std::none_of(rows_.begin(), rows_.end(), [&](const ReportRow& r) { return r.z_max() > opt_.z_fail; });
  }
  [[nodiscard]] int exit_status() const { return passed() ? 0 : 1; }

  [[nodiscard]] std::string csv() const {
    std::string out =
        "c,regime,source,t_lo,t_hi,psi_theory,psi_fit,psi_err,z_psi,theta_theory,theta_fit,theta_err,z_theta,"
        "amp_theory,amp_fit,amp_err,z_amp,comparable\n";
    for (const auto& r : rows_) {
      const auto& e = r.estimate;
      out += detail::fmt(e.c) + ',' + to_string(e.regime) + ',' + e.source + ',' + detail::fmt(e.t_lo) + ',' +
             detail::fmt(e.t_hi);
      const std::array<std::pair<const Quantity*, std::optional<double>>, 3> qs{
          {{&e.psi, r.z_psi}, {&e.theta, r.z_theta}, {&e.amp, r.z_amp}}};
      for (const auto& [q, z] : qs)
        out += ',' + detail::fmt(q->theory) + ',' + detail::fmt(q->fit) + ',' +
               (q->fit ? detail::fmt(q->err) : std::string()) + ',' + detail::fmt(z);
      out += r.comparable() ? ",1\n" : ",0\n";
    }
    return out;
  }

  [[nodiscard]] nlohmann::json json() const {
    nlohmann::json rows = nlohmann::json::array();
    std::map<std::string, std::array<int, 2>> coverage;  // regime -> (rows, comparable rows)
    for (const auto& r : rows_) {
      const auto& e = r.estimate;
      auto q = [](const Quantity& x, std::optional<double> z) {
        return nlohmann::json{{"theory", detail::opt_json(x.theory)},
                              {"fit", detail::opt_json(x.fit)},
                              {"err", x.err},
                              {"z", detail::opt_json(z)}};
      };
      rows.push_back({{"c", e.c},
                      {"regime", to_string(e.regime)},
                      {"source", e.source},
                      {"t_window", {e.t_lo, e.t_hi}},
                      {"psi", q(e.psi, r.z_psi)},
                      {"theta", q(e.theta, r.z_theta)},
                      {"amplitude", q(e.amp, r.z_amp)},
                      {"comparable", r.comparable()}});
      auto& cov = coverage[to_string(e.regime)];
      ++cov[0];
      if (r.comparable()) ++cov[1];
    }
    nlohmann::json cov = nlohmann::json::object();
    for (const auto& [k, v] : coverage) cov[k] = {{"rows", v[0]}, {"comparable", v[1]}};
    return {{"rows", rows},
            {"coverage", cov},
            {"z_fail", opt_.z_fail},
            {"tolerances",
             {{"psi_rel", opt_.psi_rel_tol}, {"theta_abs", opt_.theta_abs_tol}, {"amp_rel", opt_.amp_rel_tol}}},
            {"passed", passed()}};
  }

 private:
  ReportOptions opt_;
  std::vector<ReportRow> rows_;
};

}  // namespace bbmld
