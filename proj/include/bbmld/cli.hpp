// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: model files, configuration precedence
// (flags > BBMLD_* environment > --config file), subcommands and exit codes.
#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bbmld/acceptance.hpp"
#include "bbmld/analysis.hpp"
#include "bbmld/error.hpp"
#include "bbmld/front.hpp"
#include "bbmld/mc.hpp"
#include "bbmld/model.hpp"
#include "bbmld/pde.hpp"
#include "bbmld/renewal.hpp"
#include "bbmld/report.hpp"
#include "bbmld/snapshot_io.hpp"
#include "bbmld/wave.hpp"

namespace bbmld::cli {

enum ExitCode : int { ok = 0, acceptance_failure = 1, config_error = 2, not_converged = 3 };

// ---------------------------------------------------------------------------
// Model files

namespace detail {

inline void only_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
      throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

inline double number(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  if (!j[key].is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return j[key].get<double>();
}

inline std::vector<double> numbers(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_array()) throw ConfigError(where + "." + key + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j[key]) {
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected an array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

/// Keys: diffusion (default 0), jumps (list of {y, rate} or {density_table:
/// {y: [...], density: [...]}}), offspring (list of {k, rate}, k >= 2), and an
/// optional name. Standard BBM is {"diffusion": 1, "offspring": [{"k": 2, "rate": 1}]}.
inline BranchingModel model_from_json(const nlohmann::json& j, const std::string& where = "model") {
  detail::only_keys(j, {"name", "diffusion", "jumps", "offspring"}, where);
  const double D = j.contains("diffusion") ? detail::number(j, "diffusion", where) : 0.0;
  std::vector<JumpAtom> jumps;
  if (j.contains("jumps")) {
    if (!j["jumps"].is_array()) throw ConfigError(where + ".jumps: expected a list");
    for (std::size_t i = 0; i < j["jumps"].size(); ++i) {
      const auto& e = j["jumps"][i];
      const std::string w = where + ".jumps[" + std::to_string(i) + "]";
      if (e.is_object() && e.contains("density_table")) {
        detail::only_keys(e, {"density_table"}, w);
        const auto& t = e["density_table"];
        detail::only_keys(t, {"y", "density"}, w + ".density_table");
        const auto ys = detail::numbers(t, "y", w + ".density_table");
        const auto ds = detail::numbers(t, "density", w + ".density_table");
        for (double d : ds)
          if (!(d >= 0.0)) throw ConfigError(w + ".density_table.density: values must be >= 0");
        const auto atoms = atoms_from_table(ys, ds);
        jumps.insert(jumps.end(), atoms.begin(), atoms.end());
      } else {
        detail::only_keys(e, {"y", "rate"}, w);
        jumps.push_back({detail::number(e, "y", w), detail::number(e, "rate", w)});
      }
    }
  }
  if (!j.contains("offspring") || !j["offspring"].is_array() || j["offspring"].empty())
    throw ConfigError(where + ".offspring: a nonempty list of {k, rate} is required");
  std::vector<OffspringChannel> off;
  for (std::size_t i = 0; i < j["offspring"].size(); ++i) {
    const auto& e = j["offspring"][i];
    const std::string w = where + ".offspring[" + std::to_string(i) + "]";
    detail::only_keys(e, {"k", "rate"}, w);
    if (!e.contains("k") || !e["k"].is_number_integer()) throw ConfigError(w + ".k: expected an integer");
    const int k = e["k"].get<int>();
    if (k < 2) throw ConfigError(w + ".k = " + std::to_string(k) + ": offspring numbers must satisfy k >= 2");
    off.push_back({k, detail::number(e, "rate", w)});
  }
  try {
    return BranchingModel(D, std::move(jumps), std::move(off));
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline BranchingModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j, path);
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// File-name friendly velocity tag, shared by `evolve` (writer) and `analyze` (reader).
inline std::string ray_file(double c) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "ray_%g.csv", c);
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << s;
}

inline std::string trace_csv(const std::vector<TracePoint>& tr, const char* header) {
  std::string s = std::string(header) + "\n";
  for (const auto& p : tr) s += fmt(p.t) + "," + fmt(p.value) + "\n";
  return s;
}

inline std::vector<TracePoint> read_trace_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open '" + p.string() + "'");
  std::vector<TracePoint> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("'" + p.string() + "': malformed line '" + line + "'");
    try {
      out.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    } catch (const std::exception&) {
      throw ConfigError("'" + p.string() + "': malformed line '" + line + "'");
    }
  }
  return out;
}

/// One JSON object per line on the log stream.
class Logger {
 public:
  Logger(std::ostream& os, bool quiet) : os_(&os), quiet_(quiet), start_(std::chrono::steady_clock::now()) {}
  void operator()(const std::string& level, const std::string& event, nlohmann::json fields = nlohmann::json::object()) const {
    if (quiet_ && level == "info") return;
    fields["level"] = level;
    fields["event"] = event;
    fields["elapsed_s"] =
        std::round(std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() * 1e3) / 1e3;
    *os_ << fields.dump() << "\n";
  }

 private:
  std::ostream* os_;
  bool quiet_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Subcommand settings

struct RatesArgs {
  std::string model, c_grid = "-4:4:81", out;
};
struct WaveArgs {
  std::string model, out;
  double zmin = -60.0, zmax = 30.0, h = 0.01, anchor = 0.5;
};
struct EvolveArgs {
  std::string model, out;
  double t_end = 10.0, dx = 0.05, dt = 0.01, sample_dt = 0.1, left_velocity = 0.0;
  std::vector<double> rays, dump_times;
};
struct RenewalArgs {
  std::string model, out;
  double t_max = 5.0, dx = 0.05, dt = 0.01, x_min = -40.0, x_max = 40.0;
  int store_every = 10;
};
struct AmplitudeArgs {
  std::string model, out;
  double c = 0.0, dx = 0.05, dt = 0.01, t_limit = 64.0;
};
struct McArgs {
  std::string model, out;
  double t = 1.0;
  std::vector<double> x;
  std::uint64_t n = 100000, seed = 1;
  unsigned workers = 1;
  std::size_t cap = 10'000'000;
};
struct AnalyzeArgs {
  std::string model, in, constants, out = "report", source = "pde";
  std::vector<double> c;
  std::optional<double> t_lo, amp_t_lo, t_hi;
  ReportOptions tol;
};
struct PipelineArgs {
  std::string model, out = "pipeline-out";
  bool dry_run = false;
  double t_front = 200.0, t_tail = 100.0, dx = 0.05, tail_dx = 0.025, dt = 0.01;
  std::uint64_t mc_n = 1'000'000, seed = 20260514;
  unsigned workers = 1;
};

/// Parses "a:b:n" into n evenly spaced values.
inline std::vector<double> parse_grid(const std::string& s) {
  double a = 0.0, b = 0.0;
  int n = 0;
  char extra = 0;
  if (std::sscanf(s.c_str(), "%lf:%lf:%d%c", &a, &b, &n, &extra) != 3 || n < 1 || (n == 1 && a != b))
    throw ConfigError("--c-grid: expected a:b:n with n >= 1, got '" + s + "'");
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(n == 1 ? a : a + (b - a) * i / (n - 1));
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_rates(const RatesArgs& a, std::ostream& out, const Logger& log) {
  const BranchingModel m = load_model(a.model);
  const FrontConstants fc = front_constants(m);
  const RateFunction rf(m);
  std::string csv = "c,regime,psi,theta,notes\n";
  for (double c : parse_grid(a.c_grid)) {
    const Regime r = regime_of(fc, c);
    const double p = psi(m, fc, c);
    std::string notes;
    if (std::isinf(p)) notes = "velocity not reachable by the free motion";
    else if (r == Regime::AboveVc) notes = "decay of 1-u";
    else if (std::abs(c - fc.w) < 1e-12) notes = "transition velocity W";
    const double theta = r == Regime::Intermediate ? fc.theta : -0.5;
    csv += fmt(c) + "," + to_string(r) + "," + fmt(p) + "," + fmt(theta) + "," + notes + "\n";
  }
  const nlohmann::json summary = {{"alpha", m.alpha()}, {"beta", m.beta()},   {"gamma_c", fc.gamma_c},
                                  {"v_c", fc.v_c},       {"eta", fc.eta},     {"W", fc.w},
                                  {"theta", fc.theta},   {"model", m.describe()}};
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(std::filesystem::path(a.out) / "rates.csv", csv);
    write_text(std::filesystem::path(a.out) / "rates.json", summary.dump(2) + "\n");
    out << summary.dump() << "\n";
  }
  log("info", "rates", summary);
  return ok;
}

inline int cmd_wave(const WaveArgs& a, std::ostream& out, const Logger& log) {
  const BranchingModel m = load_model(a.model);
  const FrontConstants fc = front_constants(m);
  WaveGridSpec spec;
  spec.z_min = a.zmin;
  spec.z_max = a.zmax;
  spec.h = a.h;
  spec.anchor = a.anchor;
  const WaveProfile p = solve_wave(m, fc, spec);
  const IdentityCheck chk = left_identity(p, m, fc);
  std::string csv = "z,F\n";
  for (std::size_t i = 0; i < p.size(); ++i) csv += fmt(p.z(i)) + "," + fmt(p.values[i]) + "\n";
  const nlohmann::json summary = {{"B", p.B},
                                  {"eta_fit", p.eta_fit},
                                  {"eta", fc.eta},
                                  {"residual", p.residual},
                                  {"identity_residual", chk.relative_residual},
                                  {"identity_tail_fraction", chk.tail_fraction},
                                  {"anchor", p.anchor}};
  write_text(std::filesystem::path(a.out) / "wave.csv", csv);
  write_text(std::filesystem::path(a.out) / "wave.json", summary.dump(2) + "\n");
  out << summary.dump() << "\n";
  log("info", "wave", summary);
  return ok;
}

inline int cmd_evolve(const EvolveArgs& a, std::ostream& out, const Logger& log) {
  const BranchingModel m = load_model(a.model);
  EvolveSpec es;
  es.t_end = a.t_end;
  es.dx = a.dx;
  es.dt = a.dt;
  es.sample_dt = a.sample_dt;
  es.left_velocity = a.left_velocity;
  const EvolveResult r = evolve(m, es, a.rays, a.dump_times);
  const std::filesystem::path dir(a.out);
  write_text(dir / "front.csv", trace_csv(r.front, "t,x_half"));
  for (std::size_t k = 0; k < a.rays.size(); ++k) write_text(dir / ray_file(a.rays[k]), trace_csv(r.rays[k], "t,logu"));
  nlohmann::json dumps = nlohmann::json::array();
  for (const auto& s : r.dumps) {
    char name[48];
    std::snprintf(name, sizeof name, "snapshot_t%g.bin", s.t);
    write_snapshot((dir / name).string(), s);
    dumps.push_back(name);
  }
  nlohmann::json summary = {{"t_end", a.t_end}, {"dx", a.dx}, {"dt", a.dt}, {"steps", r.steps},
                            {"max_stages", r.max_stages}, {"rays", a.rays}, {"dumps", dumps}};
  if (m.branching() && !r.front.empty() && r.front.back().t >= 40.0) {
    // Best effort: lattice walks have stepped fronts that the fit may reject.
    try {
      const FrontFit f = extract_A(r.front, lattice_front(m, a.dx));
      summary["A"] = f.A;
      summary["sigma_A"] = f.sigma_A;
    } catch (const ConvergenceError& e) {
      summary["A_error"] = e.what();
      log("warning", "evolve.front_fit", {{"message", e.what()}});
    }
  }
  write_text(dir / "evolve.json", summary.dump(2) + "\n");
  out << summary.dump() << "\n";
  log("info", "evolve", summary);
  return ok;
}

inline int cmd_renewal(const RenewalArgs& a, std::ostream& out, const Logger& log) {
  const BranchingModel m = load_model(a.model);
  RenewalSpec rs;
  rs.t_end = a.t_max;
  rs.dx = a.dx;
  rs.dt = a.dt;
  rs.x_min = a.x_min;
  rs.x_max = a.x_max;
  rs.store_every = a.store_every;
  const RenewalTable tab = solve_renewal(m, rs);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < tab.times(); ++k) {
    char name[48];
    std::snprintf(name, sizeof name, "renewal_%04zu.bin", k);
    write_snapshot((dir / name).string(), tab.snapshot(k));
  }
  const nlohmann::json summary = {{"times", tab.times()},       {"dt_store", tab.dt_store},
                                  {"points", tab.points()},     {"x_lo", tab.x_lo},
                                  {"dx", tab.dx},               {"max_correction", tab.max_correction}};
  write_text(dir / "renewal.json", summary.dump(2) + "\n");
  out << summary.dump() << "\n";
  log("info", "renewal", summary);
  return ok;
}

inline int cmd_amplitude(const AmplitudeArgs& a, std::ostream& out, const Logger& log) {
  const BranchingModel m = load_model(a.model);
  RenewalSpec rs;
  rs.dx = a.dx;
  rs.dt = a.dt;
  const BelowWAmplitude r = amplitude_below_W_adaptive(m, a.c, rs, 4.0, a.t_limit);
  const nlohmann::json rec = {
      {"c", r.c},
      {"bracket", r.bracket},
      {"tail_bound", r.tail_bound},
      {"first_term", r.first_term},
      {"integral", r.integral},
      {"t_star", r.t_star},
      {"prediction_coefficients", {{"psi", r.psi}, {"theta", r.theta}, {"amplitude", r.amplitude}}}};
  if (!a.out.empty()) write_text(a.out, rec.dump(2) + "\n");
  out << rec.dump() << "\n";
  log("info", "amplitude", rec);
  return ok;
}

inline int cmd_mc(const McArgs& a, std::ostream& out, const Logger& log) {
  const BranchingModel m = load_model(a.model);
  if (a.x.empty()) throw ConfigError("--x: at least one position is required");
  const auto est = estimate_cdf(m, a.t, a.x, a.n, a.seed, a.workers, a.cap);
  std::string csv = "x,estimate,stderr,n_eff,aborts\n";
  for (const auto& e : est)
    csv += fmt(e.x) + "," + fmt(e.estimate) + "," + fmt(e.stderr_) + "," + std::to_string(e.n_eff) + "," +
           std::to_string(e.aborts) + "\n";
  const nlohmann::json summary = {{"t", a.t}, {"n", a.n}, {"seed", a.seed}, {"workers", a.workers},
                                  {"aborts", est.front().aborts}};
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(std::filesystem::path(a.out) / "mc.csv", csv);
    write_text(std::filesystem::path(a.out) / "mc.json", summary.dump(2) + "\n");
    out << summary.dump() << "\n";
  }
  log("info", "mc", summary);
  return ok;
}

/// Constants file: {"A": .., "B": .., "bracket": {"<c>": ..}} (all optional).
inline int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, const Logger& log) {
  const BranchingModel m = load_model(a.model);
  const FrontConstants fc = front_constants(m);
  std::optional<double> A, B;
  std::map<double, double> brackets;
  if (!a.constants.empty()) {
    std::ifstream in(a.constants);
    if (!in) throw ConfigError("cannot open constants file '" + a.constants + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("constants file '" + a.constants + "' is not valid JSON: " + e.what());
    }
    detail::only_keys(j, {"A", "B", "bracket"}, a.constants);
    if (j.contains("A")) A = detail::number(j, "A", a.constants);
    if (j.contains("B")) B = detail::number(j, "B", a.constants);
    if (j.contains("bracket")) {
      if (!j["bracket"].is_object()) throw ConfigError(a.constants + ".bracket: expected {\"<c>\": value}");
      for (const auto& [k, v] : j["bracket"].items()) {
        if (!v.is_number()) throw ConfigError(a.constants + ".bracket." + k + ": expected a number");
        try {
          brackets[std::stod(k)] = v.get<double>();
        } catch (const std::exception&) {
          throw ConfigError(a.constants + ".bracket: key '" + k + "' is not a velocity");
        }
      }
    }
  }
  if (a.c.empty()) throw ConfigError("--c: at least one velocity is required");
  EstimateOptions eo;
  eo.t_lo = a.t_lo;
  eo.amp_t_lo = a.amp_t_lo;
  eo.t_hi = a.t_hi;
  std::vector<DeviationEstimate> rows;
  for (double c : a.c) {
    const Regime r = regime_of(fc, c);
    std::optional<double> bracket;
    for (const auto& [k, v] : brackets)
      if (std::abs(k - c) < 1e-9) bracket = v;
    Prediction p;
    p.c = c;
    p.regime = r;
    p.psi = psi(m, fc, c);
    p.theta = r == Regime::Intermediate ? fc.theta : -0.5;
    // Missing constants leave the amplitude theory empty (row partially incomparable).
    if ((r == Regime::Intermediate && A && B) || (r == Regime::BelowW && bracket))
      p = assemble_prediction(m, fc, c, A, B, bracket);
    auto series = read_trace_csv(std::filesystem::path(a.in) / ray_file(c));
    if (r == Regime::AboveVc)
      for (auto& s : series) s.value = std::log(-std::expm1(s.value));
    DeviationEstimate e = estimate_deviation(p, series, eo, a.source);
    if (!p.amplitude) e.amp = {};
    check_estimate(fc, e);
    rows.push_back(e);
  }
  const Report rep(rows, a.tol);
  write_text(a.out + ".csv", rep.csv());
  write_text(a.out + ".json", rep.json().dump(2) + "\n");
  out << rep.csv();
  log(rep.passed() ? "info" : "error", "analyze", {{"rows", rows.size()}, {"passed", rep.passed()}});
  return rep.exit_status();
}

/// rates -> wave -> evolve -> renewal -> mc -> analyze, then the acceptance rows.
inline int cmd_pipeline(const PipelineArgs& a, std::ostream& out, const Logger& log) {
  const BranchingModel m = a.model.empty() ? BranchingModel::bbm(2) : load_model(a.model);
  const std::vector<std::string> stages{"rates", "wave", "evolve", "renewal", "mc", "analyze"};
  if (a.dry_run) {
    for (const auto& s : stages) out << "plan " << s << "\n";
    log("info", "pipeline.plan", {{"stages", stages}, {"out", a.out}});
    return ok;
  }
  const FrontConstants fc = front_constants(m);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  std::vector<Criterion> rows;
  auto stage = [&](const std::string& name) { log("info", "pipeline.stage", {{"stage", name}}); };

  stage("rates");
  if (const auto k = bbm_arity(m)) rows.push_back(check_closed_forms({*k}));
  rows.push_back(check_psi_regression(m));
  rows.push_back(check_root_identity({{"model", m}}));

  stage("wave");
  rows.push_back(check_appendix_identity({{"model", m}}));
  const double B = solve_wave(m, fc, WaveGridSpec{}).B;

  stage("evolve");
  const auto k = bbm_arity(m);
  const double c_mid = k == 2 ? 0.0 : 0.5 * (fc.w + fc.v_c);
  const double c_low = k == 2 ? -3.0 : fc.w - 0.75 * (fc.v_c - fc.w);
  FrontRunSpec fs;
  fs.t_end = a.t_front;
  fs.dx = a.dx;
  fs.dt = a.dt;
  fs.rays = {c_mid};
  const FrontRun run = run_front(m, fs);
  rows.push_back(check_bramson(run));
  const FrontFit front = extract_A(run.traces.at(0.5), run.lattice);
  const auto low_ray = ray_series(m, c_low, a.t_tail, a.tail_dx, a.dt);
  write_text(dir / "front.csv", trace_csv(run.traces.at(0.5), "t,x_half"));
  write_text(dir / ray_file(c_mid), trace_csv(run.rays.at(c_mid), "t,logu"));
  write_text(dir / ray_file(c_low), trace_csv(low_ray, "t,logu"));

  stage("renewal");
  const BelowWAmplitude bw = amplitude_below_W_adaptive(m, c_low, RenewalSpec{});

  stage("mc");
  TriangleSpec ts;
  ts.n = a.mc_n;
  ts.seed = a.seed;
  ts.workers = a.workers;
  rows.push_back(check_oracle_triangle(m, ts));

  stage("analyze");
  const Prediction p_mid = assemble_prediction(m, fc, c_mid, front.A, B, std::nullopt);
  const Prediction p_low = assemble_prediction(m, fc, c_low, std::nullopt, std::nullopt, bw.bracket);
  rows.push_back(check_tail("intermediate tail", p_mid, run.rays.at(c_mid), a.t_tail, {0.01, 0.10, 0.15}));
  rows.push_back(check_tail("below-W tail", p_low, low_ray, a.t_tail, {0.01, 0.1, 0.10}));
  rows.push_back(check_normalization(m, run, c_mid));
  EstimateOptions eo;
  eo.t_hi = a.t_tail;
  const std::vector<DeviationEstimate> est{estimate_deviation(p_mid, run.rays.at(c_mid), eo),
                                           estimate_deviation(p_low, low_ray, eo)};
  const Report rep(est);
  write_text(dir / "report.csv", rep.csv());
  write_text(dir / "report.json", rep.json().dump(2) + "\n");
  write_text(dir / "constants.json",
             nlohmann::json{{"A", front.A}, {"B", B}, {"bracket", {{fmt(c_low), bw.bracket}}}}.dump(2) + "\n");

  nlohmann::json acc = nlohmann::json::array();
  bool all = rep.passed();
  for (const auto& r : rows) {
    out << r.line() << "\n";
    acc.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}, {"values", r.values}});
    all = all && r.passed;
  }
  out << (rep.passed() ? "PASS" : "FAIL") << " analyze report: " << est.size() << " rays, z_fail "
      << rep.options().z_fail << "\n";
  write_text(dir / "acceptance.json", nlohmann::json{{"criteria", acc}, {"report_passed", rep.passed()}, {"passed", all}}.dump(2) + "\n");
  log(all ? "info" : "error", "pipeline.done", {{"passed", all}});
  return all ? ok : acceptance_failure;
}

// ---------------------------------------------------------------------------
// Entry point

/// Adds an option that can also come from BBMLD_<NAME> or the config file.
template <class T>
CLI::Option* option(CLI::App* app, const std::string& flag, T& var, const std::string& help) {
  std::string env = "BBMLD_";
  for (char ch : flag.substr(2)) env += ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return app->add_option(flag, var, help)->envname(env);
}

/// CLI11 lets the config file shadow the environment; re-apply BBMLD_* values
/// for options not given as flags so that flags > env > file.
inline void apply_env_over_config(const CLI::App& sub, int argc, const char* const* argv) {
  for (const CLI::Option* copt : sub.get_options()) {
    auto* opt = const_cast<CLI::Option*>(copt);
    const std::string& env = opt->get_envname();
    if (env.empty()) continue;
    const char* value = std::getenv(env.c_str());
    if (value == nullptr || *value == '\0') continue;
    bool on_command_line = false;
    for (const auto& name : opt->get_lnames()) {
      const std::string flag = "--" + name;
      for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == flag || a.rfind(flag + "=", 0) == 0) on_command_line = true;
      }
    }
    if (on_command_line) continue;
    opt->clear();
    opt->add_result(value);
    try {
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw ConfigError(env + ": " + e.what());
    }
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Large deviations of the rightmost particle in branching random walks"};
  app.set_config("--config", "", "TOML/INI file with per-subcommand sections (flags > BBMLD_* env > file)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  RatesArgs ra;
  auto* rates = app.add_subcommand("rates", "Front constants and psi, theta on a velocity grid (CSV)");
  option(rates, "--model", ra.model, "Model file (JSON)")->required();
  option(rates, "--c-grid", ra.c_grid, "Velocity grid a:b:n");
  option(rates, "--out", ra.out, "Directory for rates.csv and rates.json (default: CSV to stdout)");

  WaveArgs wa;
  auto* wave = app.add_subcommand("wave", "Travelling-wave profile and its left-tail amplitude B");
  option(wave, "--model", wa.model, "Model file (JSON)")->required();
  option(wave, "--zmin", wa.zmin, "Left end of the grid");
  option(wave, "--zmax", wa.zmax, "Right end of the grid");
  option(wave, "--step", wa.h, "Grid spacing");
  option(wave, "--anchor", wa.anchor, "Normalization F(0)");
  option(wave, "--out", wa.out, "Output directory")->required();

  EvolveArgs ea;
  auto* ev = app.add_subcommand("evolve", "Log-domain evolution of u(x, t) = P(X_max(t) < x)");
  option(ev, "--model", ea.model, "Model file (JSON)")->required();
  option(ev, "--t-end", ea.t_end, "Final time");
  option(ev, "--dx", ea.dx, "Grid spacing");
  option(ev, "--dt", ea.dt, "Time step");
  option(ev, "--sample-dt", ea.sample_dt, "Sampling interval of the front and rays");
  option(ev, "--left-velocity", ea.left_velocity, "Left window edge moves at this velocity");
  option(ev, "--rays", ea.rays, "Velocities c of the rays x = c t")->delimiter(',');
  option(ev, "--dump-times", ea.dump_times, "Times of binary snapshot dumps")->delimiter(',');
  option(ev, "--out", ea.out, "Output directory")->required();

  RenewalArgs rna;
  auto* ren = app.add_subcommand("renewal", "Renewal-equation solution table");
  option(ren, "--model", rna.model, "Model file (JSON)")->required();
  option(ren, "--t-max", rna.t_max, "Final time");
  option(ren, "--dx", rna.dx, "Grid spacing");
  option(ren, "--dt", rna.dt, "Time step");
  option(ren, "--x-min", rna.x_min, "Left end of the grid");
  option(ren, "--x-max", rna.x_max, "Right end of the grid");
  option(ren, "--store-every", rna.store_every, "Store every n-th step");
  option(ren, "--out", rna.out, "Output directory")->required();

  AmplitudeArgs aa;
  auto* amp = app.add_subcommand("amplitude", "Below-W prefactor bracket from the renewal solution (JSON)");
  option(amp, "--model", aa.model, "Model file (JSON)")->required();
  option(amp, "--c", aa.c, "Velocity below W")->required();
  option(amp, "--dx", aa.dx, "Grid spacing");
  option(amp, "--dt", aa.dt, "Time step");
  option(amp, "--t-limit", aa.t_limit, "Largest horizon tried");
  option(amp, "--out", aa.out, "Also write the record to this file");

  McArgs ma;
  auto* mc = app.add_subcommand("mc", "Monte Carlo estimate of P(X_max(t) < x)");
  option(mc, "--model", ma.model, "Model file (JSON)")->required();
  option(mc, "--t", ma.t, "Time");
  option(mc, "--x", ma.x, "Positions")->delimiter(',')->required();
  option(mc, "--n", ma.n, "Number of samples");
  option(mc, "--seed", ma.seed, "Seed");
  option(mc, "--workers", ma.workers, "Worker threads");
  option(mc, "--cap", ma.cap, "Population cap per sample");
  option(mc, "--out", ma.out, "Directory for mc.csv and mc.json (default: CSV to stdout)");

  AnalyzeArgs an;
  double z_fail = an.tol.z_fail, psi_tol = an.tol.psi_rel_tol, theta_tol = an.tol.theta_abs_tol,
         amp_tol = an.tol.amp_rel_tol;
  std::optional<double> t_lo, amp_t_lo, t_hi;
  auto* ana = app.add_subcommand("analyze", "Fit rays written by evolve and compare with theory");
  option(ana, "--model", an.model, "Model file (JSON)")->required();
  option(ana, "--in", an.in, "Directory with ray_<c>.csv files")->required();
  option(ana, "--c", an.c, "Velocities to analyze")->delimiter(',')->required();
  option(ana, "--constants", an.constants, "JSON with A, B and below-W brackets");
  option(ana, "--out", an.out, "Report path prefix (writes .csv and .json)");
  option(ana, "--source", an.source, "pde, renewal or mc")->check(CLI::IsMember({"pde", "renewal", "mc"}));
  option(ana, "--t-lo", t_lo, "Start of the psi and theta window (default T/10)");
  option(ana, "--amp-t-lo", amp_t_lo, "Start of the amplitude window (default T/5)");
  option(ana, "--t-hi", t_hi, "End of the windows (default: last sample)");
  option(ana, "--z-fail", z_fail, "z-score above which the report fails");
  option(ana, "--psi-tol", psi_tol, "Relative psi tolerance floor");
  option(ana, "--theta-tol", theta_tol, "Absolute theta tolerance floor");
  option(ana, "--amp-tol", amp_tol, "Relative amplitude tolerance floor");

  PipelineArgs pa;
  auto* pipe = app.add_subcommand("pipeline", "Full validation run with the acceptance report");
  option(pipe, "--model", pa.model, "Model file (default: binary BBM)");
  option(pipe, "--out", pa.out, "Output directory");
  pipe->add_flag("--dry-run", pa.dry_run, "List the stages without running them");
  option(pipe, "--t-front", pa.t_front, "Horizon of the front run");
  option(pipe, "--t-tail", pa.t_tail, "Horizon of the tail fits");
  option(pipe, "--dx", pa.dx, "Grid spacing of the front run");
  option(pipe, "--tail-dx", pa.tail_dx, "Grid spacing of the below-W ray run");
  option(pipe, "--dt", pa.dt, "Time step");
  option(pipe, "--mc-n", pa.mc_n, "Monte Carlo samples");
  option(pipe, "--seed", pa.seed, "Monte Carlo seed");
  option(pipe, "--workers", pa.workers, "Monte Carlo worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return config_error;
  }

  const Logger log(err, quiet);
  try {
    for (const CLI::App* sub : app.get_subcommands()) apply_env_over_config(*sub, argc, argv);
    if (*rates) return cmd_rates(ra, out, log);
    if (*wave) return cmd_wave(wa, out, log);
    if (*ev) return cmd_evolve(ea, out, log);
    if (*ren) return cmd_renewal(rna, out, log);
    if (*amp) return cmd_amplitude(aa, out, log);
    if (*mc) return cmd_mc(ma, out, log);
    if (*ana) {
      an.tol = {z_fail, psi_tol, theta_tol, amp_tol};
      an.t_lo = t_lo;
      an.amp_t_lo = amp_t_lo;
      an.t_hi = t_hi;
      return cmd_analyze(an, out, log);
    }
    if (*pipe) return cmd_pipeline(pa, out, log);
  } catch (const ConfigError& e) {
    log("error", "config", {{"message", e.what()}});
    return config_error;
  } catch (const DomainError& e) {
    log("error", "domain", {{"message", e.what()}});
    return config_error;
  } catch (const ConvergenceError& e) {
    log("error", "convergence", {{"message", e.what()}});
    return not_converged;
  } catch (const std::filesystem::filesystem_error& e) {
    log("error", "io", {{"message", e.what()}});
    return config_error;
  }
  return config_error;
}

}  // namespace bbmld::cli
