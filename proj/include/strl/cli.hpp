#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "strl/delay_planner.hpp"
#include "strl/error.hpp"
#include "strl/estimator.hpp"
#include "strl/io.hpp"
#include "strl/nuisance.hpp"
#include "strl/sensitivity.hpp"
#include "strl/sim.hpp"

namespace strl {

inline constexpr const char* kOutputDirEnv = "STRL_OUTPUT_DIR";

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_io = 2, exit_numerical = 3, exit_golden = 4 };

inline int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::io: return exit_io;
    case ErrorKind::numerical:
    case ErrorKind::convergence: return exit_numerical;
    case ErrorKind::golden_mismatch: return exit_golden;
    default: return exit_validation;
  }
}

struct EstimateBlock {
  double eps10 = 0.0;
  double eps01 = 0.0;
  std::string audit_path;  // when set, eps comes from the audit sample
  std::string mu_link = "logit";
  std::string learner_link = "logit";
  bool shrinkage = true;
  PositivityFloors floors;
  double clamp_hi = 1.0 - 1e-6;
  double critical_eps = 0.001;
  bool compute_labels = true;
  bool clip_pseudo_outcomes = false;
  bool with_oracle = false;
  MisspecPlan misspec;
};

struct DelayBlock {
  std::string preset;  // typical | fastdrift | realtime | empty
  NetworkParams network;
  double zeta = 0.05;
  double eps_b = 0.005;
  std::string convention = "model";
  std::size_t curve_points = 101;
  bool paper_examples = false;
  std::string golden_dir;
};

struct SensitivityBlock {
  std::vector<std::string> checks = {"balance", "overlap", "auc"};
  std::vector<double> gamma_grid = {1.0, 1.25, 1.5, 2.0};
  std::vector<std::pair<double, double>> eps_grid;
  std::vector<double> windows;
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 1;
  std::size_t k = 5;
  double alpha = 0.05;
  std::string output_dir;
  std::string records_path;
  std::string truth_path;
  std::string sim_preset;  // example1 | selective | uncensored | empty
  SimConfig sim;
  EstimateBlock estimate;
  DelayBlock delay;
  SensitivityBlock sensitivity;
};

// ---------------------------------------------------------------- presets

inline SimConfig sim_preset(const std::string& name, std::optional<std::size_t> n = std::nullopt) {
  if (name == "example1") return n ? preset_example1(*n) : preset_example1();
  if (name == "selective") return preset_selective(n.value_or(100000));
  if (name == "uncensored") return preset_uncensored(n.value_or(100000));
  throw ConfigError("unknown sim preset '" + name + "'");
}

inline std::optional<PaperExample> delay_preset(const std::string& name) {
  for (const auto& ex : paper_examples())
    if (ex.name == name) return ex;
  return std::nullopt;
}

// ---------------------------------------------------------------- RunConfig JSON

inline bool operator==(const NetworkParams& a, const NetworkParams& b) {
  return a.pi == b.pi && a.e_bar == b.e_bar && a.r_bar == b.r_bar && a.gamma == b.gamma &&
         a.eta == b.eta && a.nu == b.nu && a.n == b.n && a.curve.lambda == b.curve.lambda &&
         a.curve.beta == b.curve.beta && a.curve.p_inf == b.curve.p_inf;
}

inline Json misspec_to_json(const MisspecPlan& m) {
  return {{"break_e", m.break_e},     {"break_r", m.break_r},     {"break_p", m.break_p},
          {"break_mu0", m.break_mu0}, {"break_mu1", m.break_mu1}, {"break_mu2", m.break_mu2}};
}

inline MisspecPlan misspec_from_json(const Json& j) {
  detail::reject_unknown(j, {"break_e", "break_r", "break_p", "break_mu0", "break_mu1", "break_mu2"},
                         "estimate.misspec");
  MisspecPlan m;
  m.break_e = detail::get_or(j, "break_e", false);
  m.break_r = detail::get_or(j, "break_r", false);
  m.break_p = detail::get_or(j, "break_p", false);
  m.break_mu0 = detail::get_or(j, "break_mu0", false);
  m.break_mu1 = detail::get_or(j, "break_mu1", false);
  m.break_mu2 = detail::get_or(j, "break_mu2", false);
  return m;
}

inline Json to_json(const RunConfig& c) {
  Json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["k"] = c.k;
  j["alpha"] = c.alpha;
  j["output_dir"] = c.output_dir;
  j["records_path"] = c.records_path;
  j["truth_path"] = c.truth_path;
  j["sim_preset"] = c.sim_preset;
  j["sim"] = to_json(c.sim);
  const auto& e = c.estimate;
  j["estimate"] = {{"eps10", e.eps10},
                   {"eps01", e.eps01},
                   {"audit_path", e.audit_path},
                   {"mu_link", e.mu_link},
                   {"learner_link", e.learner_link},
                   {"shrinkage", e.shrinkage},
                   {"floors", floors_to_json(e.floors)},
                   {"clamp_hi", e.clamp_hi},
                   {"critical_eps", e.critical_eps},
                   {"compute_labels", e.compute_labels},
                   {"clip_pseudo_outcomes", e.clip_pseudo_outcomes},
                   {"with_oracle", e.with_oracle},
                   {"misspec", misspec_to_json(e.misspec)}};
  const auto& d = c.delay;
  j["delay"] = {{"preset", d.preset},
                {"network", to_json(d.network)},
                {"zeta", d.zeta},
                {"eps_b", d.eps_b},
                {"convention", d.convention},
                {"curve_points", d.curve_points},
                {"paper_examples", d.paper_examples},
                {"golden_dir", d.golden_dir}};
  Json grid = Json::array();
  for (const auto& [a, b] : c.sensitivity.eps_grid) grid.push_back({a, b});
  j["sensitivity"] = {{"checks", c.sensitivity.checks},
                      {"gamma_grid", c.sensitivity.gamma_grid},
                      {"eps_grid", grid},
                      {"windows", c.sensitivity.windows}};
  return j;
}

/// Reads a RunConfig. Presets are applied first, then explicit fields.
inline RunConfig run_config_from_json(const Json& j, RunConfig c = {}) {
  using detail::get_or;
  detail::reject_unknown(j,
                         {"command", "seed", "k", "alpha", "output_dir", "records_path",
                          "truth_path", "sim_preset", "sim", "estimate", "delay", "sensitivity"},
                         "config");
  c.command = get_or(j, "command", c.command);
  c.seed = get_or(j, "seed", c.seed);
  c.k = get_or(j, "k", c.k);
  c.alpha = get_or(j, "alpha", c.alpha);
  c.output_dir = get_or(j, "output_dir", c.output_dir);
  c.records_path = get_or(j, "records_path", c.records_path);
  c.truth_path = get_or(j, "truth_path", c.truth_path);
  c.sim_preset = get_or(j, "sim_preset", c.sim_preset);
  if (!c.sim_preset.empty()) c.sim = sim_preset(c.sim_preset);
  if (j.contains("sim")) c.sim = sim_config_from_json(j.at("sim"), c.sim);
  if (j.contains("estimate")) {
    const auto& e = j.at("estimate");
    detail::reject_unknown(e,
                           {"eps10", "eps01", "audit_path", "mu_link", "learner_link", "shrinkage",
                            "floors", "clamp_hi", "critical_eps", "compute_labels",
                            "clip_pseudo_outcomes", "with_oracle", "misspec"},
                           "estimate");
    auto& b = c.estimate;
    b.eps10 = get_or(e, "eps10", b.eps10);
    b.eps01 = get_or(e, "eps01", b.eps01);
    b.audit_path = get_or(e, "audit_path", b.audit_path);
    b.mu_link = get_or(e, "mu_link", b.mu_link);
    b.learner_link = get_or(e, "learner_link", b.learner_link);
    b.shrinkage = get_or(e, "shrinkage", b.shrinkage);
    if (e.contains("floors")) b.floors = floors_from_json(e.at("floors"), b.floors);
    b.clamp_hi = get_or(e, "clamp_hi", b.clamp_hi);
    b.critical_eps = get_or(e, "critical_eps", b.critical_eps);
    b.compute_labels = get_or(e, "compute_labels", b.compute_labels);
    b.clip_pseudo_outcomes = get_or(e, "clip_pseudo_outcomes", b.clip_pseudo_outcomes);
    b.with_oracle = get_or(e, "with_oracle", b.with_oracle);
    if (e.contains("misspec")) b.misspec = misspec_from_json(e.at("misspec"));
  }
  if (j.contains("delay")) {
    const auto& d = j.at("delay");
    detail::reject_unknown(d,
                           {"preset", "network", "zeta", "eps_b", "convention", "curve_points",
                            "paper_examples", "golden_dir"},
                           "delay");
    auto& b = c.delay;
    b.preset = get_or(d, "preset", b.preset);
    if (!b.preset.empty()) {
      const auto ex = delay_preset(b.preset);
      if (!ex) throw ConfigError("unknown delay preset '" + b.preset + "'");
      b.network = ex->params;
      b.zeta = ex->zeta;
      b.eps_b = ex->eps_b;
    }
    if (d.contains("network")) b.network = network_from_json(d.at("network"), b.network);
    b.zeta = get_or(d, "zeta", b.zeta);
    b.eps_b = get_or(d, "eps_b", b.eps_b);
    b.convention = get_or(d, "convention", b.convention);
    b.curve_points = get_or(d, "curve_points", b.curve_points);
    b.paper_examples = get_or(d, "paper_examples", b.paper_examples);
    b.golden_dir = get_or(d, "golden_dir", b.golden_dir);
  }
  if (j.contains("sensitivity")) {
    const auto& s = j.at("sensitivity");
    detail::reject_unknown(s, {"checks", "gamma_grid", "eps_grid", "windows"}, "sensitivity");
    auto& b = c.sensitivity;
    b.checks = get_or(s, "checks", b.checks);
    b.gamma_grid = get_or(s, "gamma_grid", b.gamma_grid);
    if (s.contains("eps_grid")) {
      b.eps_grid.clear();
      for (const auto& p : s.at("eps_grid")) {
        if (!p.is_array() || p.size() != 2) throw ConfigError("eps_grid entries must be pairs");
        b.eps_grid.emplace_back(p[0].get<double>(), p[1].get<double>());
      }
    }
    b.windows = get_or(s, "windows", b.windows);
  }
  return c;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return to_json(a) == to_json(b);
}

inline bool wants(const RunConfig& c, const char* check) {
  for (const auto& s : c.sensitivity.checks)
    if (s == check) return true;
  return false;
}

/// Checks numeric fields before any command runs.
inline void validate_run_config(const RunConfig& c) {
  static const char* commands[] = {"simulate", "fit", "estimate", "plan-delay", "diagnose"};
  bool known = false;
  for (const char* k : commands) known = known || c.command == k;
  if (!known) throw ConfigError("unknown command '" + c.command + "'");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (c.k < 2) throw ConfigError("k must be at least 2");
  const auto& e = c.estimate;
  if (!(e.eps10 >= 0.0 && e.eps01 >= 0.0 && e.eps10 + e.eps01 < 1.0))
    throw ConfigError("estimate eps must be non-negative with eps10 + eps01 < 1");
  (void)parse_link(e.mu_link);
  (void)parse_link(e.learner_link);
  for (double f : {e.floors.e_min, e.floors.r_min, e.floors.p_min})
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("floors must lie in (0,1)");
  if (!(e.clamp_hi > 0.0 && e.clamp_hi <= 1.0)) throw ConfigError("clamp_hi must lie in (0,1]");
  if (!(e.critical_eps > 0.0)) throw ConfigError("critical_eps must be positive");
  if (c.command == "simulate") c.sim.validate();
  if (c.command == "diagnose") {
    // The simulator config is used only when a check re-simulates.
    const bool resim = c.records_path.empty() || wants(c, "tilt") || wants(c, "windows");
    if (resim) c.sim.validate();
  }
  if (c.command == "plan-delay" && !c.delay.paper_examples) {
    c.delay.network.validate();
    if (c.delay.convention != "model" && c.delay.convention != "marginal")
      throw ConfigError("delay convention must be 'model' or 'marginal'");
    if (!(c.delay.zeta > 0.0) || !(c.delay.eps_b > 0.0))
      throw ConfigError("zeta and eps_b must be positive");
  }
  for (double g : c.sensitivity.gamma_grid)
    if (!(g >= 1.0)) throw ConfigError("gamma grid values must be >= 1");
  SensitivityParams{1.0, 1.0, c.sensitivity.eps_grid}.validate();
  static const char* checks[] = {"balance", "overlap", "auc", "sweep", "tilt", "windows"};
  for (const auto& ch : c.sensitivity.checks) {
    bool ok = false;
    for (const char* k : checks) ok = ok || ch == k;
    if (!ok) throw ConfigError("unknown diagnostic check '" + ch + "'");
  }
}

inline AlgorithmConfig algorithm_config(const RunConfig& c) {
  AlgorithmConfig a;
  a.k = c.k;
  a.alpha = c.alpha;
  a.seed = c.seed;
  a.critical_eps = c.estimate.critical_eps;
  a.compute_labels = c.estimate.compute_labels;
  a.clip_pseudo_outcomes = c.estimate.clip_pseudo_outcomes;
  a.learner.link = parse_link(c.estimate.learner_link);
  a.nuisance.floors = c.estimate.floors;
  a.nuisance.clamp_hi = c.estimate.clamp_hi;
  a.nuisance.mu_link = parse_link(c.estimate.mu_link);
  a.nuisance.shrinkage = c.estimate.shrinkage;
  a.nuisance.misspec = c.estimate.misspec;
  if (!c.estimate.audit_path.empty())
    a.eps_source = AuditSample{read_audit_csv(c.estimate.audit_path)};
  else
    a.eps_source = KnownEps{c.estimate.eps10, c.estimate.eps01};
  return a;
}

// ---------------------------------------------------------------- commands

/// Timings live in their own file so the primary outputs stay byte-stable.
class Timings {
 public:
  void mark(const std::string& label) {
    const auto now = std::chrono::steady_clock::now();
    entries_.emplace_back(label, std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }
  Json to_json() const {
    Json j = Json::object();
    for (const auto& [k, v] : entries_) j[k] = v;
    return j;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> entries_;
};

inline std::filesystem::path resolve_output_dir(const RunConfig& c) {
  std::filesystem::path dir = c.output_dir;
  if (dir.empty()) {
    const char* env = std::getenv(kOutputDirEnv);
    dir = env && *env ? env : ".";
  }
  if (!std::filesystem::is_directory(dir)) throw IoError("output directory does not exist: " + dir.string());
  return dir;
}

inline Json report_document(const RunConfig& c) {
  return {{"tool", "strl"}, {"version", kToolVersion}, {"config", to_json(c)}};
}

struct CommandResult {
  int exit_code = exit_ok;
  std::vector<std::filesystem::path> written;
  std::string message;
};

inline CommandResult cmd_simulate(const RunConfig& c) {
  const auto dir = resolve_output_dir(c);
  Timings tm;
  const auto pop = generate_population(c.sim);
  tm.mark("simulate");
  CommandResult r;
  write_records_csv(dir / "records.csv", pop.records);
  write_truth_csv(dir / "truth.csv", pop.records, pop.truth);
  write_json(dir / "config.json", to_json(c.sim));
  tm.mark("write");
  write_json(dir / "timings.json", tm.to_json());
  r.written = {dir / "records.csv", dir / "truth.csv", dir / "config.json"};
  r.message = "simulated " + std::to_string(pop.records.size()) + " records, psi_true=" +
              fmt_double(pop.truth.psi_true);
  return r;
}

inline Dataset load_records(const RunConfig& c) {
  if (c.records_path.empty()) throw ConfigError("records_path is required");
  return read_records_csv(c.records_path);
}

inline CommandResult cmd_fit(const RunConfig& c) {
  const auto dir = resolve_output_dir(c);
  Timings tm;
  const auto ds = load_records(c);
  tm.mark("read");
  const auto a = algorithm_config(c);
  CrossfitOptions co;
  co.k = a.k;
  co.seed = a.seed;
  co.nuisance = a.nuisance;
  if (const auto* k = std::get_if<KnownEps>(&a.eps_source)) {
    co.eps10 = k->eps10;
    co.eps01 = k->eps01;
  } else {
    std::tie(co.eps10, co.eps01) = estimate_corruption_from_audit(std::get<AuditSample>(a.eps_source));
  }
  const auto cf = crossfit_nuisances(ds, co);
  tm.mark("fit");
  write_json(dir / "nuisances.json", to_json(cf));
  write_text(dir / "pools.csv", pools_csv(cf));
  write_json(dir / "timings.json", tm.to_json());
  CommandResult r;
  r.written = {dir / "nuisances.json", dir / "pools.csv"};
  r.message = "fitted " + std::to_string(cf.sets.size()) + " nuisance sets";
  return r;
}

inline CommandResult cmd_estimate(const RunConfig& c) {
  const auto dir = resolve_output_dir(c);
  Timings tm;
  const auto ds = load_records(c);
  tm.mark("read");
  std::optional<PopulationTruth> truth;
  if (c.estimate.with_oracle) {
    if (c.truth_path.empty()) throw ConfigError("--with-oracle needs truth_path");
    truth = read_truth_csv(c.truth_path, c.estimate.eps10, c.estimate.eps01);
    if (truth->size() != ds.size()) throw DataIntegrityError("truth and records differ in length");
  }
  const auto res = run_algorithm_1(ds, algorithm_config(c));
  tm.mark("estimate");
  EstimateReport rep = res.report;
  if (truth) attach_oracle(rep, *truth, res.eps10, res.eps01);
  Json doc = report_document(c);
  doc["estimate"] = to_json(rep);
  doc["eps10_used"] = res.eps10;
  doc["eps01_used"] = res.eps01;
  if (truth) doc["psi_true"] = truth->psi_true;
  write_json(dir / "report.json", doc);
  {
    auto f = detail::open_out(dir / "scored.csv");
    write_scored_csv(f, res.scored, res.labels ? &res.labels->labels : nullptr);
  }
  tm.mark("write");
  write_json(dir / "timings.json", tm.to_json());
  CommandResult r;
  r.written = {dir / "report.json", dir / "scored.csv"};
  r.message = "psi_hat=" + fmt_double(rep.psi_hat) + " CI=[" + fmt_double(rep.ci_lo) + ", " +
              fmt_double(rep.ci_hi) + "]";
  return r;
}

/// Writes one table per worked example and, when a golden directory is
/// given, compares byte for byte.
inline CommandResult cmd_paper_examples(const RunConfig& c, const std::filesystem::path& dir) {
  CommandResult r;
  std::vector<std::string> mismatched;
  for (const auto& row : reproduce_paper_examples()) {
    const auto text = format_example_table(row);
    const auto path = dir / ("paper_example_" + row.name + ".csv");
    write_text(path, text);
    r.written.push_back(path);
    if (!c.delay.golden_dir.empty()) {
      const auto golden = std::filesystem::path(c.delay.golden_dir) / ("paper_example_" + row.name + ".csv");
      if (read_text(golden) != text) mismatched.push_back(row.name);
    }
  }
  if (!mismatched.empty()) {
    std::string names;
    for (const auto& m : mismatched) names += (names.empty() ? "" : ", ") + m;
    throw GoldenMismatchError("golden mismatch for: " + names);
  }
  r.message = c.delay.golden_dir.empty() ? "wrote worked-example tables"
                                         : "worked-example tables match golden files";
  return r;
}

inline CommandResult cmd_plan_delay(const RunConfig& c) {
  const auto dir = resolve_output_dir(c);
  if (c.delay.paper_examples) return cmd_paper_examples(c, dir);
  Timings tm;
  const auto conv = c.delay.convention == "marginal" ? C1Convention::marginal : C1Convention::model;
  const auto plan = plan_delay(c.delay.network, c.delay.zeta, c.delay.eps_b, conv, c.delay.curve_points);
  tm.mark("plan");
  Json doc = report_document(c);
  doc["delay_plan"] = to_json(plan);
  write_json(dir / "plan.json", doc);
  write_text(dir / "error_curve.csv", error_curve_csv(plan.error_curve));
  write_json(dir / "timings.json", tm.to_json());
  CommandResult r;
  r.written = {dir / "plan.json", dir / "error_curve.csv"};
  r.message = std::string("delta_star_str=") +
              (plan.str_state == DelayState::wait_forever ? "wait_forever" : fmt_double(plan.delta_star_str)) +
              " delta_star_naive=" + fmt_double(plan.delta_star_naive);
  return r;
}

inline DiagnosticsReport run_diagnostics(const RunConfig& c, const Dataset& ds) {
  DiagnosticsReport rep;
  const auto algo = algorithm_config(c);
  const bool need_fit = wants(c, "balance") || wants(c, "overlap") || wants(c, "auc");
  if (need_fit) {
    CrossfitOptions co;
    co.k = algo.k;
    co.seed = algo.seed;
    co.nuisance = algo.nuisance;
    co.eps10 = c.estimate.eps10;
    co.eps01 = c.estimate.eps01;
    const auto cf = crossfit_nuisances(ds, co);
    if (wants(c, "balance")) {
      rep.smd_table = balance_diagnostics(ds, cf);
      for (const auto& row : *rep.smd_table)
        if (row.zero_variance) rep.warnings.push_back("feature " + row.feature + " has zero variance");
    }
    if (wants(c, "overlap")) {
      rep.overlap = overlap_summary(ds, cf, c.estimate.floors);
      for (const auto& row : *rep.overlap)
        if (row.warning)
          rep.warnings.push_back(std::string("stage ") + stage_name(row.stage) +
                                 ": propensity minimum below twice the floor");
    }
    if (wants(c, "auc")) rep.nuisance_auc = nuisance_auc(ds, cf);
  }
  if (wants(c, "sweep")) {
    auto grid = c.sensitivity.eps_grid;
    if (grid.empty()) grid = {{c.estimate.eps10, c.estimate.eps01}};
    rep.corruption_sweep = corruption_sweep(ds, algo, grid);
  }
  if (wants(c, "tilt")) {
    std::vector<SensitivityRow> rows;
    const auto base = generate_population(c.sim);
    const auto inputs = BoundInputs::from_truth(base.truth);
    for (double ga : c.sensitivity.gamma_grid)
      for (double gr : c.sensitivity.gamma_grid) {
        SensitivityRow row;
        row.gamma_a = ga;
        row.gamma_r = gr;
        row.auth_bound = auth_bias_bound(inputs, ga);
        row.reporting_bound = reporting_bias_bound(inputs, gr);
        row.joint_bound = joint_bias_bound(inputs, ga, gr);
        const auto t = tilted_simulation(c.sim, ga, gr);
        row.realized_bias = t.bias;
        row.realized_se = t.se;
        rows.push_back(row);
      }
    rep.sensitivity_curves = rows;
  }
  if (wants(c, "windows")) {
    rep.window_stability = maturity_window_stability(c.sim, c.sensitivity.windows, algo);
    if (!rep.window_stability->stable) rep.warnings.push_back("estimates unstable across maturity windows");
  }
  return rep;
}

inline CommandResult cmd_diagnose(const RunConfig& c) {
  const auto dir = resolve_output_dir(c);
  Timings tm;
  Dataset ds;
  const bool needs_records = wants(c, "balance") || wants(c, "overlap") || wants(c, "auc") || wants(c, "sweep");
  if (needs_records) {
    if (!c.records_path.empty()) {
      ds = read_records_csv(c.records_path);
    } else {
      ds = generate_population(c.sim).records;
    }
  }
  tm.mark("load");
  const auto rep = run_diagnostics(c, ds);
  tm.mark("diagnose");
  Json doc = report_document(c);
  doc["diagnostics"] = to_json(rep);
  write_json(dir / "diagnostics.json", doc);
  CommandResult r;
  r.written = {dir / "diagnostics.json"};
  if (rep.smd_table) {
    write_text(dir / "smd.csv", smd_csv(*rep.smd_table));
    r.written.push_back(dir / "smd.csv");
  }
  if (rep.corruption_sweep) {
    write_text(dir / "sweep.csv", sweep_csv(*rep.corruption_sweep));
    r.written.push_back(dir / "sweep.csv");
  }
  if (rep.sensitivity_curves) {
    write_text(dir / "sensitivity.csv", sensitivity_csv(*rep.sensitivity_curves));
    r.written.push_back(dir / "sensitivity.csv");
  }
  write_json(dir / "timings.json", tm.to_json());
  r.message = "diagnostics written";
  return r;
}

inline CommandResult dispatch(const RunConfig& c) {
  validate_run_config(c);
  if (c.command == "simulate") return cmd_simulate(c);
  if (c.command == "fit") return cmd_fit(c);
  if (c.command == "estimate") return cmd_estimate(c);
  if (c.command == "plan-delay") return cmd_plan_delay(c);
  return cmd_diagnose(c);
}

/// Runs a command and maps library errors to exit codes.
inline int run_guarded(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    const auto r = dispatch(c);
    out << r.message << '\n';
    for (const auto& p : r.written) out << "  wrote " << p.string() << '\n';
    return r.exit_code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_io;
  }
}

}  // namespace strl
