// Command-line front end: simulate, fit, estimate, plan-delay, diagnose.
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "strl/cli.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<double> alpha;
  std::optional<std::string> records, truth, audit, preset, golden_dir, mu_link, convention, checks;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> sim_seed;
  std::optional<double> eps10, eps01, nu, zeta, eps_b;
  std::vector<double> windows;
  std::vector<double> eps_grid;
  bool with_oracle = false;
  bool no_shrinkage = false;
  bool paper_examples = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON run configuration");
  sub->add_option("--out", o.out, "output directory (default: $STRL_OUTPUT_DIR or .)");
  sub->add_option("--seed", o.seed, "fold/algorithm seed");
  sub->add_option("--k", o.k, "number of cross-fitting folds");
  sub->add_option("--alpha", o.alpha, "CI level is 1 - alpha");
}

void add_estimation(CLI::App* sub, Overrides& o) {
  sub->add_option("--records", o.records, "records CSV");
  sub->add_option("--eps10", o.eps10, "known fraud->legit flip rate");
  sub->add_option("--eps01", o.eps01, "known legit->fraud flip rate");
  sub->add_option("--audit", o.audit, "audit CSV (y_obs,y_true) to estimate flip rates");
  sub->add_option("--mu-link", o.mu_link, "link for the nested regressions (logit|identity)");
  sub->add_flag("--no-shrinkage", o.no_shrinkage, "disable issuer shrinkage");
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

strl::RunConfig build_config(const std::string& command, const Overrides& o) {
  strl::RunConfig c;
  if (!o.config.empty()) {
    auto j = strl::read_json(o.config);
    // A report document carries its run configuration under "config".
    if (j.contains("tool") && j.contains("config")) j = j.at("config");
    c = strl::run_config_from_json(j);
  }
  c.command = command;
  if (o.out) c.output_dir = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.k) c.k = *o.k;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.records) c.records_path = *o.records;
  if (o.truth) c.truth_path = *o.truth;
  if (o.audit) c.estimate.audit_path = *o.audit;
  if (o.eps10) c.estimate.eps10 = *o.eps10;
  if (o.eps01) c.estimate.eps01 = *o.eps01;
  if (o.mu_link) c.estimate.mu_link = *o.mu_link;
  if (o.no_shrinkage) c.estimate.shrinkage = false;
  if (o.with_oracle) c.estimate.with_oracle = true;
  if (command == "plan-delay") {
    if (o.preset) {
      const auto ex = strl::delay_preset(*o.preset);
      if (!ex) throw strl::ConfigError("unknown delay preset '" + *o.preset + "'");
      c.delay.preset = *o.preset;
      c.delay.network = ex->params;
      c.delay.zeta = ex->zeta;
      c.delay.eps_b = ex->eps_b;
    }
    if (o.nu) c.delay.network.nu = *o.nu;
    if (o.zeta) c.delay.zeta = *o.zeta;
    if (o.eps_b) c.delay.eps_b = *o.eps_b;
    if (o.convention) c.delay.convention = *o.convention;
    if (o.paper_examples) c.delay.paper_examples = true;
    if (o.golden_dir) c.delay.golden_dir = *o.golden_dir;
  } else {
    if (o.preset) {
      c.sim_preset = *o.preset;
      c.sim = strl::sim_preset(*o.preset, o.n);
    } else if (o.n) {
      c.sim.n = *o.n;
    }
    if (o.sim_seed) c.sim.seed = *o.sim_seed;
  }
  if (o.checks) c.sensitivity.checks = split_commas(*o.checks);
  if (!o.windows.empty()) c.sensitivity.windows = o.windows;
  if (!o.eps_grid.empty()) {
    if (o.eps_grid.size() % 2 != 0) throw strl::ConfigError("--eps-grid takes eps10,eps01 pairs");
    c.sensitivity.eps_grid.clear();
    for (std::size_t i = 0; i < o.eps_grid.size(); i += 2)
      c.sensitivity.eps_grid.emplace_back(o.eps_grid[i], o.eps_grid[i + 1]);
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label recovery for censored and corrupted fraud labels"};
  app.require_subcommand(1);
  Overrides o;

  auto* sim = app.add_subcommand("simulate", "draw a synthetic population");
  add_common(sim, o);
  sim->add_option("--preset", o.preset, "example1 | selective | uncensored");
  sim->add_option("--n", o.n, "population size");
  sim->add_option("--sim-seed", o.sim_seed, "simulator seed");

  auto* fit = app.add_subcommand("fit", "cross-fit nuisance models");
  add_common(fit, o);
  add_estimation(fit, o);

  auto* est = app.add_subcommand("estimate", "run the full estimator");
  add_common(est, o);
  add_estimation(est, o);
  est->add_option("--truth", o.truth, "truth CSV for --with-oracle");
  est->add_flag("--with-oracle", o.with_oracle, "add closed-form naive bias and efficiency bound");

  auto* plan = app.add_subcommand("plan-delay", "optimal training delay");
  add_common(plan, o);
  plan->add_option("--preset", o.preset, "typical | fastdrift | realtime");
  plan->add_option("--nu", o.nu, "drift rate per day");
  plan->add_option("--zeta", o.zeta, "selection contrast");
  plan->add_option("--eps-b", o.eps_b, "tolerated naive bias");
  plan->add_option("--convention", o.convention, "model | marginal");
  plan->add_flag("--paper-examples", o.paper_examples, "write the three worked-example tables");
  plan->add_option("--golden-dir", o.golden_dir, "compare worked-example tables with this directory");

  auto* diag = app.add_subcommand("diagnose", "balance, overlap, sensitivity and stability checks");
  add_common(diag, o);
  add_estimation(diag, o);
  diag->add_option("--preset", o.preset, "simulator preset for re-simulating checks");
  diag->add_option("--n", o.n, "population size for re-simulation");
  diag->add_option("--sim-seed", o.sim_seed, "simulator seed");
  diag->add_option("--checks", o.checks, "comma list: balance,overlap,auc,sweep,tilt,windows");
  diag->add_option("--windows", o.windows, "maturity windows (days) for the stability check");
  diag->add_option("--eps-grid", o.eps_grid, "flattened eps10 eps01 pairs for the sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : strl::exit_validation;
  }

  std::string command;
  for (auto* s : {sim, fit, est, plan, diag})
    if (s->parsed()) command = s->get_name();

  strl::RunConfig cfg;
  try {
    cfg = build_config(command, o);
  } catch (const strl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return strl::exit_code_for(e);
  }
  return strl::run_guarded(cfg, std::cout, std::cerr);
}
