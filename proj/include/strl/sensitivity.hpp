#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "strl/dataset.hpp"
#include "strl/error.hpp"
#include "strl/estimator.hpp"
#include "strl/nuisance.hpp"
#include "strl/numeric.hpp"
#include "strl/sim.hpp"

namespace strl {

struct SensitivityParams {
  double gamma_a = 1.0;
  double gamma_r = 1.0;
  std::vector<std::pair<double, double>> eps_grid;

  void validate() const {
    if (!(gamma_a >= 1.0) || !(gamma_r >= 1.0)) throw ConfigError("sensitivity gammas must be >= 1");
    for (const auto& [e10, e01] : eps_grid)
      if (!(e10 >= 0.0 && e01 >= 0.0 && e10 + e01 < 1.0))
        throw ConfigError("eps grid entries must be non-negative with eps10 + eps01 < 1");
  }
};

/// Per-record f, e, r used by the bounds: truth when simulated, otherwise
/// fitted nuisances (mu0 standing in for f).
struct BoundInputs {
  std::vector<double> f, e, r;

  static BoundInputs from_truth(const PopulationTruth& t) { return {t.f_true, t.e_true, t.r_true}; }

  static BoundInputs from_fit(const Dataset& ds, const Crossfit& cf) {
    if (cf.plan.assignment.size() != ds.size()) throw ArgumentError("fold plan size mismatch");
    BoundInputs b;
    b.f.resize(ds.size());
    b.e.resize(ds.size());
    b.r.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& ns = cf.sets[static_cast<std::size_t>(cf.plan.assignment[i])];
      b.f[i] = ns.mu0_hat.predict(ds, i);
      b.e[i] = ns.e_hat.predict(ds, i);
      b.r[i] = ns.r_hat.predict(ds, i);
    }
    return b;
  }
};

inline double tilt_factor(double gamma) {
  if (!(gamma >= 1.0)) throw ArgumentError("gamma must be >= 1");
  return (gamma - 1.0) / gamma;
}

/// (G-1)/G * E[f (1-e)/e]
inline double auth_bias_bound(const BoundInputs& in, double gamma_a) {
  const double k = tilt_factor(gamma_a);
  std::vector<double> t(in.f.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = in.f[i] * (1.0 - in.e[i]) / in.e[i];
  return k * mean(t);
}

/// (G-1)/G * E[f (1-r)/(e r)]
inline double reporting_bias_bound(const BoundInputs& in, double gamma_r) {
  const double k = tilt_factor(gamma_r);
  std::vector<double> t(in.f.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = in.f[i] * (1.0 - in.r[i]) / (in.e[i] * in.r[i]);
  return k * mean(t);
}

/// Sum of the stage bounds plus the interaction term
/// (G_A-1)(G_R-1)/(G_A G_R) with constant 1.
inline double joint_bias_bound(const BoundInputs& in, double gamma_a, double gamma_r) {
  const double inter = tilt_factor(gamma_a) * tilt_factor(gamma_r);
  return auth_bias_bound(in, gamma_a) + reporting_bias_bound(in, gamma_r) + inter;
}

struct TiltResult {
  double gamma_a = 1.0;
  double gamma_r = 1.0;
  double psi_hat = 0.0;
  double psi_true = 0.0;
  double bias = 0.0;  // |psi_hat - psi_true|
  double se = 0.0;    // SE of the per-record difference u - Y*
  double bound = 0.0;
};

/// Draws the population with tilted gates and scores it with the untilted
/// true propensities and f as the regressions.
inline TiltResult tilted_simulation(SimConfig cfg, double gamma_a, double gamma_r) {
  cfg.tilt_gamma_a = gamma_a;
  cfg.tilt_gamma_r = gamma_r;
  const auto pop = generate_population(cfg);
  const auto scored = oracle_scores(pop.records, pop.truth, cfg.eps10, cfg.eps01);
  std::vector<double> diff(scored.size());
  std::vector<double> u(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    u[i] = scored[i].u;
    diff[i] = scored[i].u - pop.truth.y_star[i];
  }
  TiltResult r;
  r.gamma_a = gamma_a;
  r.gamma_r = gamma_r;
  r.psi_hat = mean(u);
  r.psi_true = pop.truth.psi_true;
  r.bias = std::abs(r.psi_hat - r.psi_true);
  r.se = std::sqrt(variance(diff) / static_cast<double>(diff.size()));
  r.bound = joint_bias_bound(BoundInputs::from_truth(pop.truth), gamma_a, gamma_r);
  return r;
}

struct SweepPoint {
  double eps10 = 0.0;
  double eps01 = 0.0;
  double psi_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// Re-runs the estimator at each (eps10, eps01). The fold plan depends only on
/// the seed and n, so it is the same at every grid point.
inline std::vector<SweepPoint> corruption_sweep(const Dataset& ds, const AlgorithmConfig& base,
                                                const std::vector<std::pair<double, double>>& grid) {
  SensitivityParams{1.0, 1.0, grid}.validate();
  std::vector<SweepPoint> out;
  for (const auto& [e10, e01] : grid) {
    AlgorithmConfig cfg = base;
    cfg.eps_source = KnownEps{e10, e01};
    cfg.compute_labels = false;
    const auto res = run_algorithm_1(ds, cfg);
    out.push_back({e10, e01, res.report.psi_hat, res.report.ci_lo, res.report.ci_hi});
  }
  return out;
}

// ---------------------------------------------------------------- diagnostics

struct SmdRow {
  std::string feature;
  double raw = 0.0;
  double weighted = 0.0;
  bool zero_variance = false;
};

/// Predicted q = e r p for each record, from the nuisance set held out from
/// its fold.
inline std::vector<double> crossfit_q(const Dataset& ds, const Crossfit& cf) {
  std::vector<double> q(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& ns = cf.sets[static_cast<std::size_t>(cf.plan.assignment[i])];
    q[i] = ns.e_hat.predict(ds, i) * ns.r_hat.predict(ds, i) * ns.p_hat.predict(ds, i);
  }
  return q;
}

/// SMD of each feature between the labeled subsample and the full
/// population, raw and with Hajek weights 1/q. Denominator: full-population SD.
inline std::vector<SmdRow> balance_diagnostics(const Dataset& ds, const Crossfit& cf) {
  std::size_t observed = 0;
  for (auto o : ds.o) observed += o == 1;
  if (observed == 0) throw InsufficientDataError("balance diagnostics need an observed record");
  const auto q = crossfit_q(ds, cf);
  const std::size_t d = ds.dim();
  std::vector<SmdRow> rows;
  std::vector<double> col(ds.size());
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < ds.size(); ++i) col[i] = ds.x[i * d + j];
    const double mu = mean(col);
    const double sd = std::sqrt(variance(col));
    double s_raw = 0.0, s_w = 0.0, w_tot = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.o[i] != 1) continue;
      s_raw += col[i];
      s_w += col[i] / q[i];
      w_tot += 1.0 / q[i];
    }
    SmdRow r;
    r.feature = "x" + std::to_string(j);
    if (!(sd > 0.0)) {
      r.zero_variance = true;
    } else {
      r.raw = (s_raw / static_cast<double>(observed) - mu) / sd;
      r.weighted = (s_w / w_tot - mu) / sd;
    }
    rows.push_back(r);
  }
  return rows;
}

inline double max_abs_smd(const std::vector<SmdRow>& rows, bool weighted) {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, std::abs(weighted ? r.weighted : r.raw));
  return m;
}

struct OverlapRow {
  Stage stage = Stage::auth;
  std::vector<double> deciles;  // 10%, 20%, ..., 90%
  double min = 0.0;
  double floor = 0.0;
  std::size_t count = 0;
  bool warning = false;  // min < 2 * floor
};

/// Deciles and minimum of held-out propensity predictions over each stage's
/// at-risk rows.
inline std::vector<OverlapRow> overlap_summary(const Dataset& ds, const Crossfit& cf,
                                               const PositivityFloors& floors) {
  std::vector<OverlapRow> out;
  for (Stage s : {Stage::auth, Stage::report, Stage::maturity}) {
    std::vector<double> v;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& ns = cf.sets[static_cast<std::size_t>(cf.plan.assignment[i])];
      if (s == Stage::auth) {
        v.push_back(ns.e_hat.predict(ds, i));
      } else if (s == Stage::report && ds.a[i] == 1) {
        v.push_back(ns.r_hat.predict(ds, i));
      } else if (s == Stage::maturity && ds.a[i] == 1 && ds.r[i] == 1) {
        v.push_back(ns.p_hat.predict(ds, i));
      }
    }
    OverlapRow row;
    row.stage = s;
    row.count = v.size();
    row.floor = s == Stage::auth ? floors.e_min : s == Stage::report ? floors.r_min : floors.p_min;
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      row.min = v.front();
      for (int k = 1; k <= 9; ++k) {
        const double pos = 0.1 * k * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        row.deciles.push_back(v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]));
      }
      row.warning = row.min < 2.0 * row.floor;
    }
    out.push_back(row);
  }
  return out;
}

struct AucRow {
  Stage stage = Stage::auth;
  std::optional<double> auc;  // nullopt when a class is missing
};

/// Held-out discrimination of each propensity model.
inline std::vector<AucRow> nuisance_auc(const Dataset& ds, const Crossfit& cf) {
  std::vector<AucRow> out;
  for (Stage s : {Stage::auth, Stage::report, Stage::maturity}) {
    std::vector<double> score;
    std::vector<int> label;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& ns = cf.sets[static_cast<std::size_t>(cf.plan.assignment[i])];
      if (s == Stage::auth) {
        score.push_back(ns.e_hat.predict(ds, i));
        label.push_back(ds.a[i]);
      } else if (s == Stage::report && ds.a[i] == 1) {
        score.push_back(ns.r_hat.predict(ds, i));
        label.push_back(ds.r[i]);
      } else if (s == Stage::maturity && ds.a[i] == 1 && ds.r[i] == 1) {
        score.push_back(ns.p_hat.predict(ds, i));
        label.push_back(ds.m[i]);
      }
    }
    AucRow row{s, std::nullopt};
    const auto pos = std::count(label.begin(), label.end(), 1);
    if (pos > 0 && static_cast<std::size_t>(pos) < label.size()) row.auc = auc(score, label);
    out.push_back(row);
  }
  return out;
}

struct WindowResult {
  double delta_min = 0.0;
  double psi_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct WindowStability {
  std::vector<WindowResult> windows;
  bool stable = true;
  double max_gap = 0.0;  // largest |psi_a - psi_b| minus the joint half-widths
};

/// Re-simulates with each training horizon as the smallest maturity delay and
/// re-estimates. Stable when every pair differs by at most the sum of the two
/// CI half-widths.
inline WindowStability maturity_window_stability(const SimConfig& base,
                                                 const std::vector<double>& windows,
                                                 const AlgorithmConfig& algo) {
  if (windows.size() < 2) throw ArgumentError("window stability needs at least two windows");
  WindowStability out;
  for (double w : windows) {
    if (!(w >= 0.0)) throw ArgumentError("windows must be non-negative");
    SimConfig cfg = base;
    cfg.maturity_delay_days = w;
    const auto pop = generate_population(cfg);
    AlgorithmConfig a = algo;
    a.compute_labels = false;
    if (std::holds_alternative<KnownEps>(a.eps_source)) a.eps_source = KnownEps{cfg.eps10, cfg.eps01};
    const auto res = run_algorithm_1(pop.records, a);
    out.windows.push_back({w, res.report.psi_hat, res.report.ci_lo, res.report.ci_hi});
  }
  out.max_gap = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < out.windows.size(); ++i)
    for (std::size_t j = i + 1; j < out.windows.size(); ++j) {
      const auto& a = out.windows[i];
      const auto& b = out.windows[j];
      const double hw = 0.5 * (a.ci_hi - a.ci_lo) + 0.5 * (b.ci_hi - b.ci_lo);
      const double gap = std::abs(a.psi_hat - b.psi_hat) - hw;
      out.max_gap = std::max(out.max_gap, gap);
      if (gap > 0.0) out.stable = false;
    }
  return out;
}

struct SensitivityRow {
  double gamma_a = 1.0;
  double gamma_r = 1.0;
  double auth_bound = 0.0;
  double reporting_bound = 0.0;
  double joint_bound = 0.0;
  std::optional<double> realized_bias;
  std::optional<double> realized_se;
};

struct DiagnosticsReport {
  std::optional<std::vector<SmdRow>> smd_table;
  std::optional<std::vector<OverlapRow>> overlap;
  std::optional<std::vector<AucRow>> nuisance_auc;
  std::optional<WindowStability> window_stability;
  std::optional<std::vector<SensitivityRow>> sensitivity_curves;
  std::optional<std::vector<SweepPoint>> corruption_sweep;
  std::vector<std::string> warnings;
};

}  // namespace strl
