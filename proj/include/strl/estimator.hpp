#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "strl/dataset.hpp"
#include "strl/error.hpp"
#include "strl/glm.hpp"
#include "strl/numeric.hpp"
#include "strl/nuisance.hpp"
#include "strl/sim.hpp"

namespace strl {

struct ScoredRecord {
  std::int64_t id = 0;
  int fold = -1;
  double u = 0.0;
  double base = 0.0;
  double auth_corr = 0.0;
  double report_corr = 0.0;
  double delay_corr = 0.0;
  double weight_total = 0.0;  // 1/(e r p) when o = 1, else 0
  std::optional<double> y_corr;
};

struct EstimateReport {
  double psi_hat = 0.0;
  double sigma2_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n = 0;
  double alpha = 0.05;
  double b_bound = 0.0;
  std::vector<std::pair<double, double>> bernstein_curve;
  double critical_eps = 0.001;
  double critical_n = 0.0;
  std::optional<double> naive_psi;
  std::optional<double> naive_bias_closed_form;
  std::optional<double> eff_bound_closed_form;
  std::size_t k_folds = 0;
  std::vector<std::string> warnings;

  double se() const { return std::sqrt(sigma2_hat / static_cast<double>(n)); }
};

/// Corrected-score contribution of one record under the given nuisances.
/// `record_fold` is the record's own fold and must match the set's fold tag.
inline ScoredRecord sequential_score(const Dataset& ds, std::size_t i, const NuisanceSet& ns,
                                     int record_fold) {
  if (ns.fold != record_fold)
    throw ContractError("record " + std::to_string(ds.id[i]) +
                        " scored by nuisances not held out from its fold");
  ScoredRecord s;
  s.id = ds.id[i];
  s.fold = record_fold;
  s.base = ns.mu0_hat.predict(ds, i);
  if (ds.a[i] == 1) {
    const double e = ns.e_hat.predict(ds, i);
    const double mu1 = ns.mu1_hat.predict(ds, i);
    s.auth_corr = (mu1 - s.base) / e;
    if (ds.r[i] == 1) {
      const double r = ns.r_hat.predict(ds, i);
      const double mu2 = ns.mu2_hat.predict(ds, i);
      s.report_corr = (mu2 - mu1) / (e * r);
      if (ds.o[i] == 1) {
        if (ds.y_obs[i] == kAbsent)
          throw DataIntegrityError("record " + std::to_string(ds.id[i]) + ": o=1 without y_obs");
        const double p = ns.p_hat.predict(ds, i);
        const double q = e * r * p;
        s.weight_total = 1.0 / q;
        const double cap = 1.0 / ((ns.e_hat.clamp ? ns.e_hat.clamp->lo : 0.0) *
                                  (ns.r_hat.clamp ? ns.r_hat.clamp->lo : 0.0) *
                                  (ns.p_hat.clamp ? ns.p_hat.clamp->lo : 0.0));
        if (s.weight_total > cap * (1.0 + 1e-9))
          throw ContractError("inverse weight exceeds the positivity cap");
        s.y_corr = noise_correct(ds.y_obs[i], ns.eps10_hat, ns.eps01_hat);
        s.delay_corr = (*s.y_corr - mu2) * s.weight_total;
      }
    }
  }
  s.u = s.base + s.auth_corr + s.report_corr + s.delay_corr;
  return s;
}

/// Scores every record with the nuisance set held out from its fold.
inline std::vector<ScoredRecord> score_all(const Dataset& ds, const Crossfit& cf) {
  if (cf.plan.assignment.size() != ds.size()) throw ArgumentError("fold plan size mismatch");
  std::vector<ScoredRecord> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int f = cf.plan.assignment[i];
    out[i] = sequential_score(ds, i, cf.sets.at(static_cast<std::size_t>(f)), f);
  }
  return out;
}

inline double bernstein_bound(double t, double sigma2, double b, std::size_t n) {
  if (!(t > 0.0) || sigma2 < 0.0 || !(b > 0.0) || n < 1)
    throw ArgumentError("bernstein_bound: need t>0, sigma2>=0, b>0, n>=1");
  const double nn = static_cast<double>(n);
  return 2.0 * std::exp(-nn * t * t / (2.0 * sigma2 + 2.0 * b * t / 3.0));
}

inline double critical_n(double eps, double alpha, double sigma2, double b) {
  if (!(eps > 0.0) || !(alpha > 0.0 && alpha < 1.0))
    throw ArgumentError("critical_n: need eps>0 and 0<alpha<1");
  const double l = std::log(2.0 / alpha);
  return 2.0 * sigma2 * l / (eps * eps) + 2.0 * b * l / (3.0 * eps);
}

/// B = 1 / (e_min r_min p_min (1 - eps10 - eps01)).
inline double weight_bound(const PositivityFloors& f, double eps10, double eps01) {
  return 1.0 / (f.e_min * f.r_min * f.p_min * (1.0 - eps10 - eps01));
}

struct EstimateOptions {
  double alpha = 0.05;
  double critical_eps = 0.001;
  PositivityFloors floors;
  double eps10 = 0.0;
  double eps01 = 0.0;
  std::size_t k_folds = 0;
};

/// Mean of the pseudo-outcomes with plug-in variance, Wald interval,
/// Bernstein curve and critical sample size.
inline EstimateReport str_estimate(std::span<const double> u, const EstimateOptions& opt) {
  if (u.empty()) throw ArgumentError("str_estimate: empty dataset");
  if (!(opt.alpha > 0.0 && opt.alpha < 1.0)) throw ArgumentError("alpha must lie in (0,1)");
  EstimateReport rep;
  rep.n = u.size();
  rep.alpha = opt.alpha;
  rep.k_folds = opt.k_folds;
  rep.psi_hat = mean(u);
  rep.sigma2_hat = variance(u);
  const double z = normal_quantile(1.0 - opt.alpha / 2.0);
  const double hw = z * std::sqrt(rep.sigma2_hat / static_cast<double>(rep.n));
  rep.ci_lo = rep.psi_hat - hw;
  rep.ci_hi = rep.psi_hat + hw;
  rep.b_bound = weight_bound(opt.floors, opt.eps10, opt.eps01);
  const double se = std::sqrt(rep.sigma2_hat / static_cast<double>(rep.n));
  if (se > 0.0) {
    for (double k : {0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0})
      rep.bernstein_curve.emplace_back(k * se,
                                       bernstein_bound(k * se, rep.sigma2_hat, rep.b_bound, rep.n));
  }
  rep.critical_eps = opt.critical_eps;
  rep.critical_n = critical_n(opt.critical_eps, opt.alpha, rep.sigma2_hat, rep.b_bound);
  return rep;
}

inline EstimateReport str_estimate(std::span<const ScoredRecord> scored, const EstimateOptions& opt) {
  std::vector<double> u(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) u[i] = scored[i].u;
  return str_estimate(u, opt);
}

/// Mean observed label over fully observed records.
inline double naive_estimate(const Dataset& ds) {
  std::size_t n = 0, pos = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.o[i] == 1) {
      ++n;
      pos += static_cast<std::size_t>(ds.y_obs[i] == 1);
    }
  if (n == 0) throw InsufficientDataError("naive estimate needs at least one observed label");
  return static_cast<double>(pos) / static_cast<double>(n);
}

/// Sample analogue of Cov(f, q) / E[q] with q = e r p.
inline double naive_bias_closed_form(const PopulationTruth& t) {
  std::vector<double> q(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) q[i] = t.e_true[i] * t.r_true[i] * t.p_true[i];
  return covariance(t.f_true, q) / mean(q);
}

/// E[f(1-f) / (e r p (1-eps10-eps01)^2)] + Var(f).
inline double efficiency_bound_closed_form(const PopulationTruth& t, double eps10, double eps01) {
  if (!(eps10 + eps01 < 1.0)) throw InformativeChannelError("eps10 + eps01 must be < 1");
  const double g = (1.0 - eps10 - eps01) * (1.0 - eps10 - eps01);
  std::vector<double> lead(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double f = t.f_true[i];
    lead[i] = f * (1.0 - f) / (t.e_true[i] * t.r_true[i] * t.p_true[i] * g);
  }
  return mean(lead) + variance(t.f_true);
}

/// Exact variance of the corrected score at the true nuisances. The observed
/// label has mean m = eps01 + (1-eps10-eps01) f, so the conditional variance of
/// the corrected label is m(1-m)/(1-eps10-eps01)^2; this equals the closed form
/// above only when both rates are zero.
inline double efficiency_bound_exact(const PopulationTruth& t, double eps10, double eps01) {
  if (!(eps10 + eps01 < 1.0)) throw InformativeChannelError("eps10 + eps01 must be < 1");
  const double k = 1.0 - eps10 - eps01;
  std::vector<double> lead(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double m = eps01 + k * t.f_true[i];
    lead[i] = m * (1.0 - m) / (t.e_true[i] * t.r_true[i] * t.p_true[i] * k * k);
  }
  return mean(lead) + variance(t.f_true);
}

/// Pseudo-outcomes at the true nuisances (mu = f), using the given rates for
/// label correction.
inline std::vector<ScoredRecord> oracle_scores(const Dataset& ds, const PopulationTruth& t,
                                               double eps10, double eps01) {
  if (ds.size() != t.size()) throw ArgumentError("records and truth differ in length");
  std::vector<ScoredRecord> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ScoredRecord& s = out[i];
    s.id = ds.id[i];
    s.base = t.f_true[i];
    if (ds.o[i] == 1) {
      s.weight_total = 1.0 / (t.e_true[i] * t.r_true[i] * t.p_true[i]);
      s.y_corr = noise_correct(ds.y_obs[i], eps10, eps01);
      s.delay_corr = (*s.y_corr - t.f_true[i]) * s.weight_total;
    }
    s.u = s.base + s.delay_corr;
  }
  return out;
}

struct LearnerConfig {
  Link link = Link::logit;
};

struct PseudoLabels {
  GlmModel model;
  std::vector<double> labels;
};

/// Regresses the pseudo-outcomes on [1, x] and predicts a label for every
/// record, including declined and unmatured ones.
inline PseudoLabels pseudo_labels(const Dataset& ds, std::span<const ScoredRecord> scored,
                                  const LearnerConfig& cfg, bool clip) {
  if (scored.size() != ds.size()) throw ArgumentError("pseudo_labels: scored not aligned");
  std::vector<std::size_t> rows(ds.size());
  std::vector<double> y(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    rows[i] = i;
    y[i] = clip ? std::clamp(scored[i].u, 0.0, 1.0) : scored[i].u;
  }
  PseudoLabels out;
  out.model = fit_glm(ds, rows, y, cfg.link, FeatureSpec::all_x(ds.dim()));
  out.labels.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out.labels[i] = out.model.predict(ds, i);
  return out;
}

struct KnownEps {
  double eps10 = 0.0;
  double eps01 = 0.0;
};

using AuditSample = std::vector<std::pair<int, int>>;  // (y_obs, y_true)

struct AlgorithmConfig {
  std::size_t k = 5;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::variant<KnownEps, AuditSample> eps_source = KnownEps{};
  NuisanceOptions nuisance;
  double critical_eps = 0.001;
  bool compute_labels = true;
  bool clip_pseudo_outcomes = false;
  LearnerConfig learner;
};

struct AlgorithmResult {
  EstimateReport report;
  Crossfit fits;
  std::vector<ScoredRecord> scored;
  std::optional<PseudoLabels> labels;
  double eps10 = 0.0;
  double eps01 = 0.0;
};

/// Cross-fit nuisances, score, estimate, then derive pseudo-labels.
inline AlgorithmResult run_algorithm_1(const Dataset& ds, const AlgorithmConfig& cfg) {
  if (ds.empty()) throw ArgumentError("run_algorithm_1: empty dataset");
  AlgorithmResult res;
  if (const auto* k = std::get_if<KnownEps>(&cfg.eps_source)) {
    res.eps10 = k->eps10;
    res.eps01 = k->eps01;
  } else {
    std::tie(res.eps10, res.eps01) =
        estimate_corruption_from_audit(std::get<AuditSample>(cfg.eps_source));
  }
  if (!(res.eps10 >= 0.0 && res.eps01 >= 0.0 && res.eps10 + res.eps01 < 1.0))
    throw InformativeChannelError("corruption rates must satisfy eps10 + eps01 < 1");

  CrossfitOptions co;
  co.k = cfg.k;
  co.seed = cfg.seed;
  co.nuisance = cfg.nuisance;
  co.eps10 = res.eps10;
  co.eps01 = res.eps01;
  res.fits = crossfit_nuisances(ds, co);
  res.scored = score_all(ds, res.fits);

  EstimateOptions eo;
  eo.alpha = cfg.alpha;
  eo.critical_eps = cfg.critical_eps;
  eo.floors = cfg.nuisance.floors;
  eo.eps10 = res.eps10;
  eo.eps01 = res.eps01;
  eo.k_folds = cfg.k;
  res.report = str_estimate(res.scored, eo);

  std::vector<std::size_t> observed(cfg.k, 0);
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.o[i] == 1) ++observed[static_cast<std::size_t>(res.fits.plan.assignment[i])];
  for (std::size_t f = 0; f < cfg.k; ++f)
    if (observed[f] == 0)
      res.report.warnings.push_back("fold " + std::to_string(f) + " has no observed labels");
  for (const auto& set : res.fits.sets)
    if (set.mu2_hat.penalized || set.mu1_hat.penalized || set.mu0_hat.penalized)
      res.report.warnings.push_back("fold " + std::to_string(set.fold) +
                                    ": outcome regressions separable on corrected labels; ridge refit used");
  try {
    res.report.naive_psi = naive_estimate(ds);
  } catch (const InsufficientDataError&) {
    res.report.warnings.push_back("no observed labels; naive estimate undefined");
  }
  if (cfg.compute_labels) res.labels = pseudo_labels(ds, res.scored, cfg.learner, cfg.clip_pseudo_outcomes);
  return res;
}

/// Adds the truth-based closed forms to a report.
inline void attach_oracle(EstimateReport& rep, const PopulationTruth& t, double eps10, double eps01) {
  rep.naive_bias_closed_form = naive_bias_closed_form(t);
  rep.eff_bound_closed_form = efficiency_bound_closed_form(t, eps10, eps01);
}

}  // namespace strl
