#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "strl/dataset.hpp"
#include "strl/error.hpp"
#include "strl/glm.hpp"
#include "strl/numeric.hpp"
#include "strl/rng.hpp"
#include "strl/shrinkage.hpp"
#include "strl/sim.hpp"

namespace strl {

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::int32_t> assignment;  // by row position

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(k, 0);
    for (auto f : assignment) ++s[static_cast<std::size_t>(f)];
    return s;
  }

  /// Rows outside `fold`; fold < 0 means every row.
  std::vector<std::size_t> training_rows(int fold) const {
    std::vector<std::size_t> rows;
    rows.reserve(assignment.size());
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] != fold) rows.push_back(i);
    return rows;
  }
};

/// Balanced random fold assignment: a seeded shuffle of row positions dealt
/// round-robin, so fold sizes differ by at most one.
inline FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) throw ArgumentError("make_folds: need 2 <= k <= n");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng g(seed, 0x464f4c44u /* "FOLD" */, 0);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(g.uniform() * static_cast<double>(i + 1));
    std::swap(perm[i], perm[std::min(j, i)]);
  }
  FoldPlan plan;
  plan.k = k;
  plan.assignment.resize(n);
  for (std::size_t pos = 0; pos < n; ++pos)
    plan.assignment[perm[pos]] = static_cast<std::int32_t>(pos % k);
  return plan;
}

inline FoldPlan make_folds(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  return make_folds(ds.size(), k, seed);
}

/// Which nuisances to replace by intercept-only fits.
struct MisspecPlan {
  bool break_e = false;
  bool break_r = false;
  bool break_p = false;
  bool break_mu0 = false;
  bool break_mu1 = false;
  bool break_mu2 = false;

  void set_break_mu(bool b) { break_mu0 = break_mu1 = break_mu2 = b; }
  bool any() const { return break_e || break_r || break_p || break_mu0 || break_mu1 || break_mu2; }
  bool operator==(const MisspecPlan&) const = default;
};

struct NuisanceOptions {
  PositivityFloors floors;
  double clamp_hi = 1.0 - 1e-6;
  Link mu_link = Link::logit;
  bool shrinkage = true;
  MisspecPlan misspec;
  GlmOptions glm;

  Clamp clamp_for(Stage s) const {
    switch (s) {
      case Stage::auth: return {floors.e_min, clamp_hi};
      case Stage::report: return {floors.r_min, clamp_hi};
      case Stage::maturity: return {floors.p_min, clamp_hi};
    }
    return {};
  }

  bool broken(Stage s) const {
    switch (s) {
      case Stage::auth: return misspec.break_e;
      case Stage::report: return misspec.break_r;
      case Stage::maturity: return misspec.break_p;
    }
    return false;
  }
};

/// Default feature sets. Propensities carry issuer intercepts; the maturity
/// model adds log(Delta) under a complementary log-log link, which is the
/// Weibull law in linear-predictor form.
inline FeatureSpec default_propensity_spec(Stage s, const Dataset& ds) {
  FeatureSpec f = FeatureSpec::all_x(ds.dim());
  f.issuer_intercepts = true;
  if (s == Stage::report) f.w1 = ds.has_w1();
  if (s == Stage::maturity) f.log_delta = true;
  return f;
}

inline Link default_propensity_link(Stage s) {
  return s == Stage::maturity ? Link::cloglog : Link::logit;
}

struct NuisanceSet {
  ShrunkModel e_hat, r_hat, p_hat;
  GlmModel mu2_hat, mu1_hat, mu0_hat;
  double eps10_hat = 0.0;
  double eps01_hat = 0.0;
  int fold = -1;  // rows of this fold were excluded from fitting
  std::size_t train_rows = 0;
  std::vector<ShrinkagePool> pools;
};

namespace detail {

/// Training rows for a fit: everything outside the held-out fold, or every
/// row when no fold plan is given.
inline std::vector<std::size_t> base_rows(const Dataset& ds, const FoldPlan& plan, int fold) {
  if (plan.assignment.empty()) {
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  if (plan.assignment.size() != ds.size()) throw ArgumentError("fold plan size mismatch");
  return plan.training_rows(fold);
}

inline std::vector<std::size_t> stage_rows(Stage s, const Dataset& ds,
                                           std::span<const std::size_t> base) {
  std::vector<std::size_t> rows;
  rows.reserve(base.size());
  for (std::size_t i : base) {
    if (s == Stage::auth || (s == Stage::report && ds.a[i] == 1) ||
        (s == Stage::maturity && ds.a[i] == 1 && ds.r[i] == 1))
      rows.push_back(i);
  }
  return rows;
}

inline std::vector<double> stage_target(Stage s, const Dataset& ds,
                                        std::span<const std::size_t> rows) {
  std::vector<double> y(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const std::size_t i = rows[t];
    y[t] = s == Stage::auth ? ds.a[i] : s == Stage::report ? ds.r[i] : ds.m[i];
  }
  return y;
}

}  // namespace detail

/// Fits one stage propensity on the complement of `held_out_fold` (pass -1 to
/// use every row). Returns the model plus, when shrinkage is on, its pool.
inline std::pair<ShrunkModel, std::optional<ShrinkagePool>> fit_propensity_pooled(
    Stage stage, const Dataset& ds, const FoldPlan& plan, int held_out_fold,
    const NuisanceOptions& opt) {
  const auto base = detail::base_rows(ds, plan, held_out_fold);
  const auto rows = detail::stage_rows(stage, ds, base);
  if (rows.empty())
    throw InsufficientDataError(std::string("no training rows for the ") + stage_name(stage) +
                                " propensity");
  const auto y = detail::stage_target(stage, ds, rows);
  const Clamp clamp = opt.clamp_for(stage);
  const Link link = default_propensity_link(stage);

  ShrunkModel out;
  out.stage = stage;
  out.clamp = clamp;
  if (opt.broken(stage)) {
    out.local = fit_glm(ds, rows, y, link, FeatureSpec::intercept_only(), clamp, opt.glm);
    return {out, std::nullopt};
  }
  FeatureSpec spec = default_propensity_spec(stage, ds);
  out.local = fit_glm(ds, rows, y, link, spec, clamp, opt.glm);
  if (!opt.shrinkage) return {out, std::nullopt};

  std::size_t issuers_with_data = 0;
  for (auto s : out.local.issuer_seen) issuers_with_data += s;
  if (issuers_with_data < 2) return {out, std::nullopt};

  FeatureSpec pooled_spec = spec;
  pooled_spec.issuer_intercepts = false;
  GlmModel pooled = fit_glm(ds, rows, y, link, pooled_spec, clamp, opt.glm);
  auto pool = build_pool(stage, ds, rows, y, pooled, ds.issuer_count(), clamp);
  out = apply_shrinkage(stage, std::move(out.local), std::move(pooled), pool, clamp);
  return {out, pool};
}

inline ShrunkModel fit_propensity(Stage stage, const Dataset& ds, const FoldPlan& plan,
                                  int held_out_fold, const NuisanceOptions& opt) {
  return fit_propensity_pooled(stage, ds, plan, held_out_fold, opt).first;
}

/// Noise-corrected label (y - eps01) / (1 - eps10 - eps01).
inline double noise_correct(double y_obs, double eps10, double eps01) {
  if (!(eps10 >= 0.0 && eps01 >= 0.0 && eps10 + eps01 < 1.0))
    throw InformativeChannelError("noise_correct: need eps10, eps01 >= 0 and eps10 + eps01 < 1");
  return (y_obs - eps01) / (1.0 - eps10 - eps01);
}

/// Corrected labels aligned with the dataset; NaN where o = 0.
inline std::vector<double> corrected_labels(const Dataset& ds, double eps10, double eps01) {
  std::vector<double> out(ds.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.o[i] == 1) out[i] = noise_correct(ds.y_obs[i], eps10, eps01);
  return out;
}

struct NestedRegressions {
  GlmModel mu2, mu1, mu0;
};

/// Inside-out sequential regression on the complement of `held_out_fold`:
/// mu2 on o=1 rows against the corrected label, mu1 on a=r=1 rows against
/// mu2's prediction, mu0 against mu1's prediction on the rows where mu1 is
/// defined (all rows unless mu1 reads w1, which exists only when a=1).
inline NestedRegressions fit_nested_regressions(const Dataset& ds,
                                                std::span<const double> corrected,
                                                const FoldPlan& plan, int held_out_fold,
                                                const NuisanceOptions& opt) {
  if (corrected.size() != ds.size()) throw ArgumentError("corrected labels misaligned");
  const auto base = detail::base_rows(ds, plan, held_out_fold);
  const FeatureSpec post = [&] {
    FeatureSpec s = FeatureSpec::all_x(ds.dim());
    s.w1 = ds.has_w1();
    return s;
  }();
  const FeatureSpec pre = FeatureSpec::all_x(ds.dim());
  const auto& ms = opt.misspec;

  NestedRegressions out;
  std::vector<std::size_t> rows;
  std::vector<double> y;

  for (std::size_t i : base)
    if (ds.o[i] == 1) {
      rows.push_back(i);
      y.push_back(corrected[i]);
    }
  if (rows.empty()) throw InsufficientDataError("no observed labels to fit mu2");
  out.mu2 = fit_glm(ds, rows, y, opt.mu_link, ms.break_mu2 ? FeatureSpec{} : post, std::nullopt,
                    opt.glm);

  rows.clear();
  y.clear();
  for (std::size_t i : base)
    if (ds.a[i] == 1 && ds.r[i] == 1) {
      rows.push_back(i);
      y.push_back(out.mu2.predict(ds, i));
    }
  out.mu1 = fit_glm(ds, rows, y, opt.mu_link, ms.break_mu1 ? FeatureSpec{} : post, std::nullopt,
                    opt.glm);

  const bool mu1_needs_approval = out.mu1.spec.w1;
  rows.clear();
  y.clear();
  for (std::size_t i : base)
    if (!mu1_needs_approval || ds.a[i] == 1) {
      rows.push_back(i);
      y.push_back(out.mu1.predict(ds, i));
    }
  if (rows.empty()) throw InsufficientDataError("no rows to fit mu0");
  out.mu0 = fit_glm(ds, rows, y, opt.mu_link, ms.break_mu0 ? FeatureSpec{} : pre, std::nullopt,
                    opt.glm);
  return out;
}

/// Flip rates from an audit sample of (y_obs, y_true) pairs.
inline std::pair<double, double> estimate_corruption_from_audit(
    std::span<const std::pair<int, int>> audit) {
  std::size_t n1 = 0, n0 = 0, flip10 = 0, flip01 = 0;
  for (const auto& [obs, truth] : audit) {
    if (truth == 1) {
      ++n1;
      flip10 += obs == 0;
    } else {
      ++n0;
      flip01 += obs == 1;
    }
  }
  if (n1 == 0 || n0 == 0)
    throw InsufficientDataError("audit sample must contain both true classes");
  const double e10 = static_cast<double>(flip10) / static_cast<double>(n1);
  const double e01 = static_cast<double>(flip01) / static_cast<double>(n0);
  if (!(e10 + e01 < 1.0))
    throw InformativeChannelError("audit rates give eps10 + eps01 >= 1");
  return {e10, e01};
}

struct CrossfitOptions {
  std::size_t k = 5;
  std::uint64_t seed = 1;
  NuisanceOptions nuisance;
  double eps10 = 0.0;
  double eps01 = 0.0;
};

struct Crossfit {
  FoldPlan plan;
  std::vector<NuisanceSet> sets;  // sets[k].fold == k
};

inline NuisanceSet fit_nuisance_set(const Dataset& ds, const FoldPlan& plan, int fold,
                                    const NuisanceOptions& opt, double eps10, double eps01,
                                    std::span<const double> corrected) {
  NuisanceSet ns;
  ns.fold = fold;
  ns.eps10_hat = eps10;
  ns.eps01_hat = eps01;
  ns.train_rows = detail::base_rows(ds, plan, fold).size();
  auto [e, pe] = fit_propensity_pooled(Stage::auth, ds, plan, fold, opt);
  auto [r, pr] = fit_propensity_pooled(Stage::report, ds, plan, fold, opt);
  auto [p, pp] = fit_propensity_pooled(Stage::maturity, ds, plan, fold, opt);
  ns.e_hat = std::move(e);
  ns.r_hat = std::move(r);
  ns.p_hat = std::move(p);
  for (auto* pool : {&pe, &pr, &pp})
    if (*pool) ns.pools.push_back(**pool);
  auto mus = fit_nested_regressions(ds, corrected, plan, fold, opt);
  ns.mu2_hat = std::move(mus.mu2);
  ns.mu1_hat = std::move(mus.mu1);
  ns.mu0_hat = std::move(mus.mu0);
  return ns;
}

/// One NuisanceSet per fold, each fitted without that fold.
inline Crossfit crossfit_nuisances(const Dataset& ds, const CrossfitOptions& opt) {
  Crossfit cf;
  cf.plan = make_folds(ds, opt.k, opt.seed);
  const auto corrected = corrected_labels(ds, opt.eps10, opt.eps01);
  for (std::size_t f = 0; f < opt.k; ++f) {
    cf.sets.push_back(fit_nuisance_set(ds, cf.plan, static_cast<int>(f), opt.nuisance, opt.eps10,
                                       opt.eps01, corrected));
  }
  return cf;
}

/// Area under the ROC curve by the rank-sum formula, ties counted half.
inline double auc(std::span<const double> score, std::span<const int> label) {
  if (score.size() != label.size()) throw ArgumentError("auc: length mismatch");
  std::vector<std::size_t> idx(score.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0, n1 = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && score[idx[j]] == score[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (label[idx[t]] == 1) {
        rank_sum += avg;
        ++pos;
      }
    i = j;
  }
  n1 = idx.size() - pos;
  if (pos == 0 || n1 == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(pos), nn = static_cast<double>(n1);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace strl
