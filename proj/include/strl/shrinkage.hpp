#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strl/dataset.hpp"
#include "strl/error.hpp"
#include "strl/glm.hpp"

namespace strl {

enum class Stage { auth, report, maturity };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::auth: return "auth";
    case Stage::report: return "report";
    case Stage::maturity: return "maturity";
  }
  return "?";
}

struct IssuerStats {
  std::int32_t issuer = 0;
  std::size_t n_i = 0;
  double local_est = 0.0;
  double local_var = 0.0;  // per-record variance; sampling variance is local_var/n_i
};

struct VarianceComponents {
  double sigma_B2 = 0.0;
  double global_est = 0.0;
};

/// Method-of-moments between-issuer variance. Issuers are weighted by n_i,
/// the between-issuer spread is measured around the weighted mean, and the
/// weighted mean sampling variance is subtracted (floored at zero).
inline VarianceComponents estimate_variance_components(std::span<const IssuerStats> stats) {
  double wsum = 0.0;
  std::size_t used = 0;
  for (const auto& s : stats) {
    if (s.local_var < 0.0) throw ArgumentError("local_var must be non-negative");
    if (s.n_i > 0) {
      wsum += static_cast<double>(s.n_i);
      ++used;
    }
  }
  if (used < 2) throw InsufficientDataError("variance components need >= 2 issuers with data");
  double gm = 0.0;
  for (const auto& s : stats)
    if (s.n_i > 0) gm += static_cast<double>(s.n_i) / wsum * s.local_est;
  double between = 0.0, sampling = 0.0;
  for (const auto& s : stats) {
    if (s.n_i == 0) continue;
    const double w = static_cast<double>(s.n_i) / wsum;
    between += w * (s.local_est - gm) * (s.local_est - gm);
    sampling += w * s.local_var / static_cast<double>(s.n_i);
  }
  return {std::max(0.0, between - sampling), gm};
}

/// sigma_B2 / (sigma_B2 + sigma_i2 / n_i), with n_i = 0 giving 0 and two zero
/// variances giving 1.
inline double shrinkage_weight(double sigma_B2, double sigma_i2, std::size_t n_i) {
  if (sigma_B2 < 0.0 || sigma_i2 < 0.0) throw ArgumentError("variances must be non-negative");
  if (n_i == 0) return 0.0;
  if (sigma_B2 == 0.0 && sigma_i2 == 0.0) return 1.0;
  return sigma_B2 / (sigma_B2 + sigma_i2 / static_cast<double>(n_i));
}

inline double shrink(double local, double global, double lambda) {
  return lambda * local + (1.0 - lambda) * global;
}

struct IssuerShrinkage {
  std::int32_t issuer = 0;
  std::size_t n_i = 0;
  double local = 0.0;
  double global = 0.0;
  double lambda = 0.0;
  double eb_est = 0.0;
};

struct ShrinkagePool {
  Stage stage = Stage::auth;
  double global_est = 0.0;
  double sigma_B2 = 0.0;
  std::vector<IssuerShrinkage> per_issuer;

  double lambda_for(std::int32_t issuer) const {
    for (const auto& p : per_issuer)
      if (p.issuer == issuer) return p.lambda;
    return 0.0;
  }
};

/// Per-issuer empirical rates of a binary target over the given rows. The
/// sampling-variance proxy is p(1-p) at the rate clamped to [lo, hi].
inline std::vector<IssuerStats> issuer_stats(const Dataset& ds, std::span<const std::size_t> rows,
                                             std::span<const double> target, std::size_t issuers,
                                             double lo, double hi) {
  std::vector<IssuerStats> out(issuers);
  std::vector<double> sum(issuers, 0.0);
  for (std::size_t k = 0; k < issuers; ++k) out[k].issuer = static_cast<std::int32_t>(k);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto g = static_cast<std::size_t>(ds.issuer[rows[t]]);
    if (g >= issuers) continue;
    sum[g] += target[t];
    ++out[g].n_i;
  }
  for (std::size_t k = 0; k < issuers; ++k) {
    if (out[k].n_i == 0) continue;
    const double p = std::clamp(sum[k] / static_cast<double>(out[k].n_i), lo, hi);
    out[k].local_est = p;
    out[k].local_var = p * (1.0 - p);
  }
  return out;
}

/// Issuer-level model blended with a pooled model:
/// lambda_i * local(x) + (1 - lambda_i) * pooled(x), then clamped.
struct ShrunkModel {
  Stage stage = Stage::auth;
  GlmModel local;
  std::optional<GlmModel> pooled;
  std::vector<double> lambda;  // per issuer
  std::optional<Clamp> clamp;

  /// `unseen` is set when the issuer had no training data and the pooled path
  /// (lambda = 0) was taken.
  double predict(const Dataset& ds, std::size_t i, bool* unseen = nullptr) const {
    const std::int32_t g = ds.issuer[i];
    const bool known = !local.spec.issuer_intercepts || local.knows_issuer(g);
    if (unseen) *unseen = !known;
    double v;
    if (!pooled) {
      v = local.predict(ds, i);
    } else if (!known) {
      v = pooled->predict(ds, i);
    } else {
      const double l =
          static_cast<std::size_t>(g) < lambda.size() ? lambda[static_cast<std::size_t>(g)] : 0.0;
      v = shrink(local.predict(ds, i), pooled->predict(ds, i), l);
    }
    return clamp ? std::clamp(v, clamp->lo, clamp->hi) : v;
  }
};

/// Builds the per-issuer shrinkage pool for a stage from the local (issuer
/// intercept) and pooled models fitted on `rows` with binary `target`.
inline ShrinkagePool build_pool(Stage stage, const Dataset& ds, std::span<const std::size_t> rows,
                                std::span<const double> target, const GlmModel& pooled,
                                std::size_t issuers, const Clamp& clamp) {
  ShrinkagePool pool;
  pool.stage = stage;
  auto stats = issuer_stats(ds, rows, target, issuers, clamp.lo, clamp.hi);
  const auto vc = estimate_variance_components(stats);
  pool.sigma_B2 = vc.sigma_B2;
  pool.global_est = vc.global_est;
  std::vector<double> gsum(issuers, 0.0);
  for (std::size_t r : rows) {
    const auto g = static_cast<std::size_t>(ds.issuer[r]);
    if (g < issuers) gsum[g] += pooled.predict(ds, r);
  }
  for (const auto& s : stats) {
    IssuerShrinkage e;
    e.issuer = s.issuer;
    e.n_i = s.n_i;
    e.local = s.local_est;
    e.global = s.n_i ? gsum[static_cast<std::size_t>(s.issuer)] / static_cast<double>(s.n_i)
                     : vc.global_est;
    e.lambda = shrinkage_weight(vc.sigma_B2, s.local_var, s.n_i);
    e.eb_est = shrink(e.local, e.global, e.lambda);
    pool.per_issuer.push_back(e);
  }
  return pool;
}

inline ShrunkModel apply_shrinkage(Stage stage, GlmModel local, GlmModel pooled,
                                   const ShrinkagePool& pool, std::optional<Clamp> clamp) {
  if (pool.stage != stage) throw ArgumentError("apply_shrinkage: pool stage mismatch");
  ShrunkModel m;
  m.stage = stage;
  m.local = std::move(local);
  m.pooled = std::move(pooled);
  m.clamp = clamp;
  std::int32_t mx = -1;
  for (const auto& p : pool.per_issuer) mx = std::max(mx, p.issuer);
  m.lambda.assign(static_cast<std::size_t>(mx + 1), 0.0);
  for (const auto& p : pool.per_issuer) m.lambda[static_cast<std::size_t>(p.issuer)] = p.lambda;
  return m;
}

}  // namespace strl
