#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "strl/dataset.hpp"
#include "strl/error.hpp"
#include "strl/numeric.hpp"
#include "strl/rng.hpp"

namespace strl {

struct PositivityFloors {
  double e_min = 0.05;
  double r_min = 0.05;
  double p_min = 0.05;
};

struct ReportParams {
  std::vector<double> base;  // per-issuer logit intercept
  std::vector<double> coef;  // length d
};

/// Per-issuer Weibull maturity. The rate for a record is lambda[i]*exp(coef.x).
struct DelayParams {
  std::vector<double> lambda;
  double beta = 1.0;
  std::vector<double> coef;  // length d; empty means zeros
};

struct SimConfig {
  std::size_t n = 10000;
  std::size_t d = 2;
  std::size_t issuer_count = 1;
  std::vector<double> issuer_weights;  // empty means uniform
  std::vector<double> fraud_coef;      // length d+1, intercept first
  std::vector<double> auth_coef;       // length d+1, intercept first
  ReportParams report;
  DelayParams delay;
  double maturity_delay_days = 0.0;  // smallest Delta in the training window
  double window_days = 90.0;
  double eps10 = 0.0;
  double eps01 = 0.0;
  PositivityFloors floors;
  std::uint64_t seed = 1;
  bool post_auth_signal = false;
  double w1_strength = 1.0;
  // Odds-ratio tilts applied to Y*=1 records at the auth and report gates.
  double tilt_gamma_a = 1.0;
  double tilt_gamma_r = 1.0;

  void validate() const {
    auto bad = [](const std::string& m) { throw ConfigError(m); };
    if (n < 1) bad("n must be at least 1");
    if (d < 1) bad("d must be at least 1");
    if (issuer_count < 1) bad("issuer_count must be at least 1");
    if (!issuer_weights.empty()) {
      if (issuer_weights.size() != issuer_count) bad("issuer_weights size != issuer_count");
      double s = 0.0;
      for (double w : issuer_weights) {
        if (!(w >= 0.0)) bad("issuer_weights must be non-negative");
        s += w;
      }
      if (!(s > 0.0)) bad("issuer_weights sum to zero");
    }
    if (fraud_coef.size() != d + 1) bad("fraud_coef must have length d+1");
    if (auth_coef.size() != d + 1) bad("auth_coef must have length d+1");
    if (report.base.size() != issuer_count) bad("report.base must have issuer_count entries");
    if (report.coef.size() != d) bad("report.coef must have length d");
    if (delay.lambda.size() != issuer_count) bad("delay.lambda must have issuer_count entries");
    for (double l : delay.lambda)
      if (!(l > 0.0)) bad("delay.lambda must be positive");
    if (!(delay.beta > 0.0)) bad("delay.beta must be positive");
    if (!delay.coef.empty() && delay.coef.size() != d) bad("delay.coef must have length d");
    if (!(window_days >= 0.0) || !(maturity_delay_days >= 0.0)) bad("negative window");
    if (!(eps10 >= 0.0 && eps10 < 1.0) || !(eps01 >= 0.0 && eps01 < 1.0))
      bad("corruption rates must lie in [0,1)");
    if (!(eps10 + eps01 < 1.0)) bad("eps10 + eps01 must be < 1");
    for (double f : {floors.e_min, floors.r_min, floors.p_min})
      if (!(f > 0.0 && f < 1.0)) bad("positivity floors must lie in (0,1)");
    if (!(tilt_gamma_a >= 1.0) || !(tilt_gamma_r >= 1.0)) bad("tilts must be >= 1");
    if (post_auth_signal && !std::isfinite(w1_strength)) bad("w1_strength must be finite");
  }
};

struct PopulationTruth {
  std::vector<std::int8_t> y_star;
  std::vector<double> e_true, r_true, p_true, f_true;
  std::vector<double> tau;  // NaN where not drawn (a=0 or r=0)
  double psi_true = 0.0;
  double eps10 = 0.0;
  double eps01 = 0.0;

  std::size_t size() const noexcept { return y_star.size(); }
};

struct Population {
  Dataset records;
  PopulationTruth truth;
};

/// Class-conditional flip given a uniform draw u.
inline int apply_corruption(int y, double eps10, double eps01, double u) {
  if (!(eps10 + eps01 < 1.0)) throw InformativeChannelError("eps10 + eps01 must be < 1");
  if (y == 1) return u < eps10 ? 0 : 1;
  return u < eps01 ? 1 : 0;
}

template <class Rng>
  requires requires(Rng& g) { g.uniform(); }
int apply_corruption(int y, double eps10, double eps01, Rng& rng) {
  return apply_corruption(y, eps10, eps01, rng.uniform());
}

/// Weibull CDF 1 - exp(-(rate*delta)^beta).
inline double weibull_cdf(double rate, double beta, double delta) {
  if (delta <= 0.0) return 0.0;
  return -std::expm1(-std::pow(rate * delta, beta));
}

inline double weibull_quantile(double rate, double beta, double u) {
  return std::pow(-std::log1p(-u), 1.0 / beta) / rate;
}

/// Odds of `p` multiplied by gamma.
inline double odds_tilt(double p, double gamma) {
  if (gamma == 1.0) return p;
  return p * gamma / (1.0 - p + p * gamma);
}

namespace detail {

inline double linear(const std::vector<double>& coef, std::span<const double> x,
                     bool intercept_first) {
  double s = intercept_first ? coef[0] : 0.0;
  const std::size_t off = intercept_first ? 1 : 0;
  for (std::size_t j = 0; j < x.size(); ++j) s += coef[j + off] * x[j];
  return s;
}

inline constexpr std::uint64_t kRecordStream = 0x5245434fu;  // "RECO"

}  // namespace detail

/// True stage propensities for a record of the configured population. These
/// are the functions the simulator draws from, before any tilt.
struct StagePropensities {
  double f, e, r, p, p_raw, rate;
};

inline StagePropensities true_propensities(const SimConfig& cfg, std::span<const double> x,
                                           std::int32_t issuer, double delta) {
  StagePropensities s{};
  s.f = logistic(detail::linear(cfg.fraud_coef, x, true));
  s.e = std::max(cfg.floors.e_min, logistic(detail::linear(cfg.auth_coef, x, true)));
  s.r = std::max(cfg.floors.r_min,
                 logistic(cfg.report.base[issuer] + detail::linear(cfg.report.coef, x, false)));
  const double kx = cfg.delay.coef.empty() ? 0.0 : detail::linear(cfg.delay.coef, x, false);
  s.rate = cfg.delay.lambda[issuer] * std::exp(kx);
  s.p_raw = weibull_cdf(s.rate, cfg.delay.beta, delta);
  s.p = std::max(cfg.floors.p_min, s.p_raw);
  return s;
}

/// Draws the population. Record i uses its own counter-based stream, so the
/// output is a pure function of (cfg, i) and does not depend on generation order.
inline Population generate_population(const SimConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n;
  const std::size_t d = cfg.d;

  std::vector<double> cum(cfg.issuer_count);
  if (cfg.issuer_weights.empty()) {
    for (std::size_t k = 0; k < cfg.issuer_count; ++k)
      cum[k] = static_cast<double>(k + 1) / static_cast<double>(cfg.issuer_count);
  } else {
    std::partial_sum(cfg.issuer_weights.begin(), cfg.issuer_weights.end(), cum.begin());
    for (double& c : cum) c /= cum.back();
  }

  Population pop;
  Dataset& ds = pop.records;
  ds = Dataset(d, cfg.post_auth_signal);
  ds.id.resize(n);
  ds.issuer.resize(n);
  ds.delta.resize(n);
  ds.a.resize(n);
  ds.r.resize(n);
  ds.m.resize(n);
  ds.o.resize(n);
  ds.y_obs.resize(n);
  ds.x.resize(n * d);
  if (cfg.post_auth_signal) ds.w1.resize(n);

  PopulationTruth& tr = pop.truth;
  tr.y_star.resize(n);
  tr.e_true.resize(n);
  tr.r_true.resize(n);
  tr.p_true.resize(n);
  tr.f_true.resize(n);
  tr.tau.assign(n, std::numeric_limits<double>::quiet_NaN());
  tr.eps10 = cfg.eps10;
  tr.eps01 = cfg.eps01;

  for (std::size_t i = 0; i < n; ++i) {
    CounterRng g(cfg.seed, detail::kRecordStream, i);
    double* xi = ds.x.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) xi[j] = g.normal();
    const double u_iss = g.uniform();
    const auto issuer = static_cast<std::int32_t>(
        std::min<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u_iss) - cum.begin(),
                              cfg.issuer_count - 1));
    const double delta = cfg.maturity_delay_days + cfg.window_days * g.uniform();
    const double u_y = g.uniform();
    const double u_a = g.uniform();
    const double u_r = g.uniform();
    const double u_m = g.uniform();
    const double z_w1 = g.normal();
    const double u_c = g.uniform();

    const auto sp = true_propensities(cfg, {xi, d}, issuer, delta);
    const int y = u_y < sp.f ? 1 : 0;
    const double e_draw = y == 1 ? odds_tilt(sp.e, cfg.tilt_gamma_a) : sp.e;
    const double r_draw = y == 1 ? odds_tilt(sp.r, cfg.tilt_gamma_r) : sp.r;

    ds.id[i] = static_cast<std::int64_t>(i);
    ds.issuer[i] = issuer;
    ds.delta[i] = delta;
    const int a = u_a < e_draw ? 1 : 0;
    ds.a[i] = static_cast<std::int8_t>(a);
    ds.r[i] = kAbsent;
    ds.m[i] = kAbsent;
    ds.o[i] = 0;
    ds.y_obs[i] = kAbsent;
    if (cfg.post_auth_signal) {
      ds.w1[i] = a == 1 ? cfg.w1_strength * y + z_w1 : std::numeric_limits<double>::quiet_NaN();
    }
    if (a == 1) {
      const int r = u_r < r_draw ? 1 : 0;
      ds.r[i] = static_cast<std::int8_t>(r);
      if (r == 1) {
        // M = 1{tau <= Delta}. When the floor binds, matured draws are mapped
        // into [0, p_raw) so the equivalence survives.
        const int m = u_m < sp.p ? 1 : 0;
        const double u_tau = (m == 1 && sp.p > sp.p_raw) ? u_m * sp.p_raw / sp.p : u_m;
        double tau = weibull_quantile(sp.rate, cfg.delay.beta, u_tau);
        if (m == 1) tau = std::min(tau, delta);
        tr.tau[i] = tau;
        ds.m[i] = static_cast<std::int8_t>(m);
        if (m == 1) {
          ds.o[i] = 1;
          ds.y_obs[i] =
              static_cast<std::int8_t>(apply_corruption(y, cfg.eps10, cfg.eps01, u_c));
        }
      }
    }
    tr.y_star[i] = static_cast<std::int8_t>(y);
    tr.f_true[i] = sp.f;
    tr.e_true[i] = sp.e;
    tr.r_true[i] = sp.r;
    tr.p_true[i] = sp.p;
  }

  std::size_t pos = 0;
  for (auto v : tr.y_star) pos += static_cast<std::size_t>(v);
  tr.psi_true = static_cast<double>(pos) / static_cast<double>(n);
  return pop;
}

/// Horvitz-Thompson estimate with the true propensities. Requires a clean
/// label channel, since identification assumes the observed label is Y*.
inline double oracle_psi_ht(const Dataset& ds, const PopulationTruth& truth) {
  if (truth.eps10 != 0.0 || truth.eps01 != 0.0)
    throw ContractError("oracle_psi_ht requires corruption disabled");
  if (ds.size() != truth.size()) throw ArgumentError("records and truth differ in length");
  if (ds.empty()) throw ArgumentError("empty dataset");
  std::vector<double> term(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    term[i] = ds.o[i] == 1
                  ? ds.y_obs[i] / (truth.e_true[i] * truth.r_true[i] * truth.p_true[i])
                  : 0.0;
  }
  return mean(term);
}

/// E[f0(X)] for X ~ N(0, I): a one-dimensional integral over the linear index.
inline double population_psi(const SimConfig& cfg) {
  double b2 = 0.0;
  for (std::size_t j = 1; j < cfg.fraud_coef.size(); ++j) b2 += cfg.fraud_coef[j] * cfg.fraud_coef[j];
  const double b0 = cfg.fraud_coef.at(0);
  const double s = std::sqrt(b2);
  if (s == 0.0) return logistic(b0);
  auto integrand = [&](double z) {
    return logistic(b0 + s * z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -std::numeric_limits<double>::infinity(),
      std::numeric_limits<double>::infinity(), 15, 1e-13);
}

// ---------------------------------------------------------------- presets

/// Ten issuers; about 40% of frauds declined, a third of approved frauds never
/// reported, 37.5% of reported frauds not yet matured, 8% of observed fraud
/// labels flipped. Fraud rate 1%.
inline SimConfig preset_example1(std::size_t n = 1'000'000, std::uint64_t seed = 1) {
  SimConfig c;
  c.n = n;
  c.d = 2;
  c.issuer_count = 10;
  c.fraud_coef = {-10.24924602, 4.0, 0.0};
  c.auth_coef = {6.09775141, -2.32767986, 0.0};
  c.report.coef = {-3.71119717, 0.0};
  c.delay.beta = 1.0;
  c.delay.coef = {-2.22185633, 0.0};
  const double base_rate = std::exp(0.39037493);
  for (std::size_t k = 0; k < 10; ++k) {
    const double t = -1.0 + 2.0 * static_cast<double>(k) / 9.0;
    c.report.base.push_back(9.19525917 + 0.6 * t);
    c.delay.lambda.push_back(base_rate * std::exp(0.4 * t));
  }
  c.maturity_delay_days = 30.0;
  c.window_days = 60.0;
  c.eps10 = 0.08;
  c.eps01 = 0.0;
  c.floors = {0.05, 0.05, 0.05};
  c.seed = seed;
  return c;
}

/// Every gate open, clean labels.
inline SimConfig preset_uncensored(std::size_t n, std::uint64_t seed = 7) {
  SimConfig c;
  c.n = n;
  c.d = 2;
  c.issuer_count = 1;
  c.fraud_coef = {-2.0, 1.0, 0.5};
  c.auth_coef = {40.0, 0.0, 0.0};
  c.report = {{40.0}, {0.0, 0.0}};
  c.delay = {{1e6}, 1.0, {}};
  c.maturity_delay_days = 1.0;
  c.window_days = 1.0;
  c.seed = seed;
  return c;
}

/// Moderate-rate population with feature-driven selection at every gate and
/// floors of 0.3, used by the robustness and coverage experiments.
inline SimConfig preset_selective(std::size_t n, std::uint64_t seed = 11) {
  SimConfig c;
  c.n = n;
  c.d = 2;
  c.issuer_count = 5;
  c.fraud_coef = {-2.0, 1.0, -0.5};
  c.auth_coef = {2.0, -0.8, 0.2};
  c.report.coef = {-0.4, -0.3};
  c.report.base = {0.8, 1.0, 1.2, 1.4, 1.6};
  c.delay.lambda = {0.04, 0.045, 0.05, 0.055, 0.06};
  c.delay.beta = 1.0;
  c.delay.coef = {-0.4, 0.2};
  c.maturity_delay_days = 30.0;
  c.window_days = 60.0;
  c.floors = {0.3, 0.3, 0.3};
  c.seed = seed;
  return c;
}

}  // namespace strl
