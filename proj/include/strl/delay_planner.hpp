#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "strl/error.hpp"

namespace strl {

/// p(delta) = p_inf * (1 - exp(-(lambda*delta)^beta)).
struct MaturityCurve {
  double lambda = 0.03;
  double beta = 1.0;
  double p_inf = 1.0;

  void validate() const {
    if (!(lambda > 0.0)) throw ConfigError("maturity curve: lambda must be positive");
    if (!(beta > 0.0)) throw ConfigError("maturity curve: beta must be positive");
    if (!(p_inf > 0.0 && p_inf <= 1.0)) throw ConfigError("maturity curve: p_inf must lie in (0,1]");
  }
};

inline double maturity(const MaturityCurve& c, double delta) {
  if (!(delta >= 0.0)) throw ArgumentError("maturity: delta must be non-negative");
  if (delta == 0.0) return 0.0;
  return c.p_inf * -std::expm1(-std::pow(c.lambda * delta, c.beta));
}

inline double maturity_derivative(const MaturityCurve& c, double delta) {
  if (!(delta >= 0.0)) throw ArgumentError("maturity_derivative: delta must be non-negative");
  const double ld = c.lambda * delta;
  if (delta == 0.0) {
    if (c.beta == 1.0) return c.lambda * c.p_inf;
    return c.beta < 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return c.p_inf * c.beta * c.lambda * std::pow(ld, c.beta - 1.0) * std::exp(-std::pow(ld, c.beta));
}

/// Inverse of the maturity curve; nullopt when y >= p_inf (never reached).
inline std::optional<double> maturity_inverse(const MaturityCurve& c, double y) {
  if (y <= 0.0) return 0.0;
  if (y >= c.p_inf) return std::nullopt;
  return std::pow(-std::log1p(-y / c.p_inf), 1.0 / c.beta) / c.lambda;
}

struct NetworkParams {
  double pi = 0.01;
  double e_bar = 0.85;
  double r_bar = 0.70;
  double gamma = 0.81;
  double eta = 1.0;
  double nu = 0.001;
  double n = 1e7;
  MaturityCurve curve;

  void validate() const {
    curve.validate();
    if (!(pi > 0.0 && pi < 1.0)) throw ConfigError("pi must lie in (0,1)");
    if (!(e_bar > 0.0 && e_bar <= 1.0)) throw ConfigError("e_bar must lie in (0,1]");
    if (!(r_bar > 0.0 && r_bar <= 1.0)) throw ConfigError("r_bar must lie in (0,1]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0,1]");
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    if (!(nu >= 0.0)) throw ConfigError("nu must be non-negative");
    if (!(n > 0.0)) throw ConfigError("n must be positive");
  }
};

/// Heterogeneity penalty (1 + CV_q^2)(1 + rho CV_f CV_{1/q}), with
/// CV_q^2 approximated by the sum of the stage CVs squared.
inline double heterogeneity_penalty(double cv_e2, double cv_r2, double cv_p2, double rho_fq,
                                    double cv_f, double cv_invq) {
  if (cv_e2 < 0.0 || cv_r2 < 0.0 || cv_p2 < 0.0 || cv_f < 0.0 || cv_invq < 0.0)
    throw ArgumentError("CV components must be non-negative");
  return (1.0 + cv_e2 + cv_r2 + cv_p2) * (1.0 + rho_fq * cv_f * cv_invq);
}

/// C1 with n in the denominator (marginal estimation) or without it
/// (per-observation model training).
enum class C1Convention { marginal, model };

inline double c1_constant(const NetworkParams& p, C1Convention conv) {
  const double base = p.pi * (1.0 - p.pi) * p.eta / (p.e_bar * p.r_bar * p.gamma);
  return conv == C1Convention::marginal ? base / p.n : base;
}

struct ErrorTerms {
  std::optional<double> e_stat;  // nullopt: unbounded (no labels matured)
  double e_drift = 0.0;
  std::optional<double> e_total;
};

/// Statistical error pi(1-pi)eta/(n e r p(Delta) gamma) plus drift nu*Delta.
inline ErrorTerms total_error(const NetworkParams& p, double delta,
                              C1Convention conv = C1Convention::marginal) {
  if (!(delta >= 0.0)) throw ArgumentError("total_error: delta must be non-negative");
  ErrorTerms t;
  t.e_drift = p.nu * delta;
  const double pm = maturity(p.curve, delta);
  if (pm > 0.0) {
    t.e_stat = c1_constant(p, conv) / pm;
    t.e_total = *t.e_stat + t.e_drift;
  }
  return t;
}

enum class DelayState { finite, boundary, wait_forever };

inline const char* delay_state_name(DelayState s) {
  switch (s) {
    case DelayState::finite: return "finite";
    case DelayState::boundary: return "boundary";
    case DelayState::wait_forever: return "wait_forever";
  }
  return "?";
}

struct ErrorCurvePoint {
  double delta = 0.0;
  std::optional<double> e_stat;
  double e_drift = 0.0;
  std::optional<double> e_total;
};

struct DelayPlan {
  C1Convention convention = C1Convention::model;
  double c1 = 0.0;
  double c2 = 0.0;
  double argument = 0.0;  // C1 lambda / C2 (exponential case)

  DelayState str_state = DelayState::finite;
  double delta_star_str = 0.0;  // max(0, log(argument)/lambda)
  bool boundary_case = false;
  std::optional<double> delta_star_approx;  // log(argument)/lambda, unclamped

  DelayState exact_state = DelayState::finite;
  double delta_star_exact = 0.0;  // minimizer of C1/p + C2*Delta
  double u_star = 1.0;            // exp(-lambda Delta*) at the exact root
  double u_approx = 0.0;          // C2 / (C1 lambda)

  DelayState naive_state = DelayState::finite;
  double delta_star_naive = 0.0;
  bool naive_tolerable_at_zero = false;
  double zeta = 0.0;
  double eps_b = 0.0;

  double freshness_gain = 0.0;
  bool freshness_formula_evaluable = true;

  std::vector<ErrorCurvePoint> error_curve;
};

/// Minimizer of C1/p(Delta) + C2*Delta. Exponential maturity uses the smaller
/// root of C2 u^2 - (2 C2 + C1' lambda) u + C2 = 0 with C1' = C1/p_inf; other
/// shapes bisect the first-order condition on (0, 10/lambda].
inline void solve_exact(const NetworkParams& p, double c1, DelayPlan& plan) {
  const double c2 = p.nu;
  const auto& cv = p.curve;
  if (c2 == 0.0) {
    plan.exact_state = DelayState::wait_forever;
    plan.delta_star_exact = std::numeric_limits<double>::infinity();
    plan.u_star = 0.0;
    return;
  }
  if (cv.beta == 1.0) {
    const double a = c2 * cv.p_inf / (c1 * cv.lambda);
    // Roots multiply to 1; the small one in cancellation-free form.
    const double u = 2.0 * a / ((2.0 * a + 1.0) + std::sqrt(1.0 + 4.0 * a));
    plan.u_star = u;
    plan.delta_star_exact = -std::log(u) / cv.lambda;
    plan.exact_state = DelayState::finite;
    return;
  }
  auto g = [&](double d) {
    const double pm = maturity(cv, d);
    return c1 * maturity_derivative(cv, d) - c2 * pm * pm;
  };
  double lo = 0.0, hi = 10.0 / cv.lambda;
  if (g(hi) > 0.0) {
    plan.delta_star_exact = hi;
  } else {
    lo = std::numeric_limits<double>::min();
    for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) > 0.0 ? lo : hi) = mid;
    }
    plan.delta_star_exact = 0.5 * (lo + hi);
  }
  plan.u_star = std::exp(-cv.lambda * plan.delta_star_exact);
  plan.exact_state = DelayState::finite;
}

/// Optimal STR delay: exact minimizer plus the closed-form approximation and
/// its boundary rule (zero when C1 lambda / C2 <= 1).
inline DelayPlan solve_delta_star_str(const NetworkParams& p,
                                      C1Convention conv = C1Convention::model) {
  p.validate();
  DelayPlan plan;
  plan.convention = conv;
  plan.c1 = c1_constant(p, conv);
  plan.c2 = p.nu;
  solve_exact(p, plan.c1, plan);
  if (p.nu == 0.0) {
    plan.str_state = DelayState::wait_forever;
    plan.delta_star_str = std::numeric_limits<double>::infinity();
    plan.argument = std::numeric_limits<double>::infinity();
    return plan;
  }
  const double c1p = plan.c1 / p.curve.p_inf;
  plan.argument = c1p * p.curve.lambda / plan.c2;
  plan.u_approx = 1.0 / plan.argument;
  plan.delta_star_approx = std::log(plan.argument) / p.curve.lambda;
  if (plan.argument <= 1.0) {
    plan.boundary_case = true;
    plan.str_state = DelayState::boundary;
    plan.delta_star_str = 0.0;
  } else {
    plan.str_state = DelayState::finite;
    plan.delta_star_str = *plan.delta_star_approx;
  }
  return plan;
}

/// Delay until the naive estimator's selection bias falls to eps_b:
/// p^{-1}(1 - eps_b/zeta). Zero when eps_b >= zeta.
inline double solve_delta_star_naive(const NetworkParams& p, double zeta, double eps_b,
                                     DelayState* state = nullptr) {
  p.curve.validate();
  if (!(zeta > 0.0) || !(eps_b > 0.0)) throw ArgumentError("zeta and eps_b must be positive");
  if (state) *state = DelayState::finite;
  if (eps_b >= zeta) {
    if (state) *state = DelayState::boundary;
    return 0.0;
  }
  const auto d = maturity_inverse(p.curve, 1.0 - eps_b / zeta);
  if (!d) {
    if (state) *state = DelayState::wait_forever;
    return std::numeric_limits<double>::infinity();
  }
  return *d;
}

/// Delta*_naive - Delta*_STR.
inline double freshness_gain(const DelayPlan& plan) {
  return plan.delta_star_naive - plan.delta_star_str;
}

inline std::vector<ErrorCurvePoint> error_curve(const NetworkParams& p, C1Convention conv,
                                                double max_delta, std::size_t points) {
  std::vector<ErrorCurvePoint> out;
  if (points < 2) points = 2;
  for (std::size_t k = 0; k < points; ++k) {
    const double d = max_delta * static_cast<double>(k) / static_cast<double>(points - 1);
    const auto t = total_error(p, d, conv);
    out.push_back({d, t.e_stat, t.e_drift, t.e_total});
  }
  return out;
}

/// Full plan: STR delay, naive delay, freshness gain and an error curve over
/// [0, 10/lambda].
inline DelayPlan plan_delay(const NetworkParams& p, double zeta, double eps_b,
                            C1Convention conv = C1Convention::model, std::size_t curve_points = 101) {
  DelayPlan plan = solve_delta_star_str(p, conv);
  plan.zeta = zeta;
  plan.eps_b = eps_b;
  plan.delta_star_naive = solve_delta_star_naive(p, zeta, eps_b, &plan.naive_state);
  plan.naive_tolerable_at_zero = plan.naive_state == DelayState::boundary;
  if (plan.naive_state == DelayState::boundary) plan.naive_state = DelayState::finite;
  plan.freshness_gain = freshness_gain(plan);
  // The log-ratio approximation to the gain needs p(Delta*_STR) > 0.
  plan.freshness_formula_evaluable = !(plan.boundary_case || plan.delta_star_str == 0.0);
  plan.error_curve = error_curve(p, conv, 10.0 / p.curve.lambda, curve_points);
  return plan;
}

/// Brute-force minimizer of the total error over [0, 10/lambda] with step
/// 1e-3/lambda.
inline double grid_search_delta(const NetworkParams& p, C1Convention conv) {
  const double step = 1e-3 / p.curve.lambda;
  double best = std::numeric_limits<double>::infinity();
  double arg = 0.0;
  for (std::size_t k = 1; k <= 10000; ++k) {
    const double d = step * static_cast<double>(k);
    const auto t = total_error(p, d, conv);
    if (t.e_total && *t.e_total < best) {
      best = *t.e_total;
      arg = d;
    }
  }
  return arg;
}

// ---------------------------------------------------------------- worked examples

struct PaperExample {
  std::string name;
  NetworkParams params;
  double zeta = 0.05;
  double eps_b = 0.005;
};

inline std::vector<PaperExample> paper_examples() {
  NetworkParams typical;
  typical.pi = 0.01;
  typical.e_bar = 0.85;
  typical.r_bar = 0.70;
  typical.gamma = 0.81;
  typical.eta = 1.5;
  typical.nu = 0.001;
  typical.n = 1e7;
  typical.curve = {0.03, 1.0, 1.0};

  NetworkParams fast = typical;
  fast.nu = 0.01;

  NetworkParams rt;
  rt.pi = 0.005;
  rt.e_bar = 0.95;
  rt.r_bar = 0.20;
  rt.gamma = 0.64;
  rt.eta = 2.0;
  rt.nu = 0.02;
  rt.n = 5e7;
  rt.curve = {0.005, 1.0, 1.0};

  return {{"typical", typical, 0.05, 0.005},
          {"fastdrift", fast, 0.05, 0.005},
          {"realtime", rt, 0.03, 0.005}};
}

struct ExampleRow {
  std::string name;
  NetworkParams params;
  double zeta = 0.0;
  double eps_b = 0.0;
  DelayPlan plan;
  double p_at_naive = 0.0;
  double staleness_at_naive = 0.0;
};

inline std::vector<ExampleRow> reproduce_paper_examples() {
  std::vector<ExampleRow> rows;
  for (const auto& ex : paper_examples()) {
    ExampleRow r;
    r.name = ex.name;
    r.params = ex.params;
    r.zeta = ex.zeta;
    r.eps_b = ex.eps_b;
    r.plan = plan_delay(ex.params, ex.zeta, ex.eps_b, C1Convention::model, 2);
    r.p_at_naive = maturity(ex.params.curve, r.plan.delta_star_naive);
    r.staleness_at_naive = ex.params.nu * r.plan.delta_star_naive;
    rows.push_back(r);
  }
  return rows;
}

/// Fixed-format table of the worked examples, one `name,quantity,value` line
/// per entry. This is what the golden files store.
inline std::string format_example_table(const ExampleRow& r) {
  std::string out = "example,quantity,value\n";
  auto line = [&](const char* q, double v, int prec) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%s,%.*f\n", r.name.c_str(), q, prec, v);
    out += buf;
  };
  const auto& p = r.params;
  line("pi", p.pi, 4);
  line("e_bar", p.e_bar, 2);
  line("r_bar", p.r_bar, 2);
  line("gamma", p.gamma, 2);
  line("eta", p.eta, 1);
  line("lambda", p.curve.lambda, 3);
  line("nu", p.nu, 3);
  line("n", p.n, 0);
  line("zeta", r.zeta, 3);
  line("eps_b", r.eps_b, 3);
  line("c1_model", r.plan.c1, 4);
  line("c1_marginal_x1e9", c1_constant(p, C1Convention::marginal) * 1e9, 4);
  line("argument", r.plan.argument, 4);
  line("delta_star_str", r.plan.delta_star_str, 2);
  out += r.name + ",str_state," + delay_state_name(r.plan.str_state) + "\n";
  line("delta_star_exact", r.plan.delta_star_exact, 2);
  line("delta_star_naive", r.plan.delta_star_naive, 2);
  line("p_at_naive", r.p_at_naive, 3);
  line("staleness_at_naive", r.staleness_at_naive, 2);
  line("freshness_gain", r.plan.freshness_gain, 2);
  return out;
}

}  // namespace strl
