#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "strl/delay_planner.hpp"
#include "strl/rng.hpp"

using namespace strl;

namespace {

NetworkParams typical() { return paper_examples()[0].params; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

NetworkParams random_params(CounterRng& g) {
  NetworkParams p;
  p.pi = 0.001 + 0.05 * g.uniform();
  p.e_bar = 0.5 + 0.5 * g.uniform();
  p.r_bar = 0.1 + 0.9 * g.uniform();
  p.gamma = 0.3 + 0.7 * g.uniform();
  p.eta = 1.0 + 2.0 * g.uniform();
  p.nu = std::pow(10.0, -5.0 + 3.0 * g.uniform());
  p.n = std::pow(10.0, 3.0 + 5.0 * g.uniform());
  p.curve.lambda = 0.002 + 0.1 * g.uniform();
  return p;
}

// Independent closed-form total error for the exponential curve.
double e_total_ref(const NetworkParams& p, double c1, double d) {
  return c1 / (p.curve.p_inf * (1.0 - std::exp(-p.curve.lambda * d))) + p.nu * d;
}

}  // namespace

TEST(Maturity, ValuesAndDerivative) {
  const MaturityCurve c{0.03, 1.0, 1.0};
  EXPECT_EQ(maturity(c, 0.0), 0.0);
  EXPECT_NEAR(maturity(c, 1.0 / 0.03), 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_NEAR(maturity(c, 1.0 / 0.03), 0.6321, 1e-4);
  EXPECT_NEAR(maturity_derivative(c, 0.0), 0.03, 1e-15);
  const MaturityCurve c2{0.02, 1.0, 0.9};
  EXPECT_NEAR(maturity_derivative(c2, 0.0), 0.018, 1e-15);
  EXPECT_THROW(maturity(c, -1.0), ArgumentError);
  EXPECT_THROW(maturity_derivative(c, -1.0), ArgumentError);
}

TEST(Maturity, MonotoneAndDerivativeMatchesDifference) {
  for (const MaturityCurve c : {MaturityCurve{0.03, 1.0, 1.0}, MaturityCurve{0.05, 0.6, 0.95},
                                MaturityCurve{0.01, 2.5, 0.8}}) {
    double prev = 0.0;
    for (double d = 0.5; d < 2000; d *= 1.3) {
      const double v = maturity(c, d);
      EXPECT_GE(v, prev);
      EXPECT_LE(v, c.p_inf);
      prev = v;
      const double h = 1e-6 * d;
      const double fd = (maturity(c, d + h) - maturity(c, d - h)) / (2 * h);
      EXPECT_NEAR(maturity_derivative(c, d), fd, 1e-6 * std::max(fd, 1e-6));
    }
    EXPECT_NEAR(maturity(c, 1e6), c.p_inf, 1e-12);
  }
}

TEST(Maturity, Inverse) {
  const MaturityCurve c{0.04, 1.7, 0.9};
  for (double d : {1.0, 10.0, 33.0, 80.0}) EXPECT_NEAR(*maturity_inverse(c, maturity(c, d)), d, 1e-9 * d);
  EXPECT_FALSE(maturity_inverse(c, 0.9).has_value());
}

TEST(TotalError, Structure) {
  auto p = typical();
  const auto z = total_error(p, 0.0);
  EXPECT_FALSE(z.e_stat.has_value());
  EXPECT_FALSE(z.e_total.has_value());

  const double c1 = p.pi * (1 - p.pi) * p.eta / (p.n * p.e_bar * p.r_bar * p.gamma);
  const auto t = total_error(p, 20.0);
  EXPECT_NEAR(*t.e_stat, c1 / (1 - std::exp(-0.6)), 1e-12 * *t.e_stat);
  EXPECT_NEAR(t.e_drift, 0.02, 1e-15);

  auto p2 = p;
  p2.n *= 2;
  EXPECT_NEAR(*total_error(p2, 20.0).e_stat, 0.5 * *t.e_stat, 1e-15 * *t.e_stat);

  p.nu = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (double d = 1.0; d < 1000.0; d += 7.0) {
    const double v = *total_error(p, d).e_total;
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(DelayStr, ExactVsApproximateRoot) {
  // a = C2/(C1 lambda); the approximation u ~ a has relative error O(a).
  auto p = typical();
  for (double a = 1e-6; a <= 0.3; a *= 3.0) {
    p.nu = a * c1_constant(p, C1Convention::model) * p.curve.lambda;
    const auto plan = solve_delta_star_str(p);
    const double rel = std::abs(plan.u_star - plan.u_approx) / plan.u_approx;
    EXPECT_LE(rel, 3.0 * a) << "a=" << a;
    if (a <= 0.01) {
      EXPECT_LE(rel, 0.10);
    }
  }
}

TEST(DelayStr, WorkedExamplesFromIndependentFormulas) {
  const auto ex = paper_examples();
  ASSERT_EQ(ex.size(), 3u);
  for (const auto& e : ex) {
    const auto& p = e.params;
    const double c1 = p.pi * (1 - p.pi) * p.eta / (p.e_bar * p.r_bar * p.gamma);
    const double arg = c1 * p.curve.lambda / p.nu;
    const auto plan = plan_delay(p, e.zeta, e.eps_b);
    EXPECT_NEAR(plan.c1, c1, 1e-15);
    EXPECT_NEAR(plan.argument, arg, 1e-12);
    EXPECT_NEAR(plan.delta_star_naive, std::log(e.zeta / e.eps_b) / p.curve.lambda, 1e-9);
    // Exact minimizer of c1/(1-e^{-l d}) + nu d: 1-u with u the small root.
    const double a = 1.0 / arg;
    const double u = ((2 * a + 1) - std::sqrt((2 * a + 1) * (2 * a + 1) - 4 * a * a)) / (2 * a);
    EXPECT_NEAR(plan.delta_star_exact, -std::log(u) / p.curve.lambda, 1e-8);
    if (arg <= 1.0) {
      EXPECT_TRUE(plan.boundary_case);
      EXPECT_EQ(plan.delta_star_str, 0.0);
    }
  }
  const auto rows = reproduce_paper_examples();
  EXPECT_NEAR(rows[0].plan.c1, 0.0308, 5e-5);
  EXPECT_NEAR(rows[0].plan.argument, 0.924, 5e-4);
  EXPECT_TRUE(rows[0].plan.boundary_case);
  EXPECT_NEAR(rows[0].plan.delta_star_naive, 33.3 * 2.303, 0.2);
  EXPECT_NEAR(rows[0].plan.freshness_gain, 77.0, 0.5);
  EXPECT_NEAR(rows[1].plan.argument, 0.0924, 5e-5);
  EXPECT_EQ(rows[1].plan.delta_star_str, 0.0);
  EXPECT_NEAR(rows[1].staleness_at_naive, 0.77, 0.005);
  EXPECT_NEAR(rows[2].plan.c1, 0.00995 / 0.1216, 1e-4);
  EXPECT_NEAR(rows[2].plan.c1, 0.0818, 5e-5);
  EXPECT_NEAR(rows[2].plan.delta_star_naive, 200 * std::log(6.0), 1e-9);
  EXPECT_NEAR(rows[2].plan.delta_star_naive, 358.0, 0.5);
}

TEST(DelayStr, GoldenFiles) {
  const std::filesystem::path dir = STRL_GOLDEN_DIR;
  for (const auto& r : reproduce_paper_examples()) {
    const auto f = dir / ("paper_example_" + r.name + ".csv");
    ASSERT_TRUE(std::filesystem::exists(f)) << f;
    EXPECT_EQ(format_example_table(r), slurp(f)) << r.name;
  }
}

TEST(DelayNaive, Cases) {
  auto p = typical();
  EXPECT_NEAR(solve_delta_star_naive(p, 0.005 * std::exp(1.0), 0.005), 1.0 / 0.03, 1e-9);
  DelayState st{};
  EXPECT_EQ(solve_delta_star_naive(p, 0.01, 0.01, &st), 0.0);
  EXPECT_EQ(st, DelayState::boundary);
  EXPECT_THROW(solve_delta_star_naive(p, 0.0, 0.01), ArgumentError);
  // Asymptote below the target fraction: never tolerable.
  p.curve.p_inf = 0.8;
  EXPECT_TRUE(std::isinf(solve_delta_star_naive(p, 0.05, 0.005, &st)));
  EXPECT_EQ(st, DelayState::wait_forever);
  // General shape through the inverse.
  p.curve = {0.03, 1.8, 1.0};
  const double d = solve_delta_star_naive(p, 0.05, 0.005);
  EXPECT_NEAR(maturity(p.curve, d), 0.9, 1e-12);
}

TEST(Freshness, GrowsWithNAndVanishesWithZeta) {
  auto p = typical();
  p.nu = 1e-5;
  double prev = -1.0;
  for (double n = 1e4; n <= 1e9; n *= 2) {
    p.n = n;
    const auto plan = plan_delay(p, 0.05, 0.005, C1Convention::marginal);
    EXPECT_GE(plan.freshness_gain, prev - 1e-12);
    prev = plan.freshness_gain;
  }
  p = typical();
  const double str = solve_delta_star_str(p).delta_star_str;
  for (double zeta : {0.004, 0.001, 1e-5}) {
    const auto plan = plan_delay(p, zeta, 0.005);
    EXPECT_NEAR(plan.freshness_gain, -str, 1e-12);
  }
}

TEST(DelayStr, QuasiConvexFocAndGridOracle) {
  CounterRng g(17, 4, 0);
  int interior = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_params(g);
    const auto plan = solve_delta_star_str(p, C1Convention::marginal);
    const double c1 = plan.c1;
    // Single local minimum on a grid.
    const double step = 1e-3 / p.curve.lambda;
    int sign_changes = 0;
    double prev = e_total_ref(p, c1, step);
    int prev_dir = 0;
    for (int k = 2; k <= 10000; k += 10) {
      const double v = e_total_ref(p, c1, step * k);
      const int dir = v < prev ? -1 : (v > prev ? 1 : 0);
      if (dir != 0 && prev_dir != 0 && dir != prev_dir) ++sign_changes;
      if (dir != 0) prev_dir = dir;
      prev = v;
    }
    ASSERT_LE(sign_changes, 1) << "trial " << trial;
    // First-order condition at the exact root.
    const double d = plan.delta_star_exact;
    const double pm = maturity(p.curve, d);
    const double resid = std::abs(maturity_derivative(p.curve, d) - p.nu * pm * pm / c1);
    ASSERT_LE(resid, 1e-9 * p.nu) << "trial " << trial;
    // Brute force agrees within a grid step when the optimum is in range.
    if (d < 10.0 / p.curve.lambda - step) {
      ++interior;
      ASSERT_LE(std::abs(grid_search_delta(p, C1Convention::marginal) - d), step) << "trial " << trial;
    }
  }
  EXPECT_GT(interior, 50);
}

TEST(DelayStr, BoundaryEquivalence) {
  CounterRng g(18, 4, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = random_params(g);
    const bool marginal_rule =
        p.pi * (1 - p.pi) * p.eta * p.curve.lambda <= p.nu * p.n * p.e_bar * p.r_bar * p.gamma;
    EXPECT_EQ(solve_delta_star_str(p, C1Convention::marginal).boundary_case, marginal_rule);
    const double c1m = p.pi * (1 - p.pi) * p.eta / (p.e_bar * p.r_bar * p.gamma);
    const auto pm = solve_delta_star_str(p, C1Convention::model);
    EXPECT_EQ(pm.boundary_case, c1m * p.curve.lambda <= p.nu);
    EXPECT_EQ(pm.delta_star_str == 0.0, pm.boundary_case);
    EXPECT_GE(pm.delta_star_str, 0.0);
  }
}

TEST(DelayStr, WaitForever) {
  auto p = typical();
  p.nu = 0.0;
  const auto plan = solve_delta_star_str(p);
  EXPECT_EQ(plan.str_state, DelayState::wait_forever);
  EXPECT_EQ(plan.exact_state, DelayState::wait_forever);
  EXPECT_FALSE(plan.boundary_case);
}

TEST(DelayStr, GeneralShapeAndAsymptote) {
  auto p = typical();
  p.nu = 1e-4;
  for (const MaturityCurve c : {MaturityCurve{0.03, 0.7, 1.0}, MaturityCurve{0.03, 1.6, 0.9},
                                MaturityCurve{0.03, 1.0, 0.85}}) {
    p.curve = c;
    const auto plan = solve_delta_star_str(p);
    const double d = plan.delta_star_exact;
    const double pm = maturity(c, d);
    EXPECT_LE(std::abs(maturity_derivative(c, d) - p.nu * pm * pm / plan.c1), 1e-9 * p.nu);
    EXPECT_LE(std::abs(grid_search_delta(p, C1Convention::model) - d), 1e-3 / c.lambda);
  }
}

TEST(DelayStr, Runtime) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 100; ++i) (void)reproduce_paper_examples();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(s, 1.0);
}

TEST(Network, ValidationAndPenalty) {
  auto p = typical();
  p.gamma = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = typical();
  p.curve.lambda = -1.0;
  EXPECT_THROW(solve_delta_star_str(p), ConfigError);
  EXPECT_GE(heterogeneity_penalty(0.1, 0.2, 0.3, 0.4, 0.5, 0.6), 1.0);
  EXPECT_DOUBLE_EQ(heterogeneity_penalty(0, 0, 0, 0, 0, 0), 1.0);
}
