#include <cmath>

#include <gtest/gtest.h>

#include "strl/sensitivity.hpp"

using namespace strl;

namespace {

BoundInputs flat(double f, double e, double r, std::size_t n = 10) {
  return {std::vector<double>(n, f), std::vector<double>(n, e), std::vector<double>(n, r)};
}

}  // namespace

TEST(Bounds, TiltFactors) {
  const auto in = flat(0.1, 0.5, 0.5);
  const double auth_term = 0.1 * 0.5 / 0.5;
  EXPECT_EQ(auth_bias_bound(in, 1.0), 0.0);
  EXPECT_NEAR(auth_bias_bound(in, 2.0), 0.5 * auth_term, 1e-15);
  EXPECT_NEAR(auth_bias_bound(in, 1.5), auth_term / 3.0, 1e-15);
  EXPECT_EQ(reporting_bias_bound(in, 1.0), 0.0);
  EXPECT_EQ(joint_bias_bound(in, 1.0, 1.0), 0.0);
  EXPECT_THROW(auth_bias_bound(in, 0.9), ArgumentError);
}

TEST(Bounds, ReportingScalesInverselyWithAuth) {
  const double a = reporting_bias_bound(flat(0.05, 0.8, 0.6), 1.7);
  const double b = reporting_bias_bound(flat(0.05, 0.4, 0.6), 1.7);
  EXPECT_NEAR(b, 2 * a, 1e-15);
}

TEST(Bounds, JointIsSumPlusInteraction) {
  const auto in = flat(0.02, 0.7, 0.4);
  const double ga = 1.8, gr = 1.3;
  const double inter = (ga - 1) * (gr - 1) / (ga * gr);
  EXPECT_NEAR(joint_bias_bound(in, ga, gr),
              auth_bias_bound(in, ga) + reporting_bias_bound(in, gr) + inter, 1e-15);
}

TEST(Bounds, MonotoneInEachGamma) {
  const auto pop = generate_population(preset_selective(20'000, 50));
  const auto in = BoundInputs::from_truth(pop.truth);
  const std::vector<double> gs = {1.0, 1.1, 1.25, 1.5, 2.0, 3.0};
  for (double gr : gs) {
    double prev = -1;
    for (double ga : gs) {
      const double v = joint_bias_bound(in, ga, gr);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
  for (double ga : gs) {
    double prev = -1;
    for (double gr : gs) {
      const double v = joint_bias_bound(in, ga, gr);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(Tilt, IdentityHasNoBias) {
  const auto r = tilted_simulation(preset_selective(1'000'000, 51), 1.0, 1.0);
  EXPECT_LE(r.bias, 4 * r.se);
  EXPECT_EQ(r.bound, 0.0);
}

TEST(Tilt, AuthTiltWithinBoundAndDetectable) {
  const auto a15 = tilted_simulation(preset_selective(1'000'000, 52), 1.5, 1.0);
  EXPECT_LE(a15.bias, auth_bias_bound(BoundInputs::from_truth(
                          generate_population(preset_selective(1'000'000, 52)).truth), 1.5) +
                          1e-15);
  const auto a2 = tilted_simulation(preset_selective(1'000'000, 53), 2.0, 1.0);
  EXPECT_LE(a2.bias, a2.bound);
  EXPECT_GT(a2.bias, 3 * a2.se);
}

TEST(Sweep, ZeroPointMatchesPlainRun) {
  const auto pop = generate_population(preset_selective(20'000, 54));
  AlgorithmConfig ac;
  ac.k = 2;
  ac.compute_labels = false;
  const auto plain = run_algorithm_1(pop.records, ac);
  const auto sw = corruption_sweep(pop.records, ac, {{0.0, 0.0}});
  ASSERT_EQ(sw.size(), 1u);
  EXPECT_EQ(sw[0].psi_hat, plain.report.psi_hat);
  EXPECT_EQ(sw[0].ci_lo, plain.report.ci_lo);
  EXPECT_THROW(corruption_sweep(pop.records, ac, {{0.6, 0.5}}), ConfigError);
}

TEST(Sweep, MonotoneInEps01AndRecoversTruth) {
  auto c = preset_uncensored(200'000, 55);
  c.eps10 = 0.05;
  c.eps01 = 0.04;
  const auto pop = generate_population(c);
  AlgorithmConfig ac;
  ac.k = 2;
  ac.nuisance.clamp_hi = 1.0;
  std::vector<std::pair<double, double>> grid;
  for (double e01 : {0.0, 0.01, 0.02, 0.04, 0.06}) grid.emplace_back(0.05, e01);
  const auto sw = corruption_sweep(pop.records, ac, grid);
  for (std::size_t k = 1; k < sw.size(); ++k) EXPECT_LT(sw[k].psi_hat, sw[k - 1].psi_hat);
  const auto& at_truth = sw[3];
  const double se = (at_truth.ci_hi - at_truth.ci_lo) / (2 * 1.959963984540054);
  EXPECT_LE(std::abs(at_truth.psi_hat - pop.truth.psi_true), 4 * se);
}

TEST(Balance, UncensoredAndConstantFeature) {
  auto c = preset_uncensored(50'000, 56);
  const auto pop = generate_population(c);
  Dataset ds(pop.records.dim() + 1);
  for (std::size_t i = 0; i < pop.records.size(); ++i) {
    auto t = pop.records.record(i);
    t.x.push_back(1.0);
    ds.push_back(t);
  }
  CrossfitOptions co;
  co.k = 2;
  co.nuisance.clamp_hi = 1.0;
  // A constant column is collinear with the intercept, so the nuisances are
  // fitted on the original features only.
  const auto cf = crossfit_nuisances(pop.records, co);
  EXPECT_THROW(crossfit_nuisances(ds, co), NumericalError);
  const auto rows = balance_diagnostics(ds, cf);
  ASSERT_EQ(rows.size(), ds.dim());
  for (std::size_t j = 0; j + 1 < rows.size(); ++j) {
    EXPECT_LT(std::abs(rows[j].raw), 1e-12);
    EXPECT_FALSE(rows[j].zero_variance);
  }
  EXPECT_TRUE(rows.back().zero_variance);
  EXPECT_EQ(rows.back().raw, 0.0);
  EXPECT_EQ(rows.back().weighted, 0.0);
}

TEST(Balance, WeightingShrinksImbalance) {
  const auto pop = generate_population(preset_selective(200'000, 57));
  CrossfitOptions co;
  co.k = 2;
  co.nuisance.floors = {0.3, 0.3, 0.3};
  const auto cf = crossfit_nuisances(pop.records, co);
  const auto rows = balance_diagnostics(pop.records, cf);
  for (const auto& r : rows) EXPECT_TRUE(std::isfinite(r.raw) && std::isfinite(r.weighted));
  EXPECT_GT(max_abs_smd(rows, false), 0.1);
  EXPECT_LT(max_abs_smd(rows, true), max_abs_smd(rows, false));
}

TEST(Overlap, FloorsAndWarnings) {
  const auto pop = generate_population(preset_selective(30'000, 58));
  CrossfitOptions co;
  co.k = 2;
  co.nuisance.floors = {0.3, 0.3, 0.3};
  const auto cf = crossfit_nuisances(pop.records, co);
  for (const auto& row : overlap_summary(pop.records, cf, co.nuisance.floors)) {
    EXPECT_GE(row.min, 0.3);
    ASSERT_EQ(row.deciles.size(), 9u);
    for (std::size_t k = 1; k < 9; ++k) EXPECT_GE(row.deciles[k], row.deciles[k - 1]);
  }

  // Near-deterministic authorization gate.
  auto c = preset_selective(30'000, 59);
  c.floors = {0.001, 0.001, 0.001};
  c.auth_coef = {0.0, 6.0, 0.0};
  const auto pop2 = generate_population(c);
  co.nuisance.floors = {0.01, 0.01, 0.01};
  const auto cf2 = crossfit_nuisances(pop2.records, co);
  const auto rows2 = overlap_summary(pop2.records, cf2, co.nuisance.floors);
  EXPECT_TRUE(rows2[0].warning);

  // Constant propensity: flat deciles.
  auto c3 = preset_uncensored(20'000, 60);
  const auto pop3 = generate_population(c3);
  co.nuisance.clamp_hi = 1.0;
  const auto cf3 = crossfit_nuisances(pop3.records, co);
  const auto rows3 = overlap_summary(pop3.records, cf3, co.nuisance.floors);
  for (double q : rows3[0].deciles) EXPECT_DOUBLE_EQ(q, rows3[0].deciles[0]);
}

TEST(Windows, NeedsTwo) {
  AlgorithmConfig ac;
  EXPECT_THROW(maturity_window_stability(preset_selective(1000), {30.0}, ac), ArgumentError);
  EXPECT_THROW(maturity_window_stability(preset_selective(1000), {30.0, -1.0}, ac), ArgumentError);
}

TEST(Windows, CorrectModelIsStable) {
  const auto cfg = preset_selective(200'000, 61);
  AlgorithmConfig ac;
  ac.k = 2;
  ac.nuisance.floors = cfg.floors;
  const auto w = maturity_window_stability(cfg, {5.0, 30.0, 90.0}, ac);
  ASSERT_EQ(w.windows.size(), 3u);
  EXPECT_TRUE(w.stable) << "max_gap " << w.max_gap;
}

TEST(Auc, PerStageRows) {
  const auto pop = generate_population(preset_selective(30'000, 62));
  CrossfitOptions co;
  co.k = 2;
  const auto cf = crossfit_nuisances(pop.records, co);
  const auto rows = nuisance_auc(pop.records, cf);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.auc.has_value());
    EXPECT_GT(*r.auc, 0.5);
    EXPECT_LE(*r.auc, 1.0);
  }
}
