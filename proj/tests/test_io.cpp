#include <cmath>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "strl/cli.hpp"
#include "strl/io.hpp"

using namespace strl;

namespace {

void expect_same_records(const Dataset& a, const Dataset& b) {
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.dim(), b.dim());
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(a.issuer, b.issuer);
  EXPECT_EQ(a.delta, b.delta);
  EXPECT_EQ(a.a, b.a);
  EXPECT_EQ(a.r, b.r);
  EXPECT_EQ(a.m, b.m);
  EXPECT_EQ(a.o, b.o);
  EXPECT_EQ(a.y_obs, b.y_obs);
  EXPECT_EQ(a.x, b.x);
  ASSERT_EQ(a.has_w1(), b.has_w1());
  if (a.has_w1()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      ASSERT_EQ(std::isnan(a.w1[i]), std::isnan(b.w1[i]));
      if (!std::isnan(a.w1[i])) { ASSERT_EQ(a.w1[i], b.w1[i]); }
    }
  }
}

std::string records_text(const Dataset& ds) {
  std::ostringstream os;
  write_records_csv(os, ds);
  return os.str();
}

std::size_t parse_error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    (void)read_records_csv(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

const char* kHeader = "id,issuer,delta,a,r,m,o,y_obs,x0,x1,w1\n";

}  // namespace

TEST(RecordsCsv, RoundTrip) {
  for (const auto& cfg : {preset_example1(5'000), preset_selective(5'000), preset_uncensored(2'000)}) {
    const auto pop = generate_population(cfg);
    const auto text = records_text(pop.records);
    std::istringstream in(text);
    const auto back = read_records_csv(in);
    expect_same_records(pop.records, back);
    EXPECT_EQ(records_text(back), text);
  }
}

TEST(RecordsCsv, ParseErrorsNameTheLine) {
  const std::string ok1 = "0,0,3.5,1,1,1,1,0,0.1,0.2,\n";
  const std::string ok2 = "1,0,2.0,0,,,0,,0.3,-0.2,\n";
  EXPECT_EQ(parse_error_line(std::string(kHeader) + ok1 + ok2), 0u);
  EXPECT_EQ(parse_error_line(std::string(kHeader) + ok1 + ok2 + "2,0,abc,1,0,,0,,0,0,\n"), 4u);
  EXPECT_EQ(parse_error_line(std::string(kHeader) + ok1 + "1,0,2.0,0,,,0\n"), 3u);
  // o must equal a*r*m
  EXPECT_EQ(parse_error_line(std::string(kHeader) + ok1 + ok2 + "2,0,1.0,1,1,1,0,,0,0,\n"), 4u);
  // y_obs present while unobserved
  EXPECT_EQ(parse_error_line(std::string(kHeader) + "0,0,1.0,1,0,,0,1,0,0,\n"), 2u);
  EXPECT_EQ(parse_error_line("id,issuer,delta\n"), 1u);
  EXPECT_EQ(parse_error_line(""), 1u);
  std::istringstream in(std::string(kHeader) + ok1 + "2,0,abc,1,0,,0,,0,0,\n");
  try {
    (void)read_records_csv(in);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("delta"), std::string::npos);
  }
}

TEST(TruthCsv, RoundTrip) {
  const auto pop = generate_population(preset_selective(3'000, 70));
  std::ostringstream os;
  write_truth_csv(os, pop.records, pop.truth);
  std::istringstream in(os.str());
  const auto t = read_truth_csv(in);
  EXPECT_EQ(t.y_star, pop.truth.y_star);
  EXPECT_EQ(t.e_true, pop.truth.e_true);
  EXPECT_EQ(t.r_true, pop.truth.r_true);
  EXPECT_EQ(t.p_true, pop.truth.p_true);
  EXPECT_EQ(t.f_true, pop.truth.f_true);
  EXPECT_DOUBLE_EQ(t.psi_true, pop.truth.psi_true);
  for (std::size_t i = 0; i < t.tau.size(); ++i) {
    ASSERT_EQ(std::isnan(t.tau[i]), std::isnan(pop.truth.tau[i]));
    if (!std::isnan(t.tau[i])) { ASSERT_EQ(t.tau[i], pop.truth.tau[i]); }
  }
  std::istringstream bad("id,y_star,e,r,p,f,tau\n0,1,0.5,0.5,0.5,0.1,\n1,2,0.5,0.5,0.5,0.1,\n");
  try {
    (void)read_truth_csv(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(AuditCsv, ReadAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "strl_io_audit";
  std::filesystem::create_directories(dir);
  write_text(dir / "audit.csv", "y_obs,y_true\n1,1\n0,1\n0,0\n");
  const auto a = read_audit_csv(dir / "audit.csv");
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[1], std::make_pair(0, 1));
  write_text(dir / "bad.csv", "y_obs,y_true\n1,1\n0\n");
  EXPECT_THROW(read_audit_csv(dir / "bad.csv"), ParseError);
  EXPECT_THROW(read_audit_csv(dir / "missing.csv"), IoError);
}

TEST(ScoredCsv, RoundTrip) {
  const auto pop = generate_population(preset_selective(4'000, 71));
  AlgorithmConfig ac;
  ac.k = 2;
  const auto res = run_algorithm_1(pop.records, ac);
  std::ostringstream os;
  write_scored_csv(os, res.scored, &res.labels->labels);
  std::istringstream in(os.str());
  const auto back = read_scored_csv(in);
  ASSERT_EQ(back.size(), res.scored.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = res.scored[i];
    const auto& b = back[i];
    ASSERT_EQ(a.id, b.id);
    ASSERT_EQ(a.fold, b.fold);
    ASSERT_EQ(a.u, b.u);
    ASSERT_EQ(a.base, b.base);
    ASSERT_EQ(a.auth_corr, b.auth_corr);
    ASSERT_EQ(a.report_corr, b.report_corr);
    ASSERT_EQ(a.delay_corr, b.delay_corr);
    ASSERT_EQ(a.weight_total, b.weight_total);
    ASSERT_EQ(a.y_corr, b.y_corr);
  }
}

TEST(NuisanceJson, RoundTripPredictsIdentically) {
  const auto pop = generate_population(preset_selective(6'000, 72));
  CrossfitOptions co;
  co.k = 3;
  co.eps10 = 0.02;
  const auto cf = crossfit_nuisances(pop.records, co);
  const auto text = to_json(cf).dump();
  const auto back = crossfit_from_json(parse_json(text));
  EXPECT_EQ(back.plan.assignment, cf.plan.assignment);
  ASSERT_EQ(back.sets.size(), cf.sets.size());
  for (std::size_t f = 0; f < cf.sets.size(); ++f) {
    const auto& a = cf.sets[f];
    const auto& b = back.sets[f];
    EXPECT_EQ(a.eps10_hat, b.eps10_hat);
    EXPECT_EQ(a.train_rows, b.train_rows);
    for (std::size_t i = 0; i < pop.records.size(); i += 7) {
      ASSERT_EQ(a.e_hat.predict(pop.records, i), b.e_hat.predict(pop.records, i));
      ASSERT_EQ(a.r_hat.predict(pop.records, i), b.r_hat.predict(pop.records, i));
      ASSERT_EQ(a.p_hat.predict(pop.records, i), b.p_hat.predict(pop.records, i));
      ASSERT_EQ(a.mu0_hat.predict(pop.records, i), b.mu0_hat.predict(pop.records, i));
      ASSERT_EQ(a.mu1_hat.predict(pop.records, i), b.mu1_hat.predict(pop.records, i));
      ASSERT_EQ(a.mu2_hat.predict(pop.records, i), b.mu2_hat.predict(pop.records, i));
    }
  }
  EXPECT_EQ(to_json(back).dump(), text);
}

TEST(ReportJson, EstimateRoundTrip) {
  const auto pop = generate_population(preset_selective(4'000, 73));
  AlgorithmConfig ac;
  ac.k = 2;
  ac.compute_labels = false;
  auto rep = run_algorithm_1(pop.records, ac).report;
  attach_oracle(rep, pop.truth, 0.0, 0.0);
  const auto back = estimate_report_from_json(parse_json(to_json(rep).dump()));
  EXPECT_EQ(back.psi_hat, rep.psi_hat);
  EXPECT_EQ(back.sigma2_hat, rep.sigma2_hat);
  EXPECT_EQ(back.ci_lo, rep.ci_lo);
  EXPECT_EQ(back.ci_hi, rep.ci_hi);
  EXPECT_EQ(back.n, rep.n);
  EXPECT_EQ(back.bernstein_curve, rep.bernstein_curve);
  EXPECT_EQ(back.critical_n, rep.critical_n);
  EXPECT_EQ(back.naive_psi, rep.naive_psi);
  EXPECT_EQ(back.naive_bias_closed_form, rep.naive_bias_closed_form);
  EXPECT_EQ(back.eff_bound_closed_form, rep.eff_bound_closed_form);
  EXPECT_EQ(back.warnings, rep.warnings);
}

TEST(ConfigJson, SimAndNetworkRoundTrip) {
  for (const auto& c : {preset_example1(1000), preset_selective(1000), preset_uncensored(1000)}) {
    const auto j = to_json(c);
    EXPECT_EQ(to_json(sim_config_from_json(parse_json(j.dump()))), j);
  }
  for (const auto& ex : paper_examples())
    EXPECT_TRUE(network_from_json(parse_json(to_json(ex.params).dump())) == ex.params);
  EXPECT_THROW(network_from_json(parse_json(R"({"pii": 0.1})")), ConfigError);
  EXPECT_THROW(parse_json("{not json"), ParseError);
}

TEST(DelayJson, SentinelsAreStates) {
  auto p = paper_examples()[0].params;
  p.nu = 0.0;
  const auto j = to_json(plan_delay(p, 0.05, 0.005));
  EXPECT_EQ(j.at("str_state"), "wait_forever");
  EXPECT_TRUE(j.at("delta_star_str").is_null());
  EXPECT_TRUE(j.at("freshness_gain").is_null());
  EXPECT_EQ(j.dump().find("inf"), std::string::npos);
  const auto j2 = to_json(plan_delay(paper_examples()[0].params, 0.004, 0.005));
  EXPECT_EQ(j2.at("delta_star_naive"), 0.0);
  EXPECT_TRUE(j2.at("naive_tolerable_at_zero").get<bool>());
  const auto curve = error_curve_csv(plan_delay(paper_examples()[0].params, 0.05, 0.005).error_curve);
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "delta,e_stat,e_drift,e_total");
  EXPECT_NE(curve.find("0,unbounded,0,unbounded"), std::string::npos);
}

TEST(Determinism, SameSeedSameBytes) {
  const auto a = records_text(generate_population(preset_selective(3'000, 74)).records);
  const auto b = records_text(generate_population(preset_selective(3'000, 74)).records);
  EXPECT_EQ(a, b);
  const auto c = records_text(generate_population(preset_selective(3'000, 75)).records);
  EXPECT_NE(a, c);
}
