#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "strl/dataset.hpp"
#include "strl/delay_planner.hpp"
#include "strl/error.hpp"
#include "strl/estimator.hpp"
#include "strl/glm.hpp"
#include "strl/nuisance.hpp"
#include "strl/sensitivity.hpp"
#include "strl/shrinkage.hpp"
#include "strl/sim.hpp"

namespace strl {

using Json = nlohmann::ordered_json;

inline constexpr int kNuisanceSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------- text helpers

/// Shortest decimal that reads back to the same double.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

namespace detail {

inline double parse_double(std::string_view s, std::size_t line, const char* col) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(std::string("column ") + col + ": cannot parse '" + std::string(s) +
                         "' as a number",
                     line);
  return v;
}

template <class Int>
Int parse_int(std::string_view s, std::size_t line, const char* col) {
  Int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(std::string("column ") + col + ": cannot parse '" + std::string(s) +
                         "' as an integer",
                     line);
  return v;
}

inline std::int8_t parse_flag(std::string_view s, std::size_t line, const char* col,
                              bool allow_absent) {
  if (s.empty()) {
    if (!allow_absent)
      throw ParseError(std::string("column ") + col + ": value required", line);
    return kAbsent;
  }
  const int v = parse_int<int>(s, line, col);
  if (v != 0 && v != 1) throw ParseError(std::string("column ") + col + ": expected 0 or 1", line);
  return static_cast<std::int8_t>(v);
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path() && !std::filesystem::is_directory(p.parent_path()))
    throw IoError("output directory does not exist: " + p.parent_path().string());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + p.string());
  return f;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + p.string());
  return f;
}

inline std::string flag_cell(std::int8_t v) { return v == kAbsent ? "" : std::to_string(v); }

inline void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace detail

inline std::string read_text(const std::filesystem::path& p) {
  auto f = detail::open_in(p);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  auto f = detail::open_out(p);
  f << s;
  if (!f) throw IoError("write failed: " + p.string());
}

/// Parses JSON text; syntax errors become ParseError with the line number.
inline Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t k = 0; k < std::min<std::size_t>(e.byte, text.size()); ++k)
      line += text[k] == '\n';
    throw ParseError(e.what(), line);
  }
}

inline Json read_json(const std::filesystem::path& p) { return parse_json(read_text(p)); }

inline void write_json(const std::filesystem::path& p, const Json& j) {
  write_text(p, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- records CSV

/// Header: id,issuer,delta,a,r,m,o,y_obs,x0..x{d-1},w1. Absent values are
/// empty cells.
inline std::string records_header(std::size_t d) {
  std::string h = "id,issuer,delta,a,r,m,o,y_obs";
  for (std::size_t j = 0; j < d; ++j) h += ",x" + std::to_string(j);
  return h + ",w1";
}

inline void write_records_csv(std::ostream& out, const Dataset& ds) {
  const std::size_t d = ds.dim();
  out << records_header(d) << '\n';
  std::string line;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    line.clear();
    line += std::to_string(ds.id[i]);
    line += ',' + std::to_string(ds.issuer[i]);
    line += ',' + fmt_double(ds.delta[i]);
    line += ',' + std::to_string(ds.a[i]);
    line += ',' + detail::flag_cell(ds.r[i]);
    line += ',' + detail::flag_cell(ds.m[i]);
    line += ',' + std::to_string(ds.o[i]);
    line += ',' + detail::flag_cell(ds.y_obs[i]);
    for (std::size_t j = 0; j < d; ++j) line += ',' + fmt_double(ds.x[i * d + j]);
    line += ',';
    if (ds.has_w1() && !std::isnan(ds.w1[i])) line += fmt_double(ds.w1[i]);
    out << line << '\n';
  }
}

inline void write_records_csv(const std::filesystem::path& p, const Dataset& ds) {
  auto f = detail::open_out(p);
  write_records_csv(f, ds);
  if (!f) throw IoError("write failed: " + p.string());
}

/// Reads and validates a records CSV. The feature dimension comes from the
/// header; w1 is kept when any row carries a value.
inline Dataset read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty records file", 1);
  detail::strip_cr(line);
  const auto head = split_csv(line);
  const char* fixed[] = {"id", "issuer", "delta", "a", "r", "m", "o", "y_obs"};
  if (head.size() < 10) throw ParseError("records header too short", 1);
  for (std::size_t k = 0; k < 8; ++k)
    if (head[k] != fixed[k])
      throw ParseError("records header column " + std::to_string(k + 1) + " should be '" +
                           fixed[k] + "', found '" + std::string(head[k]) + "'",
                       1);
  const std::size_t d = head.size() - 9;
  for (std::size_t j = 0; j < d; ++j)
    if (head[8 + j] != "x" + std::to_string(j))
      throw ParseError("expected feature column x" + std::to_string(j), 1);
  if (head.back() != "w1") throw ParseError("last records column must be 'w1'", 1);

  Dataset tmp(d, true);
  std::vector<double> w1;
  bool any_w1 = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != head.size())
      throw ParseError("expected " + std::to_string(head.size()) + " fields, found " +
                           std::to_string(c.size()),
                       lineno);
    tmp.id.push_back(detail::parse_int<std::int64_t>(c[0], lineno, "id"));
    tmp.issuer.push_back(detail::parse_int<std::int32_t>(c[1], lineno, "issuer"));
    tmp.delta.push_back(detail::parse_double(c[2], lineno, "delta"));
    tmp.a.push_back(detail::parse_flag(c[3], lineno, "a", false));
    tmp.r.push_back(detail::parse_flag(c[4], lineno, "r", true));
    tmp.m.push_back(detail::parse_flag(c[5], lineno, "m", true));
    tmp.o.push_back(detail::parse_flag(c[6], lineno, "o", false));
    tmp.y_obs.push_back(detail::parse_flag(c[7], lineno, "y_obs", true));
    for (std::size_t j = 0; j < d; ++j) tmp.x.push_back(detail::parse_double(c[8 + j], lineno, "x"));
    if (c.back().empty()) {
      w1.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      w1.push_back(detail::parse_double(c.back(), lineno, "w1"));
      any_w1 = true;
    }
    // Structural checks per row so errors carry the line number.
    const std::size_t i = tmp.id.size() - 1;
    const bool ar = tmp.a[i] == 1 && tmp.r[i] == 1;
    if ((tmp.a[i] == 0) != (tmp.r[i] == kAbsent) || ar != (tmp.m[i] != kAbsent) ||
        tmp.o[i] != (ar && tmp.m[i] == 1 ? 1 : 0) || (tmp.o[i] == 1) != (tmp.y_obs[i] != kAbsent))
      throw ParseError("record violates monotone missingness or o = a*r*m", lineno);
  }
  Dataset ds(d, any_w1);
  ds.id = std::move(tmp.id);
  ds.issuer = std::move(tmp.issuer);
  ds.delta = std::move(tmp.delta);
  ds.a = std::move(tmp.a);
  ds.r = std::move(tmp.r);
  ds.m = std::move(tmp.m);
  ds.o = std::move(tmp.o);
  ds.y_obs = std::move(tmp.y_obs);
  ds.x = std::move(tmp.x);
  if (any_w1) ds.w1 = std::move(w1);
  ds.validate();
  return ds;
}

inline Dataset read_records_csv(const std::filesystem::path& p) {
  auto f = detail::open_in(p);
  return read_records_csv(f);
}

// ---------------------------------------------------------------- truth CSV

/// Header: id,y_star,e,r,p,f,tau (tau empty when not drawn).
inline void write_truth_csv(std::ostream& out, const Dataset& ds, const PopulationTruth& t) {
  if (ds.size() != t.size()) throw ArgumentError("records and truth differ in length");
  out << "id,y_star,e,r,p,f,tau\n";
  std::string line;
  for (std::size_t i = 0; i < t.size(); ++i) {
    line = std::to_string(ds.id[i]) + ',' + std::to_string(t.y_star[i]) + ',' +
           fmt_double(t.e_true[i]) + ',' + fmt_double(t.r_true[i]) + ',' +
           fmt_double(t.p_true[i]) + ',' + fmt_double(t.f_true[i]) + ',';
    if (!std::isnan(t.tau[i])) line += fmt_double(t.tau[i]);
    out << line << '\n';
  }
}

inline void write_truth_csv(const std::filesystem::path& p, const Dataset& ds,
                            const PopulationTruth& t) {
  auto f = detail::open_out(p);
  write_truth_csv(f, ds, t);
  if (!f) throw IoError("write failed: " + p.string());
}

/// Reads a truth CSV; the corruption rates are not stored there and come
/// from the caller (usually the config sidecar).
inline PopulationTruth read_truth_csv(std::istream& in, double eps10 = 0.0, double eps01 = 0.0) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty truth file", 1);
  detail::strip_cr(line);
  if (line != "id,y_star,e,r,p,f,tau")
    throw ParseError("truth header must be 'id,y_star,e,r,p,f,tau'", 1);
  PopulationTruth t;
  t.eps10 = eps10;
  t.eps01 = eps01;
  std::size_t lineno = 1;
  std::size_t pos = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 7)
      throw ParseError("expected 7 fields, found " + std::to_string(c.size()), lineno);
    (void)detail::parse_int<std::int64_t>(c[0], lineno, "id");
    const auto y = detail::parse_flag(c[1], lineno, "y_star", false);
    t.y_star.push_back(y);
    pos += static_cast<std::size_t>(y);
    t.e_true.push_back(detail::parse_double(c[2], lineno, "e"));
    t.r_true.push_back(detail::parse_double(c[3], lineno, "r"));
    t.p_true.push_back(detail::parse_double(c[4], lineno, "p"));
    t.f_true.push_back(detail::parse_double(c[5], lineno, "f"));
    t.tau.push_back(c[6].empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : detail::parse_double(c[6], lineno, "tau"));
  }
  if (!t.y_star.empty())
    t.psi_true = static_cast<double>(pos) / static_cast<double>(t.y_star.size());
  return t;
}

inline PopulationTruth read_truth_csv(const std::filesystem::path& p, double eps10 = 0.0,
                                      double eps01 = 0.0) {
  auto f = detail::open_in(p);
  return read_truth_csv(f, eps10, eps01);
}

/// Audit sample CSV with header y_obs,y_true.
inline std::vector<std::pair<int, int>> read_audit_csv(const std::filesystem::path& p) {
  auto in = detail::open_in(p);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty audit file", 1);
  detail::strip_cr(line);
  if (line != "y_obs,y_true") throw ParseError("audit header must be 'y_obs,y_true'", 1);
  std::vector<std::pair<int, int>> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 2) throw ParseError("expected 2 fields", lineno);
    out.emplace_back(detail::parse_flag(c[0], lineno, "y_obs", false),
                     detail::parse_flag(c[1], lineno, "y_true", false));
  }
  return out;
}

// ---------------------------------------------------------------- JSON helpers

namespace detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T get_req(const Json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> keys,
                           const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* allowed : keys) ok = ok || k == allowed;
    if (!ok) throw ConfigError(std::string(where) + ": unknown field '" + k + "'");
  }
}

/// Non-finite doubles are written as null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json opt_num(const std::optional<double>& v) { return v ? num(*v) : Json(nullptr); }

}  // namespace detail

// ---------------------------------------------------------------- SimConfig

inline Json to_json(const SimConfig& c) {
  Json j;
  j["n"] = c.n;
  j["d"] = c.d;
  j["issuer_count"] = c.issuer_count;
  j["issuer_weights"] = c.issuer_weights;
  j["fraud_coef"] = c.fraud_coef;
  j["auth_coef"] = c.auth_coef;
  j["report"] = {{"base", c.report.base}, {"coef", c.report.coef}};
  j["delay"] = {{"lambda", c.delay.lambda}, {"beta", c.delay.beta}, {"coef", c.delay.coef}};
  j["maturity_delay_days"] = c.maturity_delay_days;
  j["window_days"] = c.window_days;
  j["eps10"] = c.eps10;
  j["eps01"] = c.eps01;
  j["floors"] = {{"e_min", c.floors.e_min}, {"r_min", c.floors.r_min}, {"p_min", c.floors.p_min}};
  j["seed"] = c.seed;
  j["post_auth_signal"] = c.post_auth_signal;
  j["w1_strength"] = c.w1_strength;
  j["tilt_gamma_a"] = c.tilt_gamma_a;
  j["tilt_gamma_r"] = c.tilt_gamma_r;
  return j;
}

inline PositivityFloors floors_from_json(const Json& j, PositivityFloors f = {}) {
  detail::reject_unknown(j, {"e_min", "r_min", "p_min"}, "floors");
  f.e_min = detail::get_or(j, "e_min", f.e_min);
  f.r_min = detail::get_or(j, "r_min", f.r_min);
  f.p_min = detail::get_or(j, "p_min", f.p_min);
  return f;
}

inline Json floors_to_json(const PositivityFloors& f) {
  return {{"e_min", f.e_min}, {"r_min", f.r_min}, {"p_min", f.p_min}};
}

/// Missing fields keep the values of `base`.
inline SimConfig sim_config_from_json(const Json& j, SimConfig c = {}) {
  detail::reject_unknown(j,
                         {"n", "d", "issuer_count", "issuer_weights", "fraud_coef", "auth_coef",
                          "report", "delay", "maturity_delay_days", "window_days", "eps10",
                          "eps01", "floors", "seed", "post_auth_signal", "w1_strength",
                          "tilt_gamma_a", "tilt_gamma_r"},
                         "sim");
  using detail::get_or;
  c.n = get_or(j, "n", c.n);
  c.d = get_or(j, "d", c.d);
  c.issuer_count = get_or(j, "issuer_count", c.issuer_count);
  c.issuer_weights = get_or(j, "issuer_weights", c.issuer_weights);
  c.fraud_coef = get_or(j, "fraud_coef", c.fraud_coef);
  c.auth_coef = get_or(j, "auth_coef", c.auth_coef);
  if (j.contains("report")) {
    const auto& r = j.at("report");
    detail::reject_unknown(r, {"base", "coef"}, "sim.report");
    c.report.base = get_or(r, "base", c.report.base);
    c.report.coef = get_or(r, "coef", c.report.coef);
  }
  if (j.contains("delay")) {
    const auto& d = j.at("delay");
    detail::reject_unknown(d, {"lambda", "beta", "coef"}, "sim.delay");
    c.delay.lambda = get_or(d, "lambda", c.delay.lambda);
    c.delay.beta = get_or(d, "beta", c.delay.beta);
    c.delay.coef = get_or(d, "coef", c.delay.coef);
  }
  c.maturity_delay_days = get_or(j, "maturity_delay_days", c.maturity_delay_days);
  c.window_days = get_or(j, "window_days", c.window_days);
  c.eps10 = get_or(j, "eps10", c.eps10);
  c.eps01 = get_or(j, "eps01", c.eps01);
  if (j.contains("floors")) c.floors = floors_from_json(j.at("floors"), c.floors);
  c.seed = get_or(j, "seed", c.seed);
  c.post_auth_signal = get_or(j, "post_auth_signal", c.post_auth_signal);
  c.w1_strength = get_or(j, "w1_strength", c.w1_strength);
  c.tilt_gamma_a = get_or(j, "tilt_gamma_a", c.tilt_gamma_a);
  c.tilt_gamma_r = get_or(j, "tilt_gamma_r", c.tilt_gamma_r);
  return c;
}

// ---------------------------------------------------------------- models

inline Json to_json(const FeatureSpec& s) {
  return {{"issuer_intercepts", s.issuer_intercepts},
          {"x_cols", s.x_cols},
          {"w1", s.w1},
          {"log_delta", s.log_delta}};
}

inline FeatureSpec feature_spec_from_json(const Json& j) {
  FeatureSpec s;
  s.issuer_intercepts = detail::get_req<bool>(j, "issuer_intercepts");
  s.x_cols = detail::get_req<std::vector<std::size_t>>(j, "x_cols");
  s.w1 = detail::get_req<bool>(j, "w1");
  s.log_delta = detail::get_req<bool>(j, "log_delta");
  return s;
}

inline Json clamp_to_json(const std::optional<Clamp>& c) {
  if (!c) return nullptr;
  return {{"lo", c->lo}, {"hi", c->hi}};
}

inline std::optional<Clamp> clamp_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return Clamp{detail::get_req<double>(j, "lo"), detail::get_req<double>(j, "hi")};
}

inline Json to_json(const GlmModel& m) {
  return {{"link", link_name(m.link)},
          {"features", to_json(m.spec)},
          {"coef", m.coef},
          {"issuer_intercept", m.issuer_intercept},
          {"issuer_seen", m.issuer_seen},
          {"clamp", clamp_to_json(m.clamp)},
          {"iterations", m.iterations},
          {"penalized", m.penalized}};
}

inline GlmModel glm_from_json(const Json& j) {
  GlmModel m;
  m.link = parse_link(detail::get_req<std::string>(j, "link"));
  m.spec = feature_spec_from_json(j.at("features"));
  m.coef = detail::get_req<std::vector<double>>(j, "coef");
  m.issuer_intercept = detail::get_req<std::vector<double>>(j, "issuer_intercept");
  m.issuer_seen = detail::get_req<std::vector<std::uint8_t>>(j, "issuer_seen");
  m.clamp = clamp_from_json(j.at("clamp"));
  m.iterations = detail::get_or(j, "iterations", 0);
  m.penalized = detail::get_or(j, "penalized", false);
  if (m.coef.size() != m.spec.slopes() + 1) throw ConfigError("model coef length mismatch");
  return m;
}

inline Stage parse_stage(const std::string& s) {
  if (s == "auth") return Stage::auth;
  if (s == "report") return Stage::report;
  if (s == "maturity") return Stage::maturity;
  throw ConfigError("unknown stage '" + s + "'");
}

inline Json to_json(const ShrunkModel& m) {
  return {{"stage", stage_name(m.stage)},
          {"local", to_json(m.local)},
          {"pooled", m.pooled ? to_json(*m.pooled) : Json(nullptr)},
          {"lambda", m.lambda},
          {"clamp", clamp_to_json(m.clamp)}};
}

inline ShrunkModel shrunk_from_json(const Json& j) {
  ShrunkModel m;
  m.stage = parse_stage(detail::get_req<std::string>(j, "stage"));
  m.local = glm_from_json(j.at("local"));
  if (!j.at("pooled").is_null()) m.pooled = glm_from_json(j.at("pooled"));
  m.lambda = detail::get_req<std::vector<double>>(j, "lambda");
  m.clamp = clamp_from_json(j.at("clamp"));
  return m;
}

inline Json to_json(const ShrinkagePool& p) {
  Json rows = Json::array();
  for (const auto& e : p.per_issuer)
    rows.push_back({{"issuer", e.issuer},
                    {"n_i", e.n_i},
                    {"local", e.local},
                    {"global", e.global},
                    {"lambda", e.lambda},
                    {"eb", e.eb_est}});
  return {{"stage", stage_name(p.stage)},
          {"global_est", p.global_est},
          {"sigma_B2", p.sigma_B2},
          {"per_issuer", rows}};
}

inline ShrinkagePool pool_from_json(const Json& j) {
  ShrinkagePool p;
  p.stage = parse_stage(detail::get_req<std::string>(j, "stage"));
  p.global_est = detail::get_req<double>(j, "global_est");
  p.sigma_B2 = detail::get_req<double>(j, "sigma_B2");
  for (const auto& r : j.at("per_issuer")) {
    IssuerShrinkage e;
    e.issuer = detail::get_req<std::int32_t>(r, "issuer");
    e.n_i = detail::get_req<std::size_t>(r, "n_i");
    e.local = detail::get_req<double>(r, "local");
    e.global = detail::get_req<double>(r, "global");
    e.lambda = detail::get_req<double>(r, "lambda");
    e.eb_est = detail::get_req<double>(r, "eb");
    p.per_issuer.push_back(e);
  }
  return p;
}

inline Json to_json(const NuisanceSet& ns) {
  Json pools = Json::array();
  for (const auto& p : ns.pools) pools.push_back(to_json(p));
  return {{"fold", ns.fold},
          {"train_rows", ns.train_rows},
          {"eps10_hat", ns.eps10_hat},
          {"eps01_hat", ns.eps01_hat},
          {"e_hat", to_json(ns.e_hat)},
          {"r_hat", to_json(ns.r_hat)},
          {"p_hat", to_json(ns.p_hat)},
          {"mu2_hat", to_json(ns.mu2_hat)},
          {"mu1_hat", to_json(ns.mu1_hat)},
          {"mu0_hat", to_json(ns.mu0_hat)},
          {"pools", pools}};
}

inline NuisanceSet nuisance_set_from_json(const Json& j) {
  NuisanceSet ns;
  ns.fold = detail::get_req<int>(j, "fold");
  ns.train_rows = detail::get_req<std::size_t>(j, "train_rows");
  ns.eps10_hat = detail::get_req<double>(j, "eps10_hat");
  ns.eps01_hat = detail::get_req<double>(j, "eps01_hat");
  ns.e_hat = shrunk_from_json(j.at("e_hat"));
  ns.r_hat = shrunk_from_json(j.at("r_hat"));
  ns.p_hat = shrunk_from_json(j.at("p_hat"));
  ns.mu2_hat = glm_from_json(j.at("mu2_hat"));
  ns.mu1_hat = glm_from_json(j.at("mu1_hat"));
  ns.mu0_hat = glm_from_json(j.at("mu0_hat"));
  for (const auto& p : j.at("pools")) ns.pools.push_back(pool_from_json(p));
  return ns;
}

/// Cross-fit document: schema version, fold assignment and one set per fold.
inline Json to_json(const Crossfit& cf) {
  Json sets = Json::array();
  for (const auto& s : cf.sets) sets.push_back(to_json(s));
  return {{"schema_version", kNuisanceSchemaVersion},
          {"k", cf.plan.k},
          {"assignment", cf.plan.assignment},
          {"sets", sets}};
}

inline Crossfit crossfit_from_json(const Json& j) {
  const int v = detail::get_req<int>(j, "schema_version");
  if (v != kNuisanceSchemaVersion)
    throw ConfigError("unsupported nuisance schema_version " + std::to_string(v));
  Crossfit cf;
  cf.plan.k = detail::get_req<std::size_t>(j, "k");
  cf.plan.assignment = detail::get_req<std::vector<std::int32_t>>(j, "assignment");
  for (const auto& s : j.at("sets")) cf.sets.push_back(nuisance_set_from_json(s));
  if (cf.sets.size() != cf.plan.k) throw ConfigError("nuisance sets do not match k");
  return cf;
}

/// Header: stage,fold,issuer,n_i,lambda,local,global,eb
inline std::string pools_csv(const Crossfit& cf) {
  std::string out = "stage,fold,issuer,n_i,lambda,local,global,eb\n";
  for (const auto& s : cf.sets)
    for (const auto& p : s.pools)
      for (const auto& e : p.per_issuer)
        out += std::string(stage_name(p.stage)) + ',' + std::to_string(s.fold) + ',' +
               std::to_string(e.issuer) + ',' + std::to_string(e.n_i) + ',' +
               fmt_double(e.lambda) + ',' + fmt_double(e.local) + ',' + fmt_double(e.global) +
               ',' + fmt_double(e.eb_est) + '\n';
  return out;
}

// ---------------------------------------------------------------- estimate

inline Json to_json(const EstimateReport& r) {
  Json curve = Json::array();
  for (const auto& [t, b] : r.bernstein_curve) curve.push_back({{"t", t}, {"bound", b}});
  return {{"psi_hat", r.psi_hat},
          {"sigma2_hat", r.sigma2_hat},
          {"se", r.se()},
          {"ci_lo", r.ci_lo},
          {"ci_hi", r.ci_hi},
          {"n", r.n},
          {"alpha", r.alpha},
          {"k_folds", r.k_folds},
          {"b_bound", r.b_bound},
          {"bernstein_curve", curve},
          {"critical_eps", r.critical_eps},
          {"critical_n", r.critical_n},
          {"naive_psi", detail::opt_num(r.naive_psi)},
          {"naive_bias_closed_form", detail::opt_num(r.naive_bias_closed_form)},
          {"eff_bound_closed_form", detail::opt_num(r.eff_bound_closed_form)},
          {"warnings", r.warnings}};
}

inline EstimateReport estimate_report_from_json(const Json& j) {
  EstimateReport r;
  r.psi_hat = detail::get_req<double>(j, "psi_hat");
  r.sigma2_hat = detail::get_req<double>(j, "sigma2_hat");
  r.ci_lo = detail::get_req<double>(j, "ci_lo");
  r.ci_hi = detail::get_req<double>(j, "ci_hi");
  r.n = detail::get_req<std::size_t>(j, "n");
  r.alpha = detail::get_req<double>(j, "alpha");
  r.k_folds = detail::get_req<std::size_t>(j, "k_folds");
  r.b_bound = detail::get_req<double>(j, "b_bound");
  for (const auto& c : j.at("bernstein_curve"))
    r.bernstein_curve.emplace_back(c.at("t").get<double>(), c.at("bound").get<double>());
  r.critical_eps = detail::get_req<double>(j, "critical_eps");
  r.critical_n = detail::get_req<double>(j, "critical_n");
  auto opt = [&](const char* k) -> std::optional<double> {
    if (j.at(k).is_null()) return std::nullopt;
    return j.at(k).get<double>();
  };
  r.naive_psi = opt("naive_psi");
  r.naive_bias_closed_form = opt("naive_bias_closed_form");
  r.eff_bound_closed_form = opt("eff_bound_closed_form");
  r.warnings = detail::get_req<std::vector<std::string>>(j, "warnings");
  return r;
}

/// Header: id,fold,u,base,auth_corr,report_corr,delay_corr,weight_total,y_corr,label
inline void write_scored_csv(std::ostream& out, std::span<const ScoredRecord> scored,
                             const std::vector<double>* labels) {
  out << "id,fold,u,base,auth_corr,report_corr,delay_corr,weight_total,y_corr,label\n";
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const auto& s = scored[i];
    out << s.id << ',' << s.fold << ',' << fmt_double(s.u) << ',' << fmt_double(s.base) << ','
        << fmt_double(s.auth_corr) << ',' << fmt_double(s.report_corr) << ','
        << fmt_double(s.delay_corr) << ',';
    out << fmt_double(s.weight_total) << ',';
    if (s.y_corr) out << fmt_double(*s.y_corr);
    out << ',';
    if (labels) out << fmt_double((*labels)[i]);
    out << '\n';
  }
}

inline std::vector<ScoredRecord> read_scored_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty scored file", 1);
  detail::strip_cr(line);
  if (line != "id,fold,u,base,auth_corr,report_corr,delay_corr,weight_total,y_corr,label")
    throw ParseError("unexpected scored header", 1);
  std::vector<ScoredRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 10) throw ParseError("expected 10 fields", lineno);
    ScoredRecord s;
    s.id = detail::parse_int<std::int64_t>(c[0], lineno, "id");
    s.fold = detail::parse_int<int>(c[1], lineno, "fold");
    s.u = detail::parse_double(c[2], lineno, "u");
    s.base = detail::parse_double(c[3], lineno, "base");
    s.auth_corr = detail::parse_double(c[4], lineno, "auth_corr");
    s.report_corr = detail::parse_double(c[5], lineno, "report_corr");
    s.delay_corr = detail::parse_double(c[6], lineno, "delay_corr");
    s.weight_total = detail::parse_double(c[7], lineno, "weight_total");
    if (!c[8].empty()) s.y_corr = detail::parse_double(c[8], lineno, "y_corr");
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------- delay plan

inline Json delta_json(DelayState s, double v) {
  return s == DelayState::wait_forever ? Json(nullptr) : detail::num(v);
}

inline Json to_json(const DelayPlan& p) {
  return {{"convention", p.convention == C1Convention::model ? "model" : "marginal"},
          {"c1", p.c1},
          {"c2", p.c2},
          {"argument", p.str_state == DelayState::wait_forever ? Json(nullptr) : Json(p.argument)},
          {"str_state", delay_state_name(p.str_state)},
          {"delta_star_str", delta_json(p.str_state, p.delta_star_str)},
          {"boundary_case", p.boundary_case},
          {"delta_star_approx", detail::opt_num(p.delta_star_approx)},
          {"exact_state", delay_state_name(p.exact_state)},
          {"delta_star_exact", delta_json(p.exact_state, p.delta_star_exact)},
          {"u_star", p.u_star},
          {"u_approx", p.u_approx},
          {"naive_state", delay_state_name(p.naive_state)},
          {"delta_star_naive", delta_json(p.naive_state, p.delta_star_naive)},
          {"naive_tolerable_at_zero", p.naive_tolerable_at_zero},
          {"zeta", p.zeta},
          {"eps_b", p.eps_b},
          {"freshness_gain",
           p.naive_state == DelayState::finite && p.str_state != DelayState::wait_forever
               ? detail::num(p.freshness_gain)
               : Json(nullptr)},
          {"freshness_formula_evaluable", p.freshness_formula_evaluable}};
}

inline std::string cell_or_unbounded(const std::optional<double>& v) {
  return v ? fmt_double(*v) : std::string("unbounded");
}

/// Header: delta,e_stat,e_drift,e_total; unreachable values print "unbounded".
inline std::string error_curve_csv(const std::vector<ErrorCurvePoint>& pts) {
  std::string out = "delta,e_stat,e_drift,e_total\n";
  for (const auto& p : pts)
    out += fmt_double(p.delta) + ',' + cell_or_unbounded(p.e_stat) + ',' + fmt_double(p.e_drift) +
           ',' + cell_or_unbounded(p.e_total) + '\n';
  return out;
}

inline Json to_json(const NetworkParams& p) {
  return {{"pi", p.pi},       {"e_bar", p.e_bar}, {"r_bar", p.r_bar},
          {"gamma", p.gamma}, {"eta", p.eta},     {"nu", p.nu},
          {"n", p.n},
          {"curve", {{"lambda", p.curve.lambda}, {"beta", p.curve.beta}, {"p_inf", p.curve.p_inf}}}};
}

inline NetworkParams network_from_json(const Json& j, NetworkParams p = {}) {
  detail::reject_unknown(j, {"pi", "e_bar", "r_bar", "gamma", "eta", "nu", "n", "curve", "cv"},
                         "delay.network");
  using detail::get_or;
  p.pi = get_or(j, "pi", p.pi);
  p.e_bar = get_or(j, "e_bar", p.e_bar);
  p.r_bar = get_or(j, "r_bar", p.r_bar);
  p.gamma = get_or(j, "gamma", p.gamma);
  p.eta = get_or(j, "eta", p.eta);
  p.nu = get_or(j, "nu", p.nu);
  p.n = get_or(j, "n", p.n);
  if (j.contains("curve")) {
    const auto& c = j.at("curve");
    detail::reject_unknown(c, {"lambda", "beta", "p_inf"}, "delay.network.curve");
    p.curve.lambda = get_or(c, "lambda", p.curve.lambda);
    p.curve.beta = get_or(c, "beta", p.curve.beta);
    p.curve.p_inf = get_or(c, "p_inf", p.curve.p_inf);
  }
  if (j.contains("cv")) {
    // eta from heterogeneity components instead of a direct value
    const auto& c = j.at("cv");
    detail::reject_unknown(c, {"cv_e2", "cv_r2", "cv_p2", "rho_fq", "cv_f", "cv_invq"},
                           "delay.network.cv");
    p.eta = heterogeneity_penalty(get_or(c, "cv_e2", 0.0), get_or(c, "cv_r2", 0.0),
                                  get_or(c, "cv_p2", 0.0), get_or(c, "rho_fq", 0.0),
                                  get_or(c, "cv_f", 0.0), get_or(c, "cv_invq", 0.0));
  }
  return p;
}

// ---------------------------------------------------------------- diagnostics

inline Json to_json(const DiagnosticsReport& d) {
  Json j = Json::object();
  if (d.smd_table) {
    Json rows = Json::array();
    for (const auto& r : *d.smd_table)
      rows.push_back({{"feature", r.feature},
                      {"raw", r.raw},
                      {"weighted", r.weighted},
                      {"zero_variance", r.zero_variance}});
    j["smd_table"] = rows;
  }
  if (d.overlap) {
    Json rows = Json::array();
    for (const auto& r : *d.overlap)
      rows.push_back({{"stage", stage_name(r.stage)},
                      {"count", r.count},
                      {"min", r.min},
                      {"floor", r.floor},
                      {"deciles", r.deciles},
                      {"warning", r.warning}});
    j["overlap"] = rows;
  }
  if (d.nuisance_auc) {
    Json rows = Json::array();
    for (const auto& r : *d.nuisance_auc)
      rows.push_back({{"stage", stage_name(r.stage)}, {"auc", detail::opt_num(r.auc)}});
    j["nuisance_auc"] = rows;
  }
  if (d.window_stability) {
    Json rows = Json::array();
    for (const auto& w : d.window_stability->windows)
      rows.push_back(
          {{"delta_min", w.delta_min}, {"psi_hat", w.psi_hat}, {"ci_lo", w.ci_lo}, {"ci_hi", w.ci_hi}});
    j["window_stability"] = {{"windows", rows},
                             {"stable", d.window_stability->stable},
                             {"max_gap", detail::num(d.window_stability->max_gap)}};
  }
  if (d.sensitivity_curves) {
    Json rows = Json::array();
    for (const auto& r : *d.sensitivity_curves)
      rows.push_back({{"gamma_a", r.gamma_a},
                      {"gamma_r", r.gamma_r},
                      {"auth_bound", r.auth_bound},
                      {"reporting_bound", r.reporting_bound},
                      {"joint_bound", r.joint_bound},
                      {"realized_bias", detail::opt_num(r.realized_bias)},
                      {"realized_se", detail::opt_num(r.realized_se)}});
    j["sensitivity_curves"] = rows;
  }
  if (d.corruption_sweep) {
    Json rows = Json::array();
    for (const auto& s : *d.corruption_sweep)
      rows.push_back({{"eps10", s.eps10},
                      {"eps01", s.eps01},
                      {"psi_hat", s.psi_hat},
                      {"ci_lo", s.ci_lo},
                      {"ci_hi", s.ci_hi}});
    j["corruption_sweep"] = rows;
  }
  j["warnings"] = d.warnings;
  return j;
}

inline std::string smd_csv(const std::vector<SmdRow>& rows) {
  std::string out = "feature,raw,weighted,zero_variance\n";
  for (const auto& r : rows)
    out += r.feature + ',' + fmt_double(r.raw) + ',' + fmt_double(r.weighted) + ',' +
           (r.zero_variance ? "1" : "0") + '\n';
  return out;
}

inline std::string sweep_csv(const std::vector<SweepPoint>& pts) {
  std::string out = "eps10,eps01,psi_hat,ci_lo,ci_hi\n";
  for (const auto& p : pts)
    out += fmt_double(p.eps10) + ',' + fmt_double(p.eps01) + ',' + fmt_double(p.psi_hat) + ',' +
           fmt_double(p.ci_lo) + ',' + fmt_double(p.ci_hi) + '\n';
  return out;
}

inline std::string sensitivity_csv(const std::vector<SensitivityRow>& rows) {
  std::string out = "gamma_a,gamma_r,auth_bound,reporting_bound,joint_bound,realized_bias,realized_se\n";
  for (const auto& r : rows)
    out += fmt_double(r.gamma_a) + ',' + fmt_double(r.gamma_r) + ',' + fmt_double(r.auth_bound) +
           ',' + fmt_double(r.reporting_bound) + ',' + fmt_double(r.joint_bound) + ',' +
           (r.realized_bias ? fmt_double(*r.realized_bias) : "") + ',' +
           (r.realized_se ? fmt_double(*r.realized_se) : "") + '\n';
  return out;
}

}  // namespace strl
