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
#include <vector>

#include <Eigen/Dense>

#include "strl/dataset.hpp"
#include "strl/error.hpp"
#include "strl/numeric.hpp"

namespace strl {

enum class Link { logit, identity, cloglog };

inline const char* link_name(Link l) {
  switch (l) {
    case Link::logit: return "logit";
    case Link::identity: return "identity";
    case Link::cloglog: return "cloglog";
  }
  return "?";
}

inline Link parse_link(const std::string& s) {
  if (s == "logit") return Link::logit;
  if (s == "identity") return Link::identity;
  if (s == "cloglog") return Link::cloglog;
  throw ConfigError("unknown link '" + s + "'");
}

/// Columns feeding a model. The intercept is implicit; with issuer_intercepts
/// each issuer gets its own.
struct FeatureSpec {
  bool issuer_intercepts = false;
  std::vector<std::size_t> x_cols;
  bool w1 = false;
  bool log_delta = false;

  std::size_t slopes() const { return x_cols.size() + (w1 ? 1 : 0) + (log_delta ? 1 : 0); }

  static FeatureSpec intercept_only() { return {}; }

  static FeatureSpec all_x(std::size_t d) {
    FeatureSpec s;
    for (std::size_t j = 0; j < d; ++j) s.x_cols.push_back(j);
    return s;
  }

  bool operator==(const FeatureSpec&) const = default;
};

inline constexpr double kLogDeltaFloor = 1e-3;

/// Writes the slope features of record i into out[0..spec.slopes()).
inline void extract_features(const FeatureSpec& spec, const Dataset& ds, std::size_t i,
                             double* out) {
  std::size_t k = 0;
  const double* xi = ds.x.data() + i * ds.dim();
  for (std::size_t c : spec.x_cols) out[k++] = xi[c];
  if (spec.w1) out[k++] = ds.has_w1() ? ds.w1[i] : std::numeric_limits<double>::quiet_NaN();
  if (spec.log_delta) out[k++] = std::log(std::max(ds.delta[i], kLogDeltaFloor));
}

inline double inverse_link(Link l, double eta) {
  switch (l) {
    case Link::logit: return logistic(eta);
    case Link::identity: return eta;
    case Link::cloglog: return inv_cloglog(eta);
  }
  return eta;
}

struct Clamp {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Clamp&) const = default;
};

/// Generalized linear model with optional per-issuer intercepts.
struct GlmModel {
  Link link = Link::logit;
  FeatureSpec spec;
  std::vector<double> coef;              // [intercept, slopes...]
  std::vector<double> issuer_intercept;  // used instead of coef[0] for seen issuers
  std::vector<std::uint8_t> issuer_seen;
  std::optional<Clamp> clamp;
  int iterations = 0;
  bool penalized = false;  // fitted with the separation ridge

  bool knows_issuer(std::int32_t g) const {
    return spec.issuer_intercepts && g >= 0 &&
           static_cast<std::size_t>(g) < issuer_seen.size() && issuer_seen[g] != 0;
  }

  double eta(const Dataset& ds, std::size_t i) const {
    double buf[64];
    const std::size_t p = spec.slopes();
    if (p > 64) throw ArgumentError("too many slope features");
    extract_features(spec, ds, i, buf);
    double s = knows_issuer(ds.issuer[i]) ? issuer_intercept[ds.issuer[i]] : coef[0];
    for (std::size_t j = 0; j < p; ++j) s += coef[j + 1] * buf[j];
    return s;
  }

  double apply_clamp(double v) const {
    return clamp ? std::clamp(v, clamp->lo, clamp->hi) : v;
  }

  double predict(const Dataset& ds, std::size_t i) const {
    return apply_clamp(inverse_link(link, eta(ds, i)));
  }

  /// Constant model returning c (before clamping).
  static GlmModel constant(Link link, double c, std::optional<Clamp> clamp = std::nullopt) {
    GlmModel m;
    m.link = link;
    m.clamp = clamp;
    switch (link) {
      case Link::identity: m.coef = {c}; break;
      case Link::logit:
        m.coef = {c <= 0.0 ? -40.0 : c >= 1.0 ? 40.0 : logit(c)};
        break;
      case Link::cloglog:
        m.coef = {c <= 0.0 ? -40.0 : c >= 1.0 ? 4.0 : cloglog(c)};
        break;
    }
    return m;
  }
};

struct GlmOptions {
  int max_iter = 100;
  double tol = 1e-8;  // on max |mean gradient|
  // Per-observation ridge for the refit when targets outside [0,1] make the
  // quasi-likelihood unbounded (separable rows). Zero disables the refit.
  double separation_ridge = 1e-3;
};

namespace detail {

struct GlmDesign {
  std::size_t n = 0;
  std::size_t p = 0;        // slopes
  std::size_t groups = 1;   // intercept columns
  std::vector<double> z;    // n*p
  std::vector<std::int32_t> g;
  std::vector<double> y;
};

/// Log-likelihood (or negative half squared error) with gradient and
/// expected-information matrix, in one pass over the design.
inline double glm_pass(Link link, const GlmDesign& D, const Eigen::VectorXd& theta,
                       Eigen::VectorXd* grad, Eigen::MatrixXd* info) {
  const std::size_t G = D.groups, p = D.p, P = G + p;
  if (grad) grad->setZero(static_cast<Eigen::Index>(P));
  if (info) info->setZero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
  std::vector<double> gd(grad ? P : 0, 0.0);
  std::vector<double> gdiag(info ? G : 0, 0.0);
  std::vector<double> cross(info ? G * p : 0, 0.0);
  std::vector<double> ss(info ? p * p : 0, 0.0);
  double ll = 0.0;
  for (std::size_t i = 0; i < D.n; ++i) {
    const double* zi = D.z.data() + i * p;
    const std::size_t gi = static_cast<std::size_t>(D.g[i]);
    double eta = theta[static_cast<Eigen::Index>(gi)];
    for (std::size_t j = 0; j < p; ++j) eta += theta[static_cast<Eigen::Index>(G + j)] * zi[j];
    const double y = D.y[i];
    double score = 0.0, w = 0.0;
    switch (link) {
      case Link::logit: {
        const double mu = logistic(eta);
        // y*eta - log(1+e^eta), stable form.
        ll += y * eta - (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)));
        score = y - mu;
        w = mu * (1.0 - mu);
        break;
      }
      case Link::identity: {
        const double r = y - eta;
        ll += -0.5 * r * r;
        score = r;
        w = 1.0;
        break;
      }
      case Link::cloglog: {
        const double ee = std::exp(eta);
        const double mu = -std::expm1(-ee);
        const double log_mu = std::log(mu);
        ll += y * log_mu - (1.0 - y) * ee;
        // d/deta of the log-likelihood and Fisher information weight.
        const double ratio = mu > 0.0 ? ee / mu : 1.0;
        score = (y - mu) * ratio;
        w = ee * (1.0 - mu) * ratio;
        break;
      }
    }
    if (grad) {
      gd[gi] += score;
      for (std::size_t j = 0; j < p; ++j) gd[G + j] += score * zi[j];
    }
    if (info) {
      gdiag[gi] += w;
      double* cr = cross.data() + gi * p;
      for (std::size_t j = 0; j < p; ++j) {
        const double wz = w * zi[j];
        cr[j] += wz;
        for (std::size_t k = j; k < p; ++k) ss[j * p + k] += wz * zi[k];
      }
    }
  }
  if (grad) {
    for (std::size_t j = 0; j < P; ++j) (*grad)[static_cast<Eigen::Index>(j)] = gd[j];
  }
  if (info) {
    auto& H = *info;
    for (std::size_t a = 0; a < G; ++a) {
      H(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = gdiag[a];
      for (std::size_t j = 0; j < p; ++j) {
        const auto r = static_cast<Eigen::Index>(a), c = static_cast<Eigen::Index>(G + j);
        H(r, c) = H(c, r) = cross[a * p + j];
      }
    }
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = j; k < p; ++k) {
        const auto r = static_cast<Eigen::Index>(G + j), c = static_cast<Eigen::Index>(G + k);
        H(r, c) = H(c, r) = ss[j * p + k];
      }
  }
  return ll;
}

}  // namespace detail

/// Fits a GLM by damped Newton / Fisher scoring on the given rows. Binary
/// targets that are all 0 or all 1 give a constant model at the clamp bound.
inline GlmModel fit_glm(const Dataset& ds, std::span<const std::size_t> rows,
                        std::span<const double> y, Link link, const FeatureSpec& spec,
                        std::optional<Clamp> clamp = std::nullopt, GlmOptions opt = {}) {
  if (rows.size() != y.size()) throw ArgumentError("fit_glm: rows and targets differ");
  if (rows.empty()) throw InsufficientDataError("fit_glm: empty training set");
  for (std::size_t c : spec.x_cols)
    if (c >= ds.dim()) throw ArgumentError("fit_glm: feature column out of range");
  if (spec.w1 && !ds.has_w1()) throw ArgumentError("fit_glm: dataset has no w1 column");

  GlmModel model;
  model.link = link;
  model.spec = spec;
  model.clamp = clamp;

  const std::size_t n = rows.size();
  const std::size_t p = spec.slopes();

  double ymin = y[0], ymax = y[0];
  for (double v : y) {
    if (!std::isfinite(v)) throw DataIntegrityError("fit_glm: non-finite target");
    ymin = std::min(ymin, v);
    ymax = std::max(ymax, v);
  }
  if (link == Link::cloglog && (ymin < 0.0 || ymax > 1.0))
    throw ArgumentError("fit_glm: cloglog needs targets in [0,1]");
  if (link != Link::identity && ymin == ymax && (ymin == 0.0 || ymin == 1.0)) {
    GlmModel c = GlmModel::constant(link, ymin, clamp);
    c.spec = spec;
    c.coef.resize(p + 1, 0.0);
    if (spec.issuer_intercepts) {
      c.issuer_intercept.assign(ds.issuer_count(), c.coef[0]);
      c.issuer_seen.assign(ds.issuer_count(), 0);
    }
    return c;
  }

  // Map issuers to intercept columns; unseen issuers get none.
  std::vector<std::int32_t> col_of;
  std::size_t groups = 1;
  if (spec.issuer_intercepts) {
    col_of.assign(ds.issuer_count(), -1);
    for (std::size_t r : rows) col_of[ds.issuer[r]] = 0;
    groups = 0;
    for (auto& c : col_of)
      if (c == 0) c = static_cast<std::int32_t>(groups++);
  }

  detail::GlmDesign D;
  D.n = n;
  D.p = p;
  D.groups = groups;
  D.z.resize(n * p);
  D.g.resize(n);
  D.y.assign(y.begin(), y.end());
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t r = rows[t];
    if (r >= ds.size()) throw ArgumentError("fit_glm: row index out of range");
    extract_features(spec, ds, r, D.z.data() + t * p);
    for (std::size_t j = 0; j < p; ++j)
      if (!std::isfinite(D.z[t * p + j]))
        throw DataIntegrityError("fit_glm: missing feature value in training row");
    D.g[t] = spec.issuer_intercepts ? col_of[ds.issuer[r]] : 0;
  }

  const std::size_t P = groups + p;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P));
  const double ybar = mean(y);
  double start = ybar;
  if (link != Link::identity) {
    const double yc = std::clamp(ybar, 1e-4, 1.0 - 1e-4);
    start = link == Link::logit ? logit(yc) : cloglog(yc);
  }
  theta.head(static_cast<Eigen::Index>(groups)).setConstant(start);

  Eigen::VectorXd grad, step;
  Eigen::MatrixXd info;
  double ll = detail::glm_pass(link, D, theta, &grad, &info);
  {
    // Rank check on the correlation-scaled information: a constant or
    // collinear column makes the design singular.
    const Eigen::VectorXd s = info.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd c = s.asDiagonal() * info * s.asDiagonal();
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c, Eigen::EigenvaluesOnly)
                          .eigenvalues()
                          .minCoeff();
    if (!(lo > 1e-10)) throw NumericalError("fit_glm: singular design (constant or collinear features)");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::VectorXd theta0 = theta;
  const Eigen::VectorXd grad0 = grad;
  const Eigen::MatrixXd info0 = info;
  const double ll0 = ll;

  // Damped Newton on ll - lambda*n/2*|theta|^2. Returns iterations and sets converged.
  auto newton = [&](double lambda, bool& converged) {
    const double pen = lambda * static_cast<double>(n);
    auto penalize = [&](const Eigen::VectorXd& th, double& l, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
      if (pen == 0.0) return;
      l -= 0.5 * pen * th.squaredNorm();
      g -= pen * th;
      h.diagonal().array() += pen;
    };
    penalize(theta, ll, grad, info);
    int it = 0;
    converged = false;
    for (; it < opt.max_iter; ++it) {
      if (grad.cwiseAbs().maxCoeff() * inv_n <= opt.tol) {
        converged = true;
        break;
      }
      const double ridge = 1e-12 * (info.diagonal().cwiseAbs().maxCoeff() + 1.0);
      info.diagonal().array() += ridge;
      step = info.ldlt().solve(grad);
      if (!step.allFinite()) throw NumericalError("fit_glm: singular information matrix");
      double scale = 1.0;
      bool improved = false;
      Eigen::VectorXd cand, cgrad;
      Eigen::MatrixXd cinfo;
      for (int h = 0; h < 40; ++h) {
        cand = theta + scale * step;
        double cll = detail::glm_pass(link, D, cand, &cgrad, &cinfo);
        penalize(cand, cll, cgrad, cinfo);
        if (std::isfinite(cll) && cll >= ll - 1e-12 * std::abs(ll)) {
          theta = cand;
          ll = cll;
          grad = cgrad;
          info = cinfo;
          improved = true;
          break;
        }
        scale *= 0.5;
      }
      if (!improved ||
          step.cwiseAbs().maxCoeff() * scale <= 1e-12 * (1.0 + theta.cwiseAbs().maxCoeff())) {
        converged = grad.cwiseAbs().maxCoeff() * inv_n <= std::sqrt(opt.tol);
        ++it;
        break;
      }
    }
    if (!converged && grad.cwiseAbs().maxCoeff() * inv_n <= opt.tol) converged = true;
    return it;
  };

  bool converged = false;
  int it = newton(0.0, converged);
  if (!converged && link == Link::logit && (ymin < 0.0 || ymax > 1.0) && opt.separation_ridge > 0.0) {
    theta = theta0;
    grad = grad0;
    info = info0;
    ll = ll0;
    it += newton(opt.separation_ridge, converged);
    model.penalized = converged;
  }
  if (!converged) {
    throw ConvergenceError("fit_glm: no convergence after " + std::to_string(it) + " iterations",
                           std::vector<double>(theta.data(), theta.data() + theta.size()));
  }

  model.iterations = it;
  model.coef.assign(p + 1, 0.0);
  for (std::size_t j = 0; j < p; ++j) model.coef[j + 1] = theta[static_cast<Eigen::Index>(groups + j)];
  if (spec.issuer_intercepts) {
    const std::size_t K = col_of.size();
    model.issuer_intercept.assign(K, 0.0);
    model.issuer_seen.assign(K, 0);
    std::vector<double> cnt(groups, 0.0);
    for (auto g : D.g) cnt[static_cast<std::size_t>(g)] += 1.0;
    double num = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (col_of[k] < 0) continue;
      const double b = theta[col_of[k]];
      model.issuer_intercept[k] = b;
      model.issuer_seen[k] = 1;
      num += cnt[static_cast<std::size_t>(col_of[k])] * b;
    }
    model.coef[0] = num * inv_n;
  } else {
    model.coef[0] = theta[0];
  }
  return model;
}

}  // namespace strl
