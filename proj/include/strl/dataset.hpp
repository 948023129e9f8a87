#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strl/error.hpp"

namespace strl {

/// One transaction as seen by the observation pipeline. Gates that were never
/// reached are absent rather than zero.
struct TransactionRecord {
  std::int64_t id = 0;
  std::vector<double> x;
  std::int32_t issuer = 0;
  double delta = 0.0;
  int a = 0;
  std::optional<int> r;
  std::optional<int> m;
  int o = 0;
  std::optional<int> y_obs;
  std::optional<double> w1;
};

inline constexpr std::int8_t kAbsent = -1;

/// Column store for a batch of records. `x` is row-major n-by-d; absent
/// binary fields hold kAbsent and absent w1 values are NaN.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::size_t d, bool has_w1 = false) : d_(d), has_w1_(has_w1) {}

  std::size_t size() const noexcept { return id.size(); }
  bool empty() const noexcept { return id.empty(); }
  std::size_t dim() const noexcept { return d_; }
  bool has_w1() const noexcept { return has_w1_; }

  std::span<const double> x_row(std::size_t i) const {
    return {x.data() + i * d_, d_};
  }

  /// Number of issuers implied by the largest issuer id.
  std::size_t issuer_count() const {
    std::int32_t mx = -1;
    for (auto v : issuer) mx = std::max(mx, v);
    return static_cast<std::size_t>(mx + 1);
  }

  void reserve(std::size_t n) {
    id.reserve(n);
    issuer.reserve(n);
    delta.reserve(n);
    a.reserve(n);
    r.reserve(n);
    m.reserve(n);
    o.reserve(n);
    y_obs.reserve(n);
    x.reserve(n * d_);
    if (has_w1_) w1.reserve(n);
  }

  void push_back(const TransactionRecord& rec) {
    if (rec.x.size() != d_) throw ArgumentError("record feature dimension mismatch");
    id.push_back(rec.id);
    issuer.push_back(rec.issuer);
    delta.push_back(rec.delta);
    a.push_back(static_cast<std::int8_t>(rec.a));
    r.push_back(rec.r ? static_cast<std::int8_t>(*rec.r) : kAbsent);
    m.push_back(rec.m ? static_cast<std::int8_t>(*rec.m) : kAbsent);
    o.push_back(static_cast<std::int8_t>(rec.o));
    y_obs.push_back(rec.y_obs ? static_cast<std::int8_t>(*rec.y_obs) : kAbsent);
    x.insert(x.end(), rec.x.begin(), rec.x.end());
    if (has_w1_) w1.push_back(rec.w1 ? *rec.w1 : std::numeric_limits<double>::quiet_NaN());
  }

  TransactionRecord record(std::size_t i) const {
    TransactionRecord rec;
    rec.id = id[i];
    rec.x.assign(x.begin() + static_cast<std::ptrdiff_t>(i * d_),
                 x.begin() + static_cast<std::ptrdiff_t>((i + 1) * d_));
    rec.issuer = issuer[i];
    rec.delta = delta[i];
    rec.a = a[i];
    if (r[i] != kAbsent) rec.r = r[i];
    if (m[i] != kAbsent) rec.m = m[i];
    rec.o = o[i];
    if (y_obs[i] != kAbsent) rec.y_obs = y_obs[i];
    if (has_w1_ && !std::isnan(w1[i])) rec.w1 = w1[i];
    return rec;
  }

  /// Structural checks: O = A*R*M, monotone missingness, y_obs present iff O=1.
  void validate() const {
    const std::size_t n = size();
    if (issuer.size() != n || delta.size() != n || a.size() != n || r.size() != n ||
        m.size() != n || o.size() != n || y_obs.size() != n || x.size() != n * d_ ||
        (has_w1_ && w1.size() != n)) {
      throw DataIntegrityError("dataset columns have inconsistent lengths");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto fail = [&](const char* what) {
        throw DataIntegrityError("record id " + std::to_string(id[i]) + ": " + what);
      };
      if (a[i] != 0 && a[i] != 1) fail("a must be 0 or 1");
      if (issuer[i] < 0) fail("negative issuer id");
      if (a[i] == 0 && r[i] != kAbsent) fail("r present for a declined transaction");
      if (a[i] == 1 && r[i] == kAbsent) fail("r absent for an approved transaction");
      const bool ar = a[i] == 1 && r[i] == 1;
      if (!ar && m[i] != kAbsent) fail("m present without a=r=1");
      if (ar && m[i] == kAbsent) fail("m absent although a=r=1");
      const int want_o = ar && m[i] == 1 ? 1 : 0;
      if (o[i] != want_o) fail("o differs from a*r*m");
      if ((o[i] == 1) != (y_obs[i] != kAbsent)) fail("y_obs presence differs from o");
      if (y_obs[i] != kAbsent && y_obs[i] != 0 && y_obs[i] != 1) fail("y_obs not binary");
      if (!(delta[i] >= 0.0)) fail("delta must be non-negative");
    }
  }

  std::vector<std::int64_t> id;
  std::vector<std::int32_t> issuer;
  std::vector<double> delta;
  std::vector<std::int8_t> a, r, m, o, y_obs;
  std::vector<double> x;
  std::vector<double> w1;

 private:
  std::size_t d_ = 0;
  bool has_w1_ = false;
};

}  // namespace strl
