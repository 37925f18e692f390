/*
 * Copyright 2026 The fednorm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fednorm/core/feature_table.hpp"
#include "fednorm/error.hpp"
#include "json.hpp"

namespace fednorm {

/// Per-feature summary statistics. Variance uses the population divisor n.
struct FeatureStats {
  std::vector<std::string> names;
  std::vector<std::size_t> n;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> min;
  std::vector<double> max;
  std::vector<double> q1;
  std::vector<double> median;
  std::vector<double> q3;

  std::size_t features() const noexcept { return names.size(); }

  void resize(std::size_t features) {
    n.resize(features);
    mean.resize(features);
    variance.resize(features);
    min.resize(features);
    max.resize(features);
    q1.resize(features);
    median.resize(features);
    q3.resize(features);
  }
};

/// 1-based order-statistic rank for a percentile. When `exact` is false the
/// percentile lies between ranks K and K+1.
struct PercentileIndex {
  std::size_t k = 1;
  bool exact = true;

  friend bool operator==(const PercentileIndex&, const PercentileIndex&) = default;
};

/// Percentile position h = q(n+1)/100, floored and flagged.
///
/// Integer arithmetic keeps the exactness test free of rounding. K is
/// clamped into [1, n-1] for interpolated ranks and [1, n] for exact ones;
/// a single sample is always its own exact percentile.
inline PercentileIndex percentile_index(std::size_t n, int q) {
  if (n == 0) throw Error(Errc::kEmptyFeature, "percentile of an empty feature");
  if (q <= 0 || q >= 100) throw Error(Errc::kValidation, "percentile must be in 1..99");
  if (n == 1) return {1, true};
  const std::size_t scaled = static_cast<std::size_t>(q) * (n + 1);
  PercentileIndex idx;
  idx.exact = scaled % 100 == 0;
  std::size_t k = scaled / 100;
  if (idx.exact) {
    idx.k = std::clamp<std::size_t>(k, 1, n);
  } else {
    idx.k = std::clamp<std::size_t>(k, 1, n - 1);
  }
  return idx;
}

/// Percentile value of sorted data under the percentile_index convention:
/// x_(K) when exact, otherwise linear interpolation between x_(K) and
/// x_(K+1) at fraction h - K (clipped to [0, 1]).
inline double percentile_from_sorted(std::span<const double> sorted, int q) {
  const auto idx = percentile_index(sorted.size(), q);
  const double lo = sorted[idx.k - 1];
  if (idx.exact) return lo;
  const double hi = sorted[idx.k];
  const double h = static_cast<double>(q) * static_cast<double>(sorted.size() + 1) / 100.0;
  const double frac = std::clamp(h - static_cast<double>(idx.k), 0.0, 1.0);
  return lo + frac * (hi - lo);
}

namespace detail {

/// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      c_ += (sum_ - t) + x;
    } else {
      c_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + c_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

}  // namespace detail

/// Statistics of a single table (the pooled baseline when the table is the
/// concatenation of every party's rows).
inline FeatureStats pooled_stats(const FeatureTable& table) {
  FeatureStats s;
  s.names = table.names();
  s.resize(table.features());
  for (std::size_t j = 0; j < table.features(); ++j) {
    std::vector<double> xs = table.present(j);
    if (xs.empty()) {
      throw Error(Errc::kEmptyFeature, "feature '" + s.names[j] + "' has no values",
                  static_cast<std::ptrdiff_t>(j));
    }
    const double n = static_cast<double>(xs.size());
    detail::CompensatedSum sum;
    for (double x : xs) sum.add(x);
    const double mean = sum.value() / n;
    detail::CompensatedSum sq;
    for (double x : xs) sq.add((x - mean) * (x - mean));

    std::sort(xs.begin(), xs.end());
    s.n[j] = xs.size();
    s.mean[j] = mean;
    s.variance[j] = sq.value() / n;
    s.min[j] = xs.front();
    s.max[j] = xs.back();
    s.q1[j] = percentile_from_sorted(xs, 25);
    s.median[j] = percentile_from_sorted(xs, 50);
    s.q3[j] = percentile_from_sorted(xs, 75);
  }
  return s;
}

/// Statistics a single party computes from its own rows only.
inline FeatureStats local_stats(const FeatureTable& table) { return pooled_stats(table); }

namespace detail {

/// k-th smallest (1-based) element across several sorted arrays using only
/// per-party rank counts against broadcast pivots. Each round discards at
/// least a quarter of the remaining candidates.
inline double distributed_select(const std::vector<std::vector<double>>& sorted, std::size_t k) {
  struct Window {
    std::size_t lo, hi;
  };
  std::vector<Window> win(sorted.size());
  for (std::size_t p = 0; p < sorted.size(); ++p) win[p] = {0, sorted[p].size()};

  for (;;) {
    // Weighted median of the window medians.
    std::vector<std::pair<double, std::size_t>> meds;
    for (std::size_t p = 0; p < sorted.size(); ++p) {
      const std::size_t len = win[p].hi - win[p].lo;
      if (len) meds.emplace_back(sorted[p][win[p].lo + (len - 1) / 2], len);
    }
    std::sort(meds.begin(), meds.end());
    std::size_t total = 0;
    for (const auto& m : meds) total += m.second;
    std::size_t acc = 0;
    double pivot = meds.back().first;
    for (const auto& m : meds) {
      acc += m.second;
      if (2 * acc >= total) {
        pivot = m.first;
        break;
      }
    }

    std::size_t less = 0;
    std::size_t equal = 0;
    std::vector<std::size_t> lb(sorted.size()), ub(sorted.size());
    for (std::size_t p = 0; p < sorted.size(); ++p) {
      const auto first = sorted[p].begin() + static_cast<std::ptrdiff_t>(win[p].lo);
      const auto last = sorted[p].begin() + static_cast<std::ptrdiff_t>(win[p].hi);
      lb[p] = static_cast<std::size_t>(std::lower_bound(first, last, pivot) - sorted[p].begin());
      ub[p] = static_cast<std::size_t>(std::upper_bound(first, last, pivot) - sorted[p].begin());
      less += lb[p] - win[p].lo;
      equal += ub[p] - lb[p];
    }
    if (k <= less) {
      for (std::size_t p = 0; p < sorted.size(); ++p) win[p].hi = lb[p];
    } else if (k <= less + equal) {
      return pivot;
    } else {
      k -= less + equal;
      for (std::size_t p = 0; p < sorted.size(); ++p) win[p].lo = ub[p];
    }
  }
}

inline double distributed_percentile(const std::vector<std::vector<double>>& sorted,
                                     std::size_t n, int q) {
  const auto idx = percentile_index(n, q);
  const double lo = distributed_select(sorted, idx.k);
  if (idx.exact) return lo;
  const double hi = distributed_select(sorted, idx.k + 1);
  const double h = static_cast<double>(q) * static_cast<double>(n + 1) / 100.0;
  const double frac = std::clamp(h - static_cast<double>(idx.k), 0.0, 1.0);
  return lo + frac * (hi - lo);
}

}  // namespace detail

/// Plaintext federated statistics: parties contribute per-feature sums,
/// counts, extremes, squared deviations from the global mean, and rank
/// counts; no party's rows are combined. Agrees with pooled_stats of the
/// row-concatenation (exactly for min/max/percentiles, to summation order
/// for mean/variance).
inline FeatureStats federated_stats(std::span<const FeatureTable> tables) {
  if (tables.empty()) throw Error(Errc::kValidation, "federated_stats needs at least one table");
  for (const auto& t : tables) {
    if (!t.same_schema(tables.front())) {
      throw Error(Errc::kSchemaMismatch, "parties disagree on feature names");
    }
  }
  FeatureStats s;
  s.names = tables.front().names();
  s.resize(s.names.size());
  for (std::size_t j = 0; j < s.names.size(); ++j) {
    std::vector<std::vector<double>> local(tables.size());
    detail::CompensatedSum sum;
    std::size_t n = 0;
    bool any = false;
    for (std::size_t p = 0; p < tables.size(); ++p) {
      local[p] = tables[p].present(j);
      if (local[p].empty()) continue;
      detail::CompensatedSum local_sum;
      for (double x : local[p]) local_sum.add(x);
      sum.add(local_sum.value());
      n += local[p].size();
      std::sort(local[p].begin(), local[p].end());
      if (!any) {
        s.min[j] = local[p].front();
        s.max[j] = local[p].back();
        any = true;
      } else {
        s.min[j] = std::min(s.min[j], local[p].front());
        s.max[j] = std::max(s.max[j], local[p].back());
      }
    }
    if (n == 0) {
      throw Error(Errc::kEmptyFeature, "feature '" + s.names[j] + "' has no values",
                  static_cast<std::ptrdiff_t>(j));
    }
    const double mean = sum.value() / static_cast<double>(n);
    detail::CompensatedSum sq;
    for (const auto& xs : local) {
      detail::CompensatedSum local_sq;
      for (double x : xs) local_sq.add((x - mean) * (x - mean));
      sq.add(local_sq.value());
    }
    s.n[j] = n;
    s.mean[j] = mean;
    s.variance[j] = sq.value() / static_cast<double>(n);
    s.q1[j] = detail::distributed_percentile(local, n, 25);
    s.median[j] = detail::distributed_percentile(local, n, 50);
    s.q3[j] = detail::distributed_percentile(local, n, 75);
  }
  return s;
}

/// JSON object keyed by feature name.
inline nlohmann::json to_json(const FeatureStats& s) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t j = 0; j < s.features(); ++j) {
    out[s.names[j]] = {{"mean", s.mean[j]}, {"variance", s.variance[j]}, {"min", s.min[j]},
                       {"max", s.max[j]},   {"q1", s.q1[j]},             {"median", s.median[j]},
                       {"q3", s.q3[j]},     {"n", s.n[j]}};
  }
  return out;
}

}  // namespace fednorm
