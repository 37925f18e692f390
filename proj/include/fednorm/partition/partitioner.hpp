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
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fednorm/core/feature_table.hpp"
#include "fednorm/error.hpp"
#include "json.hpp"

namespace fednorm {

enum class PartitionKind { kIid, kLabelDirichlet, kFeatureNoise, kQuantityDirichlet };

inline std::string_view to_string(PartitionKind kind) {
  switch (kind) {
    case PartitionKind::kIid: return "iid";
    case PartitionKind::kLabelDirichlet: return "label";
    case PartitionKind::kFeatureNoise: return "feature";
    case PartitionKind::kQuantityDirichlet: return "quantity";
  }
  return "?";
}

inline PartitionKind parse_partition_kind(std::string_view s) {
  if (s == "iid") return PartitionKind::kIid;
  if (s == "label") return PartitionKind::kLabelDirichlet;
  if (s == "feature") return PartitionKind::kFeatureNoise;
  if (s == "quantity") return PartitionKind::kQuantityDirichlet;
  throw Error(Errc::kValidation, "unknown partition kind '" + std::string(s) + "'");
}

struct PartitionSpec {
  PartitionKind kind = PartitionKind::kIid;
  double beta = 0.5;  // beta_l, beta_f (noise std scale) or beta_q depending on kind
  int parties = 1;
  std::uint64_t seed = 0;
};

/// Row-to-party assignment. Party indices are 1-based.
struct Partition {
  std::vector<int> assignments;
  int parties = 1;
  /// Per-party noise standard deviation (feature-noise partitions only).
  std::vector<double> noise_std;
  /// Dirichlet proportion vectors actually used: one per label class for
  /// label partitions, a single vector for quantity partitions.
  std::vector<std::vector<double>> proportions;

  std::vector<std::size_t> counts() const {
    std::vector<std::size_t> c(static_cast<std::size_t>(parties), 0);
    for (int a : assignments) ++c[static_cast<std::size_t>(a - 1)];
    return c;
  }

  /// Row indices held by each party, ascending.
  std::vector<std::vector<std::size_t>> rows_by_party() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(parties));
    for (std::size_t r = 0; r < assignments.size(); ++r) {
      out[static_cast<std::size_t>(assignments[r] - 1)].push_back(r);
    }
    return out;
  }
};

inline std::vector<FeatureTable> split_table(const FeatureTable& table, const Partition& partition) {
  std::vector<FeatureTable> out;
  for (const auto& rows : partition.rows_by_party()) out.push_back(table.select_rows(rows));
  return out;
}

namespace detail {

constexpr int kDirichletRetries = 32;

inline void check_partition_args(std::size_t rows, int parties, double beta, bool allow_zero_beta) {
  if (parties < 1) throw Error(Errc::kValidation, "party count must be >= 1");
  if (!(beta > 0.0) && !(allow_zero_beta && beta == 0.0)) {
    throw Error(Errc::kValidation, "imbalance parameter must be positive");
  }
  if (rows < static_cast<std::size_t>(parties)) {
    throw Error(Errc::kTooFewRows, std::to_string(rows) + " rows cannot cover " +
                                       std::to_string(parties) + " parties");
  }
}

inline std::vector<double> sample_dirichlet(std::mt19937_64& rng, double concentration, int parties) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> p(static_cast<std::size_t>(parties));
  for (;;) {
    double total = 0.0;
    for (auto& v : p) {
      v = gamma(rng);
      total += v;
    }
    if (total > 0.0) {
      for (auto& v : p) v /= total;
      return p;
    }
  }
}

/// Integer counts summing exactly to `total`, by largest remainder (ties to
/// the lower party index).
inline std::vector<std::size_t> largest_remainder(std::span<const double> props, std::size_t total) {
  std::vector<std::size_t> counts(props.size());
  std::vector<std::pair<double, std::size_t>> rem(props.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const double exact = props[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    rem[i] = {exact - std::floor(exact), i};
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[rem[i % rem.size()].second];
  while (assigned > total) {
    // Floating round-up can overshoot by a row; take it back from the largest.
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  return counts;
}

/// Moves one row from the largest party into each empty party.
inline void fill_empty_parties(Partition& part) {
  auto counts = part.counts();
  for (std::size_t p = 0; p < counts.size(); ++p) {
    if (counts[p] != 0) continue;
    const auto donor = static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    for (std::size_t r = part.assignments.size(); r-- > 0;) {
      if (part.assignments[r] == static_cast<int>(donor + 1)) {
        part.assignments[r] = static_cast<int>(p + 1);
        break;
      }
    }
    --counts[donor];
    ++counts[p];
  }
}

inline bool has_empty_party(const Partition& part) {
  for (auto c : part.counts()) {
    if (c == 0) return true;
  }
  return false;
}

inline std::vector<std::size_t> shuffled_rows(std::size_t rows, std::mt19937_64& rng) {
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Equal split (sizes differ by at most one) of a row order.
inline Partition equal_split(std::span<const std::size_t> order, int parties) {
  Partition part;
  part.parties = parties;
  part.assignments.assign(order.size(), 1);
  const std::size_t base = order.size() / static_cast<std::size_t>(parties);
  const std::size_t extra = order.size() % static_cast<std::size_t>(parties);
  std::size_t pos = 0;
  for (std::size_t p = 0; p < static_cast<std::size_t>(parties); ++p) {
    const std::size_t take = base + (p < extra ? 1 : 0);
    for (std::size_t i = 0; i < take; ++i) part.assignments[order[pos++]] = static_cast<int>(p + 1);
  }
  return part;
}

}  // namespace detail

/// Random equal split.
inline Partition partition_iid(const FeatureTable& table, int parties, std::uint64_t seed) {
  detail::check_partition_args(table.rows(), parties, 1.0, false);
  std::mt19937_64 rng(seed);
  const auto order = detail::shuffled_rows(table.rows(), rng);
  return detail::equal_split(order, parties);
}

/// Label-skew partition: each class's rows are spread over parties with
/// proportions drawn from Dirichlet(beta_l * 1_P).
inline Partition partition_label_dirichlet(const FeatureTable& table, std::span<const std::int64_t> labels,
                                           double beta_l, int parties, std::uint64_t seed) {
  detail::check_partition_args(table.rows(), parties, beta_l, false);
  if (labels.size() != table.rows()) {
    throw Error(Errc::kValidation, "label count does not match row count");
  }
  std::map<std::int64_t, std::vector<std::size_t>> by_class;
  for (std::size_t r = 0; r < labels.size(); ++r) by_class[labels[r]].push_back(r);

  std::mt19937_64 rng(seed);
  Partition part;
  part.parties = parties;
  for (int attempt = 0; attempt < detail::kDirichletRetries; ++attempt) {
    part.assignments.assign(table.rows(), 1);
    part.proportions.clear();
    for (auto& [label, rows] : by_class) {
      std::vector<std::size_t> order = rows;
      std::shuffle(order.begin(), order.end(), rng);
      auto props = detail::sample_dirichlet(rng, beta_l, parties);
      const auto counts = detail::largest_remainder(props, order.size());
      std::size_t pos = 0;
      for (std::size_t p = 0; p < counts.size(); ++p) {
        for (std::size_t i = 0; i < counts[p]; ++i) part.assignments[order[pos++]] = static_cast<int>(p + 1);
      }
      part.proportions.push_back(std::move(props));
    }
    if (!detail::has_empty_party(part)) return part;
  }
  detail::fill_empty_parties(part);
  return part;
}

/// Quantity-skew partition: party sizes follow Dirichlet(beta_q * 1_P)
/// proportions of the shuffled rows.
inline Partition partition_quantity_dirichlet(const FeatureTable& table, double beta_q, int parties,
                                              std::uint64_t seed) {
  detail::check_partition_args(table.rows(), parties, beta_q, false);
  std::mt19937_64 rng(seed);
  const auto order = detail::shuffled_rows(table.rows(), rng);
  Partition part;
  part.parties = parties;
  for (int attempt = 0; attempt < detail::kDirichletRetries; ++attempt) {
    auto props = detail::sample_dirichlet(rng, beta_q, parties);
    const auto counts = detail::largest_remainder(props, order.size());
    part.assignments.assign(order.size(), 1);
    std::size_t pos = 0;
    for (std::size_t p = 0; p < counts.size(); ++p) {
      for (std::size_t i = 0; i < counts[p]; ++i) part.assignments[order[pos++]] = static_cast<int>(p + 1);
    }
    part.proportions = {std::move(props)};
    if (!detail::has_empty_party(part)) return part;
  }
  detail::fill_empty_parties(part);
  return part;
}

/// Feature-skew partition: random equal split, then party i (1-based) gets
/// additive Gaussian noise with standard deviation beta_f * i / P on every
/// present cell.
inline std::pair<std::vector<FeatureTable>, Partition> partition_feature_noise(const FeatureTable& table,
                                                                             double beta_f, int parties,
                                                                             std::uint64_t seed) {
  detail::check_partition_args(table.rows(), parties, beta_f, true);
  std::mt19937_64 rng(seed);
  const auto order = detail::shuffled_rows(table.rows(), rng);
  Partition part = detail::equal_split(order, parties);
  auto tables = split_table(table, part);
  part.noise_std.resize(static_cast<std::size_t>(parties));
  for (std::size_t p = 0; p < tables.size(); ++p) {
    const double sd = beta_f * static_cast<double>(p + 1) / static_cast<double>(parties);
    part.noise_std[p] = sd;
    if (sd == 0.0) continue;
    std::normal_distribution<double> noise(0.0, sd);
    auto& t = tables[p];
    for (std::size_t j = 0; j < t.features(); ++j) {
      for (std::size_t r = 0; r < t.rows(); ++r) {
        if (!t.is_missing(j, r)) t.set(j, r, t.value(j, r) + noise(rng));
      }
    }
  }
  return {std::move(tables), std::move(part)};
}

/// Dispatches on PartitionSpec::kind; labels are required for label partitions.
inline std::pair<std::vector<FeatureTable>, Partition> make_partition(const FeatureTable& table,
                                                                     std::span<const std::int64_t> labels,
                                                                     const PartitionSpec& spec) {
  switch (spec.kind) {
    case PartitionKind::kFeatureNoise:
      return partition_feature_noise(table, spec.beta, spec.parties, spec.seed);
    case PartitionKind::kLabelDirichlet: {
      auto part = partition_label_dirichlet(table, labels, spec.beta, spec.parties, spec.seed);
      auto tables = split_table(table, part);
      return {std::move(tables), std::move(part)};
    }
    case PartitionKind::kQuantityDirichlet: {
      auto part = partition_quantity_dirichlet(table, spec.beta, spec.parties, spec.seed);
      auto tables = split_table(table, part);
      return {std::move(tables), std::move(part)};
    }
    case PartitionKind::kIid: {
      auto part = partition_iid(table, spec.parties, spec.seed);
      auto tables = split_table(table, part);
      return {std::move(tables), std::move(part)};
    }
  }
  throw Error(Errc::kValidation, "unknown partition kind");
}

inline nlohmann::json manifest_json(const PartitionSpec& spec, const Partition& part) {
  nlohmann::json j;
  j["spec"] = {{"kind", std::string(to_string(spec.kind))},
               {"beta", spec.beta},
               {"parties", spec.parties},
               {"seed", spec.seed}};
  j["counts"] = part.counts();
  j["noise_std"] = part.noise_std.empty() ? std::vector<double>(static_cast<std::size_t>(part.parties), 0.0)
                                          : part.noise_std;
  return j;
}

}  // namespace fednorm
