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

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fednorm/error.hpp"

namespace fednorm {

/// Column-major table of real-valued features with a per-cell missing mask.
///
/// Missing cells keep a placeholder value of 0 and are skipped by every
/// statistic; `count(j)` is the number of present cells in feature `j`.
class FeatureTable {
 public:
  FeatureTable() = default;

  explicit FeatureTable(std::vector<std::string> names)
      : names_(std::move(names)),
        values_(names_.size()),
        missing_(names_.size()) {}

  /// Builds a fully-present table from columns.
  static FeatureTable from_columns(std::vector<std::string> names,
                                   std::vector<std::vector<double>> columns) {
    if (names.size() != columns.size()) {
      throw Error(Errc::kValidation, "feature name count does not match column count");
    }
    FeatureTable t;
    t.names_ = std::move(names);
    t.values_ = std::move(columns);
    t.missing_.resize(t.values_.size());
    const std::size_t rows = t.values_.empty() ? 0 : t.values_.front().size();
    for (std::size_t j = 0; j < t.values_.size(); ++j) {
      if (t.values_[j].size() != rows) {
        throw Error(Errc::kValidation, "ragged columns", static_cast<std::ptrdiff_t>(j));
      }
      t.missing_[j].assign(rows, false);
    }
    t.rows_ = rows;
    return t;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t features() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  double value(std::size_t feature, std::size_t row) const { return values_[feature][row]; }
  bool is_missing(std::size_t feature, std::size_t row) const { return missing_[feature][row]; }

  std::span<const double> column(std::size_t feature) const { return values_[feature]; }

  void set(std::size_t feature, std::size_t row, double v) {
    values_[feature][row] = v;
    missing_[feature][row] = false;
  }
  void set_missing(std::size_t feature, std::size_t row) {
    values_[feature][row] = 0.0;
    missing_[feature][row] = true;
  }

  /// Appends one row; `present[j] == false` marks the cell missing.
  void append_row(std::span<const double> row, const std::vector<bool>& present = {}) {
    if (row.size() != features()) {
      throw Error(Errc::kValidation, "row width " + std::to_string(row.size()) +
                                         " does not match " + std::to_string(features()));
    }
    for (std::size_t j = 0; j < features(); ++j) {
      const bool is_present = present.empty() || present[j];
      values_[j].push_back(is_present ? row[j] : 0.0);
      missing_[j].push_back(!is_present);
    }
    ++rows_;
  }

  /// Number of present cells in a feature.
  std::size_t count(std::size_t feature) const {
    std::size_t n = 0;
    for (bool m : missing_[feature]) n += m ? 0 : 1;
    return n;
  }

  /// Present values of a feature in row order.
  std::vector<double> present(std::size_t feature) const {
    std::vector<double> out;
    out.reserve(rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
      if (!missing_[feature][i]) out.push_back(values_[feature][i]);
    }
    return out;
  }

  std::vector<double> row(std::size_t r) const {
    std::vector<double> out(features());
    for (std::size_t j = 0; j < features(); ++j) out[j] = values_[j][r];
    return out;
  }
  std::vector<bool> row_present(std::size_t r) const {
    std::vector<bool> out(features());
    for (std::size_t j = 0; j < features(); ++j) out[j] = !missing_[j][r];
    return out;
  }

  /// New table holding the given rows, in the given order.
  FeatureTable select_rows(std::span<const std::size_t> indices) const {
    FeatureTable out(names_);
    for (std::size_t j = 0; j < features(); ++j) {
      out.values_[j].reserve(indices.size());
      out.missing_[j].reserve(indices.size());
      for (std::size_t r : indices) {
        out.values_[j].push_back(values_[j][r]);
        out.missing_[j].push_back(missing_[j][r]);
      }
    }
    out.rows_ = indices.size();
    return out;
  }

  bool same_schema(const FeatureTable& other) const noexcept { return names_ == other.names_; }

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<bool>> missing_;
  std::size_t rows_ = 0;
};

/// Row-concatenation of tables sharing one schema.
inline FeatureTable concatenate(std::span<const FeatureTable> tables) {
  if (tables.empty()) return {};
  FeatureTable out(tables.front().names());
  for (const auto& t : tables) {
    if (!t.same_schema(out)) throw Error(Errc::kSchemaMismatch, "tables disagree on feature names");
    for (std::size_t r = 0; r < t.rows(); ++r) out.append_row(t.row(r), t.row_present(r));
  }
  return out;
}

}  // namespace fednorm
