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

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fednorm/core/feature_table.hpp"
#include "fednorm/error.hpp"

namespace fednorm::csv {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                             : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::string_view unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace detail

/// Formats a double with the shortest representation that round-trips.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Parses CSV text: header row of feature names, empty cell = missing,
/// decimal-point numbers. Ragged rows are rejected.
inline FeatureTable read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::kValidation, "csv: missing header row");
  std::vector<std::string> names;
  for (auto cell : detail::split(line)) names.emplace_back(detail::unquote(cell));
  FeatureTable table(names);

  std::vector<double> row(names.size());
  std::vector<bool> present(names.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line);
    if (cells.size() != names.size()) {
      throw Error(Errc::kValidation, "csv: line " + std::to_string(line_no) + " has " +
                                         std::to_string(cells.size()) + " cells, expected " +
                                         std::to_string(names.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[j].empty()) {
        present[j] = false;
        row[j] = 0.0;
        continue;
      }
      double v = 0.0;
      const char* first = cells[j].data();
      const char* last = first + cells[j].size();
      if (*first == '+') ++first;
      auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last) {
        throw Error(Errc::kValidation, "csv: line " + std::to_string(line_no) +
                                           " has non-numeric cell '" + std::string(cells[j]) + "'",
                    static_cast<std::ptrdiff_t>(j));
      }
      present[j] = true;
      row[j] = v;
    }
    table.append_row(row, present);
  }
  return table;
}

inline FeatureTable read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kValidation, "csv: cannot open " + path.string());
  return read(in);
}

inline FeatureTable parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  return read(in);
}

inline void write(std::ostream& out, const FeatureTable& table) {
  const auto& names = table.names();
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (std::size_t r = 0; r < table.rows(); ++r) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (j) out << ',';
      if (!table.is_missing(j, r)) out << format_number(table.value(j, r));
    }
    out << '\n';
  }
}

inline void write_file(const std::filesystem::path& path, const FeatureTable& table) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kValidation, "csv: cannot write " + path.string());
  write(out, table);
}

}  // namespace fednorm::csv
