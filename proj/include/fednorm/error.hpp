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
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fednorm {

enum class Errc {
  kValidation,
  kEmptyFeature,
  kSchemaMismatch,
  kTooFewRows,
  kTooManySlots,
  kEpochMismatch,
  kShapeMismatch,
  kLevelExhausted,
  kDomainError,
  kMissingShares,
  kInvalidRank,
  kVAbsTooSmall,
  kTimeout,
  kFrameTooLarge,
  kDecodeError,
  kTransport,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kValidation: return "Validation";
    case Errc::kEmptyFeature: return "EmptyFeature";
    case Errc::kSchemaMismatch: return "SchemaMismatch";
    case Errc::kTooFewRows: return "TooFewRows";
    case Errc::kTooManySlots: return "TooManySlots";
    case Errc::kEpochMismatch: return "EpochMismatch";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kLevelExhausted: return "LevelExhausted";
    case Errc::kDomainError: return "DomainError";
    case Errc::kMissingShares: return "MissingShares";
    case Errc::kInvalidRank: return "InvalidRank";
    case Errc::kVAbsTooSmall: return "VAbsTooSmall";
    case Errc::kTimeout: return "Timeout";
    case Errc::kFrameTooLarge: return "FrameTooLarge";
    case Errc::kDecodeError: return "DecodeError";
    case Errc::kTransport: return "Transport";
  }
  return "Unknown";
}

inline Errc errc_from_name(std::string_view name, Errc fallback = Errc::kTransport) {
  for (int c = 0; c <= static_cast<int>(Errc::kTransport); ++c) {
    if (errc_name(static_cast<Errc>(c)) == name) return static_cast<Errc>(c);
  }
  return fallback;
}

/// Base of every error raised by the library. `index` optionally names the
/// offending feature / slot.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::ptrdiff_t index = -1)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code),
        index_(index),
        detail_(what) {}

  Errc code() const noexcept { return code_; }
  std::ptrdiff_t index() const noexcept { return index_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::ptrdiff_t index_;
  std::string detail_;
};

inline std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(ids[i]);
  }
  return out;
}

class MissingSharesError : public Error {
 public:
  explicit MissingSharesError(std::vector<int> absent)
      : Error(Errc::kMissingShares, "absent parties [" + join_ids(absent) + "]"),
        absent_(std::move(absent)) {}

  const std::vector<int>& absent() const noexcept { return absent_; }

 private:
  std::vector<int> absent_;
};

class TimeoutError : public Error {
 public:
  TimeoutError(std::uint64_t round, std::vector<int> missing)
      : Error(Errc::kTimeout, "round " + std::to_string(round) +
                                  " missing senders [" + join_ids(missing) + "]"),
        round_(round),
        missing_(std::move(missing)) {}

  std::uint64_t round() const noexcept { return round_; }
  const std::vector<int>& missing() const noexcept { return missing_; }

 private:
  std::uint64_t round_;
  std::vector<int> missing_;
};

}  // namespace fednorm
