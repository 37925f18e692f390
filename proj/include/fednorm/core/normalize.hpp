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

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fednorm/core/feature_table.hpp"
#include "fednorm/core/stats.hpp"
#include "fednorm/error.hpp"
#include "json.hpp"

namespace fednorm {

enum class NormKind { kZScore, kMinMax, kRobust };

inline std::string_view to_string(NormKind kind) {
  switch (kind) {
    case NormKind::kZScore: return "zscore";
    case NormKind::kMinMax: return "minmax";
    case NormKind::kRobust: return "robust";
  }
  return "?";
}

inline NormKind parse_norm_kind(std::string_view s) {
  if (s == "zscore") return NormKind::kZScore;
  if (s == "minmax") return NormKind::kMinMax;
  if (s == "robust") return NormKind::kRobust;
  throw Error(Errc::kValidation, "unknown normalization kind '" + std::string(s) + "'");
}

struct ZScoreParams {
  std::vector<double> mean;
  std::vector<double> variance;
};

struct MinMaxParams {
  std::vector<double> min;
  std::vector<double> max;
};

struct RobustParams {
  std::vector<double> q1;
  std::vector<double> median;
  std::vector<double> q3;
};

using NormalizationParams = std::variant<ZScoreParams, MinMaxParams, RobustParams>;

inline NormKind kind_of(const NormalizationParams& params) {
  return static_cast<NormKind>(params.index());
}

inline NormalizationParams params_from_stats(const FeatureStats& s, NormKind kind) {
  switch (kind) {
    case NormKind::kZScore: return ZScoreParams{s.mean, s.variance};
    case NormKind::kMinMax: return MinMaxParams{s.min, s.max};
    case NormKind::kRobust: return RobustParams{s.q1, s.median, s.q3};
  }
  throw Error(Errc::kValidation, "unknown normalization kind");
}

namespace detail {

/// (x - center) / spread, with zero (or negative) spread mapping to 0.
inline double scale(double x, double center, double spread) {
  return spread > 0.0 ? (x - center) / spread : 0.0;
}

inline void check_width(std::size_t got, std::size_t want) {
  if (got != want) {
    throw Error(Errc::kShapeMismatch, "parameter width " + std::to_string(got) +
                                          " does not match " + std::to_string(want) + " features");
  }
}

}  // namespace detail

/// Element-wise transform of present cells; missing cells stay missing.
inline FeatureTable apply_normalization(const FeatureTable& table, const NormalizationParams& params) {
  FeatureTable out = table;
  const std::size_t nf = table.features();
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        for (std::size_t j = 0; j < nf; ++j) {
          double center = 0.0;
          double spread = 0.0;
          if constexpr (std::is_same_v<P, ZScoreParams>) {
            detail::check_width(p.mean.size(), nf);
            detail::check_width(p.variance.size(), nf);
            center = p.mean[j];
            spread = p.variance[j] > 0.0 ? std::sqrt(p.variance[j]) : 0.0;
          } else if constexpr (std::is_same_v<P, MinMaxParams>) {
            detail::check_width(p.min.size(), nf);
            detail::check_width(p.max.size(), nf);
            center = p.min[j];
            spread = p.max[j] - p.min[j];
          } else {
            detail::check_width(p.median.size(), nf);
            detail::check_width(p.q1.size(), nf);
            detail::check_width(p.q3.size(), nf);
            center = p.median[j];
            spread = p.q3[j] - p.q1[j];
          }
          for (std::size_t r = 0; r < table.rows(); ++r) {
            if (!table.is_missing(j, r)) out.set(j, r, detail::scale(table.value(j, r), center, spread));
          }
        }
      },
      params);
  return out;
}

/// Yeo-Johnson power transform of a single value. The logarithmic branches
/// at lambda = 0 (x >= 0) and lambda = 2 (x < 0) are the limits of the
/// power branches.
inline double yeo_johnson(double x, double lambda) {
  // expm1 keeps the power branches accurate as lambda nears the log cases.
  if (x >= 0.0) {
    const double l = std::log1p(x);
    return lambda == 0.0 ? l : std::expm1(lambda * l) / lambda;
  }
  const double l = std::log1p(-x);
  const double p = 2.0 - lambda;
  return lambda == 2.0 ? -l : -std::expm1(p * l) / p;
}

inline nlohmann::json to_json(const NormalizationParams& params,
                              const std::vector<std::string>& names) {
  nlohmann::json out;
  out["kind"] = std::string(to_string(kind_of(params)));
  out["features"] = names;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ZScoreParams>) {
          out["mean"] = p.mean;
          out["variance"] = p.variance;
        } else if constexpr (std::is_same_v<P, MinMaxParams>) {
          out["min"] = p.min;
          out["max"] = p.max;
        } else {
          out["q1"] = p.q1;
          out["median"] = p.median;
          out["q3"] = p.q3;
        }
      },
      params);
  return out;
}

inline NormalizationParams params_from_json(const nlohmann::json& j) {
  switch (parse_norm_kind(j.at("kind").get<std::string>())) {
    case NormKind::kZScore:
      return ZScoreParams{j.at("mean").get<std::vector<double>>(),
                          j.at("variance").get<std::vector<double>>()};
    case NormKind::kMinMax:
      return MinMaxParams{j.at("min").get<std::vector<double>>(), j.at("max").get<std::vector<double>>()};
    case NormKind::kRobust:
      return RobustParams{j.at("q1").get<std::vector<double>>(), j.at("median").get<std::vector<double>>(),
                          j.at("q3").get<std::vector<double>>()};
  }
  throw Error(Errc::kValidation, "unknown normalization kind");
}

}  // namespace fednorm
