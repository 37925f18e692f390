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

#include <bit>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "fednorm/error.hpp"
#include "json.hpp"

namespace fednorm::he {

enum class BackendKind { kPlaintext, kSimulated };

inline std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::kPlaintext ? "plaintext" : "simulated";
}

inline BackendKind parse_backend_kind(std::string_view s) {
  if (s == "plaintext") return BackendKind::kPlaintext;
  if (s == "simulated") return BackendKind::kSimulated;
  throw Error(Errc::kValidation, "unknown backend '" + std::string(s) + "'");
}

/// Parameters of the simulated MHE-CKKS evaluator. Noise magnitudes are
/// relative bounds on the per-slot perturbation injected by each operation
/// and are ignored by the plaintext backend.
struct BackendParams {
  std::size_t slot_count = std::size_t{1} << 14;  // half of ring degree 2^15
  int max_level = 10;
  double encode_noise_rel = 1e-9;
  double mul_noise_rel = 1e-7;
  double bootstrap_noise_rel = 1e-9;
  int inv_iterations = 44;
  double inv_max_abs = 1073741824.0;  // 2^30
  int cmp_degree = 63;
  int cmp_stages = 12;
  int security_bits = 128;  // label only

  /// Levels consumed by one evaluation of the comparison polynomial.
  int cmp_stage_depth() const {
    return static_cast<int>(std::ceil(std::log2(static_cast<double>(cmp_degree) + 1.0)));
  }

  void validate() const {
    if (slot_count < 1 || !std::has_single_bit(slot_count)) {
      throw Error(Errc::kValidation, "slot_count must be a power of two");
    }
    if (max_level < 2) throw Error(Errc::kValidation, "max_level must be >= 2");
    if (!(inv_max_abs > 0.0)) throw Error(Errc::kValidation, "inv_max_abs must be positive");
    if (inv_iterations < 1) throw Error(Errc::kValidation, "inv_iterations must be >= 1");
    if (cmp_degree < 3 || cmp_degree % 2 == 0) {
      throw Error(Errc::kValidation, "cmp_degree must be odd and >= 3");
    }
    if (cmp_stages < 1) throw Error(Errc::kValidation, "cmp_stages must be >= 1");
    if (cmp_stage_depth() + 1 > max_level) {
      throw Error(Errc::kValidation, "max_level too small for the comparison polynomial depth");
    }
    if (encode_noise_rel < 0 || mul_noise_rel < 0 || bootstrap_noise_rel < 0) {
      throw Error(Errc::kValidation, "noise magnitudes must be non-negative");
    }
  }

  /// All noise magnitudes set to zero.
  BackendParams noiseless() const {
    BackendParams p = *this;
    p.encode_noise_rel = p.mul_noise_rel = p.bootstrap_noise_rel = 0.0;
    return p;
  }
};

inline void to_json(nlohmann::json& j, const BackendParams& p) {
  j = {{"slot_count", p.slot_count},
       {"max_level", p.max_level},
       {"encode_noise_rel", p.encode_noise_rel},
       {"mul_noise_rel", p.mul_noise_rel},
       {"bootstrap_noise_rel", p.bootstrap_noise_rel},
       {"inv_iterations", p.inv_iterations},
       {"inv_max_abs", p.inv_max_abs},
       {"cmp_degree", p.cmp_degree},
       {"cmp_stages", p.cmp_stages},
       {"security_bits", p.security_bits}};
}

/// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, BackendParams& p) {
  p = BackendParams{};
  if (j.contains("slot_count")) p.slot_count = j.at("slot_count").get<std::size_t>();
  if (j.contains("max_level")) p.max_level = j.at("max_level").get<int>();
  if (j.contains("encode_noise_rel")) p.encode_noise_rel = j.at("encode_noise_rel").get<double>();
  if (j.contains("mul_noise_rel")) p.mul_noise_rel = j.at("mul_noise_rel").get<double>();
  if (j.contains("bootstrap_noise_rel")) p.bootstrap_noise_rel = j.at("bootstrap_noise_rel").get<double>();
  if (j.contains("inv_iterations")) p.inv_iterations = j.at("inv_iterations").get<int>();
  if (j.contains("inv_max_abs")) p.inv_max_abs = j.at("inv_max_abs").get<double>();
  if (j.contains("cmp_degree")) p.cmp_degree = j.at("cmp_degree").get<int>();
  if (j.contains("cmp_stages")) p.cmp_stages = j.at("cmp_stages").get<int>();
  if (j.contains("security_bits")) p.security_bits = j.at("security_bits").get<int>();
  p.validate();
}

}  // namespace fednorm::he
