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
#include <cstdint>
#include <string>
#include <vector>

#include "fednorm/error.hpp"
#include "fednorm/he/ledger.hpp"
#include "json.hpp"

namespace fednorm::bench {

/// Worst-case binary-search iterations for a search range and precision:
/// ceil(log2(range / epsilon)) + 1, and 0 for a range within epsilon.
inline std::uint64_t kth_iteration_bound(double range, double epsilon) {
  if (!(range > epsilon)) return 0;
  return static_cast<std::uint64_t>(std::ceil(std::log2(range / epsilon))) + 1;
}

struct CostRow {
  std::string metric;
  std::uint64_t measured = 0;
  std::uint64_t predicted = 0;
  bool exact = true;  // prediction is exact rather than an upper bound
  std::string note;

  bool pass() const { return measured <= predicted; }
};

struct CostReport {
  std::string protocol;
  int parties = 0;
  std::vector<CostRow> rows;

  bool pass() const {
    for (const auto& r : rows) {
      if (!r.pass()) return false;
    }
    return true;
  }
};

inline void to_json(nlohmann::json& j, const CostRow& r) {
  j = {{"metric", r.metric},
       {"measured", r.measured},
       {"predicted", r.predicted},
       {"bound", r.exact ? "exact" : "upper"},
       {"status", r.pass() ? "PASS" : "FAIL"}};
  if (!r.note.empty()) j["note"] = r.note;
}

inline void to_json(nlohmann::json& j, const CostReport& r) {
  j = {{"protocol", r.protocol}, {"parties", r.parties}, {"rows", r.rows}, {"status", r.pass() ? "PASS" : "FAIL"}};
}

/// Compares a session result's ledger with the closed-form counts for its
/// protocol. Ciphertext counts scale with the number of chunks per vector.
inline CostReport cost_report(const nlohmann::json& result) {
  CostReport rep;
  rep.protocol = result.at("protocol").get<std::string>();
  rep.parties = result.at("parties").get<int>();
  const auto P = static_cast<std::uint64_t>(rep.parties);
  const auto c = result.value("chunks", std::uint64_t{1});
  const auto ledger = result.at("ledger").get<CostLedger>();
  auto add = [&](std::string metric, std::uint64_t measured, std::uint64_t predicted, bool exact = true,
                 std::string note = {}) {
    rep.rows.push_back({std::move(metric), measured, predicted, exact, std::move(note)});
  };
  const std::uint64_t mm_boot = P > 0 ? 2 * (P - 1) : 0;

  if (rep.protocol == "zscore") {
    add("ct_uploads", ledger.ct_uploads, 3 * P * c);
    add("cdecrypts", ledger.cdecrypts, 2 * c, true, "closed-form summary lists 3; the protocol decrypts twice");
    add("explicit_bootstraps", ledger.bootstraps, c);
    add("invs", ledger.invs, c);
  } else if (rep.protocol == "minmax") {
    add("ct_uploads", ledger.ct_uploads, 2 * P * c);
    add("cdecrypts", ledger.cdecrypts, 2 * c);
    add("explicit_bootstraps", ledger.bootstraps, mm_boot * c, true, "worst case 2P = " + std::to_string(2 * P * c));
    add("min_max_ops", ledger.min_max_ops, mm_boot * c);
  } else if (rep.protocol == "robust") {
    const auto& it = result.at("iterations");
    const std::uint64_t iters = it.at("q1").get<std::uint64_t>() + it.at("median").get<std::uint64_t>() +
                                it.at("q3").get<std::uint64_t>();
    add("ct_uploads", ledger.ct_uploads, (P + 2 * P + 2 * P * iters) * c);
    add("cdecrypts", ledger.cdecrypts, (1 + 2 + 2 * iters) * c);
    add("explicit_bootstraps", ledger.bootstraps, mm_boot * c, true, "worst case 2P = " + std::to_string(2 * P * c));
    add("plaintext_msgs", ledger.plaintext_msgs, P * iters);
    add("kth_iterations", ledger.kth_iterations, iters);
    const std::uint64_t bound =
        kth_iteration_bound(result.at("search_range").get<double>(), result.at("epsilon").get<double>());
    for (const char* q : {"q1", "median", "q3"}) {
      add(std::string("iterations_") + q, it.at(q).get<std::uint64_t>(), bound, false);
    }
  } else if (rep.protocol == "kth") {
    const auto iters = result.at("iterations").get<std::uint64_t>();
    const bool with_minmax = result.contains("v_abs");
    add("ct_uploads", ledger.ct_uploads, (P + (with_minmax ? 2 * P : 0) + 2 * P * iters) * c);
    add("cdecrypts", ledger.cdecrypts, (1 + (with_minmax ? 2 : 0) + 2 * iters) * c);
    add("plaintext_msgs", ledger.plaintext_msgs, P * iters);
    add("explicit_bootstraps", ledger.bootstraps, with_minmax ? mm_boot * c : 0);
    add("iterations", iters,
        kth_iteration_bound(result.at("search_range").get<double>(), result.at("epsilon").get<double>()), false);
  } else {
    throw Error(Errc::kValidation, "unknown protocol '" + rep.protocol + "' in result");
  }
  return rep;
}

}  // namespace fednorm::bench
