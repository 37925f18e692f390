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

#include <cstdint>

#include "json.hpp"

namespace fednorm {

/// Operation and traffic counters. Each node keeps its own; a session's
/// ledger is the sum over nodes.
///
/// `bootstraps` counts only the collective bootstraps a protocol issues
/// explicitly; refreshes performed inside inverse and comparison evaluation
/// are tallied separately so their per-call multipliers can be read off.
struct CostLedger {
  std::uint64_t encrypts = 0;
  std::uint64_t ct_uploads = 0;      // ciphertext chunks sent party -> aggregator
  std::uint64_t plaintext_msgs = 0;  // plaintext midpoint messages aggregator -> party
  std::uint64_t share_msgs = 0;      // decryption / bootstrap share replies
  std::uint64_t adds = 0;
  std::uint64_t muls = 0;
  std::uint64_t invs = 0;
  std::uint64_t min_max_ops = 0;
  std::uint64_t bootstraps = 0;
  std::uint64_t inv_bootstraps = 0;
  std::uint64_t mm_bootstraps = 0;
  std::uint64_t cdecrypts = 0;
  std::uint64_t kth_iterations = 0;
  std::uint64_t bytes_sent = 0;

  CostLedger& operator+=(const CostLedger& o) {
    encrypts += o.encrypts;
    ct_uploads += o.ct_uploads;
    plaintext_msgs += o.plaintext_msgs;
    share_msgs += o.share_msgs;
    adds += o.adds;
    muls += o.muls;
    invs += o.invs;
    min_max_ops += o.min_max_ops;
    bootstraps += o.bootstraps;
    inv_bootstraps += o.inv_bootstraps;
    mm_bootstraps += o.mm_bootstraps;
    cdecrypts += o.cdecrypts;
    kth_iterations += o.kth_iterations;
    bytes_sent += o.bytes_sent;
    return *this;
  }

  friend CostLedger operator+(CostLedger a, const CostLedger& b) { return a += b; }
  friend bool operator==(const CostLedger&, const CostLedger&) = default;
};

inline void to_json(nlohmann::json& j, const CostLedger& l) {
  j = {{"encrypts", l.encrypts},
       {"ct_transfers", l.ct_uploads},
       {"plaintext_msgs", l.plaintext_msgs},
       {"share_msgs", l.share_msgs},
       {"adds", l.adds},
       {"muls", l.muls},
       {"invs", l.invs},
       {"min_max_ops", l.min_max_ops},
       {"bootstraps", l.bootstraps},
       {"inv_bootstraps", l.inv_bootstraps},
       {"mm_bootstraps", l.mm_bootstraps},
       {"cdecrypts", l.cdecrypts},
       {"kth_iterations", l.kth_iterations},
       {"bytes_sent", l.bytes_sent}};
}

inline void from_json(const nlohmann::json& j, CostLedger& l) {
  auto get = [&](const char* key) { return j.contains(key) ? j.at(key).get<std::uint64_t>() : 0; };
  l.encrypts = get("encrypts");
  l.ct_uploads = get("ct_transfers");
  l.plaintext_msgs = get("plaintext_msgs");
  l.share_msgs = get("share_msgs");
  l.adds = get("adds");
  l.muls = get("muls");
  l.invs = get("invs");
  l.min_max_ops = get("min_max_ops");
  l.bootstraps = get("bootstraps");
  l.inv_bootstraps = get("inv_bootstraps");
  l.mm_bootstraps = get("mm_bootstraps");
  l.cdecrypts = get("cdecrypts");
  l.kth_iterations = get("kth_iterations");
  l.bytes_sent = get("bytes_sent");
}

}  // namespace fednorm
