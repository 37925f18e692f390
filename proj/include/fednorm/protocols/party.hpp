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
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fednorm/core/feature_table.hpp"
#include "fednorm/core/normalize.hpp"
#include "fednorm/error.hpp"
#include "fednorm/he/backend.hpp"
#include "fednorm/he/ciphertext.hpp"
#include "fednorm/he/ledger.hpp"
#include "fednorm/transport/channel.hpp"

namespace fednorm::protocols {

using transport::MsgKind;
using transport::Payload;
using transport::ProtocolMessage;

namespace cmd {
inline constexpr std::string_view kSchema = "schema";
inline constexpr std::string_view kKeygen = "keygen";
inline constexpr std::string_view kPublicKey = "public_key";
inline constexpr std::string_view kZScoreSums = "zscore.sums";
inline constexpr std::string_view kZScoreSqDiff = "zscore.sqdiff";
inline constexpr std::string_view kExtremes = "minmax.extremes";
inline constexpr std::string_view kCounts = "counts";
inline constexpr std::string_view kKthCounts = "kth.counts";
inline constexpr std::string_view kShare = "share";
inline constexpr std::string_view kApply = "apply";
inline constexpr std::string_view kReport = "report";
inline constexpr std::string_view kShutdown = "shutdown";
inline constexpr std::string_view kError = "error";
}  // namespace cmd

/// Messages that only manage the session, not the computation. They are
/// left out of the cost ledger.
inline bool is_session_control(std::string_view command) {
  return command == cmd::kReport || command == cmd::kShutdown || command == "hello";
}

struct PartyOptions {
  /// Answer share requests without a share (fault injection).
  bool withhold_shares = false;
};

/// One data holder. Raw rows stay here; only ciphertexts, key-share
/// material and schema names leave the node.
class PartyNode {
 public:
  PartyNode(int id, FeatureTable table, transport::Endpoint& endpoint, he::BackendKind kind,
            he::BackendParams params, std::uint64_t seed, PartyOptions options = {})
      : id_(id),
        table_(std::move(table)),
        endpoint_(endpoint),
        backend_(kind, params, he::mix(seed, static_cast<std::uint64_t>(id))),
        secret_seed_(he::mix(he::mix(seed, 0x5EC8E7ULL), static_cast<std::uint64_t>(id))),
        options_(options) {
    if (id < 1) throw Error(Errc::kValidation, "party ids start at 1");
  }

  int id() const noexcept { return id_; }
  const FeatureTable& table() const noexcept { return table_; }
  const std::optional<FeatureTable>& normalized() const noexcept { return normalized_; }
  const std::optional<NormalizationParams>& applied_params() const noexcept { return applied_; }
  const CostLedger& ledger() const noexcept { return backend_.ledger(); }

  /// Processes messages one at a time until told to shut down.
  void serve() {
    for (;;) {
      const ProtocolMessage req = endpoint_.receive();
      if (req.payload.command == cmd::kShutdown) return;
      try {
        handle(req);
      } catch (const Error& e) {
        Payload p;
        p.command = std::string(cmd::kError);
        p.args = {{"code", std::string(errc_name(e.code()))}, {"message", e.detail()}, {"index", e.index()}};
        reply(req, MsgKind::kControl, std::move(p));
      }
    }
  }

 private:
  void handle(const ProtocolMessage& req) {
    const std::string& c = req.payload.command;
    if (c == cmd::kSchema) {
      Payload p;
      p.command = c;
      p.args = {{"features", table_.names()}};
      reply(req, MsgKind::kControl, std::move(p));
    } else if (c == cmd::kKeygen) {
      epoch_ = req.payload.args.at("epoch").get<std::uint64_t>();
      token_ = he::derive_share_token(secret_seed_, epoch_, id_);
      Payload p;
      p.command = c;
      p.args = {{"public", he::public_part(token_)}};
      reply(req, MsgKind::kControl, std::move(p));
    } else if (c == cmd::kPublicKey) {
      pk_ = req.payload.args.get<he::PublicKey>();
      if (pk_->epoch != epoch_) throw Error(Errc::kEpochMismatch, "public key for another epoch");
    } else if (c == cmd::kZScoreSums) {
      std::vector<double> sums(features()), counts(features());
      for (std::size_t j = 0; j < features(); ++j) {
        for (double v : table_.present(j)) sums[j] += v;
        counts[j] = static_cast<double>(table_.count(j));
      }
      upload(req, MsgKind::kEncSums, {{"sum", sums}, {"count", counts}});
    } else if (c == cmd::kZScoreSqDiff) {
      const auto& mean = req.payload.values;
      check_width(mean.size());
      std::vector<double> sq(features());
      for (std::size_t j = 0; j < features(); ++j) {
        for (double v : table_.present(j)) sq[j] += (v - mean[j]) * (v - mean[j]);
      }
      upload(req, MsgKind::kEncSums, {{"sqdiff", sq}});
    } else if (c == cmd::kExtremes) {
      const auto v_abs = req.payload.args.at("v_abs").get<std::vector<double>>();
      check_width(v_abs.size());
      std::vector<double> lo(features()), hi(features());
      for (std::size_t j = 0; j < features(); ++j) {
        const auto vals = table_.present(j);
        if (vals.empty()) {
          lo[j] = v_abs[j];
          hi[j] = -v_abs[j];
        } else {
          lo[j] = *std::min_element(vals.begin(), vals.end());
          hi[j] = *std::max_element(vals.begin(), vals.end());
        }
      }
      upload(req, MsgKind::kEncExtremes, {{"min", lo}, {"max", hi}});
    } else if (c == cmd::kCounts) {
      std::vector<double> counts(features());
      for (std::size_t j = 0; j < features(); ++j) counts[j] = static_cast<double>(table_.count(j));
      upload(req, MsgKind::kEncCounts, {{"count", counts}});
    } else if (c == cmd::kKthCounts) {
      const auto& mid = req.payload.values;
      check_width(mid.size());
      std::vector<double> less(features()), greater(features());
      for (std::size_t j = 0; j < features(); ++j) {
        for (double v : table_.present(j)) {
          if (v < mid[j]) less[j] += 1.0;
          if (v > mid[j]) greater[j] += 1.0;
        }
      }
      upload(req, MsgKind::kEncCounts, {{"less", less}, {"greater", greater}});
    } else if (c == cmd::kShare) {
      const auto op = req.payload.args.at("op").get<std::string>();
      const auto epoch = req.payload.args.at("epoch").get<std::uint64_t>();
      if (epoch != epoch_) throw Error(Errc::kEpochMismatch, "share requested for another epoch");
      Payload p;
      p.command = c;
      if (!options_.withhold_shares) p.share = he::KeyShare{id_, epoch_, token_};
      ++backend_.ledger().share_msgs;
      reply(req, op == "bootstrap" ? MsgKind::kBootstrapShare : MsgKind::kDecryptShare, std::move(p));
    } else if (c == cmd::kApply) {
      applied_ = params_from_json(req.payload.args);
      normalized_ = apply_normalization(table_, *applied_);
    } else if (c == cmd::kReport) {
      Payload p;
      p.command = c;
      p.args = {{"ledger", backend_.ledger()}};
      reply(req, MsgKind::kControl, std::move(p));
    } else {
      throw Error(Errc::kValidation, "unknown command '" + c + "'");
    }
  }

  std::size_t features() const noexcept { return table_.features(); }

  void check_width(std::size_t n) const {
    if (n != features()) {
      throw Error(Errc::kShapeMismatch, "expected " + std::to_string(features()) + " values, got " +
                                            std::to_string(n));
    }
  }

  void upload(const ProtocolMessage& req, MsgKind kind,
              std::initializer_list<std::pair<const char*, std::vector<double>>> vectors) {
    if (!pk_) throw Error(Errc::kEpochMismatch, "no collective public key installed");
    Payload p;
    p.command = req.payload.command;
    for (const auto& [name, values] : vectors) p.ciphertexts[name] = backend_.encrypt_vector(values, *pk_);
    ProtocolMessage msg{req.session, req.round, id_, kind, std::move(p)};
    backend_.ledger().ct_uploads += msg.ciphertext_count();
    backend_.ledger().bytes_sent += endpoint_.send(transport::kAggregatorId, msg);
  }

  void reply(const ProtocolMessage& req, MsgKind kind, Payload payload) {
    ProtocolMessage msg{req.session, req.round, id_, kind, std::move(payload)};
    const bool ledgered = !is_session_control(msg.payload.command);
    const auto bytes = endpoint_.send(transport::kAggregatorId, msg);
    if (ledgered) backend_.ledger().bytes_sent += bytes;
  }

  int id_;
  FeatureTable table_;
  transport::Endpoint& endpoint_;
  he::Backend backend_;
  std::uint64_t secret_seed_;
  PartyOptions options_;
  std::uint64_t epoch_ = 0;
  std::uint64_t token_ = 0;
  std::optional<he::PublicKey> pk_;
  std::optional<NormalizationParams> applied_;
  std::optional<FeatureTable> normalized_;
};

}  // namespace fednorm::protocols
