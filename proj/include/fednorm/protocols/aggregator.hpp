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
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fednorm/core/normalize.hpp"
#include "fednorm/core/stats.hpp"
#include "fednorm/error.hpp"
#include "fednorm/he/backend.hpp"
#include "fednorm/protocols/party.hpp"
#include "fednorm/transport/channel.hpp"

namespace fednorm::protocols {

struct ZScoreOutput {
  std::vector<double> mean;
  std::vector<double> variance;
};

struct MinMaxOutput {
  std::vector<double> min;
  std::vector<double> max;
};

/// Per-feature binary-search inputs for one k-th element query.
struct KthQuery {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<std::size_t> k;
  std::vector<bool> exact;
  std::vector<std::size_t> n;
  double epsilon = 1e-4;
};

struct KthOutput {
  std::vector<double> value;
  std::size_t iterations = 0;
  double search_range = 0.0;  // widest hi0 - lo0
};

struct RobustOutput {
  std::vector<double> q1;
  std::vector<double> median;
  std::vector<double> q3;
  std::vector<double> min;
  std::vector<double> max;
  std::vector<std::size_t> n;
  std::array<std::size_t, 3> iterations{};  // q1, median, q3 searches
  double search_range = 0.0;
};

/// Binary-search state, one lane per feature.
struct KthSearchState {
  std::vector<double> lo, hi, mid, result;
  std::vector<bool> done;
  std::vector<std::size_t> k, n;
  std::vector<bool> exact;
  double epsilon = 0.0;

  explicit KthSearchState(const KthQuery& q)
      : lo(q.lo), hi(q.hi), mid(q.lo.size()), result(q.lo.size()), done(q.lo.size(), false),
        k(q.k), n(q.n), exact(q.exact), epsilon(q.epsilon) {
    const std::size_t f = lo.size();
    if (hi.size() != f || k.size() != f || n.size() != f || exact.size() != f) {
      throw Error(Errc::kShapeMismatch, "k-th query vectors differ in length");
    }
    if (!(epsilon > 0.0)) throw Error(Errc::kValidation, "epsilon must be positive");
    for (std::size_t j = 0; j < f; ++j) {
      if (!(lo[j] <= hi[j])) {
        throw Error(Errc::kValidation, "search range lo > hi", static_cast<std::ptrdiff_t>(j));
      }
      if (k[j] < 1 || k[j] > n[j]) {
        throw Error(Errc::kInvalidRank,
                    "rank " + std::to_string(k[j]) + " outside [1, " + std::to_string(n[j]) + "]",
                    static_cast<std::ptrdiff_t>(j));
      }
      if (hi[j] - lo[j] <= epsilon) {
        result[j] = lo[j] == hi[j] ? lo[j] : lo[j] + (hi[j] - lo[j]) / 2;
        done[j] = true;
      }
      mid[j] = result[j];
    }
  }

  bool finished() const { return std::all_of(done.begin(), done.end(), [](bool b) { return b; }); }

  void choose_midpoints() {
    for (std::size_t j = 0; j < lo.size(); ++j) mid[j] = done[j] ? result[j] : lo[j] + (hi[j] - lo[j]) / 2;
  }

  /// Applies the decrypted strictly-less / strictly-greater counts.
  void update(std::span<const double> less, std::span<const double> greater) {
    for (std::size_t j = 0; j < lo.size(); ++j) {
      if (done[j]) continue;
      const auto l = static_cast<long long>(std::llround(less[j]));
      const auto g = static_cast<long long>(std::llround(greater[j]));
      const auto kk = static_cast<long long>(k[j]);
      const auto nn = static_cast<long long>(n[j]);
      const bool hit = exact[j] ? (l <= kk - 1 && g <= nn - kk) : (l <= kk && g <= nn - kk);
      if (hit) {
        result[j] = mid[j];
        done[j] = true;
        continue;
      }
      const bool stalled = mid[j] <= lo[j] || mid[j] >= hi[j];
      if (l >= kk) {
        hi[j] = mid[j];
      } else {
        lo[j] = mid[j];
      }
      if (hi[j] - lo[j] <= epsilon || stalled) {
        result[j] = lo[j] + (hi[j] - lo[j]) / 2;
        done[j] = true;
      }
    }
  }
};

/// Server role. Holds no data; sees ciphertexts, the collective public key
/// and whatever the protocols decrypt.
class AggregatorNode final : public he::ShareSource {
 public:
  AggregatorNode(transport::Endpoint& endpoint, int parties, he::BackendKind kind, he::BackendParams params,
                 std::uint64_t seed, std::string session)
      : endpoint_(endpoint),
        backend_(kind, params, he::mix(seed, 0)),
        seed_(seed),
        session_(std::move(session)) {
    if (parties < 1) throw Error(Errc::kValidation, "need at least one party");
    ids_.resize(static_cast<std::size_t>(parties));
    std::iota(ids_.begin(), ids_.end(), 1);
  }

  int parties() const noexcept { return static_cast<int>(ids_.size()); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t features() const noexcept { return names_.size(); }
  std::size_t chunks() const noexcept {
    const std::size_t slots = backend_.params().slot_count;
    return std::max<std::size_t>(1, (features() + slots - 1) / slots);
  }
  const CostLedger& ledger() const noexcept { return backend_.ledger(); }
  he::Backend& backend() noexcept { return backend_; }

  /// Schema agreement and collective key generation.
  void setup() {
    auto schema = exchange(MsgKind::kControl, request(cmd::kSchema));
    names_ = schema.front().payload.args.at("features").get<std::vector<std::string>>();
    for (const auto& m : schema) {
      if (m.payload.args.at("features").get<std::vector<std::string>>() != names_) {
        throw Error(Errc::kSchemaMismatch, "party " + std::to_string(m.sender) + " has a different schema");
      }
    }
    if (names_.empty()) throw Error(Errc::kValidation, "no features");

    const std::uint64_t epoch = he::mix(seed_, ++key_counter_);
    Payload kg = request(cmd::kKeygen);
    kg.args = {{"epoch", epoch}};
    std::vector<std::uint64_t> publics;
    for (const auto& m : exchange(MsgKind::kControl, kg)) publics.push_back(m.payload.args.at("public").get<std::uint64_t>());
    pk_ = he::make_public_key(epoch, std::move(publics));
    backend_.install_key(pk_);
    Payload pub = request(cmd::kPublicKey);
    pub.args = pk_;
    notify(MsgKind::kControl, pub);
  }

  ZScoreOutput run_zscore() {
    auto first = exchange(MsgKind::kControl, request(cmd::kZScoreSums));
    const auto sum = backend_.sum(collect_cts(first, "sum"));
    const auto count = backend_.sum(collect_cts(first, "count"));
    he::EncryptedVector inv_n;
    try {
      inv_n = backend_.inv(count, *this);
    } catch (const Error& e) {
      if (e.code() != Errc::kDomainError || e.index() < 0) throw;
      throw Error(Errc::kDomainError, "global count of feature '" + feature_name(e.index()) +
                                          "' outside (0, inv_max_abs]",
                  e.index());
    }
    inv_n = backend_.cbootstrap(inv_n, collect(he::CollectiveOp::kBootstrap, pk_.epoch));
    ZScoreOutput out;
    out.mean = decrypt(backend_.mul(sum, inv_n));

    Payload sq = request(cmd::kZScoreSqDiff);
    sq.values = out.mean;
    auto second = exchange(MsgKind::kGlobalParams, sq);
    const auto sqdiff = backend_.sum(collect_cts(second, "sqdiff"));
    out.variance = decrypt(backend_.mul(sqdiff, inv_n));
    return out;
  }

  MinMaxOutput run_minmax(std::span<const double> v_abs) {
    if (v_abs.size() != features()) {
      throw Error(Errc::kShapeMismatch, "v_abs has " + std::to_string(v_abs.size()) + " entries for " +
                                            std::to_string(features()) + " features");
    }
    std::vector<double> scale(v_abs.size()), unscale(v_abs.begin(), v_abs.end());
    for (std::size_t j = 0; j < v_abs.size(); ++j) {
      if (!(v_abs[j] > 0.0) || !std::isfinite(v_abs[j])) {
        throw Error(Errc::kValidation, "v_abs must be positive and finite", static_cast<std::ptrdiff_t>(j));
      }
      scale[j] = 1.0 / v_abs[j];
    }
    Payload req = request(cmd::kExtremes);
    req.args = {{"v_abs", unscale}};
    auto replies = exchange(MsgKind::kControl, req);

    he::EncryptedVector lo, hi;
    try {
      for (std::size_t i = 0; i < replies.size(); ++i) {
        const auto pmin = backend_.mul_plain(replies[i].payload.ciphertexts.at("min"), scale);
        const auto pmax = backend_.mul_plain(replies[i].payload.ciphertexts.at("max"), scale);
        if (i == 0) {
          lo = pmin;
          hi = pmax;
          continue;
        }
        lo = backend_.min_ct(lo, pmin, *this);
        lo = backend_.cbootstrap(lo, collect(he::CollectiveOp::kBootstrap, pk_.epoch));
        hi = backend_.max_ct(hi, pmax, *this);
        hi = backend_.cbootstrap(hi, collect(he::CollectiveOp::kBootstrap, pk_.epoch));
      }
    } catch (const Error& e) {
      if (e.code() != Errc::kDomainError || e.index() < 0) throw;
      throw Error(Errc::kVAbsTooSmall, "v_abs for feature '" + feature_name(e.index()) +
                                           "' is below its observed magnitude",
                  e.index());
    }
    MinMaxOutput out;
    out.min = decrypt(backend_.mul_plain(lo, unscale));
    out.max = decrypt(backend_.mul_plain(hi, unscale));
    return out;
  }

  /// Global per-feature counts n_g.
  std::vector<std::size_t> run_counts() {
    auto replies = exchange(MsgKind::kControl, request(cmd::kCounts));
    const auto n = decrypt(backend_.sum(collect_cts(replies, "count")));
    std::vector<std::size_t> out(n.size());
    for (std::size_t j = 0; j < n.size(); ++j) out[j] = static_cast<std::size_t>(std::max(0LL, std::llround(n[j])));
    return out;
  }

  KthOutput run_kth(const KthQuery& query) {
    if (query.lo.size() != features()) throw Error(Errc::kShapeMismatch, "k-th query width mismatch");
    KthSearchState state(query);
    KthOutput out;
    for (std::size_t j = 0; j < features(); ++j) out.search_range = std::max(out.search_range, query.hi[j] - query.lo[j]);
    while (!state.finished()) {
      state.choose_midpoints();
      Payload req = request(cmd::kKthCounts);
      req.values = state.mid;
      auto replies = exchange(MsgKind::kMidpoints, req);
      backend_.ledger().plaintext_msgs += ids_.size();
      const auto less = decrypt(backend_.sum(collect_cts(replies, "less")));
      const auto greater = decrypt(backend_.sum(collect_cts(replies, "greater")));
      state.update(less, greater);
      ++out.iterations;
      ++backend_.ledger().kth_iterations;
    }
    out.value = state.result;
    return out;
  }

  RobustOutput run_robust(std::span<const double> v_abs, double epsilon) {
    RobustOutput out;
    out.n = run_counts();
    const auto mm = run_minmax(v_abs);
    out.min = mm.min;
    out.max = mm.max;
    constexpr std::array<int, 3> kQuantiles{25, 50, 75};
    std::array<std::vector<double>*, 3> targets{&out.q1, &out.median, &out.q3};
    for (std::size_t qi = 0; qi < kQuantiles.size(); ++qi) {
      KthQuery q;
      q.lo = out.min;
      q.hi = out.max;
      q.n = out.n;
      q.epsilon = epsilon;
      for (std::size_t j = 0; j < features(); ++j) {
        if (out.n[j] == 0) {
          throw Error(Errc::kEmptyFeature, "feature '" + names_[j] + "' has no values", static_cast<std::ptrdiff_t>(j));
        }
        const auto idx = percentile_index(out.n[j], kQuantiles[qi]);
        q.k.push_back(idx.k);
        q.exact.push_back(idx.exact);
        q.hi[j] = std::max(q.hi[j], q.lo[j]);
      }
      auto res = run_kth(q);
      *targets[qi] = std::move(res.value);
      out.iterations[qi] = res.iterations;
      out.search_range = std::max(out.search_range, res.search_range);
    }
    return out;
  }

  /// Sends the global parameters; every party normalizes its own table.
  void apply(const NormalizationParams& params) {
    Payload p = request(cmd::kApply);
    p.args = to_json(params, names_);
    notify(MsgKind::kGlobalParams, p);
  }

  /// Sum of every node's ledger.
  CostLedger merged_ledger() {
    CostLedger total = backend_.ledger();
    for (const auto& m : exchange(MsgKind::kControl, request(cmd::kReport))) {
      total += m.payload.args.at("ledger").get<CostLedger>();
    }
    return total;
  }

  void shutdown() { notify(MsgKind::kControl, request(cmd::kShutdown)); }

  // ShareSource: one share-collection round.
  std::vector<he::KeyShare> collect(he::CollectiveOp op, std::uint64_t epoch) override {
    Payload p = request(cmd::kShare);
    p.args = {{"op", op == he::CollectiveOp::kBootstrap ? "bootstrap" : "decrypt"}, {"epoch", epoch}};
    std::vector<he::KeyShare> shares;
    for (const auto& m : exchange(MsgKind::kControl, p)) {
      if (m.payload.share) shares.push_back(*m.payload.share);
    }
    return shares;
  }

 private:
  static Payload request(std::string_view command) {
    Payload p;
    p.command = std::string(command);
    return p;
  }

  std::string feature_name(std::ptrdiff_t j) const {
    return j >= 0 && static_cast<std::size_t>(j) < names_.size() ? names_[static_cast<std::size_t>(j)]
                                                                   : std::to_string(j);
  }

  std::vector<double> decrypt(const he::EncryptedVector& v) {
    return backend_.cdecrypt(v, collect(he::CollectiveOp::kDecrypt, pk_.epoch));
  }

  static std::vector<he::EncryptedVector> collect_cts(const std::vector<ProtocolMessage>& replies,
                                                      const std::string& name) {
    std::vector<he::EncryptedVector> out;
    for (const auto& m : replies) {
      const auto it = m.payload.ciphertexts.find(name);
      if (it == m.payload.ciphertexts.end()) {
        throw Error(Errc::kDecodeError, "party " + std::to_string(m.sender) + " sent no '" + name + "'");
      }
      out.push_back(it->second);
    }
    return out;
  }

  void notify(MsgKind kind, const Payload& payload) {
    ++round_;
    ProtocolMessage msg{session_, round_, transport::kAggregatorId, kind, payload};
    const auto bytes = endpoint_.broadcast(msg, ids_);
    if (!is_session_control(payload.command)) backend_.ledger().bytes_sent += bytes;
  }

  /// Broadcast, then wait for one reply per party (round barrier).
  std::vector<ProtocolMessage> exchange(MsgKind kind, const Payload& payload) {
    notify(kind, payload);
    auto replies = endpoint_.gather(round_, ids_);
    for (const auto& m : replies) {
      if (m.payload.command == cmd::kError) {
        throw Error(errc_from_name(m.payload.args.at("code").get<std::string>()),
                    "party " + std::to_string(m.sender) + ": " + m.payload.args.at("message").get<std::string>(),
                    m.payload.args.at("index").get<std::ptrdiff_t>());
      }
    }
    return replies;
  }

  transport::Endpoint& endpoint_;
  he::Backend backend_;
  std::uint64_t seed_;
  std::string session_;
  std::vector<int> ids_;
  std::vector<std::string> names_;
  he::PublicKey pk_;
  std::uint64_t round_ = 0;
  std::uint64_t key_counter_ = 0;
};

}  // namespace fednorm::protocols
