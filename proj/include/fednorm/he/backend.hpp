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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fednorm/error.hpp"
#include "fednorm/he/approx.hpp"
#include "fednorm/he/ciphertext.hpp"
#include "fednorm/he/ledger.hpp"
#include "fednorm/he/params.hpp"

namespace fednorm::he {

enum class CollectiveOp { kDecrypt, kBootstrap };

/// Supplies the key shares of every party for one collective operation.
/// Inside a protocol session this runs a share-collection round over the
/// transport.
class ShareSource {
 public:
  virtual ~ShareSource() = default;
  virtual std::vector<KeyShare> collect(CollectiveOp op, std::uint64_t epoch) = 0;
};

/// Share source backed by locally held key material (tests and tools).
class LocalShares final : public ShareSource {
 public:
  explicit LocalShares(std::vector<KeyShare> shares) : shares_(std::move(shares)) {}
  std::vector<KeyShare> collect(CollectiveOp, std::uint64_t) override { return shares_; }

 private:
  std::vector<KeyShare> shares_;
};

/// Behavioural stand-in for a multiparty CKKS evaluator.
///
/// The plaintext kind computes every operation exactly; the simulated kind
/// perturbs slots by bounded relative errors drawn from a seeded generator,
/// so runs are reproducible. Both enforce the same level, epoch and
/// collective-share discipline.
class Backend {
 public:
  Backend(BackendKind kind, BackendParams params, std::uint64_t seed)
      : kind_(kind), params_(params), seed_(seed), rng_(splitmix64(seed)), sign_(params.cmp_degree) {
    params_.validate();
  }

  BackendKind kind() const noexcept { return kind_; }
  const BackendParams& params() const noexcept { return params_; }
  CostLedger& ledger() noexcept { return ledger_; }
  const CostLedger& ledger() const noexcept { return ledger_; }

  // ---- keys ---------------------------------------------------------------

  /// Fresh key epoch with one share per party; the public part is
  /// registered so collective operations can check shares against it.
  KeyMaterial keygen(int parties) {
    if (parties < 1) throw Error(Errc::kValidation, "keygen needs at least one party");
    KeyMaterial km;
    km.epoch = mix(seed_, ++epoch_counter_);
    std::vector<std::uint64_t> publics;
    for (int p = 1; p <= parties; ++p) {
      const auto token = derive_share_token(seed_, km.epoch, p);
      km.party_shares.push_back({p, km.epoch, token});
      publics.push_back(public_part(token));
    }
    km.collective_public = make_public_key(km.epoch, std::move(publics));
    install_key(km.collective_public);
    return km;
  }

  void install_key(const PublicKey& pk) { keys_[pk.epoch] = pk; }

  // ---- encryption -----------------------------------------------------------

  Ciphertext encrypt(std::span<const double> values, const PublicKey& pk) {
    if (values.size() > params_.slot_count) {
      throw Error(Errc::kTooManySlots, std::to_string(values.size()) + " values exceed " +
                                           std::to_string(params_.slot_count) + " slots");
    }
    Ciphertext ct{std::vector<double>(values.begin(), values.end()), params_.max_level, 0.0, pk.epoch};
    perturb(ct, params_.encode_noise_rel);
    ++ledger_.encrypts;
    return ct;
  }

  EncryptedVector encrypt_vector(std::span<const double> values, const PublicKey& pk) {
    EncryptedVector out;
    for (std::size_t start = 0; start < values.size() || out.chunks.empty(); start += params_.slot_count) {
      const std::size_t len = std::min(params_.slot_count, values.size() - start);
      out.chunks.push_back(encrypt(values.subspan(start, len), pk));
      if (values.empty()) break;
    }
    return out;
  }

  // ---- arithmetic -----------------------------------------------------------

  Ciphertext add(const Ciphertext& a, const Ciphertext& b) {
    ++ledger_.adds;
    return raw_add(a, b, 1.0);
  }

  Ciphertext sub(const Ciphertext& a, const Ciphertext& b) {
    ++ledger_.adds;
    return raw_add(a, b, -1.0);
  }

  Ciphertext sum(std::span<const Ciphertext> cts) {
    if (cts.empty()) throw Error(Errc::kShapeMismatch, "sum of no ciphertexts");
    Ciphertext acc = cts.front();
    for (std::size_t i = 1; i < cts.size(); ++i) acc = add(acc, cts[i]);
    return acc;
  }

  Ciphertext add_plain(const Ciphertext& a, std::span<const double> b) {
    check_plain_shape(a, b);
    Ciphertext out = a;
    for (std::size_t i = 0; i < out.slots.size(); ++i) out.slots[i] += b[i];
    ++ledger_.adds;
    return out;
  }

  Ciphertext mul(const Ciphertext& a, const Ciphertext& b) {
    ++ledger_.muls;
    return raw_mul(a, b);
  }

  Ciphertext mul_plain(const Ciphertext& a, std::span<const double> b) {
    ++ledger_.muls;
    return raw_mul_plain(a, b);
  }

  /// Slot-wise reciprocal by Goldschmidt / Newton iteration
  /// x <- x (2 - a x) from x0 = 1 / inv_max_abs. Each iteration spends two
  /// levels; the working ciphertext is collectively refreshed whenever it
  /// runs low.
  Ciphertext inv(const Ciphertext& a, ShareSource& shares) {
    const double bound = params_.inv_max_abs;
    std::vector<double> sign(a.size(), 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double v = a.slots[i];
      if (v == 0.0 || !(std::abs(v) <= bound)) {
        throw Error(Errc::kDomainError, "inverse input " + std::to_string(v) + " outside (0, " +
                                            std::to_string(bound) + "]",
                    static_cast<std::ptrdiff_t>(i));
      }
      if (v < 0.0) sign[i] = -1.0;
    }
    ++ledger_.invs;

    Ciphertext divisor = a;
    for (std::size_t i = 0; i < divisor.size(); ++i) divisor.slots[i] *= sign[i];
    if (divisor.level < 2) divisor = internal_bootstrap(divisor, shares, ledger_.inv_bootstraps);

    Ciphertext x{std::vector<double>(a.size(), 1.0 / bound), divisor.level, 0.0, a.epoch};
    const std::vector<double> two(a.size(), 2.0);
    for (int it = 0; it < params_.inv_iterations; ++it) {
      if (x.level < 2) x = internal_bootstrap(x, shares, ledger_.inv_bootstraps);
      Ciphertext ax = raw_mul(divisor, x);
      for (std::size_t i = 0; i < ax.size(); ++i) ax.slots[i] = two[i] - ax.slots[i];
      x = raw_mul(x, ax);
    }
    for (std::size_t i = 0; i < x.size(); ++i) x.slots[i] *= sign[i];
    x.noise = a.noise + 2.0 * rel_bound(params_.mul_noise_rel);
    return x;
  }

  Ciphertext min_ct(const Ciphertext& a, const Ciphertext& b, ShareSource& shares) {
    return compare(a, b, shares, /*take_min=*/true);
  }

  Ciphertext max_ct(const Ciphertext& a, const Ciphertext& b, ShareSource& shares) {
    return compare(a, b, shares, /*take_min=*/false);
  }

  // ---- collective operations -----------------------------------------------

  Ciphertext cbootstrap(const Ciphertext& a, std::span<const KeyShare> shares) {
    Ciphertext out = refresh(a, shares);
    ++ledger_.bootstraps;
    return out;
  }

  std::vector<double> cdecrypt(const Ciphertext& a, std::span<const KeyShare> shares) {
    verify_shares(a.epoch, shares);
    ++ledger_.cdecrypts;
    return a.slots;
  }

  // ---- chunked vectors --------------------------------------------------------

  EncryptedVector add(const EncryptedVector& a, const EncryptedVector& b) {
    return zip(a, b, [&](const Ciphertext& x, const Ciphertext& y) { return add(x, y); });
  }

  EncryptedVector sum(std::span<const EncryptedVector> vs) {
    if (vs.empty()) throw Error(Errc::kShapeMismatch, "sum of no vectors");
    EncryptedVector acc = vs.front();
    for (std::size_t i = 1; i < vs.size(); ++i) acc = add(acc, vs[i]);
    return acc;
  }

  EncryptedVector mul(const EncryptedVector& a, const EncryptedVector& b) {
    return zip(a, b, [&](const Ciphertext& x, const Ciphertext& y) { return mul(x, y); });
  }

  EncryptedVector mul_plain(const EncryptedVector& a, std::span<const double> b) {
    if (b.size() != a.size()) throw Error(Errc::kShapeMismatch, "plaintext operand length mismatch");
    EncryptedVector out;
    std::size_t offset = 0;
    for (const auto& c : a.chunks) {
      out.chunks.push_back(mul_plain(c, b.subspan(offset, c.size())));
      offset += c.size();
    }
    return out;
  }

  EncryptedVector inv(const EncryptedVector& a, ShareSource& shares) {
    EncryptedVector out;
    std::size_t offset = 0;
    for (const auto& c : a.chunks) {
      try {
        out.chunks.push_back(inv(c, shares));
      } catch (const Error& e) {
        if (e.code() != Errc::kDomainError || e.index() < 0) throw;
        throw Error(Errc::kDomainError, e.detail(), static_cast<std::ptrdiff_t>(offset) + e.index());
      }
      offset += c.size();
    }
    return out;
  }

  EncryptedVector min_ct(const EncryptedVector& a, const EncryptedVector& b, ShareSource& shares) {
    return zip_indexed(a, b, [&](const Ciphertext& x, const Ciphertext& y) { return min_ct(x, y, shares); });
  }

  EncryptedVector max_ct(const EncryptedVector& a, const EncryptedVector& b, ShareSource& shares) {
    return zip_indexed(a, b, [&](const Ciphertext& x, const Ciphertext& y) { return max_ct(x, y, shares); });
  }

  EncryptedVector cbootstrap(const EncryptedVector& a, std::span<const KeyShare> shares) {
    EncryptedVector out;
    for (const auto& c : a.chunks) out.chunks.push_back(cbootstrap(c, shares));
    return out;
  }

  std::vector<double> cdecrypt(const EncryptedVector& a, std::span<const KeyShare> shares) {
    std::vector<double> out;
    for (const auto& c : a.chunks) {
      auto part = cdecrypt(c, shares);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }

  /// Throws MissingSharesError unless every party of the epoch presented a
  /// valid share.
  void verify_shares(std::uint64_t epoch, std::span<const KeyShare> shares) const {
    const auto it = keys_.find(epoch);
    if (it == keys_.end()) throw Error(Errc::kEpochMismatch, "no collective key for epoch");
    const PublicKey& pk = it->second;
    std::vector<int> absent;
    for (int p = 1; p <= pk.parties(); ++p) {
      const bool ok = std::any_of(shares.begin(), shares.end(), [&](const KeyShare& s) {
        return s.party == p && s.epoch == epoch &&
               public_part(s.token) == pk.party_publics[static_cast<std::size_t>(p - 1)];
      });
      if (!ok) absent.push_back(p);
    }
    if (!absent.empty()) throw MissingSharesError(std::move(absent));
  }

 private:
  double rel_bound(double rel) const noexcept { return kind_ == BackendKind::kSimulated ? rel : 0.0; }

  void perturb(Ciphertext& ct, double rel) {
    const double bound = rel_bound(rel);
    if (bound == 0.0) return;
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : ct.slots) v *= 1.0 + u(rng_);
    ct.noise += bound;
  }

  static void check_pair(const Ciphertext& a, const Ciphertext& b) {
    if (a.epoch != b.epoch) throw Error(Errc::kEpochMismatch, "ciphertexts under different keys");
    if (a.size() != b.size()) {
      throw Error(Errc::kShapeMismatch,
                  "slot lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
  }

  static void check_plain_shape(const Ciphertext& a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(Errc::kShapeMismatch, "plaintext operand length mismatch");
  }

  static void check_level(const Ciphertext& a) {
    if (a.level < 1) throw Error(Errc::kLevelExhausted, "multiplication at level 0; bootstrap first");
  }

  Ciphertext raw_add(const Ciphertext& a, const Ciphertext& b, double sign) const {
    check_pair(a, b);
    Ciphertext out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.slots[i] += sign * b.slots[i];
    out.level = std::min(a.level, b.level);
    out.noise = a.noise + b.noise;
    return out;
  }

  Ciphertext raw_mul(const Ciphertext& a, const Ciphertext& b) {
    check_pair(a, b);
    check_level(a);
    check_level(b);
    Ciphertext out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.slots[i] *= b.slots[i];
    out.level = std::min(a.level, b.level) - 1;
    out.noise = a.noise + b.noise;
    perturb(out, params_.mul_noise_rel);
    return out;
  }

  Ciphertext raw_mul_plain(const Ciphertext& a, std::span<const double> b) {
    check_plain_shape(a, b);
    check_level(a);
    Ciphertext out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.slots[i] *= b[i];
    out.level = a.level - 1;
    perturb(out, params_.mul_noise_rel);
    return out;
  }

  Ciphertext refresh(const Ciphertext& a, std::span<const KeyShare> shares) {
    verify_shares(a.epoch, shares);
    Ciphertext out = a;
    out.level = params_.max_level;
    perturb(out, params_.bootstrap_noise_rel);
    return out;
  }

  Ciphertext internal_bootstrap(const Ciphertext& a, ShareSource& source, std::uint64_t& counter) {
    const auto shares = source.collect(CollectiveOp::kBootstrap, a.epoch);
    Ciphertext out = refresh(a, shares);
    ++counter;
    return out;
  }

  /// min/max = (a+b)/2 -+ |a-b|/2, with |d| ~ d * s(d) for the composite
  /// sign approximant s. Inputs must lie in [-1, 1].
  Ciphertext compare(const Ciphertext& a, const Ciphertext& b, ShareSource& shares, bool take_min) {
    check_pair(a, b);
    constexpr double kSlack = 1e-6;
    for (const Ciphertext* c : {&a, &b}) {
      for (std::size_t i = 0; i < c->size(); ++i) {
        if (!(std::abs(c->slots[i]) <= 1.0 + kSlack)) {
          throw Error(Errc::kDomainError, "comparison input " + std::to_string(c->slots[i]) +
                                              " outside [-1, 1]",
                      static_cast<std::ptrdiff_t>(i));
        }
      }
    }
    ++ledger_.min_max_ops;

    Ciphertext lhs = a.level < 2 ? internal_bootstrap(a, shares, ledger_.mm_bootstraps) : a;
    Ciphertext rhs = b.level < 2 ? internal_bootstrap(b, shares, ledger_.mm_bootstraps) : b;
    const std::vector<double> half(a.size(), 0.5);
    const Ciphertext mid = raw_mul_plain(raw_add(lhs, rhs, 1.0), half);
    const Ciphertext diff = raw_mul_plain(raw_add(lhs, rhs, -1.0), half);

    const int depth = params_.cmp_stage_depth();
    Ciphertext s = diff;
    for (int stage = 0; stage < params_.cmp_stages; ++stage) {
      if (s.level < depth) s = internal_bootstrap(s, shares, ledger_.mm_bootstraps);
      for (auto& v : s.slots) v = sign_(v);
      s.level -= depth;
      for (int d = 0; d < depth; ++d) perturb(s, params_.mul_noise_rel);
    }
    if (s.level < 1) s = internal_bootstrap(s, shares, ledger_.mm_bootstraps);
    const Ciphertext magnitude = raw_mul(diff, s);
    return raw_add(mid, magnitude, take_min ? -1.0 : 1.0);
  }

  template <class Op>
  EncryptedVector zip(const EncryptedVector& a, const EncryptedVector& b, Op op) {
    if (a.chunks.size() != b.chunks.size()) throw Error(Errc::kShapeMismatch, "chunk counts differ");
    EncryptedVector out;
    for (std::size_t i = 0; i < a.chunks.size(); ++i) out.chunks.push_back(op(a.chunks[i], b.chunks[i]));
    return out;
  }

  /// As zip, but domain errors report the logical (cross-chunk) slot index.
  template <class Op>
  EncryptedVector zip_indexed(const EncryptedVector& a, const EncryptedVector& b, Op op) {
    if (a.chunks.size() != b.chunks.size()) throw Error(Errc::kShapeMismatch, "chunk counts differ");
    EncryptedVector out;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < a.chunks.size(); ++i) {
      try {
        out.chunks.push_back(op(a.chunks[i], b.chunks[i]));
      } catch (const Error& e) {
        if (e.code() != Errc::kDomainError || e.index() < 0) throw;
        throw Error(Errc::kDomainError, e.detail(), static_cast<std::ptrdiff_t>(offset) + e.index());
      }
      offset += a.chunks[i].size();
    }
    return out;
  }

  BackendKind kind_;
  BackendParams params_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  SignPolynomial sign_;
  CostLedger ledger_;
  std::map<std::uint64_t, PublicKey> keys_;
  std::uint64_t epoch_counter_ = 0;
};

}  // namespace fednorm::he
