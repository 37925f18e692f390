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
#include <vector>

#include "json.hpp"

namespace fednorm::he {

/// Simulated packed ciphertext. The slots hold the (noisy) plaintext the
/// ciphertext stands in for; nothing here is cryptographically hidden.
struct Ciphertext {
  std::vector<double> slots;
  int level = 0;
  double noise = 0.0;  // accumulated relative-error estimate
  std::uint64_t epoch = 0;

  std::size_t size() const noexcept { return slots.size(); }

  friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

/// A logical vector longer than one ciphertext is carried as consecutive
/// chunks of at most slot_count slots.
struct EncryptedVector {
  std::vector<Ciphertext> chunks;

  std::size_t size() const noexcept {
    std::size_t n = 0;
    for (const auto& c : chunks) n += c.size();
    return n;
  }

  friend bool operator==(const EncryptedVector&, const EncryptedVector&) = default;
};

struct KeyShare {
  int party = 0;  // 1-based
  std::uint64_t epoch = 0;
  std::uint64_t token = 0;

  friend bool operator==(const KeyShare&, const KeyShare&) = default;
};

struct PublicKey {
  std::uint64_t epoch = 0;
  std::uint64_t token = 0;
  std::vector<std::uint64_t> party_publics;  // index p-1 holds party p's public part

  int parties() const noexcept { return static_cast<int>(party_publics.size()); }

  friend bool operator==(const PublicKey&, const PublicKey&) = default;
};

struct KeyMaterial {
  std::vector<KeyShare> party_shares;
  PublicKey collective_public;
  std::uint64_t epoch = 0;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

/// Secret share token of `party` for key epoch `epoch`.
inline constexpr std::uint64_t derive_share_token(std::uint64_t seed, std::uint64_t epoch, int party) noexcept {
  return mix(mix(seed, epoch), static_cast<std::uint64_t>(party));
}

inline constexpr std::uint64_t public_part(std::uint64_t token) noexcept {
  return splitmix64(token ^ 0xD1B54A32D192ED03ULL);
}

inline PublicKey make_public_key(std::uint64_t epoch, std::vector<std::uint64_t> publics) {
  PublicKey pk;
  pk.epoch = epoch;
  pk.token = epoch;
  for (auto p : publics) pk.token = mix(pk.token, p);
  pk.party_publics = std::move(publics);
  return pk;
}

inline void to_json(nlohmann::json& j, const Ciphertext& c) {
  j = {{"slots", c.slots}, {"level", c.level}, {"noise", c.noise}, {"epoch", c.epoch}};
}
inline void from_json(const nlohmann::json& j, Ciphertext& c) {
  c.slots = j.at("slots").get<std::vector<double>>();
  c.level = j.at("level").get<int>();
  c.noise = j.at("noise").get<double>();
  c.epoch = j.at("epoch").get<std::uint64_t>();
}
inline void to_json(nlohmann::json& j, const EncryptedVector& v) { j = v.chunks; }
inline void from_json(const nlohmann::json& j, EncryptedVector& v) {
  v.chunks = j.get<std::vector<Ciphertext>>();
}
inline void to_json(nlohmann::json& j, const KeyShare& s) {
  j = {{"party", s.party}, {"epoch", s.epoch}, {"token", s.token}};
}
inline void from_json(const nlohmann::json& j, KeyShare& s) {
  s.party = j.at("party").get<int>();
  s.epoch = j.at("epoch").get<std::uint64_t>();
  s.token = j.at("token").get<std::uint64_t>();
}
inline void to_json(nlohmann::json& j, const PublicKey& pk) {
  j = {{"epoch", pk.epoch}, {"token", pk.token}, {"party_publics", pk.party_publics}};
}
inline void from_json(const nlohmann::json& j, PublicKey& pk) {
  pk.epoch = j.at("epoch").get<std::uint64_t>();
  pk.token = j.at("token").get<std::uint64_t>();
  pk.party_publics = j.at("party_publics").get<std::vector<std::uint64_t>>();
}

}  // namespace fednorm::he
