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
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fednorm/error.hpp"
#include "fednorm/he/ciphertext.hpp"
#include "json.hpp"

namespace fednorm::transport {

enum class MsgKind {
  kEncSums,
  kEncCounts,
  kEncExtremes,
  kMidpoints,
  kDecryptShare,
  kBootstrapShare,
  kGlobalParams,
  kControl,
};

NLOHMANN_JSON_SERIALIZE_ENUM(MsgKind, {
                                          {MsgKind::kEncSums, "EncSums"},
                                          {MsgKind::kEncCounts, "EncCounts"},
                                          {MsgKind::kEncExtremes, "EncExtremes"},
                                          {MsgKind::kMidpoints, "Midpoints"},
                                          {MsgKind::kDecryptShare, "DecryptShare"},
                                          {MsgKind::kBootstrapShare, "BootstrapShare"},
                                          {MsgKind::kGlobalParams, "GlobalParams"},
                                          {MsgKind::kControl, "Control"},
                                      })

inline constexpr int kAggregatorId = 0;

struct Payload {
  std::string command;
  nlohmann::json args = nlohmann::json::object();
  std::map<std::string, he::EncryptedVector> ciphertexts;
  std::vector<double> values;
  std::optional<he::KeyShare> share;

  friend bool operator==(const Payload&, const Payload&) = default;
};

struct ProtocolMessage {
  std::string session;
  std::uint64_t round = 0;
  int sender = kAggregatorId;
  MsgKind kind = MsgKind::kControl;
  Payload payload;

  /// Ciphertext chunks carried by this message.
  std::size_t ciphertext_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : payload.ciphertexts) n += v.chunks.size();
    return n;
  }

  friend bool operator==(const ProtocolMessage&, const ProtocolMessage&) = default;
};

inline void to_json(nlohmann::json& j, const Payload& p) {
  j = {{"command", p.command}, {"args", p.args}, {"ciphertexts", p.ciphertexts}, {"values", p.values}};
  j["share"] = p.share ? nlohmann::json(*p.share) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, Payload& p) {
  p.command = j.at("command").get<std::string>();
  p.args = j.at("args");
  p.ciphertexts = j.at("ciphertexts").get<std::map<std::string, he::EncryptedVector>>();
  p.values = j.at("values").get<std::vector<double>>();
  if (j.at("share").is_null()) {
    p.share.reset();
  } else {
    p.share = j.at("share").get<he::KeyShare>();
  }
}

inline void to_json(nlohmann::json& j, const ProtocolMessage& m) {
  j = {{"session", m.session}, {"round", m.round}, {"sender", m.sender}, {"kind", m.kind}, {"payload", m.payload}};
}

inline void from_json(const nlohmann::json& j, ProtocolMessage& m) {
  m.session = j.at("session").get<std::string>();
  m.round = j.at("round").get<std::uint64_t>();
  m.sender = j.at("sender").get<int>();
  m.kind = j.at("kind").get<MsgKind>();
  m.payload = j.at("payload").get<Payload>();
}

inline constexpr std::size_t kFrameHeaderBytes = 4;
inline constexpr std::size_t kMaxFrameBytes = std::size_t{64} << 20;

using Frame = std::vector<std::uint8_t>;

inline std::array<std::uint8_t, 4> encode_length(std::uint32_t n) {
  return {static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
          static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)};
}

inline std::uint32_t decode_length(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

/// 4-byte big-endian body length followed by the UTF-8 JSON body.
inline Frame encode_frame(const ProtocolMessage& msg) {
  const std::string body = nlohmann::json(msg).dump();
  if (body.size() > kMaxFrameBytes) {
    throw Error(Errc::kFrameTooLarge, std::to_string(body.size()) + " byte body exceeds 64 MiB");
  }
  Frame out(kFrameHeaderBytes + body.size());
  const auto len = encode_length(static_cast<std::uint32_t>(body.size()));
  std::copy(len.begin(), len.end(), out.begin());
  std::copy(body.begin(), body.end(), out.begin() + kFrameHeaderBytes);
  return out;
}

inline ProtocolMessage decode_body(std::string_view body) {
  try {
    return nlohmann::json::parse(body).get<ProtocolMessage>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kDecodeError, e.what());
  }
}

inline ProtocolMessage decode_frame(const Frame& frame) {
  if (frame.size() < kFrameHeaderBytes) throw Error(Errc::kDecodeError, "truncated frame header");
  const std::uint32_t len = decode_length(frame.data());
  if (len > kMaxFrameBytes) throw Error(Errc::kFrameTooLarge, std::to_string(len) + " byte body exceeds 64 MiB");
  if (frame.size() - kFrameHeaderBytes != len) {
    throw Error(Errc::kDecodeError, "length prefix " + std::to_string(len) + " but body has " +
                                        std::to_string(frame.size() - kFrameHeaderBytes) + " bytes");
  }
  return decode_body(std::string_view(reinterpret_cast<const char*>(frame.data()) + kFrameHeaderBytes, len));
}

/// Exact encoded frame size.
inline std::size_t byte_count(const ProtocolMessage& msg) { return encode_frame(msg).size(); }

}  // namespace fednorm::transport
