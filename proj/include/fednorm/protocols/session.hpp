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
#include <chrono>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fednorm/core/feature_table.hpp"
#include "fednorm/core/normalize.hpp"
#include "fednorm/core/stats.hpp"
#include "fednorm/error.hpp"
#include "fednorm/he/ciphertext.hpp"
#include "fednorm/he/params.hpp"
#include "fednorm/protocols/aggregator.hpp"
#include "fednorm/protocols/party.hpp"
#include "fednorm/transport/channel.hpp"
#include "fednorm/transport/tcp.hpp"
#include "json.hpp"

namespace fednorm::protocols {

enum class ProtocolKind { kZScore, kMinMax, kRobust, kKth };

inline std::string_view to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::kZScore: return "zscore";
    case ProtocolKind::kMinMax: return "minmax";
    case ProtocolKind::kRobust: return "robust";
    case ProtocolKind::kKth: return "kth";
  }
  return "?";
}

inline ProtocolKind parse_protocol_kind(std::string_view s) {
  if (s == "zscore") return ProtocolKind::kZScore;
  if (s == "minmax") return ProtocolKind::kMinMax;
  if (s == "robust") return ProtocolKind::kRobust;
  if (s == "kth") return ProtocolKind::kKth;
  throw Error(Errc::kValidation, "unknown protocol '" + std::string(s) + "'");
}

inline ProtocolKind protocol_for(NormKind k) {
  switch (k) {
    case NormKind::kZScore: return ProtocolKind::kZScore;
    case NormKind::kMinMax: return ProtocolKind::kMinMax;
    case NormKind::kRobust: return ProtocolKind::kRobust;
  }
  return ProtocolKind::kZScore;
}

enum class TransportKind { kInProcess, kTcp };

inline std::string_view to_string(TransportKind k) { return k == TransportKind::kTcp ? "tcp" : "inproc"; }

inline TransportKind parse_transport_kind(std::string_view s) {
  if (s == "inproc") return TransportKind::kInProcess;
  if (s == "tcp") return TransportKind::kTcp;
  throw Error(Errc::kValidation, "unknown transport '" + std::string(s) + "'");
}

/// Standalone k-th element query: either a percentile or an explicit rank.
struct KthRequest {
  std::optional<int> q;
  std::optional<std::size_t> k;
  bool between = false;  // explicit rank interpolates towards k+1
  std::optional<std::vector<double>> lo;
  std::optional<std::vector<double>> hi;
};

struct SessionConfig {
  ProtocolKind protocol = ProtocolKind::kZScore;
  int parties = 0;
  double epsilon = 1e-4;
  std::vector<double> v_abs;  // one entry, or one per feature
  he::BackendKind backend = he::BackendKind::kSimulated;
  he::BackendParams backend_params;
  TransportKind transport = TransportKind::kInProcess;
  std::string listen = "127.0.0.1:0";
  std::uint64_t seed = 0;
  KthRequest kth;
  bool apply = false;  // parties normalize locally with the result
  std::vector<int> withhold_shares;
  std::optional<double> timeout_secs;
};

inline void from_json(const nlohmann::json& j, SessionConfig& c) {
  if (j.contains("protocol")) c.protocol = parse_protocol_kind(j.at("protocol").get<std::string>());
  if (j.contains("P")) c.parties = j.at("P").get<int>();
  if (j.contains("parties")) c.parties = j.at("parties").get<int>();
  if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
  if (j.contains("v_abs")) {
    const auto& v = j.at("v_abs");
    c.v_abs = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
  }
  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    if (b.is_string()) {
      c.backend = he::parse_backend_kind(b.get<std::string>());
    } else {
      if (b.contains("kind")) c.backend = he::parse_backend_kind(b.at("kind").get<std::string>());
      if (b.contains("params")) c.backend_params = b.at("params").get<he::BackendParams>();
    }
  }
  if (j.contains("backend_params")) c.backend_params = j.at("backend_params").get<he::BackendParams>();
  if (j.contains("transport")) {
    const auto& t = j.at("transport");
    if (t.is_string()) {
      c.transport = parse_transport_kind(t.get<std::string>());
    } else {
      if (t.contains("kind")) c.transport = parse_transport_kind(t.at("kind").get<std::string>());
      if (t.contains("listen")) c.listen = t.at("listen").get<std::string>();
      if (t.contains("timeout_secs")) c.timeout_secs = t.at("timeout_secs").get<double>();
    }
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("q")) c.kth.q = j.at("q").get<int>();
  if (j.contains("k")) c.kth.k = j.at("k").get<std::size_t>();
  if (j.contains("between")) c.kth.between = j.at("between").get<bool>();
  if (j.contains("lo")) c.kth.lo = j.at("lo").get<std::vector<double>>();
  if (j.contains("hi")) c.kth.hi = j.at("hi").get<std::vector<double>>();
}

/// Everything a session produced. `result` is the JSON report; its
/// `elapsed_seconds` field is the only non-deterministic entry.
struct SessionOutcome {
  nlohmann::json result;
  CostLedger ledger;
  std::vector<FeatureTable> normalized;  // filled when apply was requested
  std::optional<NormalizationParams> params;
};

inline std::string session_id(std::uint64_t seed) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::uint64_t h = he::mix(seed, 0x5E55);
  std::string s = "s";
  for (int i = 0; i < 16; ++i, h >>= 4) s.push_back(kHex[h & 0xF]);
  return s;
}

inline std::vector<double> expand_v_abs(const std::vector<double>& v, std::size_t features) {
  if (v.empty()) throw Error(Errc::kValidation, "v_abs is required for this protocol");
  if (v.size() == 1) return std::vector<double>(features, v.front());
  if (v.size() != features) {
    throw Error(Errc::kShapeMismatch, "v_abs has " + std::to_string(v.size()) + " entries for " +
                                          std::to_string(features) + " features");
  }
  return v;
}

/// Aggregator half of a session over an already connected endpoint.
/// Runs the configured protocol, optionally triggers local normalization,
/// gathers ledgers and shuts the parties down.
inline SessionOutcome drive_aggregator(transport::Endpoint& endpoint, const SessionConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  AggregatorNode agg(endpoint, cfg.parties, cfg.backend, cfg.backend_params, cfg.seed, session_id(cfg.seed));
  SessionOutcome out;
  nlohmann::json& r = out.result;
  try {
    agg.setup();
    const std::size_t f = agg.features();
    r["protocol"] = std::string(to_string(cfg.protocol));
    r["backend"] = std::string(he::to_string(cfg.backend));
    r["backend_params"] = cfg.backend_params;
    r["parties"] = cfg.parties;
    r["features"] = agg.names();
    r["chunks"] = agg.chunks();
    r["seed"] = cfg.seed;
    nlohmann::json params;
    switch (cfg.protocol) {
      case ProtocolKind::kZScore: {
        auto z = agg.run_zscore();
        out.params = ZScoreParams{z.mean, z.variance};
        params = {{"mean", z.mean}, {"variance", z.variance}};
        break;
      }
      case ProtocolKind::kMinMax: {
        const auto v_abs = expand_v_abs(cfg.v_abs, f);
        auto m = agg.run_minmax(v_abs);
        out.params = MinMaxParams{m.min, m.max};
        params = {{"min", m.min}, {"max", m.max}};
        r["v_abs"] = v_abs;
        break;
      }
      case ProtocolKind::kRobust: {
        const auto v_abs = expand_v_abs(cfg.v_abs, f);
        auto rb = agg.run_robust(v_abs, cfg.epsilon);
        out.params = RobustParams{rb.q1, rb.median, rb.q3};
        params = {{"q1", rb.q1}, {"median", rb.median}, {"q3", rb.q3},
                  {"min", rb.min}, {"max", rb.max}, {"n", rb.n}};
        r["epsilon"] = cfg.epsilon;
        r["v_abs"] = v_abs;
        r["iterations"] = {{"q1", rb.iterations[0]}, {"median", rb.iterations[1]}, {"q3", rb.iterations[2]}};
        r["search_range"] = rb.search_range;
        break;
      }
      case ProtocolKind::kKth: {
        const auto& req = cfg.kth;
        if (req.q.has_value() == req.k.has_value()) {
          throw Error(Errc::kValidation, "k-th query needs exactly one of q or k");
        }
        KthQuery q;
        q.epsilon = cfg.epsilon;
        q.n = agg.run_counts();
        if (req.lo && req.hi) {
          q.lo = expand_v_abs(*req.lo, f);
          q.hi = expand_v_abs(*req.hi, f);
        } else {
          auto m = agg.run_minmax(expand_v_abs(cfg.v_abs, f));
          q.lo = m.min;
          q.hi = m.max;
          r["v_abs"] = expand_v_abs(cfg.v_abs, f);
        }
        for (std::size_t j = 0; j < f; ++j) {
          if (req.q) {
            if (q.n[j] == 0) {
              throw Error(Errc::kEmptyFeature, "feature '" + agg.names()[j] + "' has no values",
                          static_cast<std::ptrdiff_t>(j));
            }
            const auto idx = percentile_index(q.n[j], *req.q);
            q.k.push_back(idx.k);
            q.exact.push_back(idx.exact);
          } else {
            q.k.push_back(*req.k);
            q.exact.push_back(!req.between);
          }
          q.hi[j] = std::max(q.hi[j], q.lo[j]);
        }
        auto res = agg.run_kth(q);
        params = {{"value", res.value}, {"k", q.k}, {"exact", q.exact}, {"n", q.n}};
        if (req.q) params["q"] = *req.q;
        r["epsilon"] = cfg.epsilon;
        r["iterations"] = res.iterations;
        r["search_range"] = res.search_range;
        break;
      }
    }
    r["params"] = params;
    if (cfg.apply) {
      if (!out.params) throw Error(Errc::kValidation, "k-th queries produce no normalization parameters");
      agg.apply(*out.params);
    }
    out.ledger = agg.merged_ledger();
    r["ledger"] = out.ledger;
    agg.shutdown();
  } catch (...) {
    try {
      agg.shutdown();
    } catch (...) {
    }
    throw;
  }
  r["elapsed_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Per-frame log of a session, for audits.
struct TrafficLog {
  std::shared_ptr<std::vector<transport::RecordingEndpoint::Record>> records =
      std::make_shared<std::vector<transport::RecordingEndpoint::Record>>();
  std::shared_ptr<std::mutex> mu = std::make_shared<std::mutex>();
};

namespace detail {

inline void apply_timeout(transport::Endpoint& ep, const SessionConfig& cfg) {
  if (cfg.timeout_secs) {
    ep.set_timeout(std::chrono::milliseconds(static_cast<std::int64_t>(*cfg.timeout_secs * 1000.0)));
  }
}

inline PartyOptions party_options(const SessionConfig& cfg, int id) {
  PartyOptions o;
  o.withhold_shares =
      std::find(cfg.withhold_shares.begin(), cfg.withhold_shares.end(), id) != cfg.withhold_shares.end();
  return o;
}

}  // namespace detail

/// Runs a full session inside this process: one thread per party, the
/// aggregator on the calling thread, over the configured transport.
inline SessionOutcome run_session(const SessionConfig& config, std::span<const FeatureTable> tables,
                                  TrafficLog* log = nullptr) {
  SessionConfig cfg = config;
  if (cfg.parties == 0) cfg.parties = static_cast<int>(tables.size());
  if (cfg.parties < 1 || static_cast<std::size_t>(cfg.parties) != tables.size()) {
    throw Error(Errc::kValidation, "need one table per party");
  }
  cfg.backend_params.validate();
  const int p_count = cfg.parties;

  std::vector<std::unique_ptr<PartyNode>> nodes(static_cast<std::size_t>(p_count));
  std::vector<std::exception_ptr> party_errors(static_cast<std::size_t>(p_count));
  std::vector<std::thread> threads;
  SessionOutcome out;

  auto wrap = [&](transport::Endpoint& inner) -> std::unique_ptr<transport::Endpoint> {
    if (!log) return nullptr;
    return std::make_unique<transport::RecordingEndpoint>(inner, log->records, log->mu);
  };

  auto party_main = [&](int id, transport::Endpoint& ep) {
    const auto i = static_cast<std::size_t>(id - 1);
    try {
      nodes[i] = std::make_unique<PartyNode>(id, tables[i], ep, cfg.backend, cfg.backend_params, cfg.seed,
                                             detail::party_options(cfg, id));
      nodes[i]->serve();
    } catch (...) {
      party_errors[i] = std::current_exception();
    }
  };

  auto join_all = [&] {
    for (auto& t : threads) {
      if (t.joinable()) t.join();
    }
  };

  std::exception_ptr agg_error;
  if (cfg.transport == TransportKind::kInProcess) {
    transport::InProcessHub hub(p_count);
    std::vector<std::unique_ptr<transport::Endpoint>> ports, wrapped;
    for (int id = 0; id <= p_count; ++id) {
      ports.push_back(hub.endpoint(id));
      detail::apply_timeout(*ports.back(), cfg);
      wrapped.push_back(wrap(*ports.back()));
    }
    auto ep = [&](int id) -> transport::Endpoint& {
      const auto i = static_cast<std::size_t>(id);
      return wrapped[i] ? *wrapped[i] : *ports[i];
    };
    for (int id = 1; id <= p_count; ++id) threads.emplace_back(party_main, id, std::ref(ep(id)));
    try {
      out = drive_aggregator(ep(0), cfg);
    } catch (...) {
      agg_error = std::current_exception();
      hub.close_all("session aborted");
    }
    join_all();
  } else {
    auto agg_ep = std::make_unique<transport::TcpAggregatorEndpoint>(transport::parse_host_port(cfg.listen), p_count);
    detail::apply_timeout(*agg_ep, cfg);
    const transport::HostPort target{"127.0.0.1", agg_ep->port()};
    for (int id = 1; id <= p_count; ++id) {
      threads.emplace_back([&, id] {
        const auto i = static_cast<std::size_t>(id - 1);
        try {
          transport::TcpPartyEndpoint tcp(target, id);
          detail::apply_timeout(tcp, cfg);
          auto w = wrap(tcp);
          party_main(id, w ? *w : static_cast<transport::Endpoint&>(tcp));
        } catch (...) {
          party_errors[i] = std::current_exception();
        }
      });
    }
    try {
      agg_ep->accept_parties();
      auto w = wrap(*agg_ep);
      out = drive_aggregator(w ? *w : static_cast<transport::Endpoint&>(*agg_ep), cfg);
    } catch (...) {
      agg_error = std::current_exception();
    }
    if (agg_error) agg_ep.reset();  // closes sockets so blocked parties wake up
    join_all();
  }

  if (agg_error) std::rethrow_exception(agg_error);
  for (auto& e : party_errors) {
    if (e) std::rethrow_exception(e);
  }
  if (cfg.apply) {
    for (auto& n : nodes) out.normalized.push_back(*n->normalized());
  }
  return out;
}

/// Aggregator of a multi-process session: listens on cfg.listen and waits
/// for cfg.parties remote parties.
inline SessionOutcome serve_aggregator_tcp(const SessionConfig& cfg) {
  transport::TcpAggregatorEndpoint ep(transport::parse_host_port(cfg.listen), cfg.parties);
  detail::apply_timeout(ep, cfg);
  ep.accept_parties();
  return drive_aggregator(ep, cfg);
}

/// Remote party: connects, serves until shutdown, returns its normalized
/// table if parameters were applied.
inline std::optional<FeatureTable> serve_party_tcp(const SessionConfig& cfg, const std::string& connect, int id,
                                                   FeatureTable table) {
  transport::TcpPartyEndpoint ep(transport::parse_host_port(connect), id);
  detail::apply_timeout(ep, cfg);
  PartyNode node(id, std::move(table), ep, cfg.backend, cfg.backend_params, cfg.seed, detail::party_options(cfg, id));
  node.serve();
  return node.normalized();
}

/// Runs the PPF protocol for `kind` and has every party normalize its own
/// table with the decrypted global parameters.
inline std::vector<FeatureTable> normalize_federated(std::span<const FeatureTable> tables, NormKind kind,
                                                     SessionConfig options) {
  options.protocol = protocol_for(kind);
  options.apply = true;
  return run_session(options, tables).normalized;
}

}  // namespace fednorm::protocols
