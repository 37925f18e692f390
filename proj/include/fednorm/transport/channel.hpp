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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "fednorm/error.hpp"
#include "fednorm/transport/inbox.hpp"
#include "fednorm/transport/message.hpp"

namespace fednorm::transport {

/// A node's view of the network: outbound sends plus its own inbox.
class Endpoint {
 public:
  virtual ~Endpoint() = default;

  virtual int id() const = 0;

  /// Delivers `msg` to node `to`; returns the encoded frame size.
  virtual std::size_t send(int to, const ProtocolMessage& msg) = 0;

  virtual Inbox& inbox() = 0;

  std::size_t broadcast(const ProtocolMessage& msg, std::span<const int> recipients) {
    std::size_t bytes = 0;
    for (int r : recipients) bytes += send(r, msg);
    return bytes;
  }

  std::vector<ProtocolMessage> gather(std::uint64_t round, std::span<const int> senders) {
    return inbox().gather(round, senders, timeout_);
  }

  ProtocolMessage receive() { return inbox().pop(timeout_); }

  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }
  std::chrono::milliseconds timeout() const { return timeout_; }

 private:
  std::chrono::milliseconds timeout_ = default_timeout();
};

/// Wraps another endpoint and records every frame it sends.
class RecordingEndpoint final : public Endpoint {
 public:
  struct Record {
    int from;
    int to;
    Frame frame;
  };

  RecordingEndpoint(Endpoint& inner, std::shared_ptr<std::vector<Record>> log, std::shared_ptr<std::mutex> mu)
      : inner_(inner), log_(std::move(log)), mu_(std::move(mu)) {
    set_timeout(inner.timeout());
  }

  int id() const override { return inner_.id(); }
  Inbox& inbox() override { return inner_.inbox(); }

  std::size_t send(int to, const ProtocolMessage& msg) override {
    {
      std::lock_guard lock(*mu_);
      log_->push_back({inner_.id(), to, encode_frame(msg)});
    }
    return inner_.send(to, msg);
  }

 private:
  Endpoint& inner_;
  std::shared_ptr<std::vector<Record>> log_;
  std::shared_ptr<std::mutex> mu_;
};

/// In-process network of nodes 0..P. Every message is framed and decoded
/// on the way, so byte counts and decoding behaviour match TCP.
class InProcessHub {
 public:
  explicit InProcessHub(int parties) {
    for (int id = 0; id <= parties; ++id) inboxes_.push_back(std::make_unique<Inbox>());
  }

  class Port final : public Endpoint {
   public:
    Port(InProcessHub& hub, int id) : hub_(hub), id_(id) {}
    int id() const override { return id_; }
    Inbox& inbox() override { return *hub_.inboxes_.at(static_cast<std::size_t>(id_)); }
    std::size_t send(int to, const ProtocolMessage& msg) override {
      if (to < 0 || static_cast<std::size_t>(to) >= hub_.inboxes_.size()) {
        throw Error(Errc::kTransport, "unknown node " + std::to_string(to));
      }
      const Frame frame = encode_frame(msg);
      hub_.inboxes_[static_cast<std::size_t>(to)]->push(decode_frame(frame));
      return frame.size();
    }

   private:
    InProcessHub& hub_;
    int id_;
  };

  std::unique_ptr<Endpoint> endpoint(int id) { return std::make_unique<Port>(*this, id); }

  void close_all(const std::string& reason) {
    for (auto& in : inboxes_) in->close(reason);
  }

 private:
  std::vector<std::unique_ptr<Inbox>> inboxes_;
};

}  // namespace fednorm::transport
