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
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fednorm/error.hpp"
#include "fednorm/transport/message.hpp"

namespace fednorm::transport {

using Clock = std::chrono::steady_clock;

/// Gather timeout: FEDNORM_TIMEOUT_SECS if set, else 30 s.
inline std::chrono::milliseconds default_timeout() {
  if (const char* env = std::getenv("FEDNORM_TIMEOUT_SECS")) {
    char* end = nullptr;
    const double secs = std::strtod(env, &end);
    if (end != env && secs > 0) return std::chrono::milliseconds(static_cast<std::int64_t>(secs * 1000.0));
  }
  return std::chrono::seconds(30);
}

/// Single inbound queue of a node. Producers are transport threads; the
/// owning node is the only consumer.
class Inbox {
 public:
  void push(ProtocolMessage msg) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(msg));
    }
    cv_.notify_all();
  }

  /// Marks the inbox dead; blocked consumers fail with a transport error.
  void close(std::string reason) {
    {
      std::lock_guard lock(mu_);
      if (!closed_) closed_ = std::move(reason);
    }
    cv_.notify_all();
  }

  /// Oldest message, whatever its round.
  ProtocolMessage pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; })) {
      throw Error(Errc::kTimeout, "no message within " + std::to_string(timeout.count()) + " ms");
    }
    if (queue_.empty()) throw Error(Errc::kTransport, *closed_);
    ProtocolMessage msg = std::move(queue_.front());
    queue_.pop_front();
    return msg;
  }

  /// One round-`round` message from each of `senders`, sorted by sender.
  /// Messages of other rounds stay queued.
  std::vector<ProtocolMessage> gather(std::uint64_t round, std::span<const int> senders,
                                      std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    std::vector<std::optional<ProtocolMessage>> got(senders.size());
    std::size_t have = 0;
    std::unique_lock lock(mu_);
    for (;;) {
      for (auto it = queue_.begin(); it != queue_.end();) {
        const auto pos = std::find(senders.begin(), senders.end(), it->sender);
        const auto slot = static_cast<std::size_t>(pos - senders.begin());
        if (it->round == round && pos != senders.end() && !got[slot]) {
          got[slot] = std::move(*it);
          ++have;
          it = queue_.erase(it);
        } else {
          ++it;
        }
      }
      if (have == senders.size()) break;
      if (closed_) throw Error(Errc::kTransport, *closed_);
      if (cv_.wait_until(lock, deadline) == std::cv_status::timeout) {
        std::vector<int> missing;
        for (std::size_t i = 0; i < senders.size(); ++i) {
          if (!got[i]) missing.push_back(senders[i]);
        }
        for (auto& m : got) {
          if (m) queue_.push_back(std::move(*m));
        }
        std::sort(missing.begin(), missing.end());
        if (!missing.empty()) throw TimeoutError(round, std::move(missing));
      }
    }
    std::vector<ProtocolMessage> out;
    out.reserve(got.size());
    for (auto& m : got) out.push_back(std::move(*m));
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sender < b.sender; });
    return out;
  }

  std::size_t pending() const {
    std::lock_guard lock(mu_);
    return queue_.size();
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<ProtocolMessage> queue_;
  std::optional<std::string> closed_;
};

}  // namespace fednorm::transport
