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

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fednorm/error.hpp"
#include "fednorm/transport/channel.hpp"

namespace fednorm::transport {

struct HostPort {
  std::string host;
  int port = 0;
};

inline HostPort parse_host_port(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::kValidation, "expected host:port, got '" + s + "'");
  HostPort hp{s.substr(0, colon), 0};
  try {
    hp.port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(Errc::kValidation, "bad port in '" + s + "'");
  }
  if (hp.port < 0 || hp.port > 65535) throw Error(Errc::kValidation, "port out of range in '" + s + "'");
  if (hp.host.empty()) hp.host = "127.0.0.1";
  return hp;
}

namespace detail {

inline std::string sys_error(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }

  void shutdown_both() const noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::kTransport, sys_error("send"));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

/// Returns false on clean EOF before any byte.
inline bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, data + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw Error(Errc::kDecodeError, "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::kTransport, sys_error("recv"));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

inline void write_frame(int fd, const Frame& frame) { write_all(fd, frame.data(), frame.size()); }

inline std::optional<ProtocolMessage> read_message(int fd) {
  std::uint8_t header[kFrameHeaderBytes];
  if (!read_all(fd, header, sizeof header)) return std::nullopt;
  const std::uint32_t len = decode_length(header);
  if (len > kMaxFrameBytes) throw Error(Errc::kFrameTooLarge, std::to_string(len) + " byte body exceeds 64 MiB");
  std::string body(len, '\0');
  if (len > 0 && !read_all(fd, reinterpret_cast<std::uint8_t*>(body.data()), len)) {
    throw Error(Errc::kDecodeError, "connection closed mid-frame");
  }
  return decode_body(body);
}

inline void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

/// Pumps frames from `fd` into `inbox` until EOF or error.
inline std::thread start_reader(int fd, Inbox& inbox) {
  return std::thread([fd, &inbox] {
    try {
      while (auto msg = read_message(fd)) inbox.push(std::move(*msg));
      inbox.close("peer closed connection");
    } catch (const std::exception& e) {
      inbox.close(e.what());
    }
  });
}

inline ProtocolMessage hello_message(int id) {
  ProtocolMessage m;
  m.sender = id;
  m.kind = MsgKind::kControl;
  m.payload.command = "hello";
  return m;
}

}  // namespace detail

/// Aggregator side: listens, accepts one connection per party, and
/// identifies each by the hello frame it sends first.
class TcpAggregatorEndpoint final : public Endpoint {
 public:
  TcpAggregatorEndpoint(const HostPort& listen_on, int parties) : parties_(parties) {
    listener_ = detail::Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!listener_) throw Error(Errc::kTransport, detail::sys_error("socket"));
    int one = 1;
    ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(listen_on.port));
    if (::inet_pton(AF_INET, listen_on.host == "localhost" ? "127.0.0.1" : listen_on.host.c_str(),
                    &addr.sin_addr) != 1) {
      throw Error(Errc::kValidation, "listen address must be an IPv4 literal: " + listen_on.host);
    }
    if (::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      throw Error(Errc::kTransport, detail::sys_error("bind"));
    }
    if (::listen(listener_.fd(), parties + 4) < 0) throw Error(Errc::kTransport, detail::sys_error("listen"));
    socklen_t len = sizeof addr;
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  ~TcpAggregatorEndpoint() override {
    for (auto& [_, c] : conns_) c->sock.shutdown_both();
    for (auto& t : readers_) {
      if (t.joinable()) t.join();
    }
  }

  int port() const noexcept { return port_; }
  int id() const override { return kAggregatorId; }
  Inbox& inbox() override { return inbox_; }

  /// Blocks until every party 1..P has connected and said hello.
  void accept_parties() {
    const auto deadline = Clock::now() + timeout();
    while (static_cast<int>(conns_.size()) < parties_) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      pollfd pfd{listener_.fd(), POLLIN, 0};
      const int ready = left.count() > 0 ? ::poll(&pfd, 1, static_cast<int>(left.count())) : 0;
      if (ready <= 0) {
        std::vector<int> missing;
        for (int p = 1; p <= parties_; ++p) {
          if (!conns_.count(p)) missing.push_back(p);
        }
        throw TimeoutError(0, std::move(missing));
      }
      detail::Socket sock(::accept(listener_.fd(), nullptr, nullptr));
      if (!sock) continue;
      detail::set_nodelay(sock.fd());
      const auto hello = detail::read_message(sock.fd());
      if (!hello || hello->payload.command != "hello") throw Error(Errc::kTransport, "expected hello frame");
      const int pid = hello->sender;
      if (pid < 1 || pid > parties_ || conns_.count(pid)) {
        throw Error(Errc::kTransport, "unexpected or duplicate party id " + std::to_string(pid));
      }
      auto conn = std::make_unique<Conn>();
      conn->sock = std::move(sock);
      readers_.push_back(detail::start_reader(conn->sock.fd(), inbox_));
      conns_.emplace(pid, std::move(conn));
    }
  }

  std::size_t send(int to, const ProtocolMessage& msg) override {
    const auto it = conns_.find(to);
    if (it == conns_.end()) throw Error(Errc::kTransport, "no connection to party " + std::to_string(to));
    const Frame frame = encode_frame(msg);
    std::lock_guard lock(it->second->mu);
    detail::write_frame(it->second->sock.fd(), frame);
    return frame.size();
  }

 private:
  struct Conn {
    detail::Socket sock;
    std::mutex mu;
  };

  int parties_;
  int port_ = 0;
  detail::Socket listener_;
  std::map<int, std::unique_ptr<Conn>> conns_;
  std::vector<std::thread> readers_;
  Inbox inbox_;
};

/// Party side: connects (retrying until the gather timeout) and says hello.
class TcpPartyEndpoint final : public Endpoint {
 public:
  TcpPartyEndpoint(const HostPort& server, int party_id) : id_(party_id) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(server.port);
    if (::getaddrinfo(server.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
      throw Error(Errc::kTransport, "cannot resolve " + server.host);
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
    const auto deadline = Clock::now() + timeout();
    for (;;) {
      detail::Socket s(::socket(AF_INET, SOCK_STREAM, 0));
      if (!s) throw Error(Errc::kTransport, detail::sys_error("socket"));
      if (::connect(s.fd(), res->ai_addr, res->ai_addrlen) == 0) {
        sock_ = std::move(s);
        break;
      }
      if (Clock::now() > deadline) throw Error(Errc::kTimeout, detail::sys_error("connect"));
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    detail::set_nodelay(sock_.fd());
    detail::write_frame(sock_.fd(), encode_frame(detail::hello_message(id_)));
    reader_ = detail::start_reader(sock_.fd(), inbox_);
  }

  ~TcpPartyEndpoint() override {
    sock_.shutdown_both();
    if (reader_.joinable()) reader_.join();
  }

  int id() const override { return id_; }
  Inbox& inbox() override { return inbox_; }

  std::size_t send(int to, const ProtocolMessage& msg) override {
    if (to != kAggregatorId) throw Error(Errc::kTransport, "parties only talk to the aggregator");
    const Frame frame = encode_frame(msg);
    std::lock_guard lock(mu_);
    detail::write_frame(sock_.fd(), frame);
    return frame.size();
  }

 private:
  int id_;
  detail::Socket sock_;
  std::mutex mu_;
  std::thread reader_;
  Inbox inbox_;
};

}  // namespace fednorm::transport
