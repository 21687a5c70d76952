#pragma once

// Minimal blocking TCP helpers with deadlines (POSIX sockets).

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hostsec/common.hpp"

namespace hostsec::net {

using Clock = std::chrono::steady_clock;
using Millis = std::chrono::milliseconds;

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

/// First IPv4/IPv6 address of `host` in numeric form, or nullopt on failure.
inline std::optional<std::string> resolve(const std::string& host) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) return std::nullopt;
  char buf[INET6_ADDRSTRLEN] = {};
  std::optional<std::string> out;
  for (auto* p = res; p && !out; p = p->ai_next) {
    const void* addr = p->ai_family == AF_INET
                           ? static_cast<const void*>(&reinterpret_cast<sockaddr_in*>(p->ai_addr)->sin_addr)
                           : static_cast<const void*>(&reinterpret_cast<sockaddr_in6*>(p->ai_addr)->sin6_addr);
    if (inet_ntop(p->ai_family, addr, buf, sizeof buf)) out = buf;
  }
  freeaddrinfo(res);
  return out;
}

enum class ConnectStatus { ok, refused, timeout, error };

struct Connection {
  ConnectStatus status = ConnectStatus::error;
  Socket socket;
};

/// Non-blocking connect bounded by `timeout`; the returned socket is blocking.
inline Connection connect(const std::string& address, int port, Millis timeout) {
  Connection c;
  sockaddr_storage ss{};
  socklen_t len = 0;
  int family = AF_INET;
  if (address.find(':') != std::string::npos) {
    auto* a6 = reinterpret_cast<sockaddr_in6*>(&ss);
    a6->sin6_family = AF_INET6;
    a6->sin6_port = htons(static_cast<uint16_t>(port));
    if (inet_pton(AF_INET6, address.c_str(), &a6->sin6_addr) != 1) return c;
    family = AF_INET6;
    len = sizeof(sockaddr_in6);
  } else {
    auto* a4 = reinterpret_cast<sockaddr_in*>(&ss);
    a4->sin_family = AF_INET;
    a4->sin_port = htons(static_cast<uint16_t>(port));
    if (inet_pton(AF_INET, address.c_str(), &a4->sin_addr) != 1) return c;
    len = sizeof(sockaddr_in);
  }
  Socket s(::socket(family, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) return c;
  int flags = fcntl(s.fd(), F_GETFL, 0);
  fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&ss), len);
  if (rc != 0 && errno != EINPROGRESS) {
    c.status = errno == ECONNREFUSED ? ConnectStatus::refused : ConnectStatus::error;
    return c;
  }
  if (rc != 0) {
    pollfd pfd{s.fd(), POLLOUT, 0};
    int pr = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (pr == 0) {
      c.status = ConnectStatus::timeout;
      return c;
    }
    int err = 0;
    socklen_t elen = sizeof err;
    getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &elen);
    if (pr < 0 || err != 0) {
      c.status = err == ECONNREFUSED ? ConnectStatus::refused
                 : err == ETIMEDOUT  ? ConnectStatus::timeout
                                     : ConnectStatus::error;
      return c;
    }
  }
  fcntl(s.fd(), F_SETFL, flags);
  int one = 1;
  setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  c.status = ConnectStatus::ok;
  c.socket = std::move(s);
  return c;
}

inline bool send_all(const Socket& s, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(s.fd(), data.data(), data.size(), MSG_NOSIGNAL);
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

enum class ReadStatus { ok, closed, timeout, error };

/// Reads exactly `n` bytes before `deadline`.
inline ReadStatus read_exact(const Socket& s, std::string& out, std::size_t n, Clock::time_point deadline) {
  std::size_t start = out.size();
  out.resize(start + n);
  std::size_t got = 0;
  while (got < n) {
    auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now()).count();
    if (left <= 0) {
      out.resize(start + got);
      return ReadStatus::timeout;
    }
    pollfd pfd{s.fd(), POLLIN, 0};
    int pr = ::poll(&pfd, 1, static_cast<int>(left));
    if (pr == 0) continue;
    if (pr < 0) {
      out.resize(start + got);
      return ReadStatus::error;
    }
    ssize_t r = ::recv(s.fd(), out.data() + start + got, n - got, 0);
    if (r == 0) {
      out.resize(start + got);
      return ReadStatus::closed;
    }
    if (r < 0) {
      out.resize(start + got);
      return ReadStatus::error;
    }
    got += static_cast<std::size_t>(r);
  }
  return ReadStatus::ok;
}

/// Reads one line (terminator excluded), at most `max_bytes` bytes of it.
inline std::pair<ReadStatus, std::string> read_line(const Socket& s, std::size_t max_bytes,
                                                    Clock::time_point deadline) {
  std::string line;
  while (line.size() < max_bytes) {
    std::string ch;
    auto st = read_exact(s, ch, 1, deadline);
    if (st != ReadStatus::ok) return {st, line};
    if (ch[0] == '\n') break;
    line.push_back(ch[0]);
  }
  while (!line.empty() && line.back() == '\r') line.pop_back();
  return {ReadStatus::ok, line};
}

}  // namespace hostsec::net
