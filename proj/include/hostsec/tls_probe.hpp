#pragma once

// Non-intrusive protocol-version probe: sends one hand-built ClientHello per
// protocol version and reads only the server's first handshake answer.
// No key exchange is completed and nothing beyond the hello is sent.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <openssl/rand.h>

#include "hostsec/corpus.hpp"
#include "hostsec/net.hpp"

namespace hostsec::tls {

using corpus::TlsProtocol;

namespace detail {

inline void put16(std::string& s, unsigned v) {
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

inline void put24(std::string& s, unsigned v) {
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  put16(s, v);
}

inline std::string random_bytes(std::size_t n) {
  std::string s(n, '\0');
  if (RAND_bytes(reinterpret_cast<unsigned char*>(s.data()), static_cast<int>(n)) != 1)
    throw Error("RAND_bytes failed");
  return s;
}

inline std::string extension(unsigned type, const std::string& body) {
  std::string e;
  put16(e, type);
  put16(e, static_cast<unsigned>(body.size()));
  return e + body;
}

inline unsigned get16(const std::string& s, std::size_t at) {
  return (static_cast<unsigned>(static_cast<unsigned char>(s[at])) << 8) |
         static_cast<unsigned char>(s[at + 1]);
}

}  // namespace detail

inline unsigned wire_version(TlsProtocol p) {
  switch (p) {
    case TlsProtocol::SSLv2: return 0x0002;
    case TlsProtocol::SSLv3: return 0x0300;
    case TlsProtocol::TLSv1_0: return 0x0301;
    case TlsProtocol::TLSv1_1: return 0x0302;
    case TlsProtocol::TLSv1_2: return 0x0303;
    case TlsProtocol::TLSv1_3: return 0x0304;
  }
  return 0;
}

/// SSLv2 CLIENT-HELLO (two-byte record header, seven SSLv2 cipher kinds).
inline std::string sslv2_client_hello() {
  std::string specs;
  for (unsigned kind : {0x010080u, 0x020080u, 0x030080u, 0x040080u, 0x050080u, 0x060040u, 0x0700c0u})
    detail::put24(specs, kind);
  std::string msg;
  msg.push_back(1);
  detail::put16(msg, 0x0002);
  detail::put16(msg, static_cast<unsigned>(specs.size()));
  detail::put16(msg, 0);
  detail::put16(msg, 16);
  msg += specs + detail::random_bytes(16);
  std::string rec;
  detail::put16(rec, 0x8000u | static_cast<unsigned>(msg.size()));
  return rec + msg;
}

/// ClientHello record for SSLv3 .. TLS 1.3.
inline std::string client_hello(TlsProtocol p, const std::string& server_name) {
  if (p == TlsProtocol::SSLv2) return sslv2_client_hello();
  const bool tls13 = p == TlsProtocol::TLSv1_3;
  std::vector<unsigned> suites;
  if (tls13) suites = {0x1301, 0x1302, 0x1303};
  else if (p == TlsProtocol::SSLv3) suites = {0x0035, 0x002f, 0x0039, 0x0033, 0x000a, 0x0016, 0x0005, 0x0004, 0x00ff};
  else suites = {0xc02f, 0xc030, 0xc02b, 0xc02c, 0xc013, 0xc014, 0xc009, 0xc00a, 0x009c, 0x009d,
                 0x009e, 0x009f, 0x0035, 0x002f, 0x0039, 0x0033, 0x000a, 0x0005, 0x0004, 0x00ff};

  std::string ext;
  if (p != TlsProtocol::SSLv3) {
    if (!server_name.empty() && !url::is_ip_literal(server_name)) {
      std::string sni;
      detail::put16(sni, static_cast<unsigned>(server_name.size() + 3));
      sni.push_back(0);
      detail::put16(sni, static_cast<unsigned>(server_name.size()));
      sni += server_name;
      ext += detail::extension(0x0000, sni);
    }
    std::string groups;
    detail::put16(groups, 8);
    for (unsigned g : {0x001du, 0x0017u, 0x0018u, 0x0019u}) detail::put16(groups, g);
    ext += detail::extension(0x000a, groups);
    ext += detail::extension(0x000b, std::string("\x01\x00", 2));
    if (p == TlsProtocol::TLSv1_2 || tls13) {
      std::vector<unsigned> algs = {0x0403, 0x0503, 0x0603, 0x0804, 0x0805, 0x0806,
                                    0x0401, 0x0501, 0x0601, 0x0201, 0x0203};
      std::string sa;
      detail::put16(sa, static_cast<unsigned>(algs.size() * 2));
      for (unsigned a : algs) detail::put16(sa, a);
      ext += detail::extension(0x000d, sa);
    }
    if (tls13) {
      std::string sv;
      sv.push_back(2);
      detail::put16(sv, 0x0304);
      ext += detail::extension(0x002b, sv);
      std::string ks, entry;
      detail::put16(entry, 0x001d);
      detail::put16(entry, 32);
      entry += detail::random_bytes(32);
      detail::put16(ks, static_cast<unsigned>(entry.size()));
      ks += entry;
      ext += detail::extension(0x0033, ks);
      ext += detail::extension(0x002d, std::string("\x01\x01", 2));  // psk_key_exchange_modes
    }
  }

  std::string body;
  detail::put16(body, tls13 ? 0x0303 : wire_version(p));
  body += detail::random_bytes(32);
  body.push_back(0);  // session id
  detail::put16(body, static_cast<unsigned>(suites.size() * 2));
  for (unsigned s : suites) detail::put16(body, s);
  body.push_back(1);
  body.push_back(0);  // null compression
  if (!ext.empty()) {
    detail::put16(body, static_cast<unsigned>(ext.size()));
    body += ext;
  }
  std::string hs;
  hs.push_back(1);
  detail::put24(hs, static_cast<unsigned>(body.size()));
  hs += body;
  std::string rec;
  rec.push_back(0x16);
  detail::put16(rec, p == TlsProtocol::SSLv3 ? 0x0300 : 0x0301);
  detail::put16(rec, static_cast<unsigned>(hs.size()));
  return rec + hs;
}

/// Parsed first server answer.
struct ServerAnswer {
  bool server_hello = false;
  unsigned version = 0;               // ServerHello.server_version
  std::optional<unsigned> selected;   // supported_versions extension
  bool alert = false;
};

/// Parses a ServerHello handshake body (after the 4-byte handshake header).
inline ServerAnswer parse_server_hello(const std::string& body) {
  ServerAnswer a;
  if (body.size() < 38) return a;
  a.server_hello = true;
  a.version = detail::get16(body, 0);
  std::size_t at = 34;
  std::size_t sid = static_cast<unsigned char>(body[at]);
  at += 1 + sid + 2 + 1;  // session id, cipher suite, compression
  if (at + 2 > body.size()) return a;
  std::size_t ext_len = detail::get16(body, at);
  at += 2;
  std::size_t end = std::min(body.size(), at + ext_len);
  while (at + 4 <= end) {
    unsigned type = detail::get16(body, at);
    std::size_t len = detail::get16(body, at + 2);
    at += 4;
    if (at + len > end) break;
    if (type == 0x002b && len == 2) a.selected = detail::get16(body, at);
    at += len;
  }
  return a;
}

/// Reads TLS records until a ServerHello (handshake type 2) or an alert.
inline ServerAnswer read_server_answer(const net::Socket& s, net::Clock::time_point deadline) {
  ServerAnswer a;
  std::string handshake;
  for (int records = 0; records < 8; ++records) {
    std::string hdr;
    if (net::read_exact(s, hdr, 5, deadline) != net::ReadStatus::ok) return a;
    auto type = static_cast<unsigned char>(hdr[0]);
    std::size_t len = detail::get16(hdr, 3);
    if (len > (1u << 15)) return a;
    std::string payload;
    if (net::read_exact(s, payload, len, deadline) != net::ReadStatus::ok) return a;
    if (type == 0x15) {
      a.alert = true;
      return a;
    }
    if (type != 0x16) return a;
    handshake += payload;
    if (handshake.size() >= 4) {
      if (static_cast<unsigned char>(handshake[0]) != 2) return a;
      std::size_t hlen = (static_cast<std::size_t>(static_cast<unsigned char>(handshake[1])) << 16) |
                         detail::get16(handshake, 2);
      if (handshake.size() >= 4 + hlen) return parse_server_hello(handshake.substr(4, hlen));
    }
  }
  return a;
}

/// True when the answer confirms the server accepted protocol `p`.
inline bool accepted(TlsProtocol p, const ServerAnswer& a) {
  if (!a.server_hello) return false;
  if (p == TlsProtocol::TLSv1_3) return a.selected && *a.selected == 0x0304;
  return !a.selected && a.version == wire_version(p);
}

enum class ProbeResult { accepted, rejected, no_listener };

/// One connection, one hello, one answer.
inline ProbeResult probe_version(const std::string& address, int port, const std::string& server_name,
                                 TlsProtocol p, net::Millis timeout) {
  auto conn = net::connect(address, port, timeout);
  if (conn.status != net::ConnectStatus::ok) return ProbeResult::no_listener;
  if (!net::send_all(conn.socket, client_hello(p, server_name))) return ProbeResult::rejected;
  auto deadline = net::Clock::now() + timeout;
  if (p == TlsProtocol::SSLv2) {
    std::string hdr;
    if (net::read_exact(conn.socket, hdr, 3, deadline) != net::ReadStatus::ok) return ProbeResult::rejected;
    bool two_byte = (static_cast<unsigned char>(hdr[0]) & 0x80) != 0;
    return two_byte && static_cast<unsigned char>(hdr[2]) == 4 ? ProbeResult::accepted : ProbeResult::rejected;
  }
  return accepted(p, read_server_answer(conn.socket, deadline)) ? ProbeResult::accepted : ProbeResult::rejected;
}

}  // namespace hostsec::tls
