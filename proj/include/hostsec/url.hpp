#pragma once

// URL parsing, reference resolution and registrable-domain extraction.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hostsec/common.hpp"

namespace hostsec::url {

struct Url {
  std::string scheme;  // lower-case, e.g. "http"
  std::string host;    // lower-case, no trailing dot
  int port = 0;        // 0 means the scheme default
  std::string path = "/";
  std::string query;   // without '?'

  int effective_port() const {
    if (port) return port;
    if (scheme == "https") return 443;
    if (scheme == "http") return 80;
    return 0;
  }

  /// Origin-form request target: path plus query.
  std::string target() const { return query.empty() ? path : path + "?" + query; }

  std::string authority() const {
    bool default_port = port == 0 || (scheme == "http" && port == 80) ||
                        (scheme == "https" && port == 443);
    return default_port ? host : host + ":" + std::to_string(port);
  }

  /// Normalised serialisation (no fragment, default port elided).
  std::string str() const { return scheme + "://" + authority() + target(); }

  bool operator==(const Url&) const = default;
};

namespace detail {

inline std::string remove_dot_segments(std::string_view path) {
  std::vector<std::string> out;
  bool trailing = false;
  for (auto& seg : text::split(path, '/')) {
    trailing = false;
    if (seg == "." ) {
      trailing = true;
    } else if (seg == "..") {
      if (!out.empty()) out.pop_back();
      trailing = true;
    } else if (!seg.empty()) {
      out.push_back(seg);
    }
  }
  std::string result = "/";
  for (std::size_t i = 0; i < out.size(); ++i) {
    result += out[i];
    if (i + 1 < out.size()) result += "/";
  }
  if (!out.empty() && (trailing || (!path.empty() && path.back() == '/'))) result += "/";
  return result;
}

inline std::string_view strip_fragment(std::string_view s) {
  auto hash = s.find('#');
  return hash == std::string_view::npos ? s : s.substr(0, hash);
}

}  // namespace detail

/// Parses an absolute http(s) URL; returns nullopt for anything else.
inline std::optional<Url> parse(std::string_view raw) {
  auto s = detail::strip_fragment(text::trim(raw));
  auto colon = s.find("://");
  if (colon == std::string_view::npos) return std::nullopt;
  Url u;
  u.scheme = text::to_lower(s.substr(0, colon));
  if (u.scheme != "http" && u.scheme != "https") return std::nullopt;
  auto rest = s.substr(colon + 3);
  auto slash = rest.find_first_of("/?");
  auto authority = rest.substr(0, slash);
  auto at = authority.rfind('@');
  if (at != std::string_view::npos) authority = authority.substr(at + 1);
  auto pcolon = authority.rfind(':');
  if (pcolon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
    auto p = text::parse_int<int>(authority.substr(pcolon + 1));
    if (!p || *p <= 0 || *p > 65535) return std::nullopt;
    u.port = *p;
    authority = authority.substr(0, pcolon);
  }
  if (authority.empty()) return std::nullopt;
  u.host = text::to_lower(authority);
  while (!u.host.empty() && u.host.back() == '.') u.host.pop_back();
  if (u.host.empty()) return std::nullopt;
  if ((u.scheme == "http" && u.port == 80) || (u.scheme == "https" && u.port == 443)) u.port = 0;
  if (slash != std::string_view::npos) {
    auto tail = rest.substr(slash);
    auto q = tail.find('?');
    auto path = tail.substr(0, q);
    u.path = path.empty() ? "/" : detail::remove_dot_segments(path);
    if (q != std::string_view::npos) u.query = std::string(tail.substr(q + 1));
  }
  return u;
}

/// Resolves a reference (absolute, protocol-relative, absolute-path or relative)
/// against a base URL. Non-http(s) schemes (mailto:, javascript:, ...) yield nullopt.
inline std::optional<Url> resolve(const Url& base, std::string_view ref_raw) {
  auto ref = detail::strip_fragment(text::trim(ref_raw));
  if (ref.empty()) return base;
  auto scheme_end = ref.find(':');
  auto first_special = ref.find_first_of("/?#");
  if (scheme_end != std::string_view::npos &&
      (first_special == std::string_view::npos || scheme_end < first_special)) {
    return parse(ref);
  }
  if (ref.substr(0, 2) == "//") return parse(base.scheme + ":" + std::string(ref));
  Url u = base;
  u.query.clear();
  if (ref.front() == '?') {
    u.query = std::string(ref.substr(1));
    return u;
  }
  auto q = ref.find('?');
  auto path = ref.substr(0, q);
  if (q != std::string_view::npos) u.query = std::string(ref.substr(q + 1));
  if (path.front() == '/') {
    u.path = detail::remove_dot_segments(path);
  } else {
    auto dir = base.path.substr(0, base.path.rfind('/') + 1);
    u.path = detail::remove_dot_segments(dir + std::string(path));
  }
  return u;
}

inline bool is_ip_literal(std::string_view host) {
  if (host.find(':') != std::string_view::npos || host.find('[') != std::string_view::npos)
    return true;
  return !host.empty() && std::all_of(host.begin(), host.end(), [](char c) {
    return (c >= '0' && c <= '9') || c == '.';
  });
}

/// Second-level public suffixes under which registrations happen one label deeper.
/// Not a full public-suffix list; it covers the common country-code cases.
inline constexpr std::array<std::string_view, 40> kTwoLabelSuffixes = {
    "co.uk",  "org.uk", "ac.uk",  "gov.uk", "ltd.uk", "plc.uk", "me.uk",  "net.uk",
    "com.au", "net.au", "org.au", "edu.au", "co.nz",  "org.nz", "net.nz", "co.jp",
    "ne.jp",  "or.jp",  "ac.jp",  "com.br", "net.br", "org.br", "com.cn", "net.cn",
    "org.cn", "co.za",  "co.in",  "net.in", "org.in", "com.mx", "com.tr", "com.ar",
    "co.kr",  "com.tw", "com.sg", "com.hk", "co.il",  "com.pl", "com.ua", "co.id"};

/// Registrable domain (public suffix + one label) of a host name.
inline std::string registrable_domain(std::string_view host_raw) {
  std::string host = text::to_lower(text::trim(host_raw));
  while (!host.empty() && host.back() == '.') host.pop_back();
  if (is_ip_literal(host)) return host;
  auto labels = text::split(host, '.');
  if (labels.size() <= 2) return host;
  std::string last2 = labels[labels.size() - 2] + "." + labels.back();
  std::size_t keep = 2;
  for (auto sfx : kTwoLabelSuffixes)
    if (last2 == sfx) keep = 3;
  if (labels.size() <= keep) return host;
  std::string out;
  for (std::size_t i = labels.size() - keep; i < labels.size(); ++i) {
    if (!out.empty()) out += ".";
    out += labels[i];
  }
  return out;
}

inline bool same_site(const Url& u, std::string_view registrable) {
  return registrable_domain(u.host) == registrable_domain(registrable);
}

}  // namespace hostsec::url
