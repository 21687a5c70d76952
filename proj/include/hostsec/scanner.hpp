#pragma once

// Polite live measurement client: same-site crawl, admin-panel probes, SSH
// banner grab and protocol-version probe, producing corpus DomainRecords.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "hostsec/corpus.hpp"
#include "hostsec/csv.hpp"
#include "hostsec/html.hpp"
#include "hostsec/net.hpp"
#include "hostsec/tls_probe.hpp"
#include "hostsec/url.hpp"

namespace hostsec::scanner {

using corpus::DomainRecord;
using corpus::HeaderList;
using corpus::PageCapture;
using corpus::PortProbe;
using corpus::ProbeOutcome;
using corpus::TlsInfo;
using net::Clock;
using net::Millis;

inline constexpr int kMaxRedirects = 5;
inline constexpr std::size_t kBodyExcerptBytes = 4096;
inline constexpr std::size_t kBannerBytes = 255;
inline constexpr const char* kDefaultUserAgent =
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
    "Chrome/120.0.0.0 Safari/537.36";

enum class PolitenessKey { host, address };

struct ScanPolicy {
  std::size_t page_limit = corpus::kDefaultPageLimit;
  Millis per_host_delay{1000};
  Millis timeout{10000};
  std::size_t max_parallel_hosts = 8;
  std::vector<int> admin_ports = {2082, 2083, 2086, 2087, 8443, 2222, 10000};
  std::vector<std::string> admin_paths = {"/panel/"};
  bool probe_tls = false;
  std::string user_agent = kDefaultUserAgent;
  // Test and lab hooks: fixed name resolution and logical-to-physical ports.
  std::map<std::string, std::string> host_overrides;
  std::map<int, int> port_remap;
  PolitenessKey politeness_key = PolitenessKey::host;

  void validate() const {
    if (page_limit < 1) throw InputError("scan policy: page_limit must be >= 1");
    if (per_host_delay.count() < 0) throw InputError("scan policy: per_host_delay must be >= 0");
    if (timeout.count() <= 0) throw InputError("scan policy: timeout must be > 0");
    if (max_parallel_hosts < 1) throw InputError("scan policy: max_parallel_hosts must be >= 1");
    for (int p : admin_ports)
      if (p < 1 || p > 65535) throw InputError("scan policy: bad admin port " + std::to_string(p));
    for (const auto& p : admin_paths)
      if (p.empty() || p.front() != '/') throw InputError("scan policy: admin path must start with '/': " + p);
    if (user_agent.empty()) throw InputError("scan policy: user_agent must not be empty");
  }

  int physical_port(int logical) const {
    auto it = port_remap.find(logical);
    return it == port_remap.end() ? logical : it->second;
  }
};

inline std::vector<std::string> policy_keys() {
  return {"page_limit",   "per_host_delay", "timeout",    "max_parallel_hosts", "admin_ports",
          "admin_paths",  "probe_tls",      "user_agent", "host_overrides",     "port_remap",
          "politeness_key"};
}

inline ScanPolicy parse_policy(const kv::Config& cfg) {
  cfg.check_keys(policy_keys());
  ScanPolicy p;
  auto page_limit = cfg.get_int<long long>("page_limit", static_cast<long long>(p.page_limit));
  if (page_limit < 1) throw InputError(cfg.source + ": page_limit must be >= 1");
  p.page_limit = static_cast<std::size_t>(page_limit);
  p.per_host_delay = Millis(cfg.get_int<long long>("per_host_delay", p.per_host_delay.count()));
  p.timeout = Millis(cfg.get_int<long long>("timeout", p.timeout.count()));
  auto par = cfg.get_int<long long>("max_parallel_hosts", static_cast<long long>(p.max_parallel_hosts));
  if (par < 1) throw InputError(cfg.source + ": max_parallel_hosts must be >= 1");
  p.max_parallel_hosts = static_cast<std::size_t>(par);
  if (cfg.has("admin_ports")) {
    p.admin_ports.clear();
    for (const auto& s : text::split_list(cfg.require("admin_ports"))) {
      auto v = text::parse_int<int>(s);
      if (!v) throw InputError(cfg.source + ": bad admin port '" + s + "'");
      p.admin_ports.push_back(*v);
    }
  }
  if (cfg.has("admin_paths")) p.admin_paths = text::split_list(cfg.require("admin_paths"));
  p.probe_tls = cfg.get_bool("probe_tls", p.probe_tls);
  p.user_agent = cfg.get("user_agent", p.user_agent);
  for (const auto& item : text::split_list(cfg.get("host_overrides", ""))) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw InputError(cfg.source + ": host_overrides entry needs name=address: " + item);
    p.host_overrides[text::to_lower(text::trim(item.substr(0, eq)))] = std::string(text::trim(item.substr(eq + 1)));
  }
  for (const auto& item : text::split_list(cfg.get("port_remap", ""))) {
    auto colon = item.find(':');
    auto from = colon == std::string::npos ? std::nullopt : text::parse_int<int>(item.substr(0, colon));
    auto to = colon == std::string::npos ? std::nullopt : text::parse_int<int>(item.substr(colon + 1));
    if (!from || !to) throw InputError(cfg.source + ": port_remap entry needs logical:physical: " + item);
    p.port_remap[*from] = *to;
  }
  auto key = cfg.get("politeness_key", "host");
  if (key == "host") p.politeness_key = PolitenessKey::host;
  else if (key == "address") p.politeness_key = PolitenessKey::address;
  else throw InputError(cfg.source + ": politeness_key must be host or address");
  p.validate();
  return p;
}

inline ScanPolicy load_policy(const std::string& path) { return parse_policy(kv::parse_file(path)); }

// ---------------------------------------------------------------------------
// Per-host serialisation and spacing

/// Serialises all requests that share a key and spaces their start times by
/// at least `delay`.
class HostGate {
 public:
  using Hook = std::function<void(const std::string& key, Clock::time_point start)>;

  explicit HostGate(Millis delay, Hook hook = {}) : delay_(delay), hook_(std::move(hook)) {}

  template <typename Fn>
  auto run(const std::string& key, Fn&& fn) -> decltype(fn()) {
    auto slot = slot_for(key);
    std::lock_guard<std::mutex> hold(slot->busy);
    if (slot->used) {
      auto earliest = slot->last_start + delay_;
      while (Clock::now() < earliest) std::this_thread::sleep_until(earliest);
    }
    slot->last_start = Clock::now();
    slot->used = true;
    if (hook_) {
      std::lock_guard<std::mutex> lk(hook_mutex_);
      hook_(key, slot->last_start);
    }
    return fn();
  }

 private:
  struct Slot {
    std::mutex busy;
    Clock::time_point last_start{};
    bool used = false;
  };

  std::shared_ptr<Slot> slot_for(const std::string& key) {
    std::lock_guard<std::mutex> lk(map_mutex_);
    auto& s = slots_[key];
    if (!s) s = std::make_shared<Slot>();
    return s;
  }

  Millis delay_;
  Hook hook_;
  std::mutex map_mutex_, hook_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

// ---------------------------------------------------------------------------
// Context shared by the operations for one scan

class Context {
 public:
  explicit Context(ScanPolicy policy, HostGate::Hook hook = {})
      : policy_(std::move(policy)), gate_(policy_.per_host_delay, std::move(hook)) {
    policy_.validate();
  }

  const ScanPolicy& policy() const { return policy_; }

  /// Numeric address for `host`; overrides match the host or its registrable domain.
  std::optional<std::string> address_of(const std::string& host_raw) {
    std::string host = text::to_lower(host_raw);
    if (auto it = policy_.host_overrides.find(host); it != policy_.host_overrides.end()) return it->second;
    auto reg = url::registrable_domain(host);
    if (auto it = policy_.host_overrides.find(reg); it != policy_.host_overrides.end()) return it->second;
    if (url::is_ip_literal(host)) return host;
    std::lock_guard<std::mutex> lk(dns_mutex_);
    if (auto it = dns_cache_.find(host); it != dns_cache_.end()) return it->second;
    auto addr = net::resolve(host);
    dns_cache_[host] = addr;
    return addr;
  }

  template <typename Fn>
  auto gated(const std::string& host, const std::string& address, Fn&& fn) -> decltype(fn()) {
    const auto& key = policy_.politeness_key == PolitenessKey::address ? address : host;
    return gate_.run(key, std::forward<Fn>(fn));
  }

 private:
  ScanPolicy policy_;
  HostGate gate_;
  std::mutex dns_mutex_;
  std::map<std::string, std::optional<std::string>> dns_cache_;
};

// ---------------------------------------------------------------------------
// HTTP plumbing

struct HttpOutcome {
  std::optional<httplib::Response> response;
  httplib::Error error = httplib::Error::Success;
  bool timed_out = false;
};

/// Header multimap flattened into a list. The client library groups headers by
/// case-insensitive name, so wire order across different names is not kept.
inline HeaderList to_header_list(const httplib::Headers& h) {
  HeaderList out;
  for (const auto& [k, v] : h) out.emplace_back(k, v);
  return out;
}

/// One GET without following redirects.
inline HttpOutcome http_get(Context& ctx, const url::Url& u, const std::string& address) {
  const auto& pol = ctx.policy();
  int port = pol.physical_port(u.effective_port());
  auto t = pol.timeout;
  auto configure = [&](httplib::ClientImpl& c) {
    c.set_hostname_addr_map({{u.host, address}});
    c.set_connection_timeout(t);
    c.set_read_timeout(t);
    c.set_write_timeout(t);
    c.set_follow_location(false);
    c.set_keep_alive(false);
  };
  httplib::Headers headers = {{"User-Agent", pol.user_agent}, {"Accept", "text/html,*/*;q=0.8"}};
  auto start = Clock::now();
  auto finish = [&](httplib::Result r) {
    HttpOutcome o;
    if (r) o.response = r.value();
    else o.error = r.error();
    o.timed_out = !r && (r.error() == httplib::Error::ConnectionTimeout ||
                         Clock::now() - start >= t);
    return o;
  };
  return ctx.gated(u.host, address, [&]() {
    if (u.scheme == "https") {
      httplib::SSLClient c(u.host, port);
      c.enable_server_certificate_verification(false);
      configure(c);
      return finish(c.Get(u.target(), headers));
    }
    httplib::ClientImpl c(u.host, port);
    configure(c);
    return finish(c.Get(u.target(), headers));
  });
}

inline bool is_redirect(int status) {
  return status == 301 || status == 302 || status == 303 || status == 307 || status == 308;
}

/// Same-site anchor targets of a page, resolved and normalised.
inline std::vector<std::string> same_site_links(const url::Url& base, const std::string& body,
                                                const std::string& site) {
  std::vector<std::string> out;
  for (const auto& tag : html::scan(body).tags) {
    if (tag.name != "a") continue;
    const auto* href = tag.attr("href");
    if (!href) continue;
    auto u = url::resolve(base, *href);
    if (!u || (u->scheme != "http" && u->scheme != "https")) continue;
    if (!url::same_site(*u, site)) continue;
    out.push_back(u->str());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Crawl

struct FetchResult {
  std::vector<PageCapture> pages;
  std::optional<std::string> error;  // e.g. "dns_failure"
};

namespace detail {

struct Visit {
  std::optional<PageCapture> capture;
  bool follow_links = false;
  std::optional<std::string> error;
};

/// Fetches `start`, following same-site redirects up to the depth bound.
/// An off-site redirect yields the redirecting response itself.
inline Visit visit(Context& ctx, const std::string& start, const std::string& site,
                   std::set<std::string>& seen) {
  Visit v;
  auto current = url::parse(start);
  std::vector<std::string> chain;
  for (int hop = 0;; ++hop) {
    auto address = ctx.address_of(current->host);
    if (!address) {
      v.error = "dns_failure";
      return v;
    }
    auto out = http_get(ctx, *current, *address);
    if (!out.response) {
      v.error = out.timed_out ? "timeout" : "fetch_failed: " + httplib::to_string(out.error);
      return v;
    }
    const auto& res = *out.response;
    PageCapture cap;
    cap.url = current->str();
    cap.loaded_over_tls = current->scheme == "https";
    cap.status = res.status;
    cap.response_headers = to_header_list(res.headers);
    cap.body = res.body;
    cap.redirect_chain = chain;
    std::string location = res.get_header_value("Location");
    if (!is_redirect(res.status) || location.empty()) {
      v.capture = std::move(cap);
      v.follow_links = true;
      return v;
    }
    auto next = url::resolve(*current, location);
    if (!next || (next->scheme != "http" && next->scheme != "https")) {
      v.capture = std::move(cap);
      return v;
    }
    if (!url::same_site(*next, site)) {
      cap.redirect_chain.push_back(next->str());
      v.capture = std::move(cap);
      return v;
    }
    if (hop + 1 > kMaxRedirects) {
      v.error = "redirect_limit";
      return v;
    }
    if (!seen.insert(next->str()).second) {
      v.error = "redirect_to_visited";
      return v;
    }
    chain.push_back(next->str());
    current = next;
  }
}

}  // namespace detail

/// Breadth-first same-site crawl from the home page, level by level with a
/// lexicographic order inside each level.
inline FetchResult fetch_domain_pages(Context& ctx, const std::string& domain_raw) {
  FetchResult r;
  std::string domain = text::to_lower(text::trim(domain_raw));
  if (!ctx.address_of(domain)) {
    r.error = "dns_failure";
    return r;
  }
  const auto limit = ctx.policy().page_limit;
  std::string home = "http://" + domain + "/";
  std::set<std::string> seen = {home};
  std::vector<std::string> level = {home};
  bool first = true;
  while (!level.empty() && r.pages.size() < limit) {
    std::set<std::string> next;
    for (const auto& target : level) {
      if (r.pages.size() >= limit) break;
      auto v = detail::visit(ctx, target, domain, seen);
      if (!v.capture) {
        if (first) r.error = v.error;
        first = false;
        continue;
      }
      first = false;
      if (v.follow_links) {
        auto base = url::parse(v.capture->url);
        for (auto& link : same_site_links(*base, v.capture->body, domain))
          if (!seen.count(link)) next.insert(link);
      }
      r.pages.push_back(std::move(*v.capture));
    }
    for (const auto& n : next) seen.insert(n);
    level.assign(next.begin(), next.end());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Admin-panel probes

namespace detail {

inline bool tls_first(int logical_port) {
  static const std::set<int> kTlsPorts = {443, 2083, 2087, 2096, 8443, 10000};
  return kTlsPorts.count(logical_port) != 0;
}

inline PortProbe probe_one(Context& ctx, const std::string& domain, const std::string& address,
                           int logical_port, const std::string& path) {
  const auto& pol = ctx.policy();
  PortProbe probe;
  probe.port = logical_port;
  probe.path = path;
  auto conn = ctx.gated(domain, address, [&]() {
    return net::connect(address, pol.physical_port(logical_port), pol.timeout);
  });
  if (conn.status == net::ConnectStatus::timeout) {
    probe.outcome = ProbeOutcome::timeout;
    return probe;
  }
  if (conn.status != net::ConnectStatus::ok) {
    probe.outcome = ProbeOutcome::closed;
    return probe;
  }
  conn.socket.close();

  std::vector<std::string> schemes = tls_first(logical_port) ? std::vector<std::string>{"https", "http"}
                                                             : std::vector<std::string>{"http", "https"};
  if (logical_port == 80) schemes = {"http"};
  if (logical_port == 443) schemes = {"https"};
  bool timed_out = false;
  for (const auto& scheme : schemes) {
    url::Url u;
    u.scheme = scheme;
    u.host = domain;
    u.port = logical_port;
    u.path = path;
    auto out = http_get(ctx, u, address);
    if (out.response) {
      const auto& res = *out.response;
      probe.outcome = ProbeOutcome::response;
      probe.response_headers = to_header_list(res.headers);
      probe.body_excerpt = res.body.substr(0, std::min(res.body.size(), kBodyExcerptBytes));
      auto location = res.get_header_value("Location");
      if (is_redirect(res.status) && !location.empty()) {
        auto next = url::resolve(u, location);
        probe.redirect_chain.push_back(next ? next->str() : location);
      }
      return probe;
    }
    // A stalled listener is not retried under the other scheme.
    if (out.timed_out) {
      timed_out = true;
      break;
    }
  }
  probe.outcome = timed_out ? ProbeOutcome::timeout : ProbeOutcome::closed;
  return probe;
}

}  // namespace detail

/// One probe per configured port, then one per shorthand path on 80 and 443.
inline std::vector<PortProbe> probe_admin_ports(Context& ctx, const std::string& domain_raw) {
  std::string domain = text::to_lower(text::trim(domain_raw));
  std::vector<PortProbe> out;
  auto address = ctx.address_of(domain);
  const auto& pol = ctx.policy();
  auto unreachable = [&](int port, const std::string& path) {
    PortProbe p;
    p.port = port;
    p.path = path;
    return p;
  };
  for (int port : pol.admin_ports)
    out.push_back(address ? detail::probe_one(ctx, domain, *address, port, "/") : unreachable(port, "/"));
  for (const auto& path : pol.admin_paths)
    for (int port : {80, 443})
      out.push_back(address ? detail::probe_one(ctx, domain, *address, port, path) : unreachable(port, path));
  return out;
}

// ---------------------------------------------------------------------------
// SSH banner and protocol versions

/// First line from port 22, at most 255 bytes; never authenticates.
inline std::optional<std::string> grab_ssh_banner(Context& ctx, const std::string& domain_raw) {
  std::string domain = text::to_lower(text::trim(domain_raw));
  auto address = ctx.address_of(domain);
  if (!address) return std::nullopt;
  const auto& pol = ctx.policy();
  return ctx.gated(domain, *address, [&]() -> std::optional<std::string> {
    auto conn = net::connect(*address, pol.physical_port(22), pol.timeout);
    if (conn.status != net::ConnectStatus::ok) return std::nullopt;
    auto [status, line] = net::read_line(conn.socket, kBannerBytes, Clock::now() + pol.timeout);
    if (line.empty()) return std::nullopt;
    return line;
  });
}

/// One hello per protocol version on port 443. No key exchange is completed.
inline TlsInfo probe_tls_protocols(Context& ctx, const std::string& domain_raw) {
  std::string domain = text::to_lower(text::trim(domain_raw));
  TlsInfo info;
  auto address = ctx.address_of(domain);
  if (!address) return info;
  const auto& pol = ctx.policy();
  for (auto p : corpus::kAllProtocols) {
    auto r = ctx.gated(domain, *address, [&]() {
      return tls::probe_version(*address, pol.physical_port(443), domain, p, pol.timeout);
    });
    if (r == tls::ProbeResult::no_listener) break;
    if (r == tls::ProbeResult::accepted) info.protocols_supported.insert(p);
  }
  info.has_tls = !info.protocols_supported.empty();
  return info;
}

// ---------------------------------------------------------------------------
// Whole scans

struct ScanTarget {
  std::string domain;
  std::string provider_id;
};

/// Domain list: one domain per line, optionally followed by a provider id
/// (comma or whitespace separated). '#' starts a comment.
inline std::vector<ScanTarget> parse_targets(std::istream& in, const std::string& context) {
  std::vector<ScanTarget> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = std::string(text::trim(line));
    if (t.empty() || t.front() == '#') continue;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream fields(t);
    ScanTarget target;
    fields >> target.domain >> target.provider_id;
    std::string extra;
    if (fields >> extra)
      throw InputError(context + ":" + std::to_string(lineno) + ": expected 'domain [provider]'");
    target.domain = text::to_lower(target.domain);
    out.push_back(std::move(target));
  }
  return out;
}

inline std::vector<ScanTarget> load_targets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_targets(in, path);
}

struct DomainScan {
  DomainRecord record;
  std::optional<std::string> error;
};

inline DomainScan scan_domain(Context& ctx, const ScanTarget& target) {
  DomainScan s;
  s.record.domain = target.domain;
  s.record.provider_id = target.provider_id;
  auto fetched = fetch_domain_pages(ctx, target.domain);
  s.record.pages = std::move(fetched.pages);
  s.error = fetched.error;
  if (fetched.error && *fetched.error == "dns_failure") return s;
  s.record.admin_probes = probe_admin_ports(ctx, target.domain);
  s.record.ssh_banner = grab_ssh_banner(ctx, target.domain);
  if (ctx.policy().probe_tls) s.record.tls_info = probe_tls_protocols(ctx, target.domain);
  return s;
}

/// Scans up to max_parallel_hosts domains at once. `collect` is called once per
/// finished domain, never concurrently; the returned list follows input order.
inline std::vector<DomainScan> scan_domains(Context& ctx, const std::vector<ScanTarget>& targets,
                                            const std::function<void(const DomainScan&)>& collect = {}) {
  std::vector<DomainScan> results(targets.size());
  std::atomic<std::size_t> next{0};
  std::mutex collect_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < targets.size(); i = next++) {
      try {
        results[i] = scan_domain(ctx, targets[i]);
      } catch (const std::exception& e) {
        results[i].record.domain = targets[i].domain;
        results[i].record.provider_id = targets[i].provider_id;
        results[i].error = std::string("scan_failed: ") + e.what();
      }
      if (collect) {
        std::lock_guard<std::mutex> lk(collect_mutex);
        collect(results[i]);
      }
    }
  };
  std::size_t n = std::min(ctx.policy().max_parallel_hosts, std::max<std::size_t>(targets.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return results;
}

}  // namespace hostsec::scanner
