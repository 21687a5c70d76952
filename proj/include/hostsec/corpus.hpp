#pragma once

// On-disk data model: measurement records (JSON Lines), the patched-version
// table, and the provider table with size metrics and abuse counts.

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hostsec/common.hpp"
#include "hostsec/csv.hpp"
#include "hostsec/url.hpp"

namespace hostsec::corpus {

/// Response headers in wire order; duplicates (e.g. several Set-Cookie) are kept.
using HeaderList = std::vector<std::pair<std::string, std::string>>;

/// All values of header `name` (case-insensitive), in order.
inline std::vector<std::string> header_values(const HeaderList& headers, std::string_view name) {
  std::vector<std::string> out;
  for (const auto& [k, v] : headers)
    if (text::iequals(k, name)) out.push_back(v);
  return out;
}

inline std::optional<std::string> first_header(const HeaderList& headers, std::string_view name) {
  for (const auto& [k, v] : headers)
    if (text::iequals(k, name)) return v;
  return std::nullopt;
}

struct PageCapture {
  std::string url;
  bool loaded_over_tls = false;
  int status = 200;
  HeaderList response_headers;
  std::string body;
  std::vector<std::string> redirect_chain;

  bool operator==(const PageCapture&) const = default;
};

enum class TlsProtocol { SSLv2, SSLv3, TLSv1_0, TLSv1_1, TLSv1_2, TLSv1_3 };
enum class TlsVuln { heartbleed, ccs_injection, compression };

inline constexpr std::array<TlsProtocol, 6> kAllProtocols = {
    TlsProtocol::SSLv2,   TlsProtocol::SSLv3,   TlsProtocol::TLSv1_0,
    TlsProtocol::TLSv1_1, TlsProtocol::TLSv1_2, TlsProtocol::TLSv1_3};

inline std::string to_string(TlsProtocol p) {
  switch (p) {
    case TlsProtocol::SSLv2: return "SSLv2";
    case TlsProtocol::SSLv3: return "SSLv3";
    case TlsProtocol::TLSv1_0: return "TLSv1.0";
    case TlsProtocol::TLSv1_1: return "TLSv1.1";
    case TlsProtocol::TLSv1_2: return "TLSv1.2";
    case TlsProtocol::TLSv1_3: return "TLSv1.3";
  }
  return "?";
}

inline std::optional<TlsProtocol> parse_protocol(std::string_view s) {
  for (auto p : kAllProtocols)
    if (to_string(p) == s) return p;
  return std::nullopt;
}

inline std::string to_string(TlsVuln v) {
  switch (v) {
    case TlsVuln::heartbleed: return "heartbleed";
    case TlsVuln::ccs_injection: return "ccs_injection";
    case TlsVuln::compression: return "compression";
  }
  return "?";
}

inline std::optional<TlsVuln> parse_vuln(std::string_view s) {
  for (auto v : {TlsVuln::heartbleed, TlsVuln::ccs_injection, TlsVuln::compression})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// TLS facts for a domain. Vulnerability flags are supplied by external data,
/// never probed.
struct TlsInfo {
  bool has_tls = false;
  std::set<TlsProtocol> protocols_supported;
  std::set<TlsVuln> vuln_flags;

  bool operator==(const TlsInfo&) const = default;
};

enum class ProbeOutcome { closed, timeout, response };

inline std::string to_string(ProbeOutcome o) {
  switch (o) {
    case ProbeOutcome::closed: return "closed";
    case ProbeOutcome::timeout: return "timeout";
    case ProbeOutcome::response: return "response";
  }
  return "?";
}

/// One admin-panel probe: a port, or a shorthand path on 80/443.
struct PortProbe {
  int port = 0;
  std::string path = "/";
  ProbeOutcome outcome = ProbeOutcome::closed;
  std::optional<HeaderList> response_headers;  // present iff outcome == response
  std::optional<std::string> body_excerpt;
  std::vector<std::string> redirect_chain;

  bool operator==(const PortProbe&) const = default;
};

struct DomainRecord {
  std::string domain;
  std::string provider_id;
  std::vector<PageCapture> pages;
  std::vector<PortProbe> admin_probes;
  std::optional<std::string> ssh_banner;
  std::optional<TlsInfo> tls_info;

  bool operator==(const DomainRecord&) const = default;
};

inline constexpr std::size_t kDefaultPageLimit = 20;

// ---------------------------------------------------------------------------
// Software products and the patched-version table

enum class Product {
  apache, nginx, iis, openssh, php, wordpress, joomla, drupal,
  cpanel, plesk, directadmin, virtualmin
};

inline constexpr std::array<Product, 12> kAllProducts = {
    Product::apache,    Product::nginx,  Product::iis,    Product::openssh,
    Product::php,       Product::wordpress, Product::joomla, Product::drupal,
    Product::cpanel,    Product::plesk,  Product::directadmin, Product::virtualmin};

inline std::string to_string(Product p) {
  switch (p) {
    case Product::apache: return "apache";
    case Product::nginx: return "nginx";
    case Product::iis: return "iis";
    case Product::openssh: return "openssh";
    case Product::php: return "php";
    case Product::wordpress: return "wordpress";
    case Product::joomla: return "joomla";
    case Product::drupal: return "drupal";
    case Product::cpanel: return "cpanel";
    case Product::plesk: return "plesk";
    case Product::directadmin: return "directadmin";
    case Product::virtualmin: return "virtualmin";
  }
  return "?";
}

inline std::optional<Product> parse_product(std::string_view s) {
  auto l = text::to_lower(text::trim(s));
  for (auto p : kAllProducts)
    if (to_string(p) == l) return p;
  return std::nullopt;
}

struct PatchTable {
  std::map<Product, std::set<std::string>> entries;

  bool contains(Product p, const std::string& version) const {
    auto it = entries.find(p);
    return it != entries.end() && it->second.count(version) != 0;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [p, vs] : entries) n += vs.size();
    return n;
  }

  void add(Product p, std::string version) {
    if (version.empty()) throw InputError("patch table: empty version for " + to_string(p));
    entries[p].insert(std::move(version));
  }
};

/// Patched versions as of the November 2016 measurement (latest packaged
/// version in Ubuntu, Debian or CentOS). Mirrors data/patched_versions.csv.
inline const char* kDefaultPatchTableCsv = R"(software,version
apache,2.2.15
apache,2.2.22
apache,2.4.7
apache,2.4.10
apache,2.4.18
apache,2.4.20
apache,2.4.23
openssh,5.3p1
openssh,5.9p1
openssh,6.0p1
openssh,6.6p1
openssh,6.6.1p1
openssh,6.7p1
openssh,7.1p2
openssh,7.2p2
openssh,7.3
openssh,7.3p1
wordpress,4.7
wordpress,4.6.1
wordpress,4.5.4
wordpress,4.4.5
wordpress,4.3.6
wordpress,4.2.10
wordpress,4.1.13
wordpress,4.0.13
wordpress,3.9.14
wordpress,3.8.16
wordpress,3.7.16
joomla,3.6.4
drupal,7.52
drupal,8.2.3
cpanel,7.52
directadmin,1.50.1
virtualmin,1.820
plesk,12.5.30
plesk,17.0.16
iis,12
iis,10
iis,9
iis,8.5
nginx,1.2.1
nginx,1.4.6
nginx,1.10.0
nginx,1.10.1
nginx,1.10.3
nginx,1.11.5
php,5.3.10
php,5.3.3
php,5.4.45
php,5.5.9
php,5.6.27
php,5.6.28
php,6.6.30
php,7.0.11
php,7.0.12
php,7.0.13
)";

inline PatchTable parse_patch_table(std::istream& in, const std::string& context) {
  auto table = csv::read(in, context);
  auto sw = table.column("software");
  auto ver = table.column("version");
  PatchTable out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto where = context + ":" + std::to_string(table.line_numbers[r]);
    auto product = parse_product(row[sw]);
    if (!product)
      throw InputError(where + ": unknown software product '" + row[sw] + "' in row '" + row[sw] +
                       "," + row[ver] + "'");
    auto version = std::string(text::trim(row[ver]));
    if (version.empty()) throw InputError(where + ": empty version for " + row[sw]);
    out.add(*product, text::to_lower(version));
  }
  return out;
}

inline PatchTable load_patch_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open patch table '" + path + "'");
  return parse_patch_table(in, path);
}

inline PatchTable default_patch_table() {
  std::istringstream in(kDefaultPatchTableCsv);
  return parse_patch_table(in, "builtin-patch-table");
}

// ---------------------------------------------------------------------------
// Provider table

struct ProviderRow {
  std::string provider_id;
  std::int64_t ip_count = 0;
  std::int64_t domain_count = 0;
  std::int64_t phishing_count = 0;
  std::int64_t malware_count = 0;

  bool operator==(const ProviderRow&) const = default;
};

struct ProviderTable {
  std::map<std::string, ProviderRow> rows;
  /// Rows accepted but with a zero size metric (log transform guard applies).
  std::vector<std::string> flagged;

  const ProviderRow* find(const std::string& id) const {
    auto it = rows.find(id);
    return it == rows.end() ? nullptr : &it->second;
  }
};

inline ProviderTable parse_provider_table(std::istream& in, const std::string& context) {
  auto table = csv::read(in, context);
  auto c_id = table.column("provider_id");
  auto c_ip = table.column("ip_count");
  auto c_dom = table.column("domain_count");
  auto c_ph = table.column("phishing_count");
  auto c_mw = table.column("malware_count");
  ProviderTable out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto where = context + ":" + std::to_string(table.line_numbers[r]);
    ProviderRow p;
    p.provider_id = std::string(text::trim(row[c_id]));
    if (p.provider_id.empty()) throw InputError(where + ": empty provider_id");
    auto num = [&](std::size_t col, const char* name) {
      auto v = text::parse_int<std::int64_t>(row[col]);
      if (!v) throw InputError(where + ": " + name + " is not an integer: '" + row[col] + "'");
      if (*v < 0) throw InputError(where + ": negative " + name + " for provider " + p.provider_id);
      return *v;
    };
    p.ip_count = num(c_ip, "ip_count");
    p.domain_count = num(c_dom, "domain_count");
    p.phishing_count = num(c_ph, "phishing_count");
    p.malware_count = num(c_mw, "malware_count");
    if (out.rows.count(p.provider_id))
      throw InputError(where + ": duplicate provider_id " + p.provider_id);
    if (p.ip_count == 0 || p.domain_count == 0) out.flagged.push_back(p.provider_id);
    out.rows.emplace(p.provider_id, std::move(p));
  }
  return out;
}

inline ProviderTable load_provider_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open provider table '" + path + "'");
  return parse_provider_table(in, path);
}

inline void write_provider_table(std::ostream& out, const ProviderTable& table) {
  out << "provider_id,ip_count,domain_count,phishing_count,malware_count\n";
  for (const auto& [id, p] : table.rows)
    csv::write_row(out, {id, std::to_string(p.ip_count), std::to_string(p.domain_count),
                         std::to_string(p.phishing_count), std::to_string(p.malware_count)});
}

// ---------------------------------------------------------------------------
// Corpus (JSON Lines, one DomainRecord per line)

using nlohmann::json;

inline json headers_to_json(const HeaderList& headers) {
  json arr = json::array();
  for (const auto& [k, v] : headers) arr.push_back(json::array({k, v}));
  return arr;
}

inline json to_json(const DomainRecord& rec) {
  json j;
  j["domain"] = rec.domain;
  j["provider_id"] = rec.provider_id;
  json pages = json::array();
  for (const auto& p : rec.pages) {
    pages.push_back({{"url", p.url},
                     {"loaded_over_tls", p.loaded_over_tls},
                     {"status", p.status},
                     {"response_headers", headers_to_json(p.response_headers)},
                     {"body", p.body},
                     {"redirect_chain", p.redirect_chain}});
  }
  j["pages"] = std::move(pages);
  json probes = json::array();
  for (const auto& pr : rec.admin_probes) {
    json jp = {{"port", pr.port},
               {"path", pr.path},
               {"outcome", to_string(pr.outcome)},
               {"redirect_chain", pr.redirect_chain}};
    jp["response_headers"] = pr.response_headers ? headers_to_json(*pr.response_headers) : json();
    jp["body_excerpt"] = pr.body_excerpt ? json(*pr.body_excerpt) : json();
    probes.push_back(std::move(jp));
  }
  j["admin_probes"] = std::move(probes);
  j["ssh_banner"] = rec.ssh_banner ? json(*rec.ssh_banner) : json();
  if (rec.tls_info) {
    json protos = json::array();
    for (auto p : rec.tls_info->protocols_supported) protos.push_back(to_string(p));
    json vulns = json::array();
    for (auto v : rec.tls_info->vuln_flags) vulns.push_back(to_string(v));
    j["tls_info"] = {{"has_tls", rec.tls_info->has_tls},
                     {"protocols_supported", std::move(protos)},
                     {"vuln_flags", std::move(vulns)}};
  } else {
    j["tls_info"] = nullptr;
  }
  return j;
}

inline std::string to_line(const DomainRecord& rec) { return to_json(rec).dump(); }

namespace detail {

inline const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw InputError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError(where + ": missing field '" + key + "'");
  return *it;
}

inline std::string get_string(const json& obj, const char* key, const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_string()) throw InputError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline std::vector<std::string> get_strings(const json& obj, const char* key,
                                            const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_array()) throw InputError(where + ": field '" + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw InputError(where + ": field '" + key + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline HeaderList parse_headers(const json& v, const std::string& where) {
  if (!v.is_array()) throw InputError(where + ": response_headers must be an array");
  HeaderList out;
  for (const auto& e : v) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
      throw InputError(where + ": each header must be a [name, value] pair of strings");
    out.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  return out;
}

}  // namespace detail

/// Parses and validates one record. Throws InputError describing the violation.
inline DomainRecord from_json(const json& j, std::size_t page_limit = kDefaultPageLimit) {
  using namespace detail;
  DomainRecord rec;
  rec.domain = text::to_lower(get_string(j, "domain", "record"));
  if (rec.domain.empty()) throw InputError("record: empty domain");
  rec.provider_id = get_string(j, "provider_id", rec.domain);
  const std::string where = rec.domain;
  const auto registrable = url::registrable_domain(rec.domain);

  const auto& pages = field(j, "pages", where);
  if (!pages.is_array()) throw InputError(where + ": pages must be an array");
  if (pages.size() > page_limit)
    throw InputError(where + ": " + std::to_string(pages.size()) + " pages exceed page limit " +
                     std::to_string(page_limit));
  for (const auto& jp : pages) {
    PageCapture p;
    p.url = get_string(jp, "url", where);
    auto parsed = url::parse(p.url);
    if (!parsed) throw InputError(where + ": unparseable page URL " + p.url);
    if (url::registrable_domain(parsed->host) != registrable)
      throw InputError(where + ": page URL " + p.url + " is outside registrable domain " +
                       registrable);
    const auto& tls = field(jp, "loaded_over_tls", where);
    if (!tls.is_boolean()) throw InputError(where + ": loaded_over_tls must be a boolean");
    p.loaded_over_tls = tls.get<bool>();
    const auto& status = field(jp, "status", where);
    if (!status.is_number_integer()) throw InputError(where + ": status must be an integer");
    p.status = status.get<int>();
    if (p.status < 100 || p.status > 599)
      throw InputError(where + ": status " + std::to_string(p.status) + " outside [100, 599]");
    p.response_headers = parse_headers(field(jp, "response_headers", where), where);
    p.body = get_string(jp, "body", where);
    p.redirect_chain = get_strings(jp, "redirect_chain", where);
    rec.pages.push_back(std::move(p));
  }

  const auto& probes = field(j, "admin_probes", where);
  if (!probes.is_array()) throw InputError(where + ": admin_probes must be an array");
  for (const auto& jp : probes) {
    PortProbe pr;
    const auto& port = field(jp, "port", where);
    if (!port.is_number_integer() || port.get<int>() <= 0 || port.get<int>() > 65535)
      throw InputError(where + ": probe port must be an integer in [1, 65535]");
    pr.port = port.get<int>();
    if (jp.contains("path")) pr.path = get_string(jp, "path", where);
    auto outcome = get_string(jp, "outcome", where);
    if (outcome == "closed") pr.outcome = ProbeOutcome::closed;
    else if (outcome == "timeout") pr.outcome = ProbeOutcome::timeout;
    else if (outcome == "response") pr.outcome = ProbeOutcome::response;
    else throw InputError(where + ": unknown probe outcome '" + outcome + "'");
    const auto& hdrs = field(jp, "response_headers", where);
    if (!hdrs.is_null()) pr.response_headers = parse_headers(hdrs, where);
    if ((pr.outcome == ProbeOutcome::response) != pr.response_headers.has_value())
      throw InputError(where + ": probe on port " + std::to_string(pr.port) +
                       " must carry response_headers iff outcome is response");
    if (jp.contains("body_excerpt") && !jp["body_excerpt"].is_null())
      pr.body_excerpt = get_string(jp, "body_excerpt", where);
    if (jp.contains("redirect_chain")) pr.redirect_chain = get_strings(jp, "redirect_chain", where);
    rec.admin_probes.push_back(std::move(pr));
  }

  const auto& banner = field(j, "ssh_banner", where);
  if (!banner.is_null()) {
    if (!banner.is_string()) throw InputError(where + ": ssh_banner must be a string or null");
    rec.ssh_banner = banner.get<std::string>();
  }

  const auto& tls = field(j, "tls_info", where);
  if (!tls.is_null()) {
    TlsInfo info;
    const auto& has = field(tls, "has_tls", where);
    if (!has.is_boolean()) throw InputError(where + ": has_tls must be a boolean");
    info.has_tls = has.get<bool>();
    for (const auto& s : get_strings(tls, "protocols_supported", where)) {
      auto p = parse_protocol(s);
      if (!p) throw InputError(where + ": unknown TLS protocol '" + s + "'");
      info.protocols_supported.insert(*p);
    }
    for (const auto& s : get_strings(tls, "vuln_flags", where)) {
      auto v = parse_vuln(s);
      if (!v) throw InputError(where + ": unknown TLS vulnerability flag '" + s + "'");
      info.vuln_flags.insert(*v);
    }
    if (!info.has_tls && !info.vuln_flags.empty())
      throw InputError(where + ": vuln_flags must be empty when has_tls is false");
    rec.tls_info = std::move(info);
  }
  return rec;
}

inline DomainRecord from_line(std::string_view line, std::size_t page_limit = kDefaultPageLimit) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed JSON: ") + e.what());
  }
  return from_json(j, page_limit);
}

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct CorpusLoad {
  std::vector<DomainRecord> records;
  std::vector<LineError> errors;
};

/// Streams a corpus; invalid lines are reported and skipped, valid ones kept.
inline CorpusLoad read_corpus(std::istream& in, std::size_t page_limit = kDefaultPageLimit) {
  CorpusLoad out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.records.push_back(from_line(line, page_limit));
    } catch (const InputError& e) {
      out.errors.push_back({lineno, e.what()});
    }
  }
  return out;
}

inline CorpusLoad load_corpus(const std::string& path, std::size_t page_limit = kDefaultPageLimit) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus '" + path + "'");
  return read_corpus(in, page_limit);
}

inline void write_corpus(std::ostream& out, const std::vector<DomainRecord>& records) {
  for (const auto& r : records) out << to_line(r) << '\n';
}

}  // namespace hostsec::corpus
