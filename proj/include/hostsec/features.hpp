#pragma once

// Turns a DomainRecord into the 15 security/patching indicators: nine
// directional booleans and six ordinal patch codes
// (0 = unpatched, 1 = patched or version hidden, 2 = software absent).

#include <array>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hostsec/common.hpp"
#include "hostsec/corpus.hpp"
#include "hostsec/csv.hpp"
#include "hostsec/html.hpp"
#include "hostsec/url.hpp"

namespace hostsec::features {

using corpus::DomainRecord;
using corpus::PageCapture;
using corpus::PortProbe;
using corpus::Product;

inline constexpr std::size_t kFeatureCount = 15;

/// Column order of the indicator table: header/content booleans first, then
/// the six software ordinals.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "x_content_type_options", "csp",        "x_frame_options", "hsts",
    "mixed_content",          "weak_xss_protection", "ssl_stripping_form",
    "httponly_cookie",        "secure_cookie",       "http_server",
    "ssl_impl",               "ssh",        "php",             "cms",
    "admin_panel"};

/// +1 for indicators pointing to more security, -1 for the three negative ones,
/// 0 for the ordinals (already scaled least to most secure).
inline constexpr std::array<int, kFeatureCount> kFeatureDirection = {
    +1, +1, +1, +1, -1, -1, -1, +1, +1, 0, 0, 0, 0, 0, 0};

inline constexpr std::array<int, kFeatureCount> kCategoryCounts = {
    2, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3};

inline bool is_ordinal(std::size_t column) { return kCategoryCounts[column] == 3; }

struct FeatureVector {
  bool csp = false;
  bool x_frame_options = false;
  bool x_content_type_options = false;
  bool hsts = false;
  bool httponly_cookie = false;
  bool secure_cookie = false;
  bool weak_xss_protection = false;
  bool mixed_content = false;
  bool ssl_stripping_form = false;
  int http_server = 2;
  int ssl_impl = 2;
  int ssh = 2;
  int php = 2;
  int cms = 2;
  int admin_panel = 2;

  /// Values in kFeatureNames order.
  std::array<int, kFeatureCount> values() const {
    return {x_content_type_options, csp, x_frame_options, hsts, mixed_content,
            weak_xss_protection, ssl_stripping_form, httponly_cookie, secure_cookie,
            http_server, ssl_impl, ssh, php, cms, admin_panel};
  }

  static FeatureVector from_values(const std::array<int, kFeatureCount>& v) {
    FeatureVector f;
    f.x_content_type_options = v[0] != 0;
    f.csp = v[1] != 0;
    f.x_frame_options = v[2] != 0;
    f.hsts = v[3] != 0;
    f.mixed_content = v[4] != 0;
    f.weak_xss_protection = v[5] != 0;
    f.ssl_stripping_form = v[6] != 0;
    f.httponly_cookie = v[7] != 0;
    f.secure_cookie = v[8] != 0;
    f.http_server = v[9];
    f.ssl_impl = v[10];
    f.ssh = v[11];
    f.php = v[12];
    f.cms = v[13];
    f.admin_panel = v[14];
    return f;
  }

  bool operator==(const FeatureVector&) const = default;
};

enum class Evidence { basic_scan, comprehensive_scan, header, banner, probe };

inline std::string to_string(Evidence e) {
  switch (e) {
    case Evidence::basic_scan: return "basic_scan";
    case Evidence::comprehensive_scan: return "comprehensive_scan";
    case Evidence::header: return "header";
    case Evidence::banner: return "banner";
    case Evidence::probe: return "probe";
  }
  return "?";
}

struct SoftwareFingerprint {
  std::optional<Product> product;
  std::optional<std::string> version;  // only with a product
  std::optional<Evidence> evidence;

  bool operator==(const SoftwareFingerprint&) const = default;
};

/// Counters and notes gathered while extracting; optional everywhere.
struct Diagnostics {
  std::size_t parse_warnings = 0;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Version strings

/// Normalises a raw version token: leading "v" dropped, cut at the first
/// character outside [0-9A-Za-z.] (space, parenthesis, '-', '+', '~', ...),
/// lower-cased. OpenSSH "pN" suffixes survive. IIS trailing ".0" groups are
/// dropped ("10.0" -> "10"). Major-only CMS versions count as hidden.
inline std::optional<std::string> normalize_version(std::string_view raw, Product product) {
  auto s = text::trim(raw);
  if (s.size() > 1 && (s[0] == 'v' || s[0] == 'V') && std::isdigit(static_cast<unsigned char>(s[1])))
    s.remove_prefix(1);
  if (s.empty() || !std::isdigit(static_cast<unsigned char>(s[0]))) return std::nullopt;
  std::string v;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.') v.push_back(text::lower(c));
    else break;
  }
  while (!v.empty() && v.back() == '.') v.pop_back();
  if (product == Product::iis) {
    while (v.size() > 2 && v.compare(v.size() - 2, 2, ".0") == 0) v.resize(v.size() - 2);
  }
  if ((product == Product::wordpress || product == Product::joomla || product == Product::drupal) &&
      v.find('.') == std::string::npos)
    return std::nullopt;
  if (v.empty()) return std::nullopt;
  return v;
}

/// First version-looking token at or after `from` (digits, dots, letters).
inline std::optional<std::string> version_after(std::string_view s, std::size_t from,
                                                Product product, std::size_t window = 40) {
  auto end = std::min(s.size(), from + window);
  for (std::size_t i = from; i < end; ++i) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      if (i > 0 && std::isalnum(static_cast<unsigned char>(s[i - 1])) && s[i - 1] != 'v' &&
          s[i - 1] != 'V')
        continue;
      return normalize_version(s.substr(i), product);
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Header and content indicators

struct HeaderIndicators {
  bool csp = false;
  bool x_frame_options = false;
  bool x_content_type_options = false;
  bool hsts = false;
  bool httponly_cookie = false;
  bool secure_cookie = false;
  bool weak_xss_protection = false;

  bool operator==(const HeaderIndicators&) const = default;
};

/// True iff the cookie carries attribute `attr` (not as part of its name=value).
inline bool cookie_has_attribute(std::string_view set_cookie, std::string_view attr) {
  auto parts = text::split(set_cookie, ';');
  for (std::size_t i = 1; i < parts.size(); ++i) {
    auto p = text::trim(parts[i]);
    auto eq = p.find('=');
    if (text::iequals(text::trim(p.substr(0, eq)), attr)) return true;
  }
  return false;
}

/// X-XSS-Protection disables the browser filter when its mode token is 0.
inline bool xss_protection_disabled(std::string_view value) {
  auto mode = text::trim(value.substr(0, value.find(';')));
  return mode == "0";
}

inline HeaderIndicators extract_header_indicators(const std::vector<PageCapture>& pages) {
  HeaderIndicators h;
  for (const auto& page : pages) {
    for (const auto& [name, value] : page.response_headers) {
      if (text::iequals(name, "Content-Security-Policy")) h.csp = true;
      else if (text::iequals(name, "X-Frame-Options")) h.x_frame_options = true;
      else if (text::iequals(name, "X-Content-Type-Options")) h.x_content_type_options = true;
      else if (text::iequals(name, "Strict-Transport-Security")) h.hsts = true;
      else if (text::iequals(name, "X-XSS-Protection")) {
        if (xss_protection_disabled(value)) h.weak_xss_protection = true;
      } else if (text::iequals(name, "Set-Cookie")) {
        if (cookie_has_attribute(value, "HttpOnly")) h.httponly_cookie = true;
        if (cookie_has_attribute(value, "Secure")) h.secure_cookie = true;
      }
    }
  }
  return h;
}

namespace detail {

inline bool explicit_http(std::string_view ref) {
  return text::istarts_with(text::trim(ref), "http://");
}

inline bool is_stylesheet(const html::Tag& tag) {
  auto rel = tag.attr("rel");
  if (!rel) return false;
  for (auto& tok : text::split_list(*rel, ' '))
    if (text::iequals(tok, "stylesheet")) return true;
  return false;
}

}  // namespace detail

/// TLS page that pulls a script, stylesheet or image over explicit http://.
inline bool detect_mixed_content(const PageCapture& page, Diagnostics* diag = nullptr) {
  if (!page.loaded_over_tls) return false;
  auto scanned = html::scan(page.body);
  if (scanned.malformed) {
    if (diag) ++diag->parse_warnings;
    return false;
  }
  for (const auto& tag : scanned.tags) {
    const std::string* ref = nullptr;
    if (tag.name == "script" || tag.name == "img") ref = tag.attr("src");
    else if (tag.name == "link" && detail::is_stylesheet(tag)) ref = tag.attr("href");
    if (ref && detail::explicit_http(*ref)) return true;
  }
  return false;
}

/// Plain-http page with a form whose action resolves to an https:// endpoint.
inline bool detect_ssl_stripping_form(const PageCapture& page, Diagnostics* diag = nullptr) {
  if (page.loaded_over_tls) return false;
  auto base = url::parse(page.url);
  auto scanned = html::scan(page.body);
  if (scanned.malformed) {
    if (diag) ++diag->parse_warnings;
    return false;
  }
  for (const auto& tag : scanned.tags) {
    if (tag.name != "form") continue;
    auto action = tag.attr("action");
    if (!action) continue;
    std::optional<url::Url> target;
    if (base) target = url::resolve(*base, *action);
    else target = url::parse(*action);
    if (target && target->scheme == "https") return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// CMS fingerprinting

enum class RuleTarget { body, url, header };

struct CmsRule {
  Product product = Product::wordpress;
  RuleTarget target = RuleTarget::body;
  std::string header_name;  // for RuleTarget::header
  std::string pattern;      // case-insensitive substring; empty matches presence
};

struct CmsRuleSet {
  int format = 1;
  std::string revision;
  std::vector<CmsRule> rules;
};

inline const char* kDefaultCmsRules = R"(# CMS presence signatures for the comprehensive scan.
# Each rule: <product> <target> <pattern>
#   target: body | url | header:<Header-Name>
#   pattern: case-insensitive substring (rest of line)
format 1
revision 2016.11-1

wordpress body /wp-content/
wordpress body /wp-includes/
wordpress body wp-emoji-release.min.js
wordpress body /xmlrpc.php
wordpress header:Link /wp-json/
wordpress header:Link rel=shortlink
wordpress url /wp-login.php

joomla body /media/jui/
joomla body /media/system/js/
joomla body /components/com_
joomla body option=com_
joomla body joomla-script-options
joomla url /administrator/

drupal body drupal.settings
drupal body data-drupal-selector
drupal body /sites/default/files/
drupal body /misc/drupal.js
drupal body /core/misc/drupal.js
drupal header:X-Generator drupal
drupal header:X-Drupal-Cache
drupal header:X-Drupal-Dynamic-Cache
)";

inline CmsRuleSet parse_cms_rules(std::istream& in, const std::string& context) {
  CmsRuleSet set;
  std::string line;
  std::size_t lineno = 0;
  bool saw_format = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto where = context + ":" + std::to_string(lineno);
    auto sp = t.find_first_of(" \t");
    auto head = t.substr(0, sp);
    auto rest = sp == std::string_view::npos ? std::string_view{} : text::trim(t.substr(sp));
    if (head == "format") {
      auto v = text::parse_int<int>(rest);
      if (!v || *v != 1) throw InputError(where + ": unsupported rule format");
      set.format = *v;
      saw_format = true;
      continue;
    }
    if (head == "revision") {
      set.revision = std::string(rest);
      continue;
    }
    auto product = corpus::parse_product(head);
    if (!product || (*product != Product::wordpress && *product != Product::joomla &&
                     *product != Product::drupal))
      throw InputError(where + ": unknown CMS product '" + std::string(head) + "'");
    auto sp2 = rest.find_first_of(" \t");
    auto target = rest.substr(0, sp2);
    auto pattern = sp2 == std::string_view::npos ? std::string_view{} : text::trim(rest.substr(sp2));
    CmsRule rule;
    rule.product = *product;
    rule.pattern = std::string(pattern);
    if (target == "body") rule.target = RuleTarget::body;
    else if (target == "url") rule.target = RuleTarget::url;
    else if (text::istarts_with(target, "header:") && target.size() > 7) {
      rule.target = RuleTarget::header;
      rule.header_name = std::string(target.substr(7));
    } else {
      throw InputError(where + ": unknown rule target '" + std::string(target) + "'");
    }
    if (rule.pattern.empty() && rule.target != RuleTarget::header)
      throw InputError(where + ": empty pattern");
    set.rules.push_back(std::move(rule));
  }
  if (!saw_format) throw InputError(context + ": missing 'format' line");
  return set;
}

inline CmsRuleSet load_cms_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open rule file '" + path + "'");
  return parse_cms_rules(in, path);
}

inline const CmsRuleSet& default_cms_rules() {
  static const CmsRuleSet rules = [] {
    std::istringstream in(kDefaultCmsRules);
    return parse_cms_rules(in, "builtin-cms-rules");
  }();
  return rules;
}

/// Basic pass reads <meta name="generator">; the comprehensive pass counts rule
/// hits per product and establishes presence without a version.
inline SoftwareFingerprint fingerprint_cms(const std::vector<PageCapture>& pages,
                                           const CmsRuleSet& rules = default_cms_rules(),
                                           Diagnostics* diag = nullptr) {
  constexpr std::array<std::pair<Product, std::string_view>, 3> kGenerators = {
      {{Product::wordpress, "wordpress"}, {Product::joomla, "joomla"}, {Product::drupal, "drupal"}}};

  std::vector<html::ScanResult> scans;
  scans.reserve(pages.size());
  for (const auto& page : pages) {
    scans.push_back(html::scan(page.body));
    if (scans.back().malformed && diag) ++diag->parse_warnings;
  }

  std::optional<SoftwareFingerprint> unversioned;
  for (const auto& scanned : scans) {
    for (const auto& tag : scanned.tags) {
      if (tag.name != "meta") continue;
      auto name = tag.attr("name");
      auto content = tag.attr("content");
      if (!name || !content || !text::iequals(text::trim(*name), "generator")) continue;
      for (auto [product, keyword] : kGenerators) {
        auto pos = text::ifind(*content, keyword);
        if (pos == std::string::npos) continue;
        auto version = version_after(*content, pos + keyword.size(), product);
        SoftwareFingerprint fp{product, version, Evidence::basic_scan};
        if (version) return fp;
        if (!unversioned) unversioned = fp;
      }
    }
  }
  if (unversioned) return *unversioned;

  std::array<int, 3> hits{0, 0, 0};
  auto slot = [](Product p) { return p == Product::wordpress ? 0 : p == Product::joomla ? 1 : 2; };
  for (const auto& rule : rules.rules) {
    bool matched = false;
    for (const auto& page : pages) {
      switch (rule.target) {
        case RuleTarget::body: matched = text::icontains(page.body, rule.pattern); break;
        case RuleTarget::url: {
          matched = text::icontains(page.url, rule.pattern);
          for (const auto& u : page.redirect_chain) matched = matched || text::icontains(u, rule.pattern);
          break;
        }
        case RuleTarget::header:
          for (const auto& v : corpus::header_values(page.response_headers, rule.header_name))
            matched = matched || rule.pattern.empty() || text::icontains(v, rule.pattern);
          break;
      }
      if (matched) break;
    }
    if (matched) ++hits[slot(rule.product)];
  }
  int best = -1;
  for (int i = 0; i < 3; ++i)
    if (hits[i] > 0 && (best < 0 || hits[i] > hits[best])) best = i;
  if (best < 0) return {};
  return {kGenerators[best].first, std::nullopt, Evidence::comprehensive_scan};
}

// ---------------------------------------------------------------------------
// Admin panels

/// Rule table over admin-probe responses. Headers identify (and often
/// version) a panel; body text and redirect targets establish presence.
inline SoftwareFingerprint fingerprint_admin_panel(const std::vector<PortProbe>& probes) {
  struct HeaderSig {
    Product product;
    std::string_view header;
    std::string_view token;  // case-insensitive; version read right after it
  };
  constexpr std::array<HeaderSig, 7> kHeaderSigs = {{
      {Product::cpanel, "Server", "cpsrvd"},
      {Product::directadmin, "Server", "DirectAdmin"},
      {Product::virtualmin, "Server", "MiniServ"},
      {Product::plesk, "Server", "sw-cp-server"},
      {Product::plesk, "X-Powered-By", "Plesk"},
      {Product::cpanel, "Server", "cPanel"},
      {Product::virtualmin, "Server", "Virtualmin"},
  }};
  struct BodySig {
    Product product;
    std::string_view marker;
  };
  constexpr std::array<BodySig, 5> kBodySigs = {{
      {Product::cpanel, "cPanel"},
      {Product::plesk, "Plesk"},
      {Product::directadmin, "DirectAdmin"},
      {Product::virtualmin, "Virtualmin"},
      {Product::virtualmin, "Webmin"},
  }};
  struct RedirectSig {
    Product product;
    std::string_view fragment;
  };
  constexpr std::array<RedirectSig, 8> kRedirectSigs = {{
      {Product::cpanel, ":2083"},
      {Product::cpanel, ":2082"},
      {Product::cpanel, "/cpanel"},
      {Product::plesk, ":8443"},
      {Product::plesk, "/login_up.php"},
      {Product::directadmin, ":2222"},
      {Product::virtualmin, ":10000"},
      {Product::virtualmin, "/virtualmin"},
  }};

  std::optional<SoftwareFingerprint> first;
  for (const auto& probe : probes) {
    if (probe.outcome != corpus::ProbeOutcome::response) continue;
    const auto& headers = probe.response_headers ? *probe.response_headers : corpus::HeaderList{};
    for (const auto& sig : kHeaderSigs) {
      for (const auto& value : corpus::header_values(headers, sig.header)) {
        auto pos = text::ifind(value, sig.token);
        if (pos == std::string::npos) continue;
        auto version = version_after(value, pos + sig.token.size(), sig.product, 16);
        SoftwareFingerprint fp{sig.product, version, Evidence::header};
        if (version) return fp;
        if (!first) first = fp;
      }
    }
    if (probe.body_excerpt) {
      for (const auto& sig : kBodySigs) {
        auto pos = text::ifind(*probe.body_excerpt, sig.marker);
        if (pos == std::string::npos) continue;
        auto version = version_after(*probe.body_excerpt, pos + sig.marker.size(), sig.product, 24);
        SoftwareFingerprint fp{sig.product, version, Evidence::probe};
        if (version) return fp;
        if (!first) first = fp;
      }
    }
    for (const auto& sig : kRedirectSigs) {
      for (const auto& u : probe.redirect_chain) {
        if (text::icontains(u, sig.fragment) && !first)
          first = SoftwareFingerprint{sig.product, std::nullopt, Evidence::probe};
      }
    }
  }
  return first.value_or(SoftwareFingerprint{});
}

// ---------------------------------------------------------------------------
// Server stack: HTTP server, PHP, SSH

struct StackFingerprint {
  SoftwareFingerprint http;
  SoftwareFingerprint php;
  SoftwareFingerprint ssh;
};

namespace detail {

/// Splits "Name/1.2.3" into (name, version-part).
inline std::pair<std::string_view, std::string_view> split_product_token(std::string_view token) {
  auto slash = token.find('/');
  if (slash == std::string_view::npos) return {token, {}};
  return {token.substr(0, slash), token.substr(slash + 1)};
}

inline std::optional<SoftwareFingerprint> php_from_token(std::string_view token) {
  auto [name, ver] = split_product_token(token);
  if (!text::iequals(name, "php")) return std::nullopt;
  return SoftwareFingerprint{Product::php, normalize_version(ver, Product::php), Evidence::header};
}

}  // namespace detail

inline SoftwareFingerprint parse_server_header(std::string_view value, Diagnostics* diag = nullptr) {
  auto tokens = text::split_list(value, ' ');
  if (tokens.empty()) return {};
  auto [name, ver] = detail::split_product_token(tokens.front());
  std::optional<Product> product;
  if (text::iequals(name, "apache")) product = Product::apache;
  else if (text::iequals(name, "nginx")) product = Product::nginx;
  else if (text::iequals(name, "microsoft-iis")) product = Product::iis;
  if (!product) {
    if (diag) diag->warnings.push_back("unrecognized server software '" + std::string(value) + "'");
    return {};
  }
  return {product, normalize_version(ver, *product), Evidence::header};
}

inline SoftwareFingerprint parse_ssh_banner(std::string_view banner) {
  auto b = text::trim(banner);
  if (!text::istarts_with(b, "SSH-")) return {};
  auto dash = b.find('-', 4);
  if (dash == std::string_view::npos) return {};
  auto software = b.substr(dash + 1);
  if (!text::istarts_with(software, "OpenSSH")) return {};
  auto rest = software.substr(7);
  std::optional<std::string> version;
  if (!rest.empty() && (rest.front() == '_' || rest.front() == '-'))
    version = normalize_version(rest.substr(1), Product::openssh);
  return {Product::openssh, version, Evidence::banner};
}

inline StackFingerprint fingerprint_stack(const std::vector<PageCapture>& pages,
                                          const std::optional<std::string>& ssh_banner,
                                          Diagnostics* diag = nullptr) {
  StackFingerprint out;
  for (const auto& page : pages) {
    if (auto server = corpus::first_header(page.response_headers, "Server")) {
      out.http = parse_server_header(*server, diag);
      break;
    }
  }
  bool php_found = false;
  for (const auto& page : pages) {
    for (const auto& v : corpus::header_values(page.response_headers, "X-Powered-By")) {
      for (const auto& tok : text::split_list(v, ' ')) {
        if (auto fp = detail::php_from_token(tok)) {
          out.php = *fp;
          php_found = true;
          break;
        }
      }
      if (php_found) break;
    }
    if (php_found) break;
  }
  if (!php_found) {
    for (const auto& page : pages) {
      for (const auto& v : corpus::header_values(page.response_headers, "Server")) {
        for (const auto& tok : text::split_list(v, ' ')) {
          if (auto fp = detail::php_from_token(tok)) {
            out.php = *fp;
            php_found = true;
            break;
          }
        }
        if (php_found) break;
      }
      if (php_found) break;
    }
  }
  if (ssh_banner) out.ssh = parse_ssh_banner(*ssh_banner);
  return out;
}

// ---------------------------------------------------------------------------
// Ordinal coding

inline int classify_patch_status(const SoftwareFingerprint& fp, const corpus::PatchTable& table) {
  if (!fp.product) return 2;
  if (!fp.version) return 1;
  return table.contains(*fp.product, *fp.version) ? 1 : 0;
}

/// Insecure (0) on SSLv2/SSLv3 support or any supplied vulnerability flag.
inline int classify_ssl(const std::optional<corpus::TlsInfo>& tls) {
  if (!tls || !tls->has_tls) return 2;
  if (tls->protocols_supported.count(corpus::TlsProtocol::SSLv2) ||
      tls->protocols_supported.count(corpus::TlsProtocol::SSLv3) || !tls->vuln_flags.empty())
    return 0;
  return 1;
}

inline FeatureVector build_feature_vector(const DomainRecord& rec, const corpus::PatchTable& table,
                                          const CmsRuleSet& rules = default_cms_rules(),
                                          Diagnostics* diag = nullptr) {
  if (rec.pages.empty()) throw InputError(rec.domain + ": undescribable domain (no pages)");
  FeatureVector f;
  auto h = extract_header_indicators(rec.pages);
  f.csp = h.csp;
  f.x_frame_options = h.x_frame_options;
  f.x_content_type_options = h.x_content_type_options;
  f.hsts = h.hsts;
  f.httponly_cookie = h.httponly_cookie;
  f.secure_cookie = h.secure_cookie;
  f.weak_xss_protection = h.weak_xss_protection;
  for (const auto& page : rec.pages) {
    f.mixed_content = f.mixed_content || detect_mixed_content(page, diag);
    f.ssl_stripping_form = f.ssl_stripping_form || detect_ssl_stripping_form(page, diag);
  }
  auto stack = fingerprint_stack(rec.pages, rec.ssh_banner, diag);
  f.http_server = classify_patch_status(stack.http, table);
  f.php = classify_patch_status(stack.php, table);
  f.ssh = classify_patch_status(stack.ssh, table);
  f.ssl_impl = classify_ssl(rec.tls_info);
  f.cms = classify_patch_status(fingerprint_cms(rec.pages, rules, diag), table);
  f.admin_panel = classify_patch_status(fingerprint_admin_panel(rec.admin_probes), table);
  return f;
}

// ---------------------------------------------------------------------------
// features.csv

struct FeatureRow {
  std::string domain;
  std::string provider_id;
  FeatureVector features;

  bool operator==(const FeatureRow&) const = default;
};

inline std::vector<std::string> feature_csv_header() {
  std::vector<std::string> h = {"domain", "provider_id"};
  for (auto n : kFeatureNames) h.emplace_back(n);
  return h;
}

inline void write_features(std::ostream& out, const std::vector<FeatureRow>& rows) {
  csv::write_row(out, feature_csv_header());
  for (const auto& r : rows) {
    std::vector<std::string> fields = {r.domain, r.provider_id};
    for (int v : r.features.values()) fields.push_back(std::to_string(v));
    csv::write_row(out, fields);
  }
}

inline std::vector<FeatureRow> read_features(std::istream& in, const std::string& context) {
  auto table = csv::read(in, context);
  auto c_dom = table.column("domain");
  auto c_prov = table.column("provider_id");
  std::array<std::size_t, kFeatureCount> cols{};
  for (std::size_t k = 0; k < kFeatureCount; ++k) cols[k] = table.column(kFeatureNames[k]);
  std::vector<FeatureRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    std::array<int, kFeatureCount> v{};
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      auto x = text::parse_int<int>(row[cols[k]]);
      if (!x || *x < 0 || *x >= kCategoryCounts[k])
        throw InputError(context + ":" + std::to_string(table.line_numbers[r]) + ": invalid " +
                         std::string(kFeatureNames[k]) + " value '" + row[cols[k]] + "'");
      v[k] = *x;
    }
    rows.push_back({row[c_dom], row[c_prov], FeatureVector::from_values(v)});
  }
  return rows;
}

inline std::vector<FeatureRow> load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open features file '" + path + "'");
  return read_features(in, path);
}

}  // namespace hostsec::features
