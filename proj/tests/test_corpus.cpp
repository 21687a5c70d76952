#include <catch_amalgamated.hpp>

#include <sstream>

#include "hostsec/corpus.hpp"
#include "hostsec/features.hpp"

using namespace hostsec;
using namespace hostsec::corpus;

namespace {

DomainRecord sample_record() {
  DomainRecord r;
  r.domain = "example.com";
  r.provider_id = "AS64500";
  PageCapture home;
  home.url = "https://www.example.com/";
  home.loaded_over_tls = true;
  home.response_headers = {{"Server", "nginx/1.10.3"}, {"Set-Cookie", "a=1; HttpOnly"}, {"Set-Cookie", "b=2"}};
  home.body = "<html>\"quoted\" \xc3\xa9 \n\t</html>";
  home.redirect_chain = {"https://www.example.com/"};
  PageCapture about;
  about.url = "http://example.com/about?x=1";
  about.status = 404;
  r.pages = {home, about};
  PortProbe open;
  open.port = 2083;
  open.outcome = ProbeOutcome::response;
  open.response_headers = HeaderList{{"Server", "cpsrvd/11.60.0.24"}};
  open.body_excerpt = "cPanel";
  PortProbe closed;
  closed.port = 8443;
  PortProbe path;
  path.port = 80;
  path.path = "/panel/";
  path.outcome = ProbeOutcome::timeout;
  r.admin_probes = {open, closed, path};
  r.ssh_banner = "SSH-2.0-OpenSSH_7.2p2 Ubuntu-4ubuntu2.1";
  TlsInfo t;
  t.has_tls = true;
  t.protocols_supported = {TlsProtocol::TLSv1_2, TlsProtocol::SSLv3};
  t.vuln_flags = {TlsVuln::heartbleed};
  r.tls_info = t;
  return r;
}

std::string mutate(const std::function<void(nlohmann::json&)>& fn) {
  auto j = to_json(sample_record());
  fn(j);
  return j.dump();
}

}  // namespace

TEST_CASE("domain record JSON round trip", "[corpus]") {
  auto r = sample_record();
  auto line = to_line(r);
  CHECK(line.find('\n') == std::string::npos);
  auto back = from_line(line);
  CHECK(back == r);
  // Header order and duplicates survive.
  REQUIRE(back.pages[0].response_headers.size() == 3);
  CHECK(back.pages[0].response_headers[2].first == "Set-Cookie");
  CHECK(header_values(back.pages[0].response_headers, "set-cookie").size() == 2);
  CHECK(first_header(back.pages[0].response_headers, "SERVER") == "nginx/1.10.3");
  CHECK_FALSE(first_header(back.pages[1].response_headers, "Server"));

  DomainRecord bare;
  bare.domain = "bare.test";
  bare.pages.push_back({"http://bare.test/", false, 200, {}, "", {}});
  CHECK(from_line(to_line(bare)) == bare);
  CHECK(to_json(bare)["tls_info"].is_null());
  CHECK(to_json(bare)["ssh_banner"].is_null());

  // Probe without a path field defaults to "/".
  auto j = to_json(r);
  j["admin_probes"][1].erase("path");
  CHECK(from_json(j).admin_probes[1].path == "/");
}

TEST_CASE("domain record validation", "[corpus]") {
  using Catch::Matchers::ContainsSubstring;
  CHECK_THROWS_WITH(from_line("{not json"), ContainsSubstring("malformed JSON"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j.erase("pages"); })), ContainsSubstring("pages"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["pages"][0]["url"] = "http://evil.test/"; })),
                    ContainsSubstring("outside registrable domain"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["pages"][0]["status"] = 700; })),
                    ContainsSubstring("700"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["pages"][0]["loaded_over_tls"] = "yes"; })),
                    ContainsSubstring("boolean"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["pages"][0]["response_headers"] = {{"A"}}; })),
                    ContainsSubstring("pair"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["admin_probes"][0]["response_headers"] = nullptr; })),
                    ContainsSubstring("iff"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["admin_probes"][1]["response_headers"] = nlohmann::json::array(); })),
                    ContainsSubstring("iff"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["admin_probes"][0]["outcome"] = "open"; })),
                    ContainsSubstring("open"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["admin_probes"][0]["port"] = 70000; })),
                    ContainsSubstring("port"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["tls_info"]["protocols_supported"] = {"TLSv9"}; })),
                    ContainsSubstring("TLSv9"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["tls_info"]["has_tls"] = false; })),
                    ContainsSubstring("vuln_flags"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["ssh_banner"] = 5; })), ContainsSubstring("ssh_banner"));
  CHECK_THROWS_WITH(from_line(mutate([](auto& j) { j["domain"] = ""; })), ContainsSubstring("empty domain"));

  // Page limit.
  auto many = sample_record();
  many.pages.resize(21, many.pages[1]);
  CHECK_THROWS_WITH(from_line(to_line(many)), ContainsSubstring("page limit"));
  CHECK_NOTHROW(from_line(to_line(many), 21));
}

TEST_CASE("corpus streaming keeps good lines and reports bad ones", "[corpus]") {
  auto good = to_line(sample_record());
  std::istringstream in(good + "\n\n{\"domain\": 1}\n" + good + "\n");
  auto load = read_corpus(in);
  CHECK(load.records.size() == 2);
  REQUIRE(load.errors.size() == 1);
  CHECK(load.errors[0].line == 3);

  std::ostringstream out;
  write_corpus(out, load.records);
  std::istringstream again(out.str());
  auto reload = read_corpus(again);
  CHECK(reload.errors.empty());
  CHECK(reload.records == load.records);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), InputError);
}

TEST_CASE("enum spellings", "[corpus]") {
  for (auto p : kAllProtocols) CHECK(parse_protocol(to_string(p)) == p);
  CHECK(to_string(TlsProtocol::TLSv1_2) == "TLSv1.2");
  CHECK(to_string(TlsProtocol::SSLv3) == "SSLv3");
  for (auto v : {TlsVuln::heartbleed, TlsVuln::ccs_injection, TlsVuln::compression})
    CHECK(parse_vuln(to_string(v)) == v);
  for (auto p : kAllProducts) CHECK(parse_product(to_string(p)) == p);
  CHECK(parse_product(" WordPress ") == Product::wordpress);
  CHECK_FALSE(parse_product("typo3"));
}

TEST_CASE("shipped patch table matches the built-in one", "[corpus]") {
  auto builtin = default_patch_table();
  auto file = load_patch_table(HOSTSEC_SOURCE_DIR "/data/patched_versions.csv");
  CHECK(file.entries == builtin.entries);
  CHECK(builtin.size() == 56);
  CHECK(builtin.contains(Product::wordpress, "4.7"));
  CHECK_FALSE(builtin.contains(Product::wordpress, "4.6.0"));
  CHECK(builtin.contains(Product::nginx, "1.10.3"));
  CHECK(builtin.contains(Product::apache, "2.4.18"));
  CHECK(builtin.contains(Product::openssh, "6.6.1p1"));
  CHECK(builtin.contains(Product::directadmin, "1.50.1"));
  CHECK(builtin.contains(Product::iis, "8.5"));
  for (auto p : kAllProducts) CHECK_FALSE(builtin.entries[p].empty());

  std::istringstream bad("software,version\ntypo3,1.0\n");
  CHECK_THROWS_WITH(parse_patch_table(bad, "pt"), Catch::Matchers::ContainsSubstring("typo3,1.0"));
  std::istringstream empty_version("software,version\nphp, \n");
  CHECK_THROWS_AS(parse_patch_table(empty_version, "pt"), InputError);
  std::istringstream missing_col("product,version\nphp,7.0.13\n");
  CHECK_THROWS_AS(parse_patch_table(missing_col, "pt"), InputError);
}

TEST_CASE("shipped CMS rules match the built-in ones", "[corpus]") {
  auto file = features::load_cms_rules(HOSTSEC_SOURCE_DIR "/data/cms_signatures.rules");
  const auto& builtin = features::default_cms_rules();
  CHECK(file.revision == builtin.revision);
  REQUIRE(file.rules.size() == builtin.rules.size());
  for (std::size_t i = 0; i < file.rules.size(); ++i) {
    CHECK(file.rules[i].product == builtin.rules[i].product);
    CHECK(file.rules[i].target == builtin.rules[i].target);
    CHECK(file.rules[i].header_name == builtin.rules[i].header_name);
    CHECK(file.rules[i].pattern == builtin.rules[i].pattern);
  }
  std::istringstream no_format("wordpress body x\n");
  CHECK_THROWS_WITH(features::parse_cms_rules(no_format, "r"), Catch::Matchers::ContainsSubstring("format"));
  std::istringstream bad_product("format 1\ntypo3 body x\n");
  CHECK_THROWS_WITH(features::parse_cms_rules(bad_product, "r"), Catch::Matchers::ContainsSubstring("r:2"));
  std::istringstream bad_target("format 1\nwordpress cookie x\n");
  CHECK_THROWS_AS(features::parse_cms_rules(bad_target, "r"), InputError);
}

TEST_CASE("provider table", "[corpus]") {
  std::istringstream in(
      "provider_id,ip_count,domain_count,phishing_count,malware_count\n"
      "AS1,100,5000,12,3\nAS2,0,10,0,0\n");
  auto t = parse_provider_table(in, "p");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.find("AS1")->domain_count == 5000);
  CHECK(t.find("AS3") == nullptr);
  CHECK(t.flagged == std::vector<std::string>{"AS2"});
  std::ostringstream out;
  write_provider_table(out, t);
  std::istringstream back(out.str());
  CHECK(parse_provider_table(back, "b").rows == t.rows);

  std::istringstream neg("provider_id,ip_count,domain_count,phishing_count,malware_count\nAS1,1,1,-1,0\n");
  CHECK_THROWS_WITH(parse_provider_table(neg, "p"), Catch::Matchers::ContainsSubstring("negative"));
  std::istringstream dup("provider_id,ip_count,domain_count,phishing_count,malware_count\nA,1,1,0,0\nA,1,1,0,0\n");
  CHECK_THROWS_WITH(parse_provider_table(dup, "p"), Catch::Matchers::ContainsSubstring("duplicate"));
  std::istringstream nan("provider_id,ip_count,domain_count,phishing_count,malware_count\nA,x,1,0,0\n");
  CHECK_THROWS_WITH(parse_provider_table(nan, "p"), Catch::Matchers::ContainsSubstring("p:2"));
}
