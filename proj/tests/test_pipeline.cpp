#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hostsec/pipeline.hpp"
#include "support/oracles.hpp"

using namespace hostsec;
using namespace hostsec::pipeline;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hostsec_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

FeatureRow row(const std::string& domain, const std::string& provider, std::array<int, kFeatureCount> v = {}) {
  return {domain, provider, features::FeatureVector::from_values(v)};
}

std::array<int, kFeatureCount> absent_software() {
  std::array<int, kFeatureCount> v{};
  for (std::size_t k = 9; k < kFeatureCount; ++k) v[k] = 2;
  return v;
}

corpus::ProviderTable table_for(const std::vector<std::string>& ids, std::int64_t domains = 10) {
  corpus::ProviderTable t;
  for (const auto& id : ids) t.rows.emplace(id, corpus::ProviderRow{id, 1, domains, 0, 0});
  return t;
}

SynthSpec small_world(std::uint64_t seed, double strength) {
  SynthSpec s = default_world(seed);
  s.n_domains = 10000;
  s.n_providers = 100;
  s.provider_effect_strength.setConstant(strength);
  return s;
}

}  // namespace

TEST_CASE("tucker congruence", "[pipeline]") {
  MatrixXd a(5, 3);
  a << 0.8, 0.1, 0.0, 0.7, 0.2, 0.1, 0.1, 0.9, 0.2, 0.0, 0.6, 0.5, 0.2, 0.1, 0.7;
  auto same = tucker_congruence(a, a);
  for (int j = 0; j < 3; ++j) CHECK_THAT(same.values[j], WithinAbs(1.0, 1e-15));
  MatrixXd b = -a.rowwise().reverse();
  auto flipped = tucker_congruence(a, b);
  for (int j = 0; j < 3; ++j) {
    CHECK_THAT(flipped.values[j], WithinAbs(1.0, 1e-15));
    CHECK(flipped.match[static_cast<std::size_t>(j)] == 2 - j);
    CHECK(flipped.sign[static_cast<std::size_t>(j)] == -1.0);
  }
  // Hand value: cos between (1,0,1) and (1,1,0) is 1/2.
  CHECK_THAT(congruence(Eigen::Vector3d(1, 0, 1), Eigen::Vector3d(1, 1, 0)), WithinAbs(0.5, 1e-15));
  CHECK_THROWS_AS(tucker_congruence(a, a.leftCols(2)), InputError);

  // Independent random columns at p = 100 stay near zero.
  stats::Rng rng(3);
  stats::NormalSampler normal;
  int large = 0;
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd x(100), y(100);
    for (int i = 0; i < 100; ++i) {
      x[i] = normal(rng);
      y[i] = normal(rng);
    }
    large += std::abs(congruence(x, y)) > 0.25;
  }
  CHECK(large <= 2);
}

TEST_CASE("provider aggregation", "[pipeline]") {
  std::vector<FeatureRow> rows;
  for (int i = 0; i < 4; ++i) {
    auto v = absent_software();
    v[1] = i == 0;                // csp on one domain
    v[14] = i < 2 ? 0 : 1 + i % 2;  // admin panel: unpatched, unpatched, patched, absent
    rows.push_back(row("d" + std::to_string(i) + ".test", "A", v));
  }
  rows.push_back(row("e.test", "B", absent_software()));
  auto table = table_for({"A", "B"});
  table.rows["B"].domain_count = 0;
  MatrixXd scores(5, 1);
  scores << 1, 2, 3, 10, -4;
  auto aggs = aggregate_providers(rows, table, scores);
  REQUIRE(aggs.size() == 2);
  CHECK(aggs[0].provider_id == "A");
  CHECK(aggs[0].domain_count_sampled == 4);
  CHECK(aggs[0].feature_prevalence[1] == 0.25);
  CHECK(aggs[0].feature_prevalence[14] == 0.75);
  CHECK(aggs[0].mean_scores[0] == 4.0);
  CHECK(aggs[1].log10_domains == 0.0);
  CHECK(aggs[0].log10_domains == 1.0);
  auto med = aggregate_providers(rows, table, scores, AggregateMethod::median);
  CHECK(med[0].mean_scores[0] == 2.5);

  rows.push_back(row("x.test", "ZZ"));
  rows.push_back(row("y.test", "YY"));
  CHECK_THROWS_WITH(aggregate_providers(rows, table, MatrixXd()), ContainsSubstring("YY, ZZ"));
}

TEST_CASE("synthetic prevalences follow the configured thresholds", "[pipeline]") {
  auto spec = default_world(4);
  auto world = synth_generate(spec);
  auto rows = synth_feature_rows(world);
  auto aggs = aggregate_providers(rows, world.providers, MatrixXd());
  auto l = landscape(rows, aggs);
  std::size_t at = 0;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    const auto& t = spec.thresholds[k];
    // Booleans flag the upper tail; ordinals are "present" below the top cut.
    double want = features::is_ordinal(k) ? oracle::phi_erfc(t.back()) : 1 - oracle::phi_erfc(t.back());
    INFO(kFeatureNames[k]);
    CHECK_THAT(l.summary[at].percent / 100, WithinAbs(want, 0.02));
    at += features::is_ordinal(k) ? 3 : 1;
  }
}

TEST_CASE("landscape counts and histograms", "[pipeline]") {
  // Published corpus share: 57,696 HttpOnly of 442,684.
  std::vector<FeatureRow> rows;
  rows.reserve(442684);
  auto base = absent_software();
  for (int i = 0; i < 442684; ++i) {
    auto v = base;
    v[7] = i < 57696;
    rows.push_back({"", i % 2 ? "A" : "B", features::FeatureVector::from_values(v)});
  }
  auto aggs = aggregate_providers(rows, table_for({"A", "B"}), MatrixXd());
  auto dir = scratch("landscape");
  auto l = landscape_report(rows, aggs, dir);
  CHECK(l.domains == 442684);
  CHECK(l.summary[7].indicator == "httponly_cookie");
  CHECK(l.summary[7].count == 57696);
  CHECK_THAT(l.summary[7].percent, WithinAbs(13.04, 0.02));
  CHECK_THAT(slurp(dir / "landscape_summary.txt"), ContainsSubstring("13.03"));
  CHECK(fs::exists(dir / "provider_histograms.csv"));

  // Everything absent: every provider in the lowest bin.
  for (std::size_t k = 0; k < 9; ++k) CHECK(l.histograms[k][0] == (k == 7 ? 0 : 2));

  // Ordinal totals are exact.
  std::vector<FeatureRow> small;
  for (int i = 0; i < 10; ++i) {
    auto v = absent_software();
    v[13] = i % 3;
    small.push_back(row("s" + std::to_string(i), "A", v));
  }
  auto ls = landscape(small, aggregate_providers(small, table_for({"A"}), MatrixXd()));
  const SummaryRow* present = nullptr;
  for (const auto& s : ls.summary)
    if (s.indicator == "cms" && s.category == "present") present = &s;
  REQUIRE(present);
  CHECK(present->count == 7);
  CHECK((present + 1)->count + (present + 2)->count == 7);
  CHECK_THAT((present + 1)->percent_of_present, WithinAbs(400.0 / 7, 1e-12));
}

TEST_CASE("an isolated cluster of providers shows up in the histogram", "[pipeline]") {
  stats::Rng rng(12);
  std::vector<FeatureRow> rows;
  std::vector<std::string> ids;
  for (int g = 0; g < 1000; ++g) {
    ids.push_back(synth_provider_id(g));
    double rate = g % 111 == 5 ? 0.8 : 0.03;  // 9 providers default to CSP
    for (int d = 0; d < 40; ++d) {
      auto v = absent_software();
      v[1] = static_cast<double>(rng() >> 11) * 0x1.0p-53 < rate;
      rows.push_back(row("", ids.back(), v));
    }
  }
  auto l = landscape(rows, aggregate_providers(rows, table_for(ids), MatrixXd()));
  const auto& h = l.histograms[1];
  CHECK(h[6] + h[7] + h[8] + h[9] == 9);
  CHECK(h[3] + h[4] + h[5] == 0);
}

TEST_CASE("synthetic provider strength drives fixed-effects R^2", "[pipeline]") {
  for (double strength : {0.0, 1.0}) {
    auto w = synth_generate(small_world(2, strength));
    for (Eigen::Index j = 0; j < 4; ++j) {
      std::vector<double> y(w.true_scores.col(j).data(), w.true_scores.col(j).data() + w.true_scores.rows());
      double r2 = regress::fixed_effects_fit(y, w.provider_of).r_squared;
      if (strength == 0) CHECK(r2 <= 0.02);
      else CHECK(r2 >= 0.9);
    }
  }
  auto bad = default_world();
  bad.loadings(0, 1) = 0.9;
  CHECK_THROWS_WITH(synth_generate(bad), ContainsSubstring("communality"));
  auto unsorted = default_world();
  unsorted.thresholds[10] = {0.5, 0.1};
  CHECK_THROWS_WITH(synth_generate(unsorted), ContainsSubstring("increasing"));
  // Same seed, same world.
  auto w1 = synth_generate(small_world(9, 0.3));
  auto w2 = synth_generate(small_world(9, 0.3));
  CHECK(w1.data.codes == w2.data.codes);
  CHECK(w1.providers.rows == w2.providers.rows);
}

TEST_CASE("GLM recovers an abuse slope from provider means", "[pipeline]") {
  // Slope -1.1 on factor 2 at 1,000 providers, all other slopes at zero.
  int within = 0, quiet = 0;
  const int seeds = 20;
  for (int seed = 1; seed <= seeds; ++seed) {
    auto spec = default_world(static_cast<std::uint64_t>(seed));
    spec.n_providers = 1000;
    spec.n_domains = 20000;
    spec.provider_effect_strength << 0.5, 0.5, 0.5, 0.5;
    spec.phishing.factors << 0, -1.1, 0, 0;
    auto w = synth_generate(spec);
    VectorXd y(1000);
    std::map<std::string, VectorXd> cols;
    VectorXd ld(1000), li(1000);
    for (int g = 0; g < 1000; ++g) {
      const auto& p = w.providers.rows.at(w.provider_ids[static_cast<std::size_t>(g)]);
      y[g] = static_cast<double>(p.phishing_count);
      ld[g] = log10_guarded(p.domain_count);
      li[g] = log10_guarded(p.ip_count);
    }
    cols["log10_domains"] = ld;
    cols["log10_ips"] = li;
    for (int j = 0; j < 4; ++j) cols["F" + std::to_string(j + 1)] = w.provider_true_means.col(j);
    auto fit = fit_covariates(y, cols, {"log10_domains", "log10_ips", "F1", "F2", "F3", "F4"});
    within += std::abs(fit.coefficient("F2") + 1.1) <= 0.15;
    quiet += std::abs(fit.t_values[fit.index("F1")]) < 3;
  }
  CHECK(within == seeds);
  CHECK(quiet >= seeds - 1);
}

TEST_CASE("pipeline configuration", "[pipeline]") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_pipeline_config(kv::parse(in, "run.conf"));
  };
  auto c = parse("out_dir=o\nsynth=true\nfactors=4\nextraction=principal_axis\nresponses=malware\n");
  CHECK(c.synth);
  CHECK(c.factors == "4");
  CHECK(c.extraction == factor::ExtractionMethod::principal_axis);
  CHECK(c.responses == std::vector<std::string>{"malware"});
  CHECK_THROWS_WITH(parse("synth=true\nfeatures=f.csv\n"), ContainsSubstring("exactly one"));
  CHECK_THROWS_WITH(parse("features=f.csv\n"), ContainsSubstring("providers"));
  CHECK_THROWS_WITH(parse("synth=true\nfactor=3\n"), ContainsSubstring("factor"));
  CHECK_THROWS_WITH(parse("synth=true\nscores=anderson\n"), ContainsSubstring("scores"));
  CHECK_THROWS_WITH(parse("synth=true\nfactors=0\n"), ContainsSubstring("factors"));
  CHECK_THROWS_WITH(parse("synth=true\nresponses=spam\n"), ContainsSubstring("spam"));
}

TEST_CASE("pipeline end to end on a small synthetic world", "[pipeline]") {
  auto dir = scratch("pipeline_a");
  auto dir2 = scratch("pipeline_b");
  std::istringstream in("synth=true\nsynth_domains=3000\nsynth_providers=60\nreplicates=15\nseed=3\n");
  auto cfg = parse_pipeline_config(kv::parse(in, "run.conf"));
  cfg.out_dir = dir.string();
  auto res = run_pipeline(cfg);
  CHECK(res.k == 4);
  CHECK(res.fixed_effects.size() == 4);
  REQUIRE(res.glm.count("phishing"));
  CHECK(res.glm["phishing"].size() == 7);
  CHECK(res.glm["phishing"][1].covariates == std::vector<std::string>{"log10_domains", "log10_ips"});
  CHECK_FALSE(res.glm["phishing"][1].pseudo_r2_vs_model2);
  CHECK(res.glm["phishing"][6].pseudo_r2_vs_model2.value() > 0);
  for (const auto& f : res.outputs) CHECK(fs::exists(dir / f));

  auto manifest = slurp(dir / "manifest.txt");
  CHECK_THAT(manifest, ContainsSubstring("seed.parallel_analysis=3"));
  CHECK_THAT(manifest, ContainsSubstring("seed.synth=1"));
  CHECK_THAT(manifest, ContainsSubstring("factors.k=4"));
  CHECK_THAT(manifest, ContainsSubstring("output.scores.csv.sha256=" + digest::sha256_file((dir / "scores.csv").string())));

  cfg.out_dir = dir2.string();
  run_pipeline(cfg);
  for (const auto& f : res.outputs) {
    INFO(f);
    CHECK(slurp(dir / f) == slurp(dir2 / f));
  }
  CHECK(slurp(dir / "manifest.txt") == slurp(dir2 / "manifest.txt"));

  // Re-analysis from the emitted features and providers; a missing provider
  // aborts inside the aggregation stage.
  auto dir3 = scratch("pipeline_c");
  std::string providers = slurp(dir / "providers.csv");
  auto cut = providers.find("\nP00002,");
  providers.erase(cut + 1, providers.find('\n', cut + 1) - cut);
  {
    std::ofstream(dir3 / "providers.csv") << providers;
  }
  PipelineConfig bad;
  bad.out_dir = (dir3 / "out").string();
  bad.features = (dir / "features.csv").string();
  bad.providers = (dir3 / "providers.csv").string();
  bad.factors = "4";
  CHECK_THROWS_WITH(run_pipeline(bad), ContainsSubstring("stage aggregate failed") && ContainsSubstring("P00002"));
}

TEST_CASE("shipped run descriptions parse", "[pipeline]") {
  auto cfg = parse_pipeline_config(kv::parse_file(HOSTSEC_SOURCE_DIR "/data/pipeline_synth.conf"));
  CHECK(cfg.synth);
  CHECK(cfg.synth_domains == 10000);
  auto synth = kv::parse_file(HOSTSEC_SOURCE_DIR "/data/synth_world.conf");
  CHECK_NOTHROW(synth.check_keys({"seed", "domains", "providers", "provider_effect_strength"}));
}
