// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "hostsec/hostsec.hpp"
#include "support/feature_fixtures.hpp"
#include "support/oracles.hpp"

using namespace hostsec;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) { return text::format_fixed(v, digits); }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hostsec_acceptance_" + name);
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

// 1 ------------------------------------------------------------------------
Outcome table3() {
  auto t = csv::read_file(HOSTSEC_SOURCE_DIR "/tests/fixtures/table3_loadings.csv");
  MatrixXd l(15, 4);
  for (std::size_t i = 0; i < 15; ++i)
    for (std::size_t j = 0; j < 4; ++j) l(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *text::parse_double(t.rows[i][j + 1]);
  auto v = factor::variance_table(l);
  const double ss[] = {2.90, 2.92, 1.48, 1.90}, prop[] = {0.19, 0.19, 0.10, 0.13};
  Outcome o{true, ""};
  std::ostringstream d;
  for (int j = 0; j < 4; ++j) {
    bool ok_ss = std::abs(v.ss_loadings[j] - ss[j]) <= 0.02;
    bool ok_p = std::abs(v.proportion_var[j] - prop[j]) <= 0.005;
    o.pass = o.pass && ok_ss && ok_p;
    d << "MR" << j + 1 << " ss " << fmt(v.ss_loadings[j]) << (ok_ss ? "" : "!") << " prop "
      << fmt(v.proportion_var[j]) << (ok_p ? "" : "!") << "; ";
  }
  bool ok_cum = std::abs(v.cumulative_var[3] - 0.62) <= 0.01;
  o.pass = o.pass && ok_cum;
  d << "cumulative " << fmt(v.cumulative_var[3]) << (ok_cum ? "" : "!");
  o.detail = d.str();
  return o;
}

// 2 ------------------------------------------------------------------------
Outcome table1_arithmetic() {
  const int n = 442684, flagged = 57696;
  std::vector<features::FeatureRow> rows;
  rows.reserve(n);
  std::array<int, features::kFeatureCount> v{};
  for (std::size_t k = 9; k < features::kFeatureCount; ++k) v[k] = 2;
  for (int i = 0; i < n; ++i) {
    v[7] = i < flagged;
    rows.push_back({"", "P" + std::to_string(i % 7), features::FeatureVector::from_values(v)});
  }
  corpus::ProviderTable table;
  for (int g = 0; g < 7; ++g) table.rows.emplace("P" + std::to_string(g), corpus::ProviderRow{"P" + std::to_string(g), 1, 1, 0, 0});
  auto aggs = pipeline::aggregate_providers(rows, table, MatrixXd());
  auto l = pipeline::landscape_report(rows, aggs, scratch("table1"));
  double pct = 0;
  for (const auto& s : l.summary)
    if (s.indicator == "httponly_cookie") pct = s.percent;
  double r1 = regress::rate_ratio(-1.100), r2 = regress::rate_ratio(-1.200);
  bool ok = std::abs(pct - 13.04) <= 0.02 && std::abs(r1 - 3.00) <= 0.01 && std::abs(r2 - 3.32) <= 0.01;
  return {ok, "HttpOnly " + fmt(pct) + "%, e^1.1 " + fmt(r1) + ", e^1.2 " + fmt(r2)};
}

// 3 ------------------------------------------------------------------------
Outcome polychoric_accuracy() {
  const int n = 50000;
  const std::vector<double> tx = {-0.5, 0.7}, ty = {-0.2, 0.9};
  Outcome o{true, ""};
  std::ostringstream d;
  std::uint64_t seed = 100;
  for (double rho : {-0.8, -0.3, 0.0, 0.4, 0.9}) {
    stats::Rng rng(++seed);
    stats::NormalSampler normal;
    std::vector<int> x(n), y(n);
    for (int i = 0; i < n; ++i) {
      double a = normal(rng);
      double b = rho * a + std::sqrt(1 - rho * rho) * normal(rng);
      x[static_cast<std::size_t>(i)] = (a > tx[0]) + (a > tx[1]);
      y[static_cast<std::size_t>(i)] = (b > ty[0]) + (b > ty[1]);
    }
    double est = factor::polychoric_rho(x, 3, y, 3);
    double grid = oracle::polychoric_grid(x, 3, y, 3);
    bool ok = std::abs(est - rho) <= 0.02 && std::abs(est - grid) <= 0.005;
    o.pass = o.pass && ok;
    d << fmt(rho, 1) << "->" << fmt(est) << " (grid " << fmt(grid, 3) << ")" << (ok ? "" : "!") << " ";
  }
  o.detail = d.str();
  return o;
}

// 4 ------------------------------------------------------------------------
pipeline::SynthSpec three_factor_design(std::uint64_t seed) {
  pipeline::SynthSpec s;
  s.seed = seed;
  s.n_domains = 2000;
  s.n_providers = 1;
  s.loadings = pipeline::block_loadings({0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2}, 3, 0.7);
  const std::vector<std::vector<double>> cuts = {{0.0}, {-0.5, 0.5}, {0.4}, {-0.8, 0.3}};
  for (int i = 0; i < 12; ++i) s.thresholds.push_back(cuts[static_cast<std::size_t>(i % 4)]);
  s.provider_effect_strength = VectorXd::Zero(3);
  s.phishing.factors = s.malware.factors = VectorXd::Zero(3);
  return s;
}

Outcome parallel_analysis_recovery() {
  int hits = 0;
  std::map<int, int> tally;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto w = pipeline::synth_generate(three_factor_design(seed));
    int k = factor::parallel_analysis(w.data, 50, 0.95, seed).k;
    ++tally[k];
    hits += k == 3;
  }
  std::ostringstream d;
  d << hits << "/100 seeds retain 3 (";
  for (auto [k, c] : tally) d << "k=" << k << ":" << c << " ";
  d << ")";
  return {hits >= 95, d.str()};
}

// 5 ------------------------------------------------------------------------
Outcome factor_recovery() {
  int hits = 0;
  double worst = 1;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto spec = pipeline::default_world(seed);
    spec.n_domains = 5000;
    auto w = pipeline::synth_generate(spec);
    auto corr = factor::polychoric_matrix(w.data);
    auto m = factor::fit_factor_model(w.data, corr, 4);
    auto c = pipeline::tucker_congruence(m.loadings, spec.loadings);
    worst = std::min(worst, c.values.minCoeff());
    hits += c.values.minCoeff() >= 0.95;
  }
  return {hits >= 95, std::to_string(hits) + "/100 seeds with every factor >= 0.95 (worst " + fmt(worst) + ")"};
}

// 6 ------------------------------------------------------------------------
Outcome glm_correctness() {
  stats::Rng rng(2024);
  stats::NormalSampler normal;
  const int n = 200, extra = 4;
  MatrixXd all(n, 1 + 3 + extra);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    all(i, 0) = 1;
    for (int j = 1; j < all.cols(); ++j) all(i, j) = normal(rng);
    double eta = 1.0 + 0.5 * all(i, 1) - 0.7 * all(i, 2) + 0.2 * all(i, 3) + 0.5 * normal(rng);
    y[i] = static_cast<double>(stats::poisson(rng, std::exp(eta)));
  }
  MatrixXd x = all.leftCols(4);
  auto fit = regress::glm_quasipoisson(y, x, {regress::kIntercept, "a", "b", "c"});
  VectorXd beta = oracle::poisson_newton(y, x);
  double coef_err = (fit.coefficients - beta).cwiseAbs().maxCoeff();
  VectorXd mu = fit.fitted;
  double phi = ((y - mu).array().square() / mu.array()).sum() / (n - 4);
  bool phi_exact = fit.dispersion == phi;
  double se_err = (fit.std_errors - std::sqrt(fit.dispersion) * oracle::poisson_std_errors(fit.coefficients, x))
                      .cwiseAbs()
                      .maxCoeff();

  // Nested pairs: a random subset of covariates inside a random superset.
  int violations = 0;
  const int total = static_cast<int>(all.cols()) - 1;
  for (int pair = 0; pair < 50; ++pair) {
    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 1);
    stats::shuffle(order, rng);
    int big = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(total));
    int small = static_cast<int>(rng() % static_cast<std::uint64_t>(big));
    auto fit_cols = [&](int m) {
      MatrixXd xs(n, m + 1);
      std::vector<std::string> names = {regress::kIntercept};
      xs.col(0) = all.col(0);
      for (int j = 0; j < m; ++j) {
        xs.col(j + 1) = all.col(order[static_cast<std::size_t>(j)]);
        names.push_back("v" + std::to_string(order[static_cast<std::size_t>(j)]));
      }
      return regress::glm_quasipoisson(y, xs, names).pseudo_r2;
    };
    violations += fit_cols(big) < fit_cols(small) - 1e-12;
  }
  bool ok = coef_err <= 1e-6 && phi_exact && se_err <= 1e-12 && violations == 0;
  std::ostringstream d;
  d << "coef err " << coef_err << ", dispersion " << (phi_exact ? "exact" : "differs") << ", SE err " << se_err
    << ", nesting violations " << violations << "/50";
  return {ok, d.str()};
}

// 7 ------------------------------------------------------------------------
Outcome fixed_effects_correctness() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    stats::Rng rng(seed);
    stats::NormalSampler normal;
    std::vector<double> y;
    std::vector<std::string> g;
    int groups = 3 + static_cast<int>(seed) * 7;
    for (int i = 0; i < 500 * static_cast<int>(seed); ++i) {
      int k = static_cast<int>(rng() % static_cast<std::uint64_t>(groups));
      g.push_back("G" + std::to_string(k));
      y.push_back(0.3 * k + normal(rng));
    }
    auto fit = regress::fixed_effects_fit(y, g);
    auto want = oracle::dummy_ols(y, g);
    worst = std::max({worst, std::abs(fit.r_squared - want.r2), std::abs(fit.adj_r_squared - want.adj_r2),
                      std::abs(fit.residual_std_error - want.rse), std::abs(fit.intercept - want.intercept)});
  }
  double one = regress::fixed_effects_fit({1, 1, 5, 5, -2, -2}, {"a", "a", "b", "b", "c", "c"}).r_squared;
  double zero = regress::fixed_effects_fit({1, 3, 0, 4, 2, 2}, {"a", "a", "b", "b", "c", "c"}).r_squared;
  bool ok = worst <= 1e-10 && one == 1.0 && zero == 0.0;
  std::ostringstream d;
  d << "max oracle diff " << worst << ", R2 cases " << one << " / " << zero;
  return {ok, d.str()};
}

// 8 ------------------------------------------------------------------------
Outcome extraction_fidelity() {
  auto table = corpus::default_patch_table();
  auto fixtures = fixture::feature_fixtures();
  int agree = 0;
  std::string first_bad;
  for (const auto& f : fixtures) {
    bool ok = features::build_feature_vector(f.record, table).values() == f.expected;
    agree += ok;
    if (!ok && first_bad.empty()) first_bad = f.name;
  }
  int total = static_cast<int>(fixtures.size());
  bool ok = total >= 30 && agree == total;
  return {ok, std::to_string(agree) + "/" + std::to_string(total) + " fixtures agree" +
                  (first_bad.empty() ? "" : " (first mismatch: " + first_bad + ")")};
}

// 9 ------------------------------------------------------------------------
Outcome disentanglement() {
  int ratio_hits = 0, sign_hits = 0, both = 0;
  double min_ratio = 1e9;
  auto dir = scratch("disentangle");
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    pipeline::PipelineConfig cfg;
    cfg.out_dir = dir.string();
    cfg.synth = true;
    cfg.synth_seed = seed;
    cfg.seed = seed;
    cfg.synth_domains = 10000;
    cfg.synth_providers = 200;
    auto spec = pipeline::default_world(seed);
    auto res = pipeline::run_pipeline(cfg);
    bool ratio_ok = false, signs_ok = false;
    if (res.k == 4) {
      auto c = pipeline::tucker_congruence(res.model.loadings, spec.loadings);
      // True factors 3 and 4 carry the provider effect.
      double prov = 1e9, web = 0;
      for (Eigen::Index j = 0; j < 4; ++j) {
        double r2 = res.fixed_effects[static_cast<std::size_t>(j)].r_squared;
        if (spec.provider_effect_strength[c.match[static_cast<std::size_t>(j)]] >= 0.2) prov = std::min(prov, r2);
        else web = std::max(web, r2);
      }
      double ratio = prov / web;
      min_ratio = std::min(min_ratio, ratio);
      ratio_ok = ratio >= 3;
      signs_ok = true;
      for (const auto& [response, betas] : {std::pair{"phishing", spec.phishing}, std::pair{"malware", spec.malware}}) {
        const auto& combined = res.glm.at(response).back().fit;
        for (Eigen::Index j = 0; j < 4; ++j) {
          auto t = c.match[static_cast<std::size_t>(j)];
          double truth = betas.factors[t];
          if (truth == 0) continue;
          double est = c.sign[static_cast<std::size_t>(j)] * combined.coefficient(res.model.factors[static_cast<std::size_t>(j)]);
          signs_ok = signs_ok && (est > 0) == (truth > 0);
        }
      }
    }
    ratio_hits += ratio_ok;
    sign_hits += signs_ok;
    both += ratio_ok && signs_ok;
  }
  std::ostringstream d;
  d << "ratio >= 3 in " << ratio_hits << "/100 (min " << fmt(min_ratio, 2) << "), slope signs in " << sign_hits
    << "/100, both in " << both << "/100";
  return {both >= 95, d.str()};
}

// 10 -----------------------------------------------------------------------
Outcome determinism() {
  auto a = scratch("det_a"), b = scratch("det_b");
  std::vector<std::string> outputs;
  for (const auto& dir : {a, b}) {
    auto kvc = kv::parse_file(HOSTSEC_SOURCE_DIR "/data/pipeline_synth.conf");
    kvc.values["out_dir"] = dir.string();
    kvc.values["threads"] = "2";
    outputs = pipeline::run_pipeline(pipeline::parse_pipeline_config(kvc)).outputs;
  }
  outputs.push_back("manifest.txt");
  int differ = 0;
  std::string first;
  for (const auto& f : outputs) {
    // The manifest records out_dir, which differs by construction.
    std::string x = slurp(a / f), y = slurp(b / f);
    if (f == "manifest.txt") {
      auto strip = [](std::string s) {
        auto p = s.find("config.out_dir=");
        return s.erase(p, s.find('\n', p) - p);
      };
      x = strip(x);
      y = strip(y);
    }
    if (x != y) {
      ++differ;
      if (first.empty()) first = f;
    }
  }
  return {differ == 0, std::to_string(outputs.size() - static_cast<std::size_t>(differ)) + "/" +
                           std::to_string(outputs.size()) + " files byte-identical" +
                           (first.empty() ? "" : " (first difference: " + first + ")")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"published loading table variance summary", 1, table3},
      {"landscape percentage and rate ratios", 60, table1_arithmetic},
      {"polychoric accuracy", 30, polychoric_accuracy},
      {"parallel analysis retains 3 factors", 300, parallel_analysis_recovery},
      {"factor recovery congruence", 600, factor_recovery},
      {"quasi-Poisson GLM correctness", 60, glm_correctness},
      {"fixed-effects correctness", 60, fixed_effects_correctness},
      {"indicator extraction fixtures", 60, extraction_fidelity},
      {"end-to-end disentanglement", 600, disentanglement},
      {"pipeline determinism", 300, determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool in_time = secs <= c.budget_s;
    bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %2zu %s: %s [%.2f s%s]\n", pass ? "PASS" : "FAIL", i + 1, c.name, o.detail.c_str(), secs,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
