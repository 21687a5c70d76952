// hostsec: command-line front end for scanning, indicator extraction and the
// factor / fixed-effects / abuse-regression analysis.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hostsec/hostsec.hpp"

namespace fs = std::filesystem;
using namespace hostsec;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::ofstream open_out(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

int cmd_scan(const std::string& domains, const std::string& policy_file, const std::string& out_path) {
  auto policy = scanner::load_policy(policy_file);
  auto targets = scanner::load_targets(domains);
  scanner::Context ctx(policy);
  auto results = scanner::scan_domains(ctx, targets, [](const scanner::DomainScan& s) {
    std::cerr << "scanned " << s.record.domain << ": " << s.record.pages.size() << " page(s)"
              << (s.error ? " [" + *s.error + "]" : "") << "\n";
  });
  auto out = open_out(out_path);
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (r.record.pages.empty()) ++failed;
    out << corpus::to_line(r.record) << "\n";
  }
  std::cerr << results.size() << " domain(s) written, " << failed << " without pages\n";
  return 0;
}

int cmd_extract(const std::string& corpus_path, const std::string& patch_path, const std::string& rules_path,
                std::size_t page_limit, const std::string& out_path) {
  auto table = patch_path.empty() ? corpus::default_patch_table() : corpus::load_patch_table(patch_path);
  auto rules = rules_path.empty() ? features::default_cms_rules() : features::load_cms_rules(rules_path);
  auto load = corpus::load_corpus(corpus_path, page_limit);
  for (const auto& e : load.errors) std::cerr << corpus_path << ":" << e.line << ": " << e.message << "\n";
  features::Diagnostics diag;
  std::vector<features::FeatureRow> rows;
  for (const auto& rec : load.records) {
    if (rec.pages.empty()) {
      std::cerr << "skipping " << rec.domain << ": no captured pages\n";
      continue;
    }
    rows.push_back({rec.domain, rec.provider_id, features::build_feature_vector(rec, table, rules, &diag)});
  }
  for (const auto& w : diag.warnings) std::cerr << "warning: " << w << "\n";
  if (diag.parse_warnings) std::cerr << diag.parse_warnings << " malformed HTML document(s)\n";
  auto out = open_out(out_path);
  features::write_features(out, rows);
  std::cerr << rows.size() << " domain(s) extracted\n";
  return load.errors.empty() ? 0 : 1;
}

int cmd_fa(const std::string& features_path, const std::string& factors, int replicates, double quantile,
           std::uint64_t seed, unsigned threads, bool drop_constant, const std::string& out_dir) {
  auto rows = features::load_features(features_path);
  auto view = pipeline::dataset_from_features(rows, drop_constant);
  for (const auto& d : view.dropped) std::cerr << "dropped constant indicator " << d << "\n";
  factor::PolychoricOptions popt{threads};
  pipeline::FactorRun run;
  run.corr = factor::polychoric_matrix(view.data, popt);
  if (run.corr.smoothed)
    std::cerr << "correlation matrix smoothed (min eigenvalue " << run.corr.min_eigenvalue_before << ")\n";
  if (factors == "auto") {
    run.pa = factor::parallel_analysis(view.data, replicates, quantile, seed, popt);
    run.k = std::clamp(run.pa->k, 1, static_cast<int>(view.data.p()) - 1);
  } else {
    auto k = text::parse_int<int>(factors);
    if (!k || *k < 1) throw InputError("--factors must be auto or a positive integer");
    run.k = *k;
  }
  run.model = factor::fit_factor_model(view.data, run.corr, run.k, {});
  pipeline::write_factor_outputs(run, rows, out_dir);
  std::cout << "factors retained: " << run.k << (run.model.heywood ? " (Heywood case)" : "") << "\n";
  std::ifstream txt(fs::path(out_dir) / "loadings.txt");
  std::cout << txt.rdbuf();
  return 0;
}

int cmd_fe(const std::string& scores_path, const std::string& out_path) {
  auto scores = pipeline::load_scores(scores_path);
  auto fits = pipeline::fixed_effects_all(scores);
  auto out = open_out(out_path);
  out << pipeline::fixed_effects_csv(scores.factors, fits, false);
  std::cout << pipeline::fixed_effects_csv(scores.factors, fits, true);
  return 0;
}

nlohmann::json fit_json(const regress::RegressionFit& fit, const std::string& response) {
  nlohmann::json j;
  j["response"] = response;
  j["family"] = "quasipoisson";
  j["link"] = "log";
  j["n"] = fit.n;
  j["p"] = fit.p;
  j["iterations"] = fit.iterations;
  j["dispersion"] = fit.dispersion;
  j["deviance"] = fit.deviance;
  j["null_deviance"] = fit.null_deviance;
  j["pseudo_r2"] = fit.pseudo_r2;
  j["poisson_loglik"] = fit.poisson_loglik;
  auto& terms = j["coefficients"] = nlohmann::json::array();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    auto e = static_cast<Eigen::Index>(i);
    terms.push_back({{"term", fit.names[i]},
                     {"estimate", fit.coefficients[e]},
                     {"std_error", fit.std_errors[e]},
                     {"t_value", fit.t_values[e]},
                     {"p_value", fit.p_values[e]}});
  }
  return j;
}

int cmd_glm(const std::string& data_path, const std::string& response, const std::string& covariates,
            const std::string& out_path) {
  auto t = csv::read_file(data_path);
  std::string ycol = response;
  if (!t.has_column(ycol) && t.has_column(response + "_count")) ycol = response + "_count";
  auto column = [&](const std::string& name) {
    auto c = t.column(name);
    VectorXd v(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      auto x = text::parse_double(t.rows[r][c]);
      if (!x) throw InputError(data_path + ":" + std::to_string(t.line_numbers[r]) + ": bad value in " + name);
      v[static_cast<Eigen::Index>(r)] = *x;
    }
    return v;
  };
  VectorXd y = column(ycol);
  std::map<std::string, VectorXd> cols;
  auto names = text::split_list(covariates);
  for (const auto& n : names) cols[n] = column(n);
  auto fit = pipeline::fit_covariates(y, cols, names);
  auto out = open_out(out_path);
  out << fit_json(fit, response).dump(2) << "\n";
  auto stem = fs::path(out_path).replace_extension("");
  std::ofstream coef(stem.string() + ".csv", std::ios::binary);
  csv::write_row(coef, regress::coefficient_header());
  for (const auto& r : regress::coefficient_rows(fit)) csv::write_row(coef, r);
  std::ofstream(stem.string() + ".txt", std::ios::binary) << regress::fit_summary_text(fit);
  std::cout << regress::fit_summary_text(fit);
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  auto cfg = kv::parse_file(config_path);
  cfg.check_keys({"seed", "domains", "providers", "provider_effect_strength"});
  auto spec = pipeline::default_world(cfg.get_int<std::uint64_t>("seed", 1));
  spec.n_domains = cfg.get_int<int>("domains", spec.n_domains);
  spec.n_providers = cfg.get_int<int>("providers", spec.n_providers);
  if (cfg.has("provider_effect_strength")) {
    auto parts = text::split_list(cfg.require("provider_effect_strength"));
    if (static_cast<Eigen::Index>(parts.size()) != spec.provider_effect_strength.size())
      throw InputError(cfg.source + ": provider_effect_strength needs one value per factor");
    for (std::size_t j = 0; j < parts.size(); ++j) {
      auto v = text::parse_double(parts[j]);
      if (!v) throw InputError(cfg.source + ": bad provider_effect_strength '" + parts[j] + "'");
      spec.provider_effect_strength[static_cast<Eigen::Index>(j)] = *v;
    }
  }
  auto world = pipeline::synth_generate(spec);
  fs::create_directories(out_dir);
  {
    auto out = open_out((fs::path(out_dir) / "features.csv").string());
    features::write_features(out, pipeline::synth_feature_rows(world));
  }
  {
    auto out = open_out((fs::path(out_dir) / "providers.csv").string());
    corpus::write_provider_table(out, world.providers);
  }
  std::vector<std::string> fnames;
  for (Eigen::Index j = 0; j < world.true_scores.cols(); ++j) fnames.push_back("F" + std::to_string(j + 1));
  pipeline::write_text(fs::path(out_dir) / "synth_true_scores.csv",
                       pipeline::matrix_csv(world.domains, fnames, world.true_scores, "domain"));
  std::cerr << world.domains.size() << " domains across " << world.provider_ids.size() << " providers\n";
  return 0;
}

int cmd_report(const std::string& features_path, const std::string& providers_path, const std::string& scores_path,
               const std::string& out_dir) {
  auto rows = features::load_features(features_path);
  auto providers = corpus::load_provider_table(providers_path);
  MatrixXd scores;
  std::vector<std::string> factor_names;
  if (!scores_path.empty()) {
    auto s = pipeline::load_scores(scores_path);
    if (s.domains.size() != rows.size()) throw InputError("scores and features have different row counts");
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (s.domains[i] != rows[i].domain)
        throw InputError("scores row " + std::to_string(i + 1) + " is " + s.domains[i] + ", features has " + rows[i].domain);
    scores = s.scores;
    factor_names = s.factors;
  }
  auto aggs = pipeline::aggregate_providers(rows, providers, scores);
  pipeline::landscape_report(rows, aggs, out_dir);
  auto out = open_out((fs::path(out_dir) / "provider_aggregates.csv").string());
  pipeline::write_aggregates(out, aggs, factor_names);
  std::ifstream txt(fs::path(out_dir) / "landscape_summary.txt");
  std::cout << txt.rdbuf();
  return 0;
}

int cmd_pipeline(const std::string& config_path, const std::string& out_override) {
  auto kvc = kv::parse_file(config_path);
  if (!out_override.empty()) kvc.values["out_dir"] = out_override;
  auto cfg = pipeline::parse_pipeline_config(kvc);
  auto res = pipeline::run_pipeline(cfg);
  std::cout << "factors retained: " << res.k << "\n";
  for (std::size_t j = 0; j < res.fixed_effects.size(); ++j)
    std::cout << res.model.factors[j] << " provider R2 " << text::format_fixed(res.fixed_effects[j].r_squared, 4) << "\n";
  std::cout << res.outputs.size() + 1 << " files written to " << cfg.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hostsec: hosting-provider security measurement and analysis"};
  app.require_subcommand(1);
  int rc = 0;

  std::string domains, policy, out, corpus_path, patch, rules, features_path, factors = "auto", scores, providers,
      response, covariates, config, data;
  std::size_t page_limit = corpus::kDefaultPageLimit;
  int replicates = 50;
  double quantile = 0.95;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool keep_constant = false;

  auto* scan = app.add_subcommand("scan", "crawl domains and write a corpus (JSON lines)");
  scan->add_option("--domains", domains, "domain list, one per line, optional provider id")->required()->check(CLI::ExistingFile);
  scan->add_option("--policy", policy, "key=value scan policy")->required()->check(CLI::ExistingFile);
  scan->add_option("--out", out, "corpus output")->required();
  scan->callback([&] { rc = cmd_scan(domains, policy, out); });

  auto* extract = app.add_subcommand("extract", "derive the 15 indicators from a corpus");
  extract->add_option("--corpus", corpus_path)->required()->check(CLI::ExistingFile);
  extract->add_option("--patch-table", patch, "software,version CSV (built-in table if omitted)");
  extract->add_option("--cms-rules", rules, "CMS signature rules (built-in rules if omitted)");
  extract->add_option("--page-limit", page_limit)->check(CLI::PositiveNumber);
  extract->add_option("--out", out, "features CSV")->required();
  extract->callback([&] { rc = cmd_extract(corpus_path, patch, rules, page_limit, out); });

  auto* fa = app.add_subcommand("fa", "polychoric factor analysis");
  fa->add_option("--features", features_path)->required()->check(CLI::ExistingFile);
  fa->add_option("--factors", factors, "auto (parallel analysis) or a count");
  fa->add_option("--replicates", replicates)->check(CLI::PositiveNumber);
  fa->add_option("--quantile", quantile)->check(CLI::Range(0.0, 1.0));
  fa->add_option("--seed", seed);
  fa->add_option("--threads", threads)->check(CLI::PositiveNumber);
  fa->add_flag("--keep-constant", keep_constant, "keep indicators without variation");
  fa->add_option("--out", out, "output directory")->required();
  fa->callback([&] { rc = cmd_fa(features_path, factors, replicates, quantile, seed, threads, !keep_constant, out); });

  auto* fe = app.add_subcommand("fe", "provider fixed-effects R2 per factor");
  fe->add_option("--scores", scores)->required()->check(CLI::ExistingFile);
  fe->add_option("--out", out, "CSV output")->required();
  fe->callback([&] { rc = cmd_fe(scores, out); });

  auto* glm = app.add_subcommand("glm", "quasi-Poisson abuse regression on provider aggregates");
  glm->add_option("--data", data, "provider aggregates CSV")->required()->check(CLI::ExistingFile);
  glm->add_option("--response", response, "phishing or malware, or any count column")->required();
  glm->add_option("--covariates", covariates, "comma-separated column names")->required();
  glm->add_option("--out", out, "fit JSON (a .csv and .txt are written alongside)")->required();
  glm->callback([&] { rc = cmd_glm(data, response, covariates, out); });

  auto* synth = app.add_subcommand("synth", "generate a synthetic world with known structure");
  synth->add_option("--config", config, "key=value: seed, domains, providers, provider_effect_strength")
      ->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out, "output directory")->required();
  synth->callback([&] { rc = cmd_synth(config, out); });

  auto* report = app.add_subcommand("report", "landscape tables and provider aggregates");
  report->add_option("--features", features_path)->required()->check(CLI::ExistingFile);
  report->add_option("--providers", providers)->required()->check(CLI::ExistingFile);
  report->add_option("--scores", scores, "factor scores to average per provider")->check(CLI::ExistingFile);
  report->add_option("--out", out, "output directory")->required();
  report->callback([&] { rc = cmd_report(features_path, providers, scores, out); });

  auto* pipe = app.add_subcommand("pipeline", "run every analysis stage from one run description");
  pipe->add_option("--config", config, "key=value run description")->required()->check(CLI::ExistingFile);
  pipe->add_option("--out", out, "override out_dir");
  pipe->callback([&] { rc = cmd_pipeline(config, out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
