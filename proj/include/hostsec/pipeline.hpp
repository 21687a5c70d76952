#pragma once

// Orchestration: provider aggregation, landscape tables, synthetic worlds
// with known ground truth, factor-recovery metrics and the end-to-end run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hostsec/common.hpp"
#include "hostsec/corpus.hpp"
#include "hostsec/csv.hpp"
#include "hostsec/digest.hpp"
#include "hostsec/factor.hpp"
#include "hostsec/features.hpp"
#include "hostsec/regress.hpp"
#include "hostsec/stats.hpp"

namespace hostsec::pipeline {

using text::format_double;
using text::format_fixed;

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;
using features::FeatureRow;
using features::kFeatureCount;
using features::kFeatureNames;

inline constexpr const char* kToolVersion = "hostsec 1.0.0";

// ---------------------------------------------------------------------------
// Factor congruence

struct Congruence {
  VectorXd values;                   // per column of A, after alignment
  std::vector<Eigen::Index> match;   // column of B matched to column j of A
  std::vector<double> sign;
};

inline double congruence(const VectorXd& a, const VectorXd& b) {
  double den = std::sqrt(a.squaredNorm() * b.squaredNorm());
  return den > 0 ? a.dot(b) / den : 0.0;
}

/// Tucker congruence after the column permutation (and per-column sign)
/// maximizing total absolute congruence. Exhaustive for k <= 8, greedy above.
inline Congruence tucker_congruence(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InputError("tucker congruence: loading matrices differ in shape");
  const auto k = a.cols();
  MatrixXd phi(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) phi(i, j) = congruence(a.col(i), b.col(j));
  std::vector<Eigen::Index> best(static_cast<std::size_t>(k));
  std::iota(best.begin(), best.end(), 0);
  if (k <= 8) {
    std::vector<Eigen::Index> perm = best;
    double best_total = -1;
    do {
      double total = 0;
      for (Eigen::Index i = 0; i < k; ++i) total += std::abs(phi(i, perm[static_cast<std::size_t>(i)]));
      if (total > best_total + 1e-15) {
        best_total = total;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<bool> used_a(static_cast<std::size_t>(k)), used_b(static_cast<std::size_t>(k));
    for (Eigen::Index step = 0; step < k; ++step) {
      double top = -1;
      Eigen::Index bi = 0, bj = 0;
      for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j)
          if (!used_a[static_cast<std::size_t>(i)] && !used_b[static_cast<std::size_t>(j)] &&
              std::abs(phi(i, j)) > top) {
            top = std::abs(phi(i, j));
            bi = i;
            bj = j;
          }
      used_a[static_cast<std::size_t>(bi)] = used_b[static_cast<std::size_t>(bj)] = true;
      best[static_cast<std::size_t>(bi)] = bj;
    }
  }
  Congruence out;
  out.match = best;
  out.values.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    double v = phi(i, best[static_cast<std::size_t>(i)]);
    out.sign.push_back(v < 0 ? -1.0 : 1.0);
    out.values[i] = std::abs(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets from feature rows

struct DatasetView {
  factor::OrdinalDataset data;
  std::vector<std::string> dropped;  // constant columns left out
};

inline DatasetView dataset_from_features(const std::vector<FeatureRow>& rows, bool drop_constant) {
  if (rows.size() < 2) throw InputError("need at least two domains for factor analysis");
  DatasetView v;
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    int first = rows.front().features.values()[k];
    bool constant = std::all_of(rows.begin(), rows.end(),
                                [&](const FeatureRow& r) { return r.features.values()[k] == first; });
    if (constant && drop_constant) {
      v.dropped.emplace_back(kFeatureNames[k]);
      continue;
    }
    keep.push_back(k);
  }
  v.data.codes.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    v.data.columns.emplace_back(kFeatureNames[keep[c]]);
    v.data.category_counts.push_back(features::kCategoryCounts[keep[c]]);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto vals = rows[i].features.values();
    for (std::size_t c = 0; c < keep.size(); ++c)
      v.data.codes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = vals[keep[c]];
  }
  v.data.validate();
  return v;
}

// ---------------------------------------------------------------------------
// Synthetic world

struct AbuseBetas {
  double intercept = 0;
  double log10_domains = 0;
  double log10_ips = 0;
  VectorXd factors;  // one slope per factor
};

struct SynthSpec {
  int n_domains = 10000;
  int n_providers = 200;
  std::vector<std::string> columns;  // defaults to the 15 indicator names when p == 15
  MatrixXd loadings;                 // p x k
  factor::ThresholdSet thresholds;   // per column, strictly increasing
  VectorXd provider_effect_strength; // per factor, in [0, 1]
  AbuseBetas phishing;
  AbuseBetas malware;
  // Provider size draws (log10 scale, normal).
  double log10_domains_mean = 2.5;
  double log10_domains_sd = 0.5;
  double log10_ips_mean = 1.5;
  double log10_ips_sd = 0.4;
  std::uint64_t seed = 1;
};

struct SynthWorld {
  factor::OrdinalDataset data;
  std::vector<std::string> domains;
  std::vector<std::string> provider_of;  // per domain
  std::vector<std::string> provider_ids;
  corpus::ProviderTable providers;
  MatrixXd true_scores;          // n x k
  MatrixXd provider_true_means;  // G x k, rows follow provider_ids
};

inline std::string synth_provider_id(int g) {
  std::ostringstream os;
  os << "P" << std::setw(5) << std::setfill('0') << g + 1;
  return os.str();
}

inline void validate(const SynthSpec& s) {
  const auto p = s.loadings.rows(), k = s.loadings.cols();
  if (s.n_domains < 2 || s.n_providers < 1) throw InputError("synth: need n_domains >= 2 and n_providers >= 1");
  if (k < 1) throw InputError("synth: loadings need at least one factor");
  if (static_cast<Eigen::Index>(s.thresholds.size()) != p) throw InputError("synth: one threshold list per indicator");
  if (s.provider_effect_strength.size() != k) throw InputError("synth: one provider strength per factor");
  for (Eigen::Index j = 0; j < k; ++j)
    if (!(s.provider_effect_strength[j] >= 0 && s.provider_effect_strength[j] <= 1))
      throw InputError("synth: provider strength outside [0,1]");
  for (Eigen::Index i = 0; i < p; ++i) {
    double h2 = s.loadings.row(i).squaredNorm();
    if (h2 > 1 + 1e-12) throw InputError("synth: communality of indicator " + std::to_string(i) + " exceeds 1");
    const auto& t = s.thresholds[static_cast<std::size_t>(i)];
    if (t.empty()) throw InputError("synth: indicator " + std::to_string(i) + " has no thresholds");
    for (std::size_t c = 1; c < t.size(); ++c)
      if (!(t[c] > t[c - 1])) throw InputError("synth: thresholds must be strictly increasing");
  }
  for (const auto* b : {&s.phishing, &s.malware})
    if (b->factors.size() != k) throw InputError("synth: one abuse slope per factor");
  if (!s.columns.empty() && static_cast<Eigen::Index>(s.columns.size()) != p)
    throw InputError("synth: one column name per indicator");
}

/// F = sqrt(s) * provider offset + sqrt(1 - s) * idiosyncratic part (unit
/// variance), latent X* = F L' + e with var(e) = 1 - communality, codes by
/// thresholding, Poisson abuse counts on provider means of the true F.
inline SynthWorld synth_generate(const SynthSpec& spec) {
  validate(spec);
  const auto p = spec.loadings.rows(), k = spec.loadings.cols();
  const int n = spec.n_domains, g_count = spec.n_providers;
  SynthWorld w;
  stats::NormalSampler normal;

  stats::Rng prov_rng(stats::derive_seed(spec.seed, 0));
  MatrixXd offsets(g_count, k);
  std::vector<double> l10d(static_cast<std::size_t>(g_count)), l10i(static_cast<std::size_t>(g_count));
  for (int g = 0; g < g_count; ++g) {
    w.provider_ids.push_back(synth_provider_id(g));
    for (Eigen::Index j = 0; j < k; ++j) offsets(g, j) = normal(prov_rng);
    l10d[static_cast<std::size_t>(g)] = spec.log10_domains_mean + spec.log10_domains_sd * normal(prov_rng);
    l10i[static_cast<std::size_t>(g)] = spec.log10_ips_mean + spec.log10_ips_sd * normal(prov_rng);
  }

  stats::Rng dom_rng(stats::derive_seed(spec.seed, 1));
  w.true_scores.resize(n, k);
  w.data.codes.resize(n, p);
  VectorXd sd_eps(p);
  for (Eigen::Index i = 0; i < p; ++i) sd_eps[i] = std::sqrt(std::max(0.0, 1 - spec.loadings.row(i).squaredNorm()));
  for (int d = 0; d < n; ++d) {
    int g = d % g_count;
    std::ostringstream name;
    name << "d" << std::setw(6) << std::setfill('0') << d + 1 << ".test";
    w.domains.push_back(name.str());
    w.provider_of.push_back(w.provider_ids[static_cast<std::size_t>(g)]);
    for (Eigen::Index j = 0; j < k; ++j) {
      double s = spec.provider_effect_strength[j];
      w.true_scores(d, j) = std::sqrt(s) * offsets(g, j) + std::sqrt(1 - s) * normal(dom_rng);
    }
    for (Eigen::Index i = 0; i < p; ++i) {
      double x = spec.loadings.row(i).dot(w.true_scores.row(d)) + sd_eps[i] * normal(dom_rng);
      const auto& t = spec.thresholds[static_cast<std::size_t>(i)];
      int code = 0;
      while (code < static_cast<int>(t.size()) && x > t[static_cast<std::size_t>(code)]) ++code;
      w.data.codes(d, i) = code;
    }
  }
  for (Eigen::Index i = 0; i < p; ++i) {
    w.data.columns.push_back(spec.columns.empty()
                                 ? (p == static_cast<Eigen::Index>(kFeatureCount) ? std::string(kFeatureNames[static_cast<std::size_t>(i)])
                                                                                  : "v" + std::to_string(i + 1))
                                 : spec.columns[static_cast<std::size_t>(i)]);
    w.data.category_counts.push_back(static_cast<int>(spec.thresholds[static_cast<std::size_t>(i)].size()) + 1);
  }

  w.provider_true_means = MatrixXd::Zero(g_count, k);
  std::vector<int> members(static_cast<std::size_t>(g_count), 0);
  for (int d = 0; d < n; ++d) {
    w.provider_true_means.row(d % g_count) += w.true_scores.row(d);
    ++members[static_cast<std::size_t>(d % g_count)];
  }
  for (int g = 0; g < g_count; ++g)
    if (members[static_cast<std::size_t>(g)] > 0) w.provider_true_means.row(g) /= members[static_cast<std::size_t>(g)];

  stats::Rng abuse_rng(stats::derive_seed(spec.seed, 2));
  for (int g = 0; g < g_count; ++g) {
    corpus::ProviderRow row;
    row.provider_id = w.provider_ids[static_cast<std::size_t>(g)];
    row.domain_count = std::max<std::int64_t>(1, std::llround(std::pow(10.0, l10d[static_cast<std::size_t>(g)])));
    row.ip_count = std::max<std::int64_t>(1, std::llround(std::pow(10.0, l10i[static_cast<std::size_t>(g)])));
    double ld = std::log10(static_cast<double>(row.domain_count));
    double li = std::log10(static_cast<double>(row.ip_count));
    auto draw = [&](const AbuseBetas& b) {
      double eta = b.intercept + b.log10_domains * ld + b.log10_ips * li +
                   b.factors.dot(w.provider_true_means.row(g).transpose());
      return stats::poisson(abuse_rng, std::exp(eta));
    };
    row.phishing_count = draw(spec.phishing);
    row.malware_count = draw(spec.malware);
    w.providers.rows.emplace(row.provider_id, row);
  }
  return w;
}

/// Simple-structure loadings: indicator i loads `loading` on factor group_of[i].
inline MatrixXd block_loadings(const std::vector<int>& group_of, int k, double loading) {
  MatrixXd l = MatrixXd::Zero(static_cast<Eigen::Index>(group_of.size()), k);
  for (std::size_t i = 0; i < group_of.size(); ++i) l(static_cast<Eigen::Index>(i), group_of[i]) = loading;
  return l;
}

/// Fifteen indicators in four groups with provider-dominated factors 3 and 4
/// and abuse tied to one webmaster and one provider factor.
inline SynthSpec default_world(std::uint64_t seed = 1) {
  SynthSpec s;
  s.seed = seed;
  s.loadings = block_loadings({0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 3, 3, 3}, 4, 0.75);
  s.thresholds = {{0.52}, {0.84}, {0.25}, {0.67}, {1.04}, {1.28}, {0.84}, {0.39}, {0.52},
                  {-0.5, 0.6}, {-0.8, 0.4}, {-0.3, 0.9}, {-0.6, 0.5}, {-0.4, 0.7}, {-0.7, 0.3}};
  s.provider_effect_strength = VectorXd(4);
  s.provider_effect_strength << 0.05, 0.05, 0.5, 0.4;
  s.phishing.intercept = -1.0;
  s.phishing.log10_domains = 1.5;
  s.phishing.log10_ips = 0.7;
  s.phishing.factors = VectorXd(4);
  s.phishing.factors << 0, -1.1, 0, -1.2;
  s.malware.intercept = -1.5;
  s.malware.log10_domains = 1.4;
  s.malware.log10_ips = 0.6;
  s.malware.factors = VectorXd(4);
  s.malware.factors << 0, -0.8, 0, -0.6;
  return s;
}

inline std::vector<FeatureRow> synth_feature_rows(const SynthWorld& w) {
  if (w.data.p() != static_cast<Eigen::Index>(kFeatureCount))
    throw InputError("synthetic world does not have the 15-indicator layout");
  std::vector<FeatureRow> rows;
  for (Eigen::Index d = 0; d < w.data.n(); ++d) {
    std::array<int, kFeatureCount> v{};
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      int code = w.data.codes(d, static_cast<Eigen::Index>(k));
      v[k] = std::min(code, features::kCategoryCounts[k] - 1);
    }
    rows.push_back({w.domains[static_cast<std::size_t>(d)], w.provider_of[static_cast<std::size_t>(d)],
                    features::FeatureVector::from_values(v)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Provider aggregation

enum class AggregateMethod { mean, median };

struct ProviderAggregate {
  std::string provider_id;
  int domain_count_sampled = 0;
  std::array<double, kFeatureCount> feature_prevalence{};  // ordinal: share with software present
  std::array<std::array<int, 3>, kFeatureCount> category_counts{};
  VectorXd mean_scores;
  double log10_domains = 0;
  double log10_ips = 0;
  std::int64_t phishing_count = 0;
  std::int64_t malware_count = 0;
};

inline double log10_guarded(std::int64_t x) { return std::log10(static_cast<double>(std::max<std::int64_t>(x, 1))); }

/// `scores` rows align with `rows` (may have zero columns).
inline std::vector<ProviderAggregate> aggregate_providers(const std::vector<FeatureRow>& rows,
                                                          const corpus::ProviderTable& table,
                                                          const MatrixXd& scores,
                                                          AggregateMethod method = AggregateMethod::mean) {
  if (scores.cols() > 0 && scores.rows() != static_cast<Eigen::Index>(rows.size()))
    throw InputError("aggregate: score rows do not match feature rows");
  std::set<std::string> orphans;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!table.find(rows[i].provider_id)) orphans.insert(rows[i].provider_id);
    members[rows[i].provider_id].push_back(i);
  }
  if (!orphans.empty()) {
    std::string list;
    for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
    throw InputError("providers missing from provider table: " + list);
  }
  std::vector<ProviderAggregate> out;
  for (const auto& [id, idx] : members) {
    const auto& row = *table.find(id);
    ProviderAggregate a;
    a.provider_id = id;
    a.domain_count_sampled = static_cast<int>(idx.size());
    for (auto i : idx) {
      auto v = rows[i].features.values();
      for (std::size_t k = 0; k < kFeatureCount; ++k) ++a.category_counts[k][static_cast<std::size_t>(v[k])];
    }
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      double present = features::is_ordinal(k) ? a.category_counts[k][0] + a.category_counts[k][1]
                                                : a.category_counts[k][1];
      a.feature_prevalence[k] = present / static_cast<double>(idx.size());
    }
    a.mean_scores = VectorXd::Zero(scores.cols());
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      std::vector<double> col;
      for (auto i : idx) col.push_back(scores(static_cast<Eigen::Index>(i), j));
      a.mean_scores[j] = method == AggregateMethod::mean ? stats::mean(col) : stats::median(col);
    }
    a.log10_domains = log10_guarded(row.domain_count);
    a.log10_ips = log10_guarded(row.ip_count);
    a.phishing_count = row.phishing_count;
    a.malware_count = row.malware_count;
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<std::string> aggregate_header(const std::vector<std::string>& factor_names) {
  std::vector<std::string> h = {"provider_id", "domain_count_sampled", "log10_domains", "log10_ips",
                                "phishing_count", "malware_count"};
  for (auto n : kFeatureNames) h.push_back("prev_" + std::string(n));
  for (const auto& f : factor_names) h.push_back(f);
  return h;
}

inline void write_aggregates(std::ostream& out, const std::vector<ProviderAggregate>& aggs,
                             const std::vector<std::string>& factor_names) {
  csv::write_row(out, aggregate_header(factor_names));
  for (const auto& a : aggs) {
    std::vector<std::string> r = {a.provider_id, std::to_string(a.domain_count_sampled),
                                  format_double(a.log10_domains), format_double(a.log10_ips),
                                  std::to_string(a.phishing_count), std::to_string(a.malware_count)};
    for (double v : a.feature_prevalence) r.push_back(format_double(v));
    for (Eigen::Index j = 0; j < a.mean_scores.size(); ++j) r.push_back(format_double(a.mean_scores[j]));
    csv::write_row(out, r);
  }
}

// ---------------------------------------------------------------------------
// Landscape

struct SummaryRow {
  std::string indicator;
  std::string category;  // present | unpatched | patched_or_hidden
  std::int64_t count = 0;
  double percent = 0;          // of all domains
  double percent_of_present = 0;  // ordinal breakdown only
};

struct Landscape {
  std::int64_t domains = 0;
  std::vector<SummaryRow> summary;
  std::array<std::array<int, 10>, kFeatureCount> histograms{};  // providers per 10% prevalence bin
};

inline double percentage(std::int64_t count, std::int64_t total) {
  return total > 0 ? 100.0 * static_cast<double>(count) / static_cast<double>(total) : 0.0;
}

inline int prevalence_bin(double rate) {
  return std::clamp(static_cast<int>(std::floor(rate * 10.0 + 1e-9)), 0, 9);
}

inline Landscape landscape(const std::vector<FeatureRow>& rows, const std::vector<ProviderAggregate>& aggs) {
  if (aggs.empty()) throw InputError("landscape: no provider aggregates");
  Landscape l;
  l.domains = static_cast<std::int64_t>(rows.size());
  std::array<std::array<std::int64_t, 3>, kFeatureCount> counts{};
  for (const auto& r : rows) {
    auto v = r.features.values();
    for (std::size_t k = 0; k < kFeatureCount; ++k) ++counts[k][static_cast<std::size_t>(v[k])];
  }
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    std::string name(kFeatureNames[k]);
    if (!features::is_ordinal(k)) {
      l.summary.push_back({name, "present", counts[k][1], percentage(counts[k][1], l.domains), 0});
    } else {
      auto present = counts[k][0] + counts[k][1];
      l.summary.push_back({name, "present", present, percentage(present, l.domains), 100.0});
      l.summary.push_back({name, "unpatched", counts[k][0], percentage(counts[k][0], l.domains),
                           percentage(counts[k][0], present)});
      l.summary.push_back({name, "patched_or_hidden", counts[k][1], percentage(counts[k][1], l.domains),
                           percentage(counts[k][1], present)});
    }
  }
  for (const auto& a : aggs)
    for (std::size_t k = 0; k < kFeatureCount; ++k) ++l.histograms[k][static_cast<std::size_t>(prevalence_bin(a.feature_prevalence[k]))];
  return l;
}

inline void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

/// Writes landscape_summary.{csv,txt} and provider_histograms.{csv,txt}.
inline Landscape landscape_report(const std::vector<FeatureRow>& rows,
                                  const std::vector<ProviderAggregate>& aggs, const fs::path& dir) {
  auto l = landscape(rows, aggs);
  fs::create_directories(dir);
  std::vector<std::string> sh = {"indicator", "category", "count", "percent", "percent_of_present"};
  std::vector<std::vector<std::string>> srows, stxt;
  for (const auto& s : l.summary) {
    bool ord = s.category != "present" || s.percent_of_present != 0;
    srows.push_back({s.indicator, s.category, std::to_string(s.count), format_double(s.percent),
                     ord ? format_double(s.percent_of_present) : ""});
    stxt.push_back({s.indicator, s.category, std::to_string(s.count), format_fixed(s.percent, 2),
                    ord ? format_fixed(s.percent_of_present, 2) : ""});
  }
  std::ostringstream csvs;
  csv::write_row(csvs, sh);
  for (const auto& r : srows) csv::write_row(csvs, r);
  write_text(dir / "landscape_summary.csv", csvs.str());
  write_text(dir / "landscape_summary.txt",
             "domains " + std::to_string(l.domains) + "\n" + csv::aligned(sh, stxt));

  std::vector<std::string> hh = {"indicator"};
  for (int b = 0; b < 10; ++b) hh.push_back(std::to_string(b * 10) + "-" + std::to_string(b * 10 + 10) + "%");
  std::vector<std::vector<std::string>> hrows;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    std::vector<std::string> r = {std::string(kFeatureNames[k])};
    for (int c : l.histograms[k]) r.push_back(std::to_string(c));
    hrows.push_back(r);
  }
  std::ostringstream hcsv;
  csv::write_row(hcsv, hh);
  for (const auto& r : hrows) csv::write_row(hcsv, r);
  write_text(dir / "provider_histograms.csv", hcsv.str());
  write_text(dir / "provider_histograms.txt", csv::aligned(hh, hrows));
  return l;
}

// ---------------------------------------------------------------------------
// Factor model outputs

inline std::string matrix_csv(const std::vector<std::string>& row_names, const std::vector<std::string>& col_names,
                              const MatrixXd& m, const std::string& corner = "variable") {
  std::ostringstream os;
  std::vector<std::string> h = {corner};
  h.insert(h.end(), col_names.begin(), col_names.end());
  csv::write_row(os, h);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> r = {row_names[static_cast<std::size_t>(i)]};
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(format_double(m(i, j)));
    csv::write_row(os, r);
  }
  return os.str();
}

struct FactorRun {
  factor::CorrelationMatrix corr;
  std::optional<factor::ParallelAnalysis> pa;
  factor::FactorModel model;
  int k = 0;
};

inline void write_factor_outputs(const FactorRun& run, const std::vector<FeatureRow>& rows, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& m = run.model;
  write_text(dir / "correlation.csv", matrix_csv(m.variables, m.variables, run.corr.values));
  MatrixXd lu(m.loadings.rows(), m.loadings.cols() + 1);
  lu << m.loadings, m.uniquenesses;
  auto cols = m.factors;
  cols.push_back("uniqueness");
  write_text(dir / "loadings.csv", matrix_csv(m.variables, cols, lu));
  {
    std::vector<std::vector<std::string>> t;
    for (Eigen::Index i = 0; i < lu.rows(); ++i) {
      std::vector<std::string> r = {m.variables[static_cast<std::size_t>(i)]};
      for (Eigen::Index j = 0; j < lu.cols(); ++j) {
        std::string cell = format_fixed(lu(i, j), 3);
        if (j < m.loadings.cols() && std::abs(lu(i, j)) >= 0.4) cell += " *";
        r.push_back(cell);
      }
      t.push_back(r);
    }
    std::vector<std::string> h = {"variable"};
    h.insert(h.end(), cols.begin(), cols.end());
    write_text(dir / "loadings.txt", csv::aligned(h, t) + "* |loading| >= 0.4\n");
  }
  MatrixXd var(3, m.loadings.cols());
  var.row(0) = m.variance.ss_loadings.transpose();
  var.row(1) = m.variance.proportion_var.transpose();
  var.row(2) = m.variance.cumulative_var.transpose();
  write_text(dir / "variance.csv", matrix_csv({"ss_loadings", "proportion_var", "cumulative_var"}, m.factors, var, "statistic"));
  write_text(dir / "rotation.csv", matrix_csv(m.factors, m.factors, m.rotation, "factor"));
  {
    std::ostringstream os;
    std::vector<std::string> h = {"domain", "provider_id"};
    h.insert(h.end(), m.factors.begin(), m.factors.end());
    csv::write_row(os, h);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::vector<std::string> r = {rows[i].domain, rows[i].provider_id};
      for (Eigen::Index j = 0; j < m.scores.cols(); ++j) r.push_back(format_double(m.scores(static_cast<Eigen::Index>(i), j)));
      csv::write_row(os, r);
    }
    write_text(dir / "scores.csv", os.str());
  }
  if (run.pa) {
    std::ostringstream os;
    csv::write_row(os, {"rank", "observed", "null_quantile", "retained"});
    for (Eigen::Index r = 0; r < run.pa->observed.size(); ++r)
      csv::write_row(os, {std::to_string(r + 1), format_double(run.pa->observed[r]),
                          format_double(run.pa->null_quantile[r]), r < run.pa->k ? "1" : "0"});
    write_text(dir / "parallel_analysis.csv", os.str());
  }
}

struct ScoresFile {
  std::vector<std::string> domains;
  std::vector<std::string> providers;
  std::vector<std::string> factors;
  MatrixXd scores;
};

inline ScoresFile load_scores(const std::string& path) {
  auto t = csv::read_file(path);
  auto cd = t.column("domain");
  auto cp = t.column("provider_id");
  ScoresFile s;
  std::vector<std::size_t> fc;
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (c != cd && c != cp) {
      s.factors.push_back(t.header[c]);
      fc.push_back(c);
    }
  if (fc.empty()) throw InputError(path + ": no score columns");
  s.scores.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(fc.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s.domains.push_back(t.rows[r][cd]);
    s.providers.push_back(t.rows[r][cp]);
    for (std::size_t j = 0; j < fc.size(); ++j) {
      auto v = text::parse_double(t.rows[r][fc[j]]);
      if (!v) throw InputError(path + ":" + std::to_string(t.line_numbers[r]) + ": bad score '" + t.rows[r][fc[j]] + "'");
      s.scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = *v;
    }
  }
  return s;
}

inline std::string fixed_effects_csv(const std::vector<std::string>& factors,
                                     const std::vector<regress::FixedEffectsFit>& fits, bool text) {
  std::vector<std::string> h = {"factor", "r_squared", "adj_r_squared", "residual_std_error", "group_count", "n", "intercept"};
  std::vector<std::vector<std::string>> rows;
  for (std::size_t j = 0; j < fits.size(); ++j) {
    const auto& f = fits[j];
    auto num = [&](double v) { return text ? format_fixed(v, 4) : format_double(v); };
    rows.push_back({factors[j], num(f.r_squared), num(f.adj_r_squared), num(f.residual_std_error),
                    std::to_string(f.group_count), std::to_string(f.n), num(f.intercept)});
  }
  if (text) return csv::aligned(h, rows);
  std::ostringstream os;
  csv::write_row(os, h);
  for (const auto& r : rows) csv::write_row(os, r);
  return os.str();
}

inline std::vector<regress::FixedEffectsFit> fixed_effects_all(const ScoresFile& s) {
  std::vector<regress::FixedEffectsFit> fits;
  for (Eigen::Index j = 0; j < s.scores.cols(); ++j) {
    std::vector<double> y(s.scores.col(j).data(), s.scores.col(j).data() + s.scores.rows());
    fits.push_back(regress::fixed_effects_fit(y, s.providers));
  }
  return fits;
}

// ---------------------------------------------------------------------------
// GLM model grid

struct GlmModel {
  std::string label;                    // (1) .. (k+3)
  std::vector<std::string> covariates;  // excluding intercept
  regress::RegressionFit fit;
  std::optional<double> pseudo_r2_vs_model2;
};

struct ProviderDesign {
  std::vector<std::string> provider_ids;
  std::map<std::string, VectorXd> columns;
  VectorXd phishing;
  VectorXd malware;
};

inline ProviderDesign provider_design(const std::vector<ProviderAggregate>& aggs,
                                      const std::vector<std::string>& factor_names) {
  ProviderDesign d;
  const auto g = static_cast<Eigen::Index>(aggs.size());
  d.phishing.resize(g);
  d.malware.resize(g);
  VectorXd ld(g), li(g);
  std::vector<VectorXd> f(factor_names.size(), VectorXd(g));
  for (Eigen::Index i = 0; i < g; ++i) {
    const auto& a = aggs[static_cast<std::size_t>(i)];
    d.provider_ids.push_back(a.provider_id);
    d.phishing[i] = static_cast<double>(a.phishing_count);
    d.malware[i] = static_cast<double>(a.malware_count);
    ld[i] = a.log10_domains;
    li[i] = a.log10_ips;
    for (std::size_t j = 0; j < factor_names.size(); ++j) f[j][i] = a.mean_scores[static_cast<Eigen::Index>(j)];
  }
  d.columns["log10_domains"] = ld;
  d.columns["log10_ips"] = li;
  for (std::size_t j = 0; j < factor_names.size(); ++j) d.columns[factor_names[j]] = f[j];
  return d;
}

inline regress::RegressionFit fit_covariates(const VectorXd& y, const std::map<std::string, VectorXd>& cols,
                                             const std::vector<std::string>& covariates) {
  MatrixXd x(y.size(), static_cast<Eigen::Index>(covariates.size()) + 1);
  x.col(0).setOnes();
  std::vector<std::string> names = {regress::kIntercept};
  for (std::size_t j = 0; j < covariates.size(); ++j) {
    auto it = cols.find(covariates[j]);
    if (it == cols.end()) throw InputError("unknown covariate '" + covariates[j] + "'");
    x.col(static_cast<Eigen::Index>(j) + 1) = it->second;
    names.push_back(covariates[j]);
  }
  return regress::glm_quasipoisson(y, x, names);
}

/// (1) intercept only, (2) sizes, (3..k+2) sizes + one factor, (k+3) sizes + all factors.
inline std::vector<GlmModel> glm_grid(const VectorXd& y, const std::map<std::string, VectorXd>& cols,
                                      const std::vector<std::string>& factor_names) {
  std::vector<std::vector<std::string>> specs = {{}, {"log10_domains", "log10_ips"}};
  for (const auto& f : factor_names) specs.push_back({"log10_domains", "log10_ips", f});
  if (factor_names.size() > 1) {
    std::vector<std::string> all = {"log10_domains", "log10_ips"};
    all.insert(all.end(), factor_names.begin(), factor_names.end());
    specs.push_back(all);
  }
  std::vector<GlmModel> out;
  for (std::size_t m = 0; m < specs.size(); ++m) {
    GlmModel gm;
    gm.label = "(" + std::to_string(m + 1) + ")";
    gm.covariates = specs[m];
    gm.fit = fit_covariates(y, cols, specs[m]);
    if (m >= 2) gm.pseudo_r2_vs_model2 = regress::pseudo_r2_vs_baseline(gm.fit, out[1].fit);
    out.push_back(std::move(gm));
  }
  return out;
}

inline void write_glm_grid(const std::vector<GlmModel>& models, const fs::path& stem) {
  std::ostringstream coef, stat;
  csv::write_row(coef, {"model", "term", "estimate", "std_error", "t_value", "p_value", "stars"});
  csv::write_row(stat, {"model", "covariates", "n", "p", "poisson_loglik", "dispersion", "deviance",
                        "null_deviance", "pseudo_r2", "pseudo_r2_vs_model2"});
  std::ostringstream txt;
  for (const auto& m : models) {
    for (auto r : regress::coefficient_rows(m.fit)) {
      r.insert(r.begin(), m.label);
      csv::write_row(coef, r);
    }
    std::string covs;
    for (const auto& c : m.covariates) covs += (covs.empty() ? "" : ";") + c;
    csv::write_row(stat, {m.label, covs, std::to_string(m.fit.n), std::to_string(m.fit.p),
                          format_double(m.fit.poisson_loglik), format_double(m.fit.dispersion),
                          format_double(m.fit.deviance), format_double(m.fit.null_deviance),
                          format_double(m.fit.pseudo_r2),
                          m.pseudo_r2_vs_model2 ? format_double(*m.pseudo_r2_vs_model2) : ""});
    txt << "model " << m.label << "\n" << regress::fit_summary_text(m.fit);
    if (m.pseudo_r2_vs_model2) txt << "pseudo R2 vs model (2) " << format_fixed(*m.pseudo_r2_vs_model2, 4) << "\n";
    txt << "\n";
  }
  write_text(stem.string() + "_coefficients.csv", coef.str());
  write_text(stem.string() + "_models.csv", stat.str());
  write_text(stem.string() + ".txt", txt.str());
}

// ---------------------------------------------------------------------------
// Run configuration and manifest

struct PipelineConfig {
  std::string out_dir;
  std::string corpus;
  std::string patch_table;
  std::string cms_rules;
  std::string features;
  std::string providers;
  bool synth = false;
  std::uint64_t synth_seed = 1;
  int synth_domains = 10000;
  int synth_providers = 200;
  std::string factors = "auto";
  int replicates = 50;
  double pa_quantile = 0.95;
  std::uint64_t seed = 1;
  factor::ExtractionMethod extraction = factor::ExtractionMethod::minres;
  bool rotate = true;
  bool kaiser = true;
  factor::ScoreMethod scores = factor::ScoreMethod::regression;
  AggregateMethod aggregate = AggregateMethod::mean;
  std::vector<std::string> responses = {"phishing", "malware"};
  std::vector<double> effect_quantiles = {0.1, 0.5, 0.9};
  int effect_points = 50;
  unsigned threads = 1;
  std::size_t page_limit = corpus::kDefaultPageLimit;
  bool drop_constant = true;
  std::map<std::string, std::string> raw;  // as read, for the manifest
};

inline const std::vector<std::string>& pipeline_keys() {
  static const std::vector<std::string> keys = {
      "out_dir",   "corpus",      "patch_table", "cms_rules",      "features",   "providers",
      "synth",     "synth_seed",  "synth_domains", "synth_providers", "factors", "replicates",
      "pa_quantile", "seed",      "extraction",  "rotate",         "kaiser",     "scores",
      "aggregate", "responses",   "effect_quantiles", "effect_points", "threads", "page_limit",
      "drop_constant"};
  return keys;
}

inline PipelineConfig parse_pipeline_config(const kv::Config& c) {
  c.check_keys(pipeline_keys());
  PipelineConfig p;
  p.raw = c.values;
  p.out_dir = c.get("out_dir", "");
  p.corpus = c.get("corpus", "");
  p.patch_table = c.get("patch_table", "");
  p.cms_rules = c.get("cms_rules", "");
  p.features = c.get("features", "");
  p.providers = c.get("providers", "");
  p.synth = c.get_bool("synth", false);
  p.synth_seed = c.get_int<std::uint64_t>("synth_seed", 1);
  p.synth_domains = c.get_int<int>("synth_domains", 10000);
  p.synth_providers = c.get_int<int>("synth_providers", 200);
  p.factors = c.get("factors", "auto");
  p.replicates = c.get_int<int>("replicates", 50);
  p.pa_quantile = c.get_double("pa_quantile", 0.95);
  p.seed = c.get_int<std::uint64_t>("seed", 1);
  auto ex = c.get("extraction", "minres");
  if (ex == "minres") p.extraction = factor::ExtractionMethod::minres;
  else if (ex == "principal_axis") p.extraction = factor::ExtractionMethod::principal_axis;
  else throw InputError(c.source + ": extraction must be minres or principal_axis");
  p.rotate = c.get_bool("rotate", true);
  p.kaiser = c.get_bool("kaiser", true);
  auto sc = c.get("scores", "regression");
  if (sc == "regression") p.scores = factor::ScoreMethod::regression;
  else if (sc == "bartlett") p.scores = factor::ScoreMethod::bartlett;
  else throw InputError(c.source + ": scores must be regression or bartlett");
  auto ag = c.get("aggregate", "mean");
  if (ag == "mean") p.aggregate = AggregateMethod::mean;
  else if (ag == "median") p.aggregate = AggregateMethod::median;
  else throw InputError(c.source + ": aggregate must be mean or median");
  p.responses = text::split_list(c.get("responses", "phishing,malware"));
  for (const auto& r : p.responses)
    if (r != "phishing" && r != "malware") throw InputError(c.source + ": unknown response '" + r + "'");
  p.effect_quantiles.clear();
  for (const auto& q : text::split_list(c.get("effect_quantiles", "0.1,0.5,0.9"))) {
    auto v = text::parse_double(q);
    if (!v || *v < 0 || *v > 1) throw InputError(c.source + ": bad effect quantile '" + q + "'");
    p.effect_quantiles.push_back(*v);
  }
  p.effect_points = c.get_int<int>("effect_points", 50);
  p.threads = c.get_int<unsigned>("threads", 1);
  p.page_limit = c.get_int<std::size_t>("page_limit", corpus::kDefaultPageLimit);
  p.drop_constant = c.get_bool("drop_constant", true);
  int sources = (!p.corpus.empty()) + (!p.features.empty()) + p.synth;
  if (sources != 1) throw InputError(c.source + ": set exactly one of corpus, features, synth=true");
  if (!p.synth && p.providers.empty()) throw InputError(c.source + ": providers is required");
  if (p.factors != "auto") {
    auto k = text::parse_int<int>(p.factors);
    if (!k || *k < 1) throw InputError(c.source + ": factors must be auto or a positive integer");
  }
  return p;
}

struct PipelineResult {
  int k = 0;
  factor::FactorModel model;
  std::vector<regress::FixedEffectsFit> fixed_effects;
  std::map<std::string, std::vector<GlmModel>> glm;
  std::vector<std::string> outputs;  // files written, relative to out_dir
};

namespace detail {

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error("stage " + name + " failed: " + e.what());
  }
}

}  // namespace detail

/// extract|synth -> polychoric -> parallel analysis -> minres -> varimax ->
/// scores -> fixed effects -> provider aggregation -> GLM grid -> landscape,
/// effect curves and manifest. Every output is written under out_dir.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  if (cfg.out_dir.empty()) throw InputError("pipeline: out_dir is required");
  fs::path out = cfg.out_dir;
  fs::create_directories(out);
  PipelineResult res;
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::string> notes;

  std::vector<FeatureRow> rows;
  corpus::ProviderTable providers;
  detail::stage("input", [&] {
    if (cfg.synth) {
      auto spec = default_world(cfg.synth_seed);
      spec.n_domains = cfg.synth_domains;
      spec.n_providers = cfg.synth_providers;
      auto world = synth_generate(spec);
      rows = synth_feature_rows(world);
      providers = world.providers;
      write_text(out / "synth_true_scores.csv",
                 matrix_csv(world.domains, {"F1", "F2", "F3", "F4"}, world.true_scores, "domain"));
      std::ostringstream pt;
      corpus::write_provider_table(pt, providers);
      write_text(out / "providers.csv", pt.str());
      res.outputs.push_back("synth_true_scores.csv");
      res.outputs.push_back("providers.csv");
    } else {
      providers = corpus::load_provider_table(cfg.providers);
      inputs.emplace_back("providers", cfg.providers);
      if (!cfg.features.empty()) {
        rows = features::load_features(cfg.features);
        inputs.emplace_back("features", cfg.features);
      } else {
        auto table = cfg.patch_table.empty() ? corpus::default_patch_table() : corpus::load_patch_table(cfg.patch_table);
        auto rules = cfg.cms_rules.empty() ? features::default_cms_rules() : features::load_cms_rules(cfg.cms_rules);
        inputs.emplace_back("corpus", cfg.corpus);
        if (!cfg.patch_table.empty()) inputs.emplace_back("patch_table", cfg.patch_table);
        if (!cfg.cms_rules.empty()) inputs.emplace_back("cms_rules", cfg.cms_rules);
        auto load = corpus::load_corpus(cfg.corpus, cfg.page_limit);
        for (const auto& e : load.errors) notes.push_back("corpus line " + std::to_string(e.line) + ": " + e.message);
        features::Diagnostics diag;
        for (const auto& rec : load.records) {
          if (rec.pages.empty()) {
            notes.push_back("skipped undescribable domain " + rec.domain);
            continue;
          }
          rows.push_back({rec.domain, rec.provider_id, features::build_feature_vector(rec, table, rules, &diag)});
        }
        notes.push_back("html parse warnings: " + std::to_string(diag.parse_warnings));
        for (const auto& w : diag.warnings) notes.push_back(w);
      }
    }
    std::ostringstream fcsv;
    features::write_features(fcsv, rows);
    write_text(out / "features.csv", fcsv.str());
    res.outputs.push_back("features.csv");
  });

  auto view = detail::stage("dataset", [&] { return dataset_from_features(rows, cfg.drop_constant); });
  for (const auto& d : view.dropped) notes.push_back("dropped constant indicator " + d);

  FactorRun fr;
  factor::PolychoricOptions popt{cfg.threads};
  fr.corr = detail::stage("polychoric", [&] { return factor::polychoric_matrix(view.data, popt); });
  if (cfg.factors == "auto") {
    fr.pa = detail::stage("parallel_analysis", [&] {
      return factor::parallel_analysis(view.data, cfg.replicates, cfg.pa_quantile, cfg.seed, popt);
    });
    fr.k = std::clamp(fr.pa->k, 1, static_cast<int>(view.data.p()) - 1);
    if (fr.pa->k < 1) notes.push_back("parallel analysis retained 0 factors; using 1");
  } else {
    fr.k = *text::parse_int<int>(cfg.factors);
  }
  res.k = fr.k;
  fr.model = detail::stage("factor", [&] {
    factor::FactorOptions fo;
    fo.extraction.method = cfg.extraction;
    fo.rotate = cfg.rotate;
    fo.kaiser_normalize = cfg.kaiser;
    fo.scores = cfg.scores;
    return factor::fit_factor_model(view.data, fr.corr, fr.k, fo);
  });
  res.model = fr.model;
  detail::stage("factor_output", [&] { write_factor_outputs(fr, rows, out); });
  for (auto f : {"correlation.csv", "loadings.csv", "loadings.txt", "variance.csv", "rotation.csv", "scores.csv"})
    res.outputs.push_back(f);
  if (fr.pa) res.outputs.push_back("parallel_analysis.csv");

  detail::stage("fixed_effects", [&] {
    ScoresFile s;
    s.factors = fr.model.factors;
    s.scores = fr.model.scores;
    for (const auto& r : rows) {
      s.domains.push_back(r.domain);
      s.providers.push_back(r.provider_id);
    }
    res.fixed_effects = fixed_effects_all(s);
    write_text(out / "fixed_effects.csv", fixed_effects_csv(s.factors, res.fixed_effects, false));
    write_text(out / "fixed_effects.txt", fixed_effects_csv(s.factors, res.fixed_effects, true));
  });
  res.outputs.push_back("fixed_effects.csv");
  res.outputs.push_back("fixed_effects.txt");

  auto aggs = detail::stage("aggregate", [&] {
    return aggregate_providers(rows, providers, fr.model.scores, cfg.aggregate);
  });
  detail::stage("aggregate_output", [&] {
    std::ostringstream os;
    write_aggregates(os, aggs, fr.model.factors);
    write_text(out / "provider_aggregates.csv", os.str());
  });
  res.outputs.push_back("provider_aggregates.csv");

  detail::stage("landscape", [&] { landscape_report(rows, aggs, out); });
  for (auto f : {"landscape_summary.csv", "landscape_summary.txt", "provider_histograms.csv", "provider_histograms.txt"})
    res.outputs.push_back(f);

  auto design = provider_design(aggs, fr.model.factors);
  for (const auto& response : cfg.responses) {
    auto models = detail::stage("glm_" + response, [&] {
      const VectorXd& y = response == "phishing" ? design.phishing : design.malware;
      return glm_grid(y, design.columns, fr.model.factors);
    });
    detail::stage("glm_output", [&] { write_glm_grid(models, out / ("glm_" + response)); });
    for (auto suffix : {"_coefficients.csv", "_models.csv", ".txt"}) res.outputs.push_back("glm_" + response + suffix);
    detail::stage("effect_curve", [&] {
      const auto& combined = models.back().fit;
      std::ostringstream os;
      csv::write_row(os, {"factor", "quantile", "factor_value", "log10_domains", "expected_count"});
      for (const auto& f : fr.model.factors) {
        if (std::find(combined.names.begin(), combined.names.end(), f) == combined.names.end()) continue;
        for (const auto& pt : regress::effect_curve(combined, f, cfg.effect_quantiles, "log10_domains", cfg.effect_points))
          csv::write_row(os, {f, format_double(pt.quantile), format_double(pt.vary_value),
                              format_double(pt.sweep_value), format_double(pt.expected)});
      }
      write_text(out / ("effect_curve_" + response + ".csv"), os.str());
    });
    res.outputs.push_back("effect_curve_" + response + ".csv");
    res.glm[response] = std::move(models);
  }

  detail::stage("manifest", [&] {
    std::ostringstream m;
    m << "tool=" << kToolVersion << "\n";
    m << "# configuration\n";
    for (const auto& [k, v] : cfg.raw) m << "config." << k << "=" << v << "\n";
    m << "# seeds\n";
    m << "seed.parallel_analysis=" << cfg.seed << "\n";
    m << "seed.parallel_analysis.replicate_streams=splitmix64(seed, replicate)\n";
    if (cfg.synth) m << "seed.synth=" << cfg.synth_seed << "\n";
    m << "# tolerances\n";
    m << "polychoric.rho_bound=" << format_double(factor::kRhoBound) << "\n";
    m << "polychoric.brent_bits=40\n";
    m << "polychoric.continuity_correction=0.5\n";
    m << "polychoric.psd_floor=" << format_double(factor::kMinEigenvalue) << "\n";
    m << "polychoric.smoothed=" << (fr.corr.smoothed ? "true" : "false") << "\n";
    m << "polychoric.min_eigenvalue_before=" << format_double(fr.corr.min_eigenvalue_before) << "\n";
    m << "parallel_analysis.replicates=" << cfg.replicates << "\n";
    m << "parallel_analysis.quantile=" << format_double(cfg.pa_quantile) << "\n";
    m << "factors.k=" << fr.k << "\n";
    factor::ExtractionOptions eo;
    m << "extraction.method=" << (cfg.extraction == factor::ExtractionMethod::minres ? "minres" : "principal_axis") << "\n";
    m << "extraction.tolerance=" << format_double(eo.tolerance) << "\n";
    m << "extraction.max_iterations=" << eo.max_iterations << "\n";
    m << "extraction.uniqueness_floor=" << format_double(factor::kUniquenessFloor) << "\n";
    m << "extraction.heywood=" << (fr.model.heywood ? "true" : "false") << "\n";
    m << "rotation.varimax_tolerance=1e-10\n";
    m << "rotation.kaiser=" << (cfg.kaiser ? "true" : "false") << "\n";
    m << "scores.method=" << (cfg.scores == factor::ScoreMethod::regression ? "regression" : "bartlett") << "\n";
    regress::GlmOptions go;
    m << "glm.tolerance=" << format_double(go.tolerance) << "\n";
    m << "glm.max_iterations=" << go.max_iterations << "\n";
    m << "# inputs\n";
    for (const auto& [role, path] : inputs) m << "input." << role << ".sha256=" << digest::sha256_file(path) << "\n";
    m << "# notes\n";
    for (std::size_t i = 0; i < notes.size(); ++i) m << "note." << i + 1 << "=" << notes[i] << "\n";
    m << "# outputs\n";
    for (const auto& f : res.outputs) m << "output." << f << ".sha256=" << digest::sha256_file((out / f).string()) << "\n";
    write_text(out / "manifest.txt", m.str());
  });
  return res;
}

}  // namespace hostsec::pipeline
