#pragma once

// Provider fixed effects by group-mean decomposition and quasi-Poisson
// log-link GLMs fitted by IRLS.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "hostsec/common.hpp"
#include "hostsec/csv.hpp"
#include "hostsec/stats.hpp"

namespace hostsec::regress {

using text::format_double;
using text::format_fixed;

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline const std::string kIntercept = "(Intercept)";

// ---------------------------------------------------------------------------
// Fixed effects

struct FixedEffectsFit {
  double r_squared = 0;
  double adj_r_squared = 0;
  double residual_std_error = 0;
  int group_count = 0;
  int n = 0;
  double intercept = 0;  // mean of the reference (first, sorted) provider
  double ss_total = 0;
  double ss_between = 0;
  double ss_within = 0;
};

/// Equivalent to OLS on one dummy per provider.
inline FixedEffectsFit fixed_effects_fit(const std::vector<double>& y,
                                         const std::vector<std::string>& groups) {
  if (y.size() != groups.size()) throw InputError("fixed effects: scores and provider ids differ in length");
  std::map<std::string, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto& a = acc[groups[i]];
    a.first += y[i];
    a.second += 1;
  }
  if (acc.size() < 2) throw InputError("fixed effects need at least two providers");
  FixedEffectsFit fit;
  fit.n = static_cast<int>(y.size());
  fit.group_count = static_cast<int>(acc.size());
  if (fit.n <= fit.group_count) throw InputError("fixed effects: no residual degrees of freedom (n <= groups)");
  std::map<std::string, double> means;
  double total = 0;
  for (const auto& [g, a] : acc) {
    means[g] = a.first / a.second;
    total += a.first;
  }
  double grand = total / static_cast<double>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    double d = y[i] - means[groups[i]];
    fit.ss_within += d * d;
    double t = y[i] - grand;
    fit.ss_total += t * t;
  }
  for (const auto& [g, a] : acc) {
    double d = means[g] - grand;
    fit.ss_between += a.second * d * d;
  }
  if (fit.ss_total <= 0) throw InputError("fixed effects: zero total variance");
  double denom = fit.ss_between + fit.ss_within;
  fit.r_squared = fit.ss_between / denom;
  double n = fit.n, g = fit.group_count;
  fit.adj_r_squared = 1 - (1 - fit.r_squared) * (n - 1) / (n - g);
  fit.residual_std_error = std::sqrt(fit.ss_within / (n - g));
  fit.intercept = means.begin()->second;
  return fit;
}

// ---------------------------------------------------------------------------
// Quasi-Poisson GLM

struct RegressionFit {
  std::vector<std::string> names;
  VectorXd coefficients;
  VectorXd std_errors;           // dispersion-scaled
  VectorXd unscaled_std_errors;  // plain Poisson
  VectorXd t_values;
  VectorXd p_values;
  double dispersion = 0;
  double pearson_chi2 = 0;
  double deviance = 0;
  double null_deviance = 0;
  double pseudo_r2 = 0;
  double poisson_loglik = 0;
  int n = 0;
  int p = 0;
  int iterations = 0;
  VectorXd y;
  VectorXd fitted;
  MatrixXd x;

  double coefficient(const std::string& name) const { return coefficients[index(name)]; }

  Eigen::Index index(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InputError("unknown covariate '" + name + "'");
    return it - names.begin();
  }
};

struct GlmOptions {
  double tolerance = 1e-10;
  int max_iterations = 100;
};

inline double poisson_deviance(const VectorXd& y, const VectorXd& mu) {
  double d = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double term = y[i] > 0 ? y[i] * std::log(y[i] / mu[i]) - (y[i] - mu[i]) : mu[i];
    d += term;
  }
  return 2 * d;
}

inline double poisson_loglik(const VectorXd& y, const VectorXd& mu) {
  double ll = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    ll += (y[i] > 0 ? y[i] * std::log(mu[i]) : 0.0) - mu[i] - std::lgamma(y[i] + 1);
  return ll;
}

inline std::string stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

/// Throws when X lacks full column rank, naming the columns that are linear
/// combinations of the others.
inline void check_full_rank(const MatrixXd& x, const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  auto rank = qr.rank();
  if (rank == x.cols()) return;
  std::vector<std::string> dropped;
  for (Eigen::Index j = rank; j < x.cols(); ++j)
    dropped.push_back(names[static_cast<std::size_t>(qr.colsPermutation().indices()[j])]);
  std::sort(dropped.begin(), dropped.end());
  std::string list;
  for (const auto& d : dropped) list += (list.empty() ? "" : ", ") + d;
  throw InputError("rank-deficient design: collinear column(s) " + list);
}

/// Poisson log-link IRLS; dispersion from Pearson chi-square over n - p.
inline RegressionFit glm_quasipoisson(const VectorXd& y, const MatrixXd& x,
                                      const std::vector<std::string>& names,
                                      const GlmOptions& opt = {}) {
  const auto n = x.rows(), p = x.cols();
  if (y.size() != n) throw InputError("glm: response and design differ in rows");
  if (static_cast<Eigen::Index>(names.size()) != p) throw InputError("glm: one name per column required");
  if (n <= p) throw InputError("glm: need more observations than coefficients");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(y[i] >= 0) || !std::isfinite(y[i])) throw InputError("glm: response must be nonnegative");
  if (!x.allFinite()) throw InputError("glm: design matrix has non-finite entries");
  check_full_rank(x, names);

  RegressionFit fit;
  fit.names = names;
  fit.n = static_cast<int>(n);
  fit.p = static_cast<int>(p);
  fit.y = y;
  fit.x = x;

  VectorXd mu = (y.array() + 0.1).matrix();
  VectorXd eta = mu.array().log().matrix();
  VectorXd beta = VectorXd::Zero(p);
  bool first = true;
  std::ostringstream trace;
  bool converged = false;
  double dev = poisson_deviance(y, mu);
  for (fit.iterations = 1; fit.iterations <= opt.max_iterations; ++fit.iterations) {
    VectorXd w = mu;
    VectorXd z = eta + ((y - mu).array() / mu.array()).matrix();
    VectorXd sw = w.cwiseSqrt();
    MatrixXd xw = sw.asDiagonal() * x;
    VectorXd next = xw.colPivHouseholderQr().solve((sw.array() * z.array()).matrix());
    if (!first) {
      // step halving on deviance increase
      for (int h = 0; h < 30; ++h) {
        VectorXd mu_try = (x * next).array().exp().matrix();
        double dev_try = poisson_deviance(y, mu_try);
        if (mu_try.allFinite() && std::isfinite(dev_try) && dev_try <= dev * (1 + 1e-12) + 1e-12) break;
        next = 0.5 * (next + beta);
      }
    }
    double change = (next - beta).cwiseAbs().maxCoeff() / std::max(beta.cwiseAbs().maxCoeff(), 1.0);
    beta = next;
    eta = x * beta;
    mu = eta.array().exp().matrix();
    dev = poisson_deviance(y, mu);
    trace << " it" << fit.iterations << ": deviance=" << format_double(dev)
          << " change=" << format_double(change) << ";";
    if (!mu.allFinite() || !std::isfinite(dev)) break;
    if (!first && change < opt.tolerance) {
      converged = true;
      break;
    }
    first = false;
  }
  if (!converged) throw NumericError("glm: IRLS did not converge; trace:" + trace.str());

  fit.coefficients = beta;
  fit.fitted = mu;
  fit.deviance = dev;
  double ybar = y.mean();
  fit.null_deviance = poisson_deviance(y, VectorXd::Constant(n, ybar));
  fit.pseudo_r2 = fit.null_deviance > 0 ? 1 - fit.deviance / fit.null_deviance : 0.0;
  fit.poisson_loglik = poisson_loglik(y, mu);
  fit.pearson_chi2 = ((y - mu).array().square() / mu.array()).sum();
  fit.dispersion = fit.pearson_chi2 / static_cast<double>(n - p);

  MatrixXd info = x.transpose() * mu.asDiagonal() * x;
  MatrixXd cov = info.ldlt().solve(MatrixXd::Identity(p, p));
  fit.unscaled_std_errors = cov.diagonal().cwiseMax(0).cwiseSqrt();
  fit.std_errors = std::sqrt(fit.dispersion) * fit.unscaled_std_errors;
  fit.t_values = fit.coefficients.cwiseQuotient(fit.std_errors);
  fit.p_values.resize(p);
  boost::math::students_t dist(static_cast<double>(n - p));
  for (Eigen::Index j = 0; j < p; ++j) {
    double t = std::abs(fit.t_values[j]);
    fit.p_values[j] = std::isfinite(t) ? 2 * boost::math::cdf(boost::math::complement(dist, t)) : 0.0;
  }
  return fit;
}

/// 1 - D(fit) / D(baseline) for nested fits on the same response.
inline double pseudo_r2_vs_baseline(const RegressionFit& fit, const RegressionFit& baseline) {
  if (fit.n != baseline.n) throw InputError("pseudo R2: fits have different observation counts");
  if (fit.y != baseline.y) throw InputError("pseudo R2: fits have different responses");
  if (baseline.deviance <= 0) return 0.0;
  return 1 - fit.deviance / baseline.deviance;
}

/// Multiplicative change in the expected count per unit change of a covariate.
inline double rate_ratio(double coefficient) { return std::exp(std::abs(coefficient)); }

// ---------------------------------------------------------------------------
// Effect curves

struct EffectPoint {
  double quantile;      // quantile of the varied covariate
  double vary_value;
  double sweep_value;
  double expected;
};

/// Expected counts exp(x'b) over a sweep of `sweep` (grid of `points` values
/// spanning its observed range) for each requested quantile of `vary`; every
/// other covariate sits at its median.
inline std::vector<EffectPoint> effect_curve(const RegressionFit& fit, const std::string& vary,
                                             const std::vector<double>& quantiles = {0.1, 0.5, 0.9},
                                             const std::string& sweep = "log10_domains",
                                             int points = 50) {
  auto jv = fit.index(vary);
  auto js = fit.index(sweep);
  if (jv == js) throw InputError("effect curve: varied and swept covariate must differ");
  if (points < 2) throw InputError("effect curve: need at least two sweep points");
  const auto p = fit.x.cols();
  VectorXd base(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (fit.names[static_cast<std::size_t>(j)] == kIntercept) {
      base[j] = 1.0;
      continue;
    }
    std::vector<double> col(fit.x.col(j).data(), fit.x.col(j).data() + fit.x.rows());
    base[j] = stats::median(col);
  }
  std::vector<double> vcol(fit.x.col(jv).data(), fit.x.col(jv).data() + fit.x.rows());
  double lo = fit.x.col(js).minCoeff(), hi = fit.x.col(js).maxCoeff();
  std::vector<EffectPoint> out;
  for (double q : quantiles) {
    double vval = stats::quantile_type7(vcol, q);
    for (int i = 0; i < points; ++i) {
      double s = lo + (hi - lo) * i / (points - 1);
      VectorXd xr = base;
      xr[jv] = vval;
      xr[js] = s;
      out.push_back({q, vval, s, std::exp(xr.dot(fit.coefficients))});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

inline std::vector<std::string> coefficient_header() {
  return {"term", "estimate", "std_error", "t_value", "p_value", "stars"};
}

inline std::vector<std::vector<std::string>> coefficient_rows(const RegressionFit& fit) {
  std::vector<std::vector<std::string>> rows;
  for (int j = 0; j < fit.p; ++j)
    rows.push_back({fit.names[static_cast<std::size_t>(j)], format_double(fit.coefficients[j]),
                    format_double(fit.std_errors[j]), format_double(fit.t_values[j]),
                    format_double(fit.p_values[j]), stars(fit.p_values[j])});
  return rows;
}

inline std::string fit_summary_text(const RegressionFit& fit) {
  std::vector<std::vector<std::string>> rows;
  for (int j = 0; j < fit.p; ++j)
    rows.push_back({fit.names[static_cast<std::size_t>(j)],
                    format_fixed(fit.coefficients[j], 4) + stars(fit.p_values[j]),
                    "(" + format_fixed(fit.std_errors[j], 4) + ")", format_fixed(fit.t_values[j], 3),
                    format_fixed(fit.p_values[j], 4)});
  std::ostringstream os;
  os << csv::aligned({"term", "estimate", "std_error", "t", "p"}, rows);
  os << "observations " << fit.n << "\n"
     << "log likelihood (Poisson) " << format_fixed(fit.poisson_loglik, 2) << "\n"
     << "dispersion " << format_fixed(fit.dispersion, 4) << "\n"
     << "deviance " << format_fixed(fit.deviance, 4) << " (null " << format_fixed(fit.null_deviance, 4)
     << ")\n"
     << "pseudo R2 " << format_fixed(fit.pseudo_r2, 4) << "\n"
     << "signif: * p<0.05, ** p<0.01, *** p<0.001\n";
  return os.str();
}

}  // namespace hostsec::regress
