#pragma once

// Reference computations for the test suites. Each one takes a different
// route from the library code it checks (series instead of erfc, nested
// quadrature instead of Genz, dense dummy OLS instead of group means, Newton
// with an analytic Hessian instead of IRLS, exhaustive angle search instead of
// pairwise varimax).

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

/// Standard normal CDF by the Taylor series Phi(x) = 1/2 + phi(x) sum x^(2n+1)/(2n+1)!!.
/// Accurate to ~1e-15 for |x| <= 6.
inline double phi_series(double x) {
  double term = x, sum = x;
  for (int n = 1; n < 400; ++n) {
    term *= x * x / (2.0 * n + 1.0);
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return 0.5 + std::exp(-0.5 * x * x) / std::sqrt(2 * kPi) * sum;
}

/// Phi via the complementary error function (used where the series is slow).
inline double phi_erfc(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Quantile by bisection on phi_erfc.
inline double quantile_bisect(double p) {
  double lo = -40, hi = 40;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (phi_erfc(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// P(X <= a, Y <= b) by nested adaptive Gauss-Kronrod over the bivariate
/// density, truncated at -12.
inline double bvn_cdf_quadrature(double a, double b, double r) {
  using boost::math::quadrature::gauss_kronrod;
  const double lo = -12.0;
  a = std::min(a, 12.0);
  b = std::min(b, 12.0);
  if (a <= lo || b <= lo) return 0.0;
  const double s = 1 - r * r;
  const double norm = 1.0 / (2 * kPi * std::sqrt(s));
  auto outer = [&](double x) {
    auto inner = [&](double y) { return norm * std::exp(-(x * x - 2 * r * x * y + y * y) / (2 * s)); };
    return gauss_kronrod<double, 61>::integrate(inner, lo, b, 12, 1e-15);
  };
  return gauss_kronrod<double, 61>::integrate(outer, lo, a, 12, 1e-15);
}

/// Rectangle mass P(a1 < X <= b1, a2 < Y <= b2) via one adaptive integral of
/// phi(x) times a conditional normal probability.
inline double bvn_rect_1d(double a1, double b1, double a2, double b2, double r) {
  using boost::math::quadrature::gauss_kronrod;
  a1 = std::max(a1, -12.0);
  b1 = std::min(b1, 12.0);
  if (b1 <= a1) return 0.0;
  const double s = std::sqrt(1 - r * r);
  auto f = [&](double x) {
    double hi = std::isinf(b2) ? 1.0 : phi_erfc((b2 - r * x) / s);
    double lo = std::isinf(a2) ? 0.0 : phi_erfc((a2 - r * x) / s);
    return std::exp(-0.5 * x * x) / std::sqrt(2 * kPi) * (hi - lo);
  };
  return gauss_kronrod<double, 61>::integrate(f, a1, b1, 10, 1e-14);
}

/// Thresholds Phi^-1(cumulative proportion) for codes 0..cats-1.
inline std::vector<double> thresholds(const std::vector<int>& codes, int cats) {
  std::vector<double> counts(static_cast<std::size_t>(cats), 0.0);
  for (int c : codes) counts[static_cast<std::size_t>(c)] += 1;
  std::vector<double> t;
  double cum = 0;
  for (int j = 0; j + 1 < cats; ++j) {
    cum += counts[static_cast<std::size_t>(j)];
    t.push_back(quantile_bisect(cum / static_cast<double>(codes.size())));
  }
  return t;
}

/// Two-step polychoric log-likelihood (thresholds fixed from marginals).
inline double polychoric_loglik(const std::vector<std::vector<double>>& table, const std::vector<double>& tx,
                                const std::vector<double>& ty, double rho) {
  std::vector<double> bx = {-INFINITY}, by = {-INFINITY};
  bx.insert(bx.end(), tx.begin(), tx.end());
  by.insert(by.end(), ty.begin(), ty.end());
  bx.push_back(INFINITY);
  by.push_back(INFINITY);
  double ll = 0;
  for (std::size_t i = 0; i < table.size(); ++i)
    for (std::size_t j = 0; j < table[i].size(); ++j) {
      double p = bvn_rect_1d(bx[i], bx[i + 1], by[j], by[j + 1], rho);
      ll += table[i][j] * std::log(std::max(p, 1e-300));
    }
  return ll;
}

/// Maximiser of the polychoric likelihood over the grid -0.998, -0.996, ..., 0.998.
inline double polychoric_grid(const std::vector<int>& x, int cx, const std::vector<int>& y, int cy) {
  std::vector<std::vector<double>> table(static_cast<std::size_t>(cx), std::vector<double>(static_cast<std::size_t>(cy), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) table[static_cast<std::size_t>(x[i])][static_cast<std::size_t>(y[i])] += 1;
  for (auto& row : table)
    for (auto& c : row)
      if (c == 0) c = 0.5;
  auto tx = thresholds(x, cx), ty = thresholds(y, cy);
  double best = 0, best_ll = -INFINITY;
  for (int g = -499; g <= 499; ++g) {
    double rho = 0.002 * g;
    double ll = polychoric_loglik(table, tx, ty, rho);
    if (ll > best_ll) {
      best_ll = ll;
      best = rho;
    }
  }
  return best;
}

struct OlsFit {
  double r2, adj_r2, rse, intercept;
};

/// Least squares on [1, D_2, ..., D_G] (first group as reference).
inline OlsFit dummy_ols(const std::vector<double>& y, const std::vector<std::string>& groups) {
  std::map<std::string, int> index;
  for (const auto& g : groups) index.emplace(g, 0);
  int next = 0;
  for (auto& [g, i] : index) i = next++;
  const auto n = static_cast<Eigen::Index>(y.size());
  const int G = next;
  MatrixXd x = MatrixXd::Zero(n, G);
  VectorXd yy(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    yy[i] = y[static_cast<std::size_t>(i)];
    x(i, 0) = 1;
    int g = index[groups[static_cast<std::size_t>(i)]];
    if (g > 0) x(i, g) = 1;
  }
  VectorXd beta = x.householderQr().solve(yy);
  VectorXd resid = yy - x * beta;
  double sse = resid.squaredNorm();
  double sst = (yy.array() - yy.mean()).square().sum();
  OlsFit f;
  f.r2 = 1 - sse / sst;
  f.adj_r2 = 1 - (1 - f.r2) * static_cast<double>(n - 1) / static_cast<double>(n - G);
  f.rse = std::sqrt(sse / static_cast<double>(n - G));
  f.intercept = beta[0];
  return f;
}

/// Newton-Raphson on the Poisson log-likelihood with the analytic Hessian,
/// backtracking on the log-likelihood itself.
inline VectorXd poisson_newton(const VectorXd& y, const MatrixXd& x, int max_iter = 200) {
  VectorXd beta = VectorXd::Zero(x.cols());
  beta[0] = std::log(std::max(y.mean(), 1e-8));
  auto loglik = [&](const VectorXd& b) {
    VectorXd eta = x * b;
    return (y.array() * eta.array() - eta.array().exp()).sum();
  };
  double ll = loglik(beta);
  for (int it = 0; it < max_iter; ++it) {
    VectorXd mu = (x * beta).array().exp();
    VectorXd grad = x.transpose() * (y - mu);
    MatrixXd hess = x.transpose() * mu.asDiagonal() * x;
    VectorXd step = hess.ldlt().solve(grad);
    double t = 1;
    VectorXd cand = beta + step;
    double cll = loglik(cand);
    while (cll < ll && t > 1e-10) {
      t *= 0.5;
      cand = beta + t * step;
      cll = loglik(cand);
    }
    beta = cand;
    double gain = cll - ll;
    ll = cll;
    if (step.norm() * t < 1e-14 || std::abs(gain) < 1e-15 * std::abs(ll)) break;
  }
  return beta;
}

/// Plain Poisson standard errors sqrt(diag((X' W X)^-1)).
inline VectorXd poisson_std_errors(const VectorXd& beta, const MatrixXd& x) {
  VectorXd mu = (x * beta).array().exp();
  MatrixXd info = x.transpose() * mu.asDiagonal() * x;
  return info.inverse().diagonal().array().sqrt();
}

/// Varimax criterion on Kaiser-normalised rows.
inline double varimax_value(const MatrixXd& l) {
  MatrixXd n = l;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    double h = l.row(i).norm();
    if (h > 0) n.row(i) /= h;
  }
  double v = 0;
  const double p = static_cast<double>(l.rows());
  for (Eigen::Index j = 0; j < l.cols(); ++j) {
    auto sq = n.col(j).array().square();
    v += sq.square().sum() - sq.sum() * sq.sum() / p;
  }
  return v;
}

inline MatrixXd rotate2(const MatrixXd& l, double theta) {
  Eigen::Matrix2d t;
  t << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return l * t;
}

/// Best rotation angle in [0, pi/2) at the given step.
inline double varimax_angle_search(const MatrixXd& l, double step = 1e-3) {
  double best = 0, best_v = -INFINITY;
  for (double th = 0; th < kPi / 2; th += step) {
    double v = varimax_value(rotate2(l, th));
    if (v > best_v) {
      best_v = v;
      best = th;
    }
  }
  return best;
}

/// Max abs difference between two loading matrices after the best column
/// permutation and sign flips (exhaustive over permutations).
inline double aligned_max_diff(const MatrixXd& a, const MatrixXd& b) {
  std::vector<int> perm(static_cast<std::size_t>(a.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double worst = 0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      auto bj = b.col(perm[static_cast<std::size_t>(j)]);
      double d = std::min((a.col(j) - bj).cwiseAbs().maxCoeff(), (a.col(j) + bj).cwiseAbs().maxCoeff());
      worst = std::max(worst, d);
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace oracle
