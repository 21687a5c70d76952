#pragma once

// Exploratory factor analysis for mixed binary/ordinal indicators:
// polychoric correlations, parallel analysis, minres/principal-axis
// extraction, varimax rotation and factor scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "hostsec/common.hpp"
#include "hostsec/parallel.hpp"
#include "hostsec/stats.hpp"

namespace hostsec::factor {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

inline constexpr double kRhoBound = 0.999;
inline constexpr double kMinEigenvalue = 1e-6;
inline constexpr double kUniquenessFloor = 0.001;

struct OrdinalDataset {
  std::vector<std::string> columns;
  MatrixXi codes;  // n x p
  std::vector<int> category_counts;

  Eigen::Index n() const { return codes.rows(); }
  Eigen::Index p() const { return codes.cols(); }

  /// Throws InputError naming the first offending column.
  void validate() const {
    if (static_cast<std::size_t>(codes.cols()) != columns.size() ||
        columns.size() != category_counts.size())
      throw InputError("dataset shape mismatch between codes, names and category counts");
    if (codes.rows() < 2) throw InputError("dataset needs at least 2 rows");
    for (Eigen::Index j = 0; j < codes.cols(); ++j) {
      const auto& name = columns[static_cast<std::size_t>(j)];
      int cats = category_counts[static_cast<std::size_t>(j)];
      if (cats < 2) throw InputError("column " + name + ": fewer than 2 categories");
      bool constant = true;
      for (Eigen::Index i = 0; i < codes.rows(); ++i) {
        int c = codes(i, j);
        if (c < 0 || c >= cats)
          throw InputError("column " + name + ": code " + std::to_string(c) + " out of range");
        if (c != codes(0, j)) constant = false;
      }
      if (constant) throw InputError("column " + name + " is constant");
    }
  }
};

using ThresholdSet = std::vector<std::vector<double>>;

struct CorrelationMatrix {
  MatrixXd values;
  bool smoothed = false;
  double min_eigenvalue_before = 1.0;
};

// ---------------------------------------------------------------------------
// Thresholds

/// Observed-category marginal: thresholds over the non-empty categories and the
/// map from raw code to collapsed category index.
struct Margin {
  std::vector<double> thresholds;
  std::vector<int> index;  // raw code -> collapsed category
  int categories() const { return static_cast<int>(thresholds.size()) + 1; }
};

template <typename Codes>
Margin column_margin(const Codes& col, int category_count) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(category_count), 0);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(col.size()); ++i) {
    int c = col[i];
    if (c < 0 || c >= category_count) throw InputError("category code out of range");
    ++counts[static_cast<std::size_t>(c)];
  }
  double n = static_cast<double>(col.size());
  Margin m;
  m.index.assign(static_cast<std::size_t>(category_count), -1);
  std::int64_t cum = 0;
  int seen = 0;
  for (int c = 0; c < category_count; ++c) {
    auto cnt = counts[static_cast<std::size_t>(c)];
    if (cnt == 0) continue;
    if (seen > 0) m.thresholds.push_back(stats::norm_quantile(static_cast<double>(cum) / n));
    m.index[static_cast<std::size_t>(c)] = seen++;
    cum += cnt;
  }
  if (seen < 2) throw InputError("constant column");
  return m;
}

/// Thresholds Phi^-1 of cumulative proportions. Empty categories are
/// collapsed, so the result may be shorter than category_count - 1.
template <typename Codes>
std::vector<double> empirical_thresholds(const Codes& col, int category_count) {
  return column_margin(col, category_count).thresholds;
}

inline std::vector<double> empirical_thresholds(const std::vector<int>& col, int category_count) {
  return column_margin(Eigen::Map<const Eigen::VectorXi>(col.data(), static_cast<Eigen::Index>(col.size())),
                       category_count)
      .thresholds;
}

// ---------------------------------------------------------------------------
// Polychoric correlation

struct Contingency {
  int rows = 0, cols = 0;
  std::vector<double> counts;  // row-major
  double& at(int i, int j) { return counts[static_cast<std::size_t>(i * cols + j)]; }
  double at(int i, int j) const { return counts[static_cast<std::size_t>(i * cols + j)]; }
};

namespace detail {

inline std::vector<double> bounded(const std::vector<double>& t) {
  std::vector<double> b;
  b.reserve(t.size() + 2);
  b.push_back(-stats::kInf);
  b.insert(b.end(), t.begin(), t.end());
  b.push_back(stats::kInf);
  return b;
}

/// +1 when the observed categories map one-to-one in increasing order
/// (x is a monotone relabeling of y), -1 for decreasing order, 0 otherwise.
inline int perfect_direction(const Contingency& t) {
  if (t.rows != t.cols) return 0;
  auto check = [&](bool reversed) {
    for (int i = 0; i < t.rows; ++i)
      for (int j = 0; j < t.cols; ++j) {
        bool diag = reversed ? j == t.cols - 1 - i : j == i;
        if ((t.at(i, j) > 0) != diag) return false;
      }
    return true;
  };
  if (check(false)) return 1;
  if (check(true)) return -1;
  return 0;
}

inline double polychoric_from_table(Contingency t, const std::vector<double>& tx,
                                    const std::vector<double>& ty, const std::string& pair) {
  if (int dir = perfect_direction(t); dir != 0) return dir * kRhoBound;
  for (auto& c : t.counts)
    if (c == 0) c = 0.5;
  auto bx = bounded(tx), by = bounded(ty);
  auto negloglik = [&](double rho) {
    double ll = 0;
    for (int i = 0; i < t.rows; ++i)
      for (int j = 0; j < t.cols; ++j) {
        double p = stats::bvn_rect(bx[static_cast<std::size_t>(i)], bx[static_cast<std::size_t>(i) + 1],
                                   by[static_cast<std::size_t>(j)], by[static_cast<std::size_t>(j) + 1], rho);
        ll += t.at(i, j) * std::log(std::max(p, 1e-300));
      }
    return -ll;
  };
  auto [rho, val] = boost::math::tools::brent_find_minima(negloglik, -kRhoBound, kRhoBound, 40);
  if (!std::isfinite(val) || !std::isfinite(rho))
    throw NumericError("degenerate contingency table for pair " + pair);
  return std::clamp(rho, -kRhoBound, kRhoBound);
}

inline Contingency transpose(const Contingency& t) {
  Contingency out{t.cols, t.rows, std::vector<double>(t.counts.size())};
  for (int i = 0; i < t.rows; ++i)
    for (int j = 0; j < t.cols; ++j) out.at(j, i) = t.at(i, j);
  return out;
}

template <typename CodesX, typename CodesY>
Contingency tabulate(const CodesX& x, const Margin& mx, const CodesY& y, const Margin& my) {
  Contingency t{mx.categories(), my.categories(),
                std::vector<double>(static_cast<std::size_t>(mx.categories() * my.categories()), 0.0)};
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(x.size()); ++i)
    t.at(mx.index[static_cast<std::size_t>(x[i])], my.index[static_cast<std::size_t>(y[i])]) += 1;
  return t;
}

/// Solves in a canonical orientation so rho(x, y) == rho(y, x) bit-for-bit.
inline double polychoric_canonical(const Contingency& t, const std::vector<double>& tx,
                                   const std::vector<double>& ty, const std::string& pair) {
  auto tt = transpose(t);
  bool flip = std::tie(tt.rows, tt.cols, tt.counts) < std::tie(t.rows, t.cols, t.counts);
  return flip ? polychoric_from_table(tt, ty, tx, pair) : polychoric_from_table(t, tx, ty, pair);
}

}  // namespace detail

/// Two-step ML polychoric correlation between two ordinal code vectors.
template <typename CodesX, typename CodesY>
double polychoric_rho(const CodesX& x, int cats_x, const CodesY& y, int cats_y,
                      const std::string& pair = "x,y") {
  if (x.size() != y.size()) throw InputError("polychoric pair " + pair + ": length mismatch");
  Margin mx, my;
  try {
    mx = column_margin(x, cats_x);
    my = column_margin(y, cats_y);
  } catch (const InputError&) {
    throw InputError("polychoric pair " + pair + ": constant column");
  }
  auto t = detail::tabulate(x, mx, y, my);
  return detail::polychoric_canonical(t, mx.thresholds, my.thresholds, pair);
}

inline double polychoric_rho(const std::vector<int>& x, int cats_x, const std::vector<int>& y,
                             int cats_y, const std::string& pair = "x,y") {
  using Map = Eigen::Map<const Eigen::VectorXi>;
  return polychoric_rho(Map(x.data(), static_cast<Eigen::Index>(x.size())), cats_x,
                        Map(y.data(), static_cast<Eigen::Index>(y.size())), cats_y, pair);
}

/// Eigenvalue clipping at kMinEigenvalue followed by rescaling to unit
/// diagonal, repeated until the floor holds after rescaling.
inline MatrixXd smooth_to_psd(const MatrixXd& r) {
  MatrixXd m = r;
  double floor = kMinEigenvalue;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    if (es.eigenvalues().minCoeff() >= kMinEigenvalue) break;
    VectorXd lam = es.eigenvalues().cwiseMax(floor);
    m = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    VectorXd d = m.diagonal().cwiseSqrt().cwiseInverse();
    m = d.asDiagonal() * m * d.asDiagonal();
    m = (0.5 * (m + m.transpose())).eval();
    m.diagonal().setOnes();
    floor *= 2;
  }
  return m;
}

struct PolychoricOptions {
  unsigned threads = 1;
};

inline CorrelationMatrix polychoric_matrix(const OrdinalDataset& data,
                                           const PolychoricOptions& opt = {}) {
  data.validate();
  const auto p = data.p();
  std::vector<Margin> margins(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j)
    margins[static_cast<std::size_t>(j)] =
        column_margin(data.codes.col(j), data.category_counts[static_cast<std::size_t>(j)]);

  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j) pairs.emplace_back(i, j);
  std::vector<double> rho(pairs.size());
  parallel_for(pairs.size(), opt.threads, [&](std::size_t k) {
    auto [i, j] = pairs[k];
    const auto& mi = margins[static_cast<std::size_t>(i)];
    const auto& mj = margins[static_cast<std::size_t>(j)];
    auto name = data.columns[static_cast<std::size_t>(i)] + "," + data.columns[static_cast<std::size_t>(j)];
    auto t = detail::tabulate(data.codes.col(i), mi, data.codes.col(j), mj);
    rho[k] = detail::polychoric_canonical(t, mi.thresholds, mj.thresholds, name);
  });

  CorrelationMatrix out;
  out.values = MatrixXd::Identity(p, p);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    auto [i, j] = pairs[k];
    out.values(i, j) = out.values(j, i) = rho[k];
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(out.values, Eigen::EigenvaluesOnly);
  out.min_eigenvalue_before = es.eigenvalues().minCoeff();
  if (out.min_eigenvalue_before < kMinEigenvalue) {
    out.values = smooth_to_psd(out.values);
    out.smoothed = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parallel analysis

struct ParallelAnalysis {
  int k = 0;
  VectorXd observed;    // descending eigenvalues of the observed matrix
  VectorXd null_quantile;  // per-rank quantile of null eigenvalues
};

inline VectorXd descending_eigenvalues(const MatrixXd& r) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(r, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

/// Null datasets permute every column independently (marginals preserved).
/// k is the length of the leading run of ranks whose observed eigenvalue
/// exceeds the null quantile.
inline ParallelAnalysis parallel_analysis(const OrdinalDataset& data, int replicates = 50,
                                          double quantile = 0.95, std::uint64_t seed = 1,
                                          const PolychoricOptions& opt = {}) {
  if (replicates < 1) throw InputError("parallel analysis needs at least one replicate");
  if (!(quantile > 0.0 && quantile < 1.0)) throw InputError("quantile must be in (0,1)");
  ParallelAnalysis pa;
  pa.observed = descending_eigenvalues(polychoric_matrix(data, opt).values);
  const auto p = data.p();
  std::vector<VectorXd> null_eigs(static_cast<std::size_t>(replicates));
  for (int rep = 0; rep < replicates; ++rep) {
    stats::Rng rng(stats::derive_seed(seed, static_cast<std::uint64_t>(rep)));
    OrdinalDataset null = data;
    for (Eigen::Index j = 0; j < p; ++j) {
      std::vector<int> col(data.codes.col(j).data(), data.codes.col(j).data() + data.n());
      stats::shuffle(col, rng);
      null.codes.col(j) = Eigen::Map<Eigen::VectorXi>(col.data(), data.n());
    }
    null_eigs[static_cast<std::size_t>(rep)] = descending_eigenvalues(polychoric_matrix(null, opt).values);
  }
  pa.null_quantile.resize(p);
  for (Eigen::Index r = 0; r < p; ++r) {
    std::vector<double> v;
    for (const auto& e : null_eigs) v.push_back(e[r]);
    pa.null_quantile[r] = stats::quantile_type7(std::move(v), quantile);
  }
  while (pa.k < p && pa.observed[pa.k] > pa.null_quantile[pa.k]) ++pa.k;
  return pa;
}

// ---------------------------------------------------------------------------
// Extraction

enum class ExtractionMethod { minres, principal_axis };

struct ExtractionOptions {
  ExtractionMethod method = ExtractionMethod::minres;
  int max_iterations = 500;
  double tolerance = 1e-9;  // relative objective improvement
};

struct Extraction {
  MatrixXd loadings;  // p x k
  VectorXd uniquenesses;
  bool heywood = false;
  int iterations = 0;
  double objective = 0;  // sum of squared off-diagonal residuals
};

namespace detail {

inline MatrixXd loadings_for(const MatrixXd& r, const VectorXd& u, Eigen::Index k) {
  MatrixXd m = r;
  m.diagonal() -= u;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  const auto p = r.rows();
  MatrixXd l(p, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    double lam = std::max(es.eigenvalues()[p - 1 - j], 0.0);
    l.col(j) = es.eigenvectors().col(p - 1 - j) * std::sqrt(lam);
  }
  return l;
}

inline VectorXd offdiag_residuals(const MatrixXd& r, const MatrixXd& l) {
  const auto p = r.rows();
  VectorXd res(p * (p - 1) / 2);
  MatrixXd fit = l * l.transpose();
  Eigen::Index m = 0;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j) res[m++] = r(i, j) - fit(i, j);
  return res;
}

inline VectorXd initial_uniquenesses(const MatrixXd& r) {
  VectorXd u(r.rows());
  Eigen::LDLT<MatrixXd> ldlt(r);
  MatrixXd inv;
  bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
  if (ok) {
    inv = ldlt.solve(MatrixXd::Identity(r.rows(), r.cols()));
    ok = inv.allFinite();
  }
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    double smc = ok ? 1.0 - 1.0 / inv(i, i) : 0.5;
    u[i] = std::clamp(1.0 - smc, kUniquenessFloor, 1.0);
  }
  return u;
}

/// Orders columns by descending sum of squares and flips each column so its
/// largest-magnitude entry is positive. Returns the signed permutation
/// applied (new column j = sign[j] * old column perm[j]).
inline std::pair<std::vector<Eigen::Index>, std::vector<double>> canonical_columns(MatrixXd& l) {
  const auto k = l.cols();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  VectorXd ss = l.colwise().squaredNorm();
  std::stable_sort(perm.begin(), perm.end(), [&](auto a, auto b) { return ss[a] > ss[b]; });
  MatrixXd out(l.rows(), k);
  std::vector<double> sign(static_cast<std::size_t>(k), 1.0);
  for (Eigen::Index j = 0; j < k; ++j) {
    out.col(j) = l.col(perm[static_cast<std::size_t>(j)]);
    Eigen::Index arg = 0;
    out.col(j).cwiseAbs().maxCoeff(&arg);
    if (out(arg, j) < 0) {
      out.col(j) = -out.col(j);
      sign[static_cast<std::size_t>(j)] = -1.0;
    }
  }
  l = out;
  return {perm, sign};
}

}  // namespace detail

/// Minimum-residual extraction: Levenberg-Marquardt over uniquenesses in
/// [0.001, 1] with loadings from the top-k eigenpairs of R - diag(u).
inline Extraction extract_factors(const CorrelationMatrix& corr, int k,
                                  const ExtractionOptions& opt = {}) {
  const MatrixXd& r = corr.values;
  const auto p = r.rows();
  if (k < 1 || k >= p) throw InputError("number of factors must satisfy 1 <= k < p");
  Extraction ex;
  VectorXd u = detail::initial_uniquenesses(r);
  auto objective = [&](const VectorXd& uu) {
    return detail::offdiag_residuals(r, detail::loadings_for(r, uu, k)).squaredNorm();
  };

  if (opt.method == ExtractionMethod::principal_axis) {
    for (ex.iterations = 0; ex.iterations < opt.max_iterations; ++ex.iterations) {
      MatrixXd l = detail::loadings_for(r, u, k);
      VectorXd next = (VectorXd::Ones(p) - l.rowwise().squaredNorm()).cwiseMax(kUniquenessFloor).cwiseMin(1.0);
      double change = (next - u).cwiseAbs().maxCoeff();
      u = next;
      if (change < opt.tolerance) break;
    }
  } else {
    auto project = [](VectorXd v) { return v.cwiseMax(kUniquenessFloor).cwiseMin(1.0).eval(); };
    double f = objective(u);
    double mu = 1e-3;
    const double h = 1e-6;
    for (ex.iterations = 0; ex.iterations < opt.max_iterations && f > 1e-28; ++ex.iterations) {
      VectorXd res = detail::offdiag_residuals(r, detail::loadings_for(r, u, k));
      MatrixXd jac(res.size(), p);
      for (Eigen::Index i = 0; i < p; ++i) {
        VectorXd up = u, dn = u;
        up[i] = std::min(u[i] + h, 1.0);
        dn[i] = std::max(u[i] - h, kUniquenessFloor);
        double span = up[i] - dn[i];
        if (span <= 0) {
          jac.col(i).setZero();
          continue;
        }
        jac.col(i) = (detail::offdiag_residuals(r, detail::loadings_for(r, up, k)) -
                      detail::offdiag_residuals(r, detail::loadings_for(r, dn, k))) / span;
      }
      MatrixXd jtj = jac.transpose() * jac;
      VectorXd grad = jac.transpose() * res;
      if (grad.cwiseAbs().maxCoeff() < 1e-300) break;
      bool accepted = false;
      double improvement = 0;
      for (int tries = 0; tries < 40 && !accepted; ++tries) {
        MatrixXd a = jtj;
        a.diagonal() += mu * (jtj.diagonal().array() + 1e-12).matrix();
        VectorXd step = a.ldlt().solve(-grad);
        VectorXd cand = project(u + step);
        double fc = objective(cand);
        if (std::isfinite(fc) && fc < f) {
          improvement = f - fc;
          u = cand;
          f = fc;
          mu = std::max(mu / 3, 1e-12);
          accepted = true;
        } else {
          mu *= 4;
        }
      }
      if (!accepted || improvement < opt.tolerance * (f + improvement)) {
        ++ex.iterations;
        break;
      }
    }
  }
  ex.uniquenesses = u;
  ex.loadings = detail::loadings_for(r, u, k);
  ex.objective = detail::offdiag_residuals(r, ex.loadings).squaredNorm();
  ex.heywood = (u.array() <= kUniquenessFloor * (1 + 1e-9)).any();
  detail::canonical_columns(ex.loadings);
  return ex;
}

inline Extraction extract_minres(const CorrelationMatrix& corr, int k, ExtractionOptions opt = {}) {
  opt.method = ExtractionMethod::minres;
  return extract_factors(corr, k, opt);
}

// ---------------------------------------------------------------------------
// Rotation

struct Rotation {
  MatrixXd loadings;  // p x k rotated
  MatrixXd rotation;  // k x k orthogonal; rotated = input * rotation
  int sweeps = 0;
};

inline double varimax_criterion(const MatrixXd& l) {
  const double p = static_cast<double>(l.rows());
  double v = 0;
  for (Eigen::Index j = 0; j < l.cols(); ++j) {
    Eigen::ArrayXd sq = l.col(j).array().square();
    v += (p * sq.square().sum() - sq.sum() * sq.sum()) / (p * p);
  }
  return v;
}

/// Kaiser-normalized varimax by pairwise planar rotations.
inline Rotation varimax(const MatrixXd& loadings, bool kaiser_normalize = true, double eps = 1e-10,
                        int max_sweeps = 1000) {
  const auto p = loadings.rows();
  const auto k = loadings.cols();
  Rotation out;
  out.rotation = MatrixXd::Identity(k, k);
  if (k < 2) {
    out.loadings = loadings;
    return out;
  }
  VectorXd h = VectorXd::Ones(p);
  if (kaiser_normalize) {
    h = loadings.rowwise().norm();
    for (Eigen::Index i = 0; i < p; ++i)
      if (h[i] < 1e-15) h[i] = 1.0;
  }
  MatrixXd x = h.cwiseInverse().asDiagonal() * loadings;
  const double n = static_cast<double>(p);
  double crit = varimax_criterion(x);
  for (out.sweeps = 0; out.sweeps < max_sweeps; ++out.sweeps) {
    for (Eigen::Index a = 0; a < k - 1; ++a) {
      for (Eigen::Index b = a + 1; b < k; ++b) {
        Eigen::ArrayXd xa = x.col(a).array(), xb = x.col(b).array();
        Eigen::ArrayXd uu = xa.square() - xb.square();
        Eigen::ArrayXd vv = 2 * xa * xb;
        double A = uu.sum(), B = vv.sum();
        double C = (uu.square() - vv.square()).sum();
        double D = 2 * (uu * vv).sum();
        double num = D - 2 * A * B / n;
        double den = C - (A * A - B * B) / n;
        double phi = std::atan2(num, den) / 4;
        if (std::abs(phi) < 1e-15) continue;
        double c = std::cos(phi), s = std::sin(phi);
        x.col(a) = (c * xa + s * xb).matrix();
        x.col(b) = (-s * xa + c * xb).matrix();
        VectorXd ta = out.rotation.col(a), tb = out.rotation.col(b);
        out.rotation.col(a) = c * ta + s * tb;
        out.rotation.col(b) = -s * ta + c * tb;
      }
    }
    double next = varimax_criterion(x);
    double gain = next - crit;
    crit = next;
    if (gain < eps) {
      ++out.sweeps;
      break;
    }
  }
  out.loadings = h.asDiagonal() * x;
  return out;
}

// ---------------------------------------------------------------------------
// Variance accounting and scores

struct VarianceTable {
  VectorXd ss_loadings;
  VectorXd proportion_var;
  VectorXd cumulative_var;
};

inline VarianceTable variance_table(const MatrixXd& loadings) {
  VarianceTable t;
  const double p = static_cast<double>(loadings.rows());
  t.ss_loadings = loadings.colwise().squaredNorm().transpose();
  t.proportion_var = p > 0 ? (t.ss_loadings / p).eval() : VectorXd::Zero(loadings.cols());
  t.cumulative_var.resize(loadings.cols());
  double run = 0;
  for (Eigen::Index j = 0; j < loadings.cols(); ++j) t.cumulative_var[j] = run += t.proportion_var[j];
  return t;
}

enum class ScoreMethod { regression, bartlett };

/// Integer codes standardized per column (sample standard deviation).
inline MatrixXd standardize(const MatrixXi& codes) {
  MatrixXd z = codes.cast<double>();
  const double n = static_cast<double>(z.rows());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    double m = z.col(j).mean();
    z.col(j).array() -= m;
    double sd = std::sqrt(z.col(j).squaredNorm() / (n - 1));
    if (sd == 0) throw InputError("cannot standardize a constant column");
    z.col(j) /= sd;
  }
  return z;
}

inline MatrixXd factor_scores(const OrdinalDataset& data, const CorrelationMatrix& corr,
                              const MatrixXd& loadings, ScoreMethod method = ScoreMethod::regression,
                              const VectorXd* uniquenesses = nullptr) {
  if (corr.values.rows() != data.p() || loadings.rows() != data.p())
    throw InputError("factor_scores: dimension mismatch");
  MatrixXd z = standardize(data.codes);
  MatrixXd w;
  if (method == ScoreMethod::regression) {
    Eigen::LLT<MatrixXd> llt(corr.values);
    if (llt.info() != Eigen::Success)
      throw NumericError("correlation matrix is singular or indefinite; enable PSD smoothing");
    w = llt.solve(loadings);
  } else {
    VectorXd u = uniquenesses ? *uniquenesses
                              : (VectorXd::Ones(data.p()) - loadings.rowwise().squaredNorm()).eval();
    VectorXd uinv = u.cwiseMax(kUniquenessFloor).cwiseInverse();
    MatrixXd lu = uinv.asDiagonal() * loadings;
    MatrixXd m = loadings.transpose() * lu;
    Eigen::LDLT<MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success) throw NumericError("Bartlett scores: singular L'U^-2L");
    w = lu * ldlt.solve(MatrixXd::Identity(m.rows(), m.cols()));
  }
  MatrixXd s = z * w;
  s.rowwise() -= s.colwise().mean();
  return s;
}

// ---------------------------------------------------------------------------
// Full model

struct FactorModel {
  std::vector<std::string> variables;
  std::vector<std::string> factors;  // MR1..MRk (PA1.. for principal axis)
  MatrixXd unrotated;
  MatrixXd loadings;
  VectorXd uniquenesses;
  MatrixXd rotation;
  VarianceTable variance;
  MatrixXd scores;
  bool heywood = false;
  int iterations = 0;
};

struct FactorOptions {
  ExtractionOptions extraction;
  bool rotate = true;
  bool kaiser_normalize = true;
  ScoreMethod scores = ScoreMethod::regression;
};

/// Extraction, varimax, canonical column order/sign, variance table, scores.
inline FactorModel fit_factor_model(const OrdinalDataset& data, const CorrelationMatrix& corr, int k,
                                    const FactorOptions& opt = {}) {
  FactorModel m;
  m.variables = data.columns;
  auto ex = extract_factors(corr, k, opt.extraction);
  m.unrotated = ex.loadings;
  m.uniquenesses = ex.uniquenesses;
  m.heywood = ex.heywood;
  m.iterations = ex.iterations;
  Rotation rot;
  if (opt.rotate) {
    rot = varimax(ex.loadings, opt.kaiser_normalize);
  } else {
    rot.loadings = ex.loadings;
    rot.rotation = MatrixXd::Identity(k, k);
  }
  MatrixXd l = rot.loadings;
  auto [perm, sign] = detail::canonical_columns(l);
  MatrixXd t(k, k);
  for (int j = 0; j < k; ++j)
    t.col(j) = sign[static_cast<std::size_t>(j)] * rot.rotation.col(perm[static_cast<std::size_t>(j)]);
  m.loadings = l;
  m.rotation = t;
  m.variance = variance_table(l);
  std::string prefix = opt.extraction.method == ExtractionMethod::minres ? "MR" : "PA";
  for (int j = 0; j < k; ++j) m.factors.push_back(prefix + std::to_string(j + 1));
  m.scores = factor_scores(data, corr, l, opt.scores, &m.uniquenesses);
  return m;
}

}  // namespace hostsec::factor
