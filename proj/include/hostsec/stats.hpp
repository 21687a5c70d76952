#pragma once

// Normal and bivariate-normal distribution functions, quantiles, seeding.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "hostsec/common.hpp"

namespace hostsec::stats {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double norm_cdf(double x) {
  if (x == kInf) return 1.0;
  if (x == -kInf) return 0.0;
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(kTwoPi); }

/// Standard normal quantile; 0 and 1 map to -inf and +inf.
inline double norm_quantile(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw NumericError("normal quantile outside [0,1]");
  if (p == 0.0) return -kInf;
  if (p == 1.0) return kInf;
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

/// Upper bivariate normal probability P(X > h, Y > k) for correlation r
/// (Genz's BVNU: Gauss-Legendre over the Plackett/Drezner integral).
inline double bvn_upper(double h, double k, double r) {
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : norm_cdf(-k);
  if (k == -kInf) return norm_cdf(-h);
  if (r == 0.0) return norm_cdf(-h) * norm_cdf(-k);

  static constexpr std::array<double, 3> w6 = {0.1713244923791705, 0.3607615730481384,
                                               0.4679139345726904};
  static constexpr std::array<double, 3> x6 = {0.9324695142031522, 0.6612093864662647,
                                               0.2386191860831970};
  static constexpr std::array<double, 6> w12 = {
      0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
      0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
  static constexpr std::array<double, 6> x12 = {
      0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
      0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static constexpr std::array<double, 10> w20 = {
      0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
      0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
      0.1491729864726037,  0.1527533871307259};
  static constexpr std::array<double, 10> x20 = {
      0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
      0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
      0.2277858511416451, 0.07652652113349733};

  const double* w;
  const double* x;
  int lg;
  double ar = std::abs(r);
  if (ar < 0.3) {
    w = w6.data(), x = x6.data(), lg = 3;
  } else if (ar < 0.75) {
    w = w12.data(), x = x12.data(), lg = 6;
  } else {
    w = w20.data(), x = x20.data(), lg = 10;
  }

  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    double hs = (h * h + k * k) / 2;
    double asr = std::asin(r);
    for (int i = 0; i < lg; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        double sn = std::sin(asr * (sgn * x[i] + 1) / 2);
        bvn += w[i] * std::exp((sn * hk - hs) / (1 - sn * sn));
      }
    }
    return std::clamp(bvn * asr / (2 * kTwoPi) + norm_cdf(-h) * norm_cdf(-k), 0.0, 1.0);
  }

  if (r < 0) {
    k = -k;
    hk = -hk;
  }
  if (ar < 1) {
    double as = (1 - r) * (1 + r);
    double a = std::sqrt(as);
    double bs = (h - k) * (h - k);
    double c = (4 - hk) / 8;
    double d = (12 - hk) / 16;
    bvn = a * std::exp(-(bs / as + hk) / 2) *
          (1 - c * (bs - as) * (1 - d * bs / 5) / 3 + c * d * as * as / 5);
    if (hk > -160) {
      double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2) * std::sqrt(kTwoPi) * norm_cdf(-b / a) * b *
             (1 - c * bs * (1 - d * bs / 5) / 3);
    }
    a /= 2;
    for (int i = 0; i < lg; ++i) {
      for (double sgn : {-1.0, 1.0}) {
        double xs = a * (sgn * x[i] + 1);
        xs *= xs;
        double rs = std::sqrt(1 - xs);
        double e = -(bs / xs + hk) / 2;
        if (e < -700) continue;
        bvn += a * w[i] * std::exp(e) *
               (std::exp(-hk * (1 - rs) / (2 * (1 + rs))) / rs - (1 + c * xs * (1 + d * xs)));
      }
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0) {
    bvn += norm_cdf(-std::max(h, k));
  } else {
    bvn = -bvn;
    if (k > h) bvn += h < 0 ? norm_cdf(k) - norm_cdf(h) : norm_cdf(-h) - norm_cdf(-k);
  }
  return std::clamp(bvn, 0.0, 1.0);
}

/// Lower bivariate normal CDF P(X <= a, Y <= b).
inline double bvn_cdf(double a, double b, double r) {
  if (a == -kInf || b == -kInf) return 0.0;
  if (a == kInf) return norm_cdf(b);
  if (b == kInf) return norm_cdf(a);
  return bvn_upper(-a, -b, r);
}

/// Mass of the rectangle (a1, b1] x (a2, b2].
inline double bvn_rect(double a1, double b1, double a2, double b2, double r) {
  double p = bvn_cdf(b1, b2, r) - bvn_cdf(a1, b2, r) - bvn_cdf(b1, a2, r) + bvn_cdf(a1, a2, r);
  return std::max(p, 0.0);
}

/// Sample quantile, R type 7 (linear interpolation between order statistics).
inline double quantile_type7(std::vector<double> v, double q) {
  if (v.empty()) throw NumericError("quantile of empty sample");
  std::sort(v.begin(), v.end());
  double h = (static_cast<double>(v.size()) - 1) * q;
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile_type7(std::move(v), 0.5); }

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw NumericError("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Derives an independent child seed (splitmix64 step) so each stochastic
/// task gets a stream that does not depend on scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

/// Standard normal draw via Box-Muller; std::normal_distribution is not
/// specified bit-for-bit across standard libraries.
class NormalSampler {
 public:
  double operator()(Rng& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform(rng);
    } while (u1 <= 0.0);
    u2 = uniform(rng);
    double rad = std::sqrt(-2.0 * std::log(u1));
    spare_ = rad * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return rad * std::cos(kTwoPi * u2);
  }

  static double uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Poisson draw (inversion for small means, PTRS transformed rejection for large).
inline std::int64_t poisson(Rng& rng, double mu) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw NumericError("invalid Poisson mean");
  if (mu == 0.0) return 0;
  if (mu < 30.0) {
    double l = std::exp(-mu), p = 1.0;
    std::int64_t k = 0;
    do {
      ++k;
      p *= NormalSampler::uniform(rng);
    } while (p > l);
    return k - 1;
  }
  double slam = std::sqrt(mu), loglam = std::log(mu);
  double b = 0.931 + 2.53 * slam;
  double a = -0.059 + 0.02483 * b;
  double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  double vr = 0.9277 - 3.6224 / (b - 2);
  for (;;) {
    double u = NormalSampler::uniform(rng) - 0.5;
    double v = NormalSampler::uniform(rng);
    double us = 0.5 - std::abs(u);
    auto k = static_cast<std::int64_t>(std::floor((2 * a / us + b) * u + mu + 0.43));
    if (us >= 0.07 && v <= vr) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mu + static_cast<double>(k) * loglam - std::lgamma(static_cast<double>(k) + 1))
      return k;
  }
}

/// Fisher-Yates shuffle with an explicit engine (std::shuffle's algorithm
/// is implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace hostsec::stats
