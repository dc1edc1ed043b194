#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace resmatch {

/// splitmix64 step; used to derive independent per-stage / per-pool seeds
/// from one experiment seed.
inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t salt) {
  uint64_t s = base ^ (0x9e3779b97f4a7c15ULL + (salt << 1));
  uint64_t a = splitmix64(s);
  uint64_t b = splitmix64(s);
  return a ^ (b >> 1);
}

inline uint64_t derive_seed(uint64_t base, uint64_t salt1, uint64_t salt2) {
  return derive_seed(derive_seed(base, salt1), salt2);
}

inline uint64_t derive_seed(uint64_t base, uint64_t s1, uint64_t s2, uint64_t s3) {
  return derive_seed(derive_seed(base, s1, s2), s3);
}

/// Deterministic random source. The engine is the standard-specified
/// mt19937_64; every distribution is implemented here rather than taken from
/// <random> so that streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n); rejection sampling, no modulo bias.
  int next_index(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::next_index: n must be positive");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % un);
  }

  bool bernoulli(double p) { return next_double() < p; }

  /// Standard normal via Box-Muller; the spare value is discarded to keep the
  /// consumption pattern one-call-two-uniforms.
  double normal() {
    double u1;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Gamma(shape, 1) via Marsaglia-Tsang squeeze, boosted below shape 1.
  double gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
      double u;
      do {
        u = next_double();
      } while (u <= 0.0);
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double alpha, double beta_shape) {
    double x = gamma(alpha);
    double y = gamma(beta_shape);
    return x / (x + y);
  }

  /// Draw an index with probability proportional to weights (CDF inversion).
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("Rng::categorical: negative weight");
      total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("Rng::categorical: zero total weight");
    double target = next_double() * total;
    double acc = 0.0;
    for (size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (target < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  /// Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[static_cast<size_t>(next_index(i + 1))]);
    }
  }

  /// m distinct indices from [0, n), in selection order.
  std::vector<int> sample_without_replacement(int n, int m) {
    if (m > n) throw std::invalid_argument("Rng::sample_without_replacement: m > n");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out;
    out.reserve(m);
    for (int i = 0; i < m; ++i) {
      int j = next_index(n - i);
      out.push_back(pool[j]);
      std::swap(pool[j], pool[n - 1 - i]);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace resmatch
