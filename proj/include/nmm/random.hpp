// Copyright 2026 The NMM Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "nmm/error.hpp"
#include "nmm/special_fn.hpp"

namespace nmm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of sub-family `index` under `seed` (for nesting stream families).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x5851f42d4c957f2dULL));
}

/// Seeded random stream. All randomness in the library flows through this
/// type; independent streams are derived from one 64-bit seed by index so
/// parallel workers stay reproducible.
///
/// The variate generators are implemented here rather than with <random>
/// distributions so the streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Stream `index` of the family rooted at `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  }
  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return stream(seed ^ splitmix64(a + 0x2545f4914f6cdd1dULL), b);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw InvalidInput("uniform_index: empty range");
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Standard normal via the Marsaglia polar method (second value dropped).
  double normal() {
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }

  /// log of a Gamma(shape, 1) draw. Marsaglia-Tsang for shape >= 1; for
  /// shape < 1 the boost G(a) = G(a + 1) U^(1/a) is applied in log space so
  /// tiny shapes never underflow to zero.
  double log_gamma_variate(double shape) {
    if (!(shape > 0.0)) throw DomainError("gamma variate: shape must be > 0");
    if (shape < 1.0) {
      return log_gamma_variate(shape + 1.0) + std::log(uniform()) / shape;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2 ||
          std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
        return std::log(d * v);
      }
    }
  }

  double gamma(double shape) { return std::exp(log_gamma_variate(shape)); }

  /// Dirichlet draw written into `out` (same length as alpha).
  void dirichlet(std::span<const double> alpha, std::span<double> out) {
    if (alpha.size() != out.size()) {
      throw InvalidInput("dirichlet: output size mismatch");
    }
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      out[k] = log_gamma_variate(alpha[k]);
    }
    const double norm = log_sum_exp(out);
    for (double& v : out) v = std::exp(v - norm);
  }

  /// Index drawn proportionally to non-negative weights (need not sum to 1).
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) {
      throw InvalidInput("categorical: weights have no positive mass");
    }
    const double target = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] <= 0.0) continue;
      acc += weights[k];
      last_positive = k;
      if (target < acc) return k;
    }
    return last_positive;
  }

  /// Uniformly random permutation of 0..n-1 (Fisher-Yates).
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      std::swap(perm[i - 1], perm[uniform_index(i)]);
    }
    return perm;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nmm
