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

// Log-space special functions: log-gamma, digamma, multivariate log-Beta and
// log-sum-exp helpers. Everything probabilistic in the library is built on
// these kernels.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "nmm/error.hpp"

namespace nmm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

namespace detail {

// Lanczos approximation, g = 7, n = 9.
inline constexpr double kLanczosG = 7.0;
inline constexpr std::array<double, 9> kLanczosCoef = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

inline constexpr double kHalfLogTwoPi = 0.91893853320467274178;

inline double lanczos_log_gamma(double x) {
  // Valid for x >= 0.5.
  const double z = x - 1.0;
  double sum = kLanczosCoef[0];
  for (std::size_t k = 1; k < kLanczosCoef.size(); ++k) {
    sum += kLanczosCoef[k] / (z + static_cast<double>(k));
  }
  const double t = z + kLanczosG + 0.5;
  return kHalfLogTwoPi + (z + 0.5) * std::log(t) - t + std::log(sum);
}

}  // namespace detail

/// Natural log of the gamma function for x > 0.
inline double log_gamma(double x) {
  if (!(x > 0.0)) {
    throw DomainError("log_gamma: argument must be positive, got " +
                      std::to_string(x));
  }
  if (x == 1.0 || x == 2.0) return 0.0;
  if (std::isinf(x)) return x;
  if (x < 0.5) return detail::lanczos_log_gamma(x + 1.0) - std::log(x);
  return detail::lanczos_log_gamma(x);
}

/// Digamma (psi) for x > 0: upward recurrence to x >= 6, then the
/// asymptotic expansion in 1/x^2.
inline double digamma(double x) {
  if (!(x > 0.0)) {
    throw DomainError("digamma: argument must be positive, got " +
                      std::to_string(x));
  }
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number series: B_2k / (2k x^2k), k = 1..7
  const double series =
      inv2 *
      (1.0 / 12.0 -
       inv2 * (1.0 / 120.0 -
               inv2 * (1.0 / 252.0 -
                       inv2 * (1.0 / 240.0 -
                               inv2 * (1.0 / 132.0 -
                                       inv2 * (691.0 / 32760.0 -
                                               inv2 * (1.0 / 12.0)))))));
  return result + std::log(x) - 0.5 * inv - series;
}

/// Multivariate log-Beta: sum_c lgamma(alpha_c) - lgamma(sum_c alpha_c).
inline double log_beta(std::span<const double> alpha) {
  double total = 0.0;
  double acc = 0.0;
  for (double a : alpha) {
    if (!(a > 0.0)) {
      throw DomainError("log_beta: concentration entries must be positive");
    }
    acc += log_gamma(a);
    total += a;
  }
  return acc - log_gamma(total);
}

/// log(sum_k exp(values_k)); -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  const double max = *std::max_element(values.begin(), values.end());
  if (max == kNegInf) return kNegInf;
  if (std::isinf(max)) return max;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max);
  return max + std::log(sum);
}

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  return a > b ? a + std::log1p(std::exp(b - a))
               : b + std::log1p(std::exp(a - b));
}

/// Streaming log-sum-exp with a running maximum, so arbitrarily many terms
/// can be accumulated without storing them.
class LogSumExpAccumulator {
 public:
  void add(double v) {
    if (v == kNegInf) return;
    if (v <= max_) {
      sum_ += std::exp(v - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - v) + 1.0;
      max_ = v;
    }
  }
  double value() const {
    return max_ == kNegInf ? kNegInf : max_ + std::log(sum_);
  }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
};

inline double value_of(double x) { return x; }

/// Left-to-right sum (the taped counterpart accumulates in the same order).
inline double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace nmm
