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

// Scalar reverse-mode differentiation.
//
// A Tape is an append-only list of primitive records. Each record stores its
// forward value and, for every input, the index of that input's record and
// the local partial derivative. Records only reference earlier records, so
// a single reverse sweep over the list accumulates all adjoints.
//
// Var is a handle (tape, index, cached value). A Var with no tape is a
// constant: operations on constants produce constants and nothing is
// recorded, which lets the library's templated kernels run unchanged on
// plain doubles and on taped values. Every primitive computes its forward
// value with the same double kernel the untaped code uses, so a taped
// evaluation reproduces the plain one bit for bit.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "nmm/error.hpp"
#include "nmm/special_fn.hpp"

namespace nmm::ad {

enum class Op : std::uint8_t {
  kInput,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kLog,
  kExp,
  kLogGamma,
  kSoftplus,
  kSquare,
  kRelu,
  kSqrt,
  kSum,
  kDot,
  kLogSumExp,
  kSoftmax,
  kCosine,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kLog: return "log";
    case Op::kExp: return "exp";
    case Op::kLogGamma: return "log_gamma";
    case Op::kSoftplus: return "softplus";
    case Op::kSquare: return "square";
    case Op::kRelu: return "relu";
    case Op::kSqrt: return "sqrt";
    case Op::kSum: return "sum";
    case Op::kDot: return "dot";
    case Op::kLogSumExp: return "log_sum_exp";
    case Op::kSoftmax: return "softmax";
    case Op::kCosine: return "cosine";
  }
  return "?";
}

class Tape;

class Var {
 public:
  Var() = default;
  // Implicit: a plain number is a constant.
  Var(double value) : value_(value) {}  // NOLINT

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index, double value)
      : tape_(tape), index_(index), value_(value) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  double value_ = 0.0;
};

/// (input, d output / d input) pair used when recording a primitive.
struct Partial {
  Var input;
  double derivative;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(double value) { return record(Op::kInput, value, {}); }

  std::vector<Var> inputs(std::span<const double> values) {
    std::vector<Var> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(input(v));
    return out;
  }

  /// Appends a record. Constant inputs are dropped from the edge list.
  Var record(Op op, double value, std::span<const Partial> partials) {
    if (std::isnan(value) || value == std::numeric_limits<double>::infinity()) {
      throw NonFiniteValue("tape record " + std::to_string(records_.size()) +
                           " (" + op_name(op) + ") produced " +
                           std::to_string(value));
    }
    const auto begin = static_cast<std::uint32_t>(parents_.size());
    for (const auto& p : partials) {
      if (p.input.is_constant()) continue;
      if (p.input.tape_ != this) {
        throw Error("tape: mixing values from different tapes");
      }
      parents_.push_back(p.input.index_);
      derivatives_.push_back(p.derivative);
    }
    records_.push_back({op, begin, static_cast<std::uint32_t>(parents_.size()),
                        value});
    return Var(this, static_cast<std::uint32_t>(records_.size() - 1), value);
  }
  Var record(Op op, double value, std::initializer_list<Partial> partials) {
    return record(op, value, std::span<const Partial>(partials.begin(), partials.size()));
  }

  std::size_t size() const { return records_.size(); }

  /// Reverse sweep from `output`; returns the adjoint of every record.
  std::vector<double> backward(const Var& output) const {
    std::vector<double> adjoint(records_.size(), 0.0);
    if (output.is_constant()) return adjoint;
    if (output.tape_ != this) throw Error("tape: output belongs to another tape");
    adjoint[output.index_] = 1.0;
    for (std::size_t r = output.index_ + 1; r-- > 0;) {
      const double a = adjoint[r];
      if (a == 0.0) continue;
      const auto& rec = records_[r];
      for (std::uint32_t e = rec.edge_begin; e < rec.edge_end; ++e) {
        const double contribution = a * derivatives_[e];
        double& target = adjoint[parents_[e]];
        target += contribution;
        if (!std::isfinite(target)) {
          throw NonFiniteValue("backward: non-finite adjoint flowing from record " +
                               std::to_string(r) + " (" + op_name(rec.op) +
                               ") into record " + std::to_string(parents_[e]));
        }
      }
    }
    return adjoint;
  }

  /// Adjoints of `wrt` only.
  std::vector<double> gradient(const Var& output, std::span<const Var> wrt) const {
    const auto adjoint = backward(output);
    std::vector<double> g(wrt.size(), 0.0);
    for (std::size_t k = 0; k < wrt.size(); ++k) {
      if (!wrt[k].is_constant()) g[k] = adjoint[wrt[k].index_];
    }
    return g;
  }

 private:
  struct Record {
    Op op;
    std::uint32_t edge_begin;
    std::uint32_t edge_end;
    double value;
  };
  std::vector<Record> records_;
  std::vector<std::uint32_t> parents_;
  std::vector<double> derivatives_;
};

inline double value_of(const Var& x) { return x.value(); }

namespace detail {

inline Tape* tape_of(const Var& a, const Var& b) {
  Tape* t = a.tape() ? a.tape() : b.tape();
  if (a.tape() && b.tape() && a.tape() != b.tape()) {
    throw Error("tape: mixing values from different tapes");
  }
  return t;
}

template <class Range>
Tape* tape_of(const Range& xs) {
  Tape* t = nullptr;
  for (const Var& x : xs) {
    if (!x.tape()) continue;
    if (t && t != x.tape()) throw Error("tape: mixing values from different tapes");
    t = x.tape();
  }
  return t;
}

inline Var unary(Op op, const Var& a, double value, double d) {
  if (a.is_constant()) return Var(value);
  return a.tape()->record(op, value, {Partial{a, d}});
}

inline Var binary(Op op, const Var& a, const Var& b, double value, double da,
                  double db) {
  Tape* t = tape_of(a, b);
  if (!t) return Var(value);
  return t->record(op, value, {Partial{a, da}, Partial{b, db}});
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  return detail::binary(Op::kAdd, a, b, a.value() + b.value(), 1.0, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return detail::binary(Op::kSub, a, b, a.value() - b.value(), 1.0, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return detail::binary(Op::kMul, a, b, a.value() * b.value(), b.value(),
                        a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.value() / b.value();
  return detail::binary(Op::kDiv, a, b, q, 1.0 / b.value(), -q / b.value());
}
inline Var operator-(const Var& a) {
  return detail::unary(Op::kNeg, a, -a.value(), -1.0);
}
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

inline Var log(const Var& a) {
  return detail::unary(Op::kLog, a, std::log(a.value()), 1.0 / a.value());
}
inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return detail::unary(Op::kExp, a, e, e);
}
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return detail::unary(Op::kSqrt, a, s, 0.5 / s);
}
/// Adjoint uses digamma.
inline Var log_gamma(const Var& a) {
  return detail::unary(Op::kLogGamma, a, nmm::log_gamma(a.value()),
                       a.is_constant() ? 0.0 : nmm::digamma(a.value()));
}
inline Var softplus(const Var& a) {
  return detail::unary(Op::kSoftplus, a, nmm::softplus(a.value()),
                       nmm::sigmoid(a.value()));
}
inline Var square(const Var& a) {
  return detail::unary(Op::kSquare, a, a.value() * a.value(), 2.0 * a.value());
}
inline Var relu(const Var& a) {
  return detail::unary(Op::kRelu, a, a.value() > 0.0 ? a.value() : 0.0,
                       a.value() > 0.0 ? 1.0 : 0.0);
}

inline Var sum(std::span<const Var> xs) {
  double s = 0.0;
  for (const Var& x : xs) s += x.value();
  Tape* t = detail::tape_of(xs);
  if (!t) return Var(s);
  std::vector<Partial> p;
  p.reserve(xs.size());
  for (const Var& x : xs) p.push_back({x, 1.0});
  return t->record(Op::kSum, s, p);
}

inline Var dot(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size()) throw InvalidInput("dot: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k].value() * b[k].value();
  Tape* t = detail::tape_of(a);
  if (!t) t = detail::tape_of(b);
  if (!t) return Var(s);
  std::vector<Partial> p;
  p.reserve(2 * a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    p.push_back({a[k], b[k].value()});
    p.push_back({b[k], a[k].value()});
  }
  return t->record(Op::kDot, s, p);
}

/// Max-stable log-sum-exp; partials are the softmax weights.
inline Var log_sum_exp(std::span<const Var> xs) {
  std::vector<double> v(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) v[k] = xs[k].value();
  const double lse = nmm::log_sum_exp(v);
  Tape* t = detail::tape_of(xs);
  if (!t) return Var(lse);
  std::vector<Partial> p;
  p.reserve(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double w = lse == kNegInf ? 0.0 : std::exp(v[k] - lse);
    p.push_back({xs[k], w});
  }
  return t->record(Op::kLogSumExp, lse, p);
}

/// Max-stable softmax. Each output is one record with the analytic Jacobian
/// row p_k (delta_kj - p_j).
inline std::vector<Var> softmax(std::span<const Var> xs) {
  std::vector<double> v(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) v[k] = xs[k].value();
  const double max = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - max);
    total += x;
  }
  for (double& x : v) x /= total;
  Tape* t = detail::tape_of(xs);
  std::vector<Var> out;
  out.reserve(xs.size());
  std::vector<Partial> p(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!t) {
      out.emplace_back(v[k]);
      continue;
    }
    for (std::size_t j = 0; j < xs.size(); ++j) {
      p[j] = {xs[j], v[k] * ((k == j ? 1.0 : 0.0) - v[j])};
    }
    out.push_back(t->record(Op::kSoftmax, v[k], p));
  }
  return out;
}

}  // namespace nmm::ad

namespace nmm {

/// Cosine similarity; defined as 0 when either vector has zero norm.
inline double cosine_similarity(std::span<const double> a,
                                std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

namespace ad {

inline Var cosine_similarity(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size()) throw InvalidInput("cosine: length mismatch");
  const std::size_t n = a.size();
  std::vector<double> av(n), bv(n);
  for (std::size_t k = 0; k < n; ++k) {
    av[k] = a[k].value();
    bv[k] = b[k].value();
  }
  const double cos = nmm::cosine_similarity(av, bv);
  Tape* t = detail::tape_of(a);
  if (!t) t = detail::tape_of(b);
  if (!t) return Var(cos);
  double aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    aa += av[k] * av[k];
    bb += bv[k] * bv[k];
  }
  std::vector<Partial> p;
  p.reserve(2 * n);
  if (aa == 0.0 || bb == 0.0) {
    // Zero-norm convention: the similarity is held at 0 locally.
    for (std::size_t k = 0; k < n; ++k) {
      p.push_back({a[k], 0.0});
      p.push_back({b[k], 0.0});
    }
    return t->record(Op::kCosine, cos, p);
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const bool same = a.data() == b.data();
  for (std::size_t k = 0; k < n; ++k) {
    const double da = bv[k] / (na * nb) - cos * av[k] / aa;
    const double db = av[k] / (na * nb) - cos * bv[k] / bb;
    if (same) {
      p.push_back({a[k], da + db});
    } else {
      p.push_back({a[k], da});
      p.push_back({b[k], db});
    }
  }
  return t->record(Op::kCosine, cos, p);
}

// ---------------------------------------------------------------------------
// Closures over declared parameters

/// Forward computation: receives the tape and one input Var per parameter.
using Forward = std::function<Var(Tape&, std::span<const Var>)>;

struct ValueAndGradient {
  double value = 0.0;
  std::vector<double> grad;
};

inline ValueAndGradient record_and_backward(const Forward& forward,
                                            std::span<const double> point) {
  Tape tape;
  const auto x = tape.inputs(point);
  const Var out = forward(tape, x);
  if (!std::isfinite(out.value())) {
    throw NonFiniteValue("forward evaluated to " + std::to_string(out.value()) +
                         " at record " + std::to_string(out.index()));
  }
  return {out.value(), tape.gradient(out, x)};
}

struct GradientCheck {
  std::vector<double> tape_grad;
  std::vector<double> fd_grad;
  std::vector<double> rel_error;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Relative error floor: |g - fd| / max(|g|, |fd|, floor). Below the floor
/// the comparison is effectively absolute, where central differences carry
/// rounding noise of order eps * |f| / step.
inline constexpr double kGradientCheckFloor = 1e-2;

inline GradientCheck check_gradient(const Forward& forward,
                                    std::span<const double> point, double step,
                                    double tol) {
  GradientCheck report;
  report.tape_grad = record_and_backward(forward, point).grad;
  std::vector<double> x(point.begin(), point.end());
  auto eval = [&](std::span<const double> at) {
    Tape tape;
    const auto v = tape.inputs(at);
    return forward(tape, v).value();
  };
  report.fd_grad.resize(x.size());
  report.rel_error.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + step;
    const double up = eval(x);
    x[k] = saved - step;
    const double down = eval(x);
    x[k] = saved;
    report.fd_grad[k] = (up - down) / (2.0 * step);
    const double g = report.tape_grad[k];
    const double fd = report.fd_grad[k];
    const double denom =
        std::max({std::abs(g), std::abs(fd), kGradientCheckFloor});
    report.rel_error[k] = std::abs(g - fd) / denom;
    if (report.rel_error[k] > report.max_rel_error || !std::isfinite(report.rel_error[k])) {
      report.max_rel_error = report.rel_error[k];
      report.worst_index = k;
    }
  }
  report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error < tol;
  return report;
}

}  // namespace ad
}  // namespace nmm
