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

// Collapsed neighbor-mixture probability core.
//
// Model: z_j ~ Dir(alpha_j) for every node j, c_i ~ Cat(L_i) over n(i), and
// y_i ~ Cat(z_{c_i}). Integrating z out gives, for labels y on a node set tau
// and assignments c,
//
//   log p(y, c) = sum_i log L_{i,c_i}
//               + sum_{j in range(c)} [logB(alpha_j + s_j) - logB(alpha_j)]
//
// where s_j counts, per class, the nodes of tau that chose j. Adding one
// node (i, y_i, c_i = j) to an existing table changes the joint by
//
//   log L_ij + log(alpha_{j,y_i} + s_{j,y_i}) - log(alpha_{j,0} + s_{j,0})
//
// with alpha_{j,0}, s_{j,0} the row totals. That increment drives exact
// enumeration here and the autoregressive posterior in variational.hpp.
//
// Parameter and probability functions are templates over the scalar type so
// the same code evaluates on doubles and on the differentiation tape.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "nmm/autodiff.hpp"
#include "nmm/error.hpp"
#include "nmm/graph.hpp"
#include "nmm/random.hpp"
#include "nmm/special_fn.hpp"

namespace nmm {

struct Observation {
  NodeId node;
  Label label;
  friend bool operator==(const Observation&, const Observation&) = default;
};

using Observations = std::vector<Observation>;

/// c_i for each entry of an Observations span, aligned by position.
using NeighborAssignment = std::vector<NodeId>;

/// Observations for every labeled node of `labels`, in id order.
inline Observations observations_from(std::span<const Label> labels) {
  Observations out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kUnknownLabel) {
      out.push_back({static_cast<NodeId>(i), labels[i]});
    }
  }
  return out;
}

/// Observations restricted to `nodes`; every listed node must be labeled.
inline Observations observations_from(std::span<const Label> labels,
                                      std::span<const NodeId> nodes) {
  Observations out;
  out.reserve(nodes.size());
  for (NodeId i : nodes) {
    if (i >= labels.size()) {
      throw InvalidInput("node id " + std::to_string(i) + " out of range");
    }
    if (labels[i] == kUnknownLabel) {
      throw InvalidInput("node " + std::to_string(i) + " has no label");
    }
    out.push_back({i, labels[i]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

/// Per-node Dirichlet concentrations alpha (N x C, row-major) and attention
/// vectors L_i laid out along the graph's flattened neighborhoods. Both the
/// probabilities and their logs are kept: probabilities for prediction and
/// sampling, logs for every density evaluation.
template <class T>
class BasicParams {
 public:
  BasicParams() = default;

  BasicParams(std::shared_ptr<const Graph> graph, std::size_t num_classes,
              std::vector<T> alpha, std::vector<T> attention,
              std::vector<T> log_attention)
      : graph_(std::move(graph)),
        num_classes_(num_classes),
        alpha_(std::move(alpha)),
        attention_(std::move(attention)),
        log_attention_(std::move(log_attention)) {
    if (!graph_) throw InvalidInput("params: graph is null");
    if (num_classes_ < 2) throw InvalidInput("params: need at least 2 classes");
    if (alpha_.size() != graph_->num_nodes() * num_classes_) {
      throw InvalidInput("params: alpha must have N*C entries");
    }
    if (attention_.size() != graph_->neighborhood_entries() ||
        log_attention_.size() != attention_.size()) {
      throw InvalidInput("params: attention must have one entry per neighbor");
    }
    alpha_total_.reserve(graph_->num_nodes());
    for (std::size_t j = 0; j < graph_->num_nodes(); ++j) {
      alpha_total_.push_back(sum(this->alpha(static_cast<NodeId>(j))));
    }
  }

  const Graph& graph() const { return *graph_; }
  const std::shared_ptr<const Graph>& graph_ptr() const { return graph_; }
  std::size_t num_nodes() const { return graph_->num_nodes(); }
  std::size_t num_classes() const { return num_classes_; }

  std::span<const T> alpha(NodeId j) const {
    return {alpha_.data() + static_cast<std::size_t>(j) * num_classes_,
            num_classes_};
  }
  const T& alpha_total(NodeId j) const { return alpha_total_[j]; }

  /// L_i aligned with graph().neighborhood(i).
  std::span<const T> attention(NodeId i) const {
    return {attention_.data() + graph_->neighborhood_offset(i),
            graph_->neighborhood(i).size()};
  }
  std::span<const T> log_attention(NodeId i) const {
    return {log_attention_.data() + graph_->neighborhood_offset(i),
            graph_->neighborhood(i).size()};
  }

  const std::vector<T>& alpha_data() const { return alpha_; }
  const std::vector<T>& attention_data() const { return attention_; }
  const std::vector<T>& log_attention_data() const { return log_attention_; }

 private:
  std::shared_ptr<const Graph> graph_;
  std::size_t num_classes_ = 0;
  std::vector<T> alpha_;
  std::vector<T> alpha_total_;
  std::vector<T> attention_;
  std::vector<T> log_attention_;
};

using NmmParams = BasicParams<double>;

inline constexpr double kAttentionSumTolerance = 1e-12;

/// Checks the invariants: alpha > 0, every L_i non-negative summing to 1.
inline void validate(const NmmParams& p) {
  for (double a : p.alpha_data()) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw InvalidInput("params: alpha entries must be positive and finite");
    }
  }
  for (std::size_t i = 0; i < p.num_nodes(); ++i) {
    double total = 0.0;
    for (double l : p.attention(static_cast<NodeId>(i))) {
      if (!(l >= 0.0)) throw InvalidInput("params: negative attention entry");
      total += l;
    }
    if (std::abs(total - 1.0) > kAttentionSumTolerance) {
      throw InvalidInput("params: attention of node " + std::to_string(i) +
                         " sums to " + std::to_string(total));
    }
  }
}

/// Builds validated params from probabilities; logs are derived.
inline NmmParams make_params(std::shared_ptr<const Graph> graph,
                             std::size_t num_classes, std::vector<double> alpha,
                             std::vector<double> attention) {
  std::vector<double> logs(attention.size());
  for (std::size_t k = 0; k < attention.size(); ++k) {
    logs[k] = std::log(attention[k]);
  }
  NmmParams p(std::move(graph), num_classes, std::move(alpha),
              std::move(attention), std::move(logs));
  validate(p);
  return p;
}

/// Builds params from log-attention (probabilities derived).
template <class T>
BasicParams<T> params_from_log_attention(std::shared_ptr<const Graph> graph,
                                         std::size_t num_classes,
                                         std::vector<T> alpha,
                                         std::vector<T> log_attention) {
  using std::exp;
  std::vector<T> attention;
  attention.reserve(log_attention.size());
  for (const T& la : log_attention) {
    attention.push_back(value_of(la) == kNegInf ? T(0.0) : T(exp(la)));
  }
  return BasicParams<T>(std::move(graph), num_classes, std::move(alpha),
                        std::move(attention), std::move(log_attention));
}

/// Plain-double snapshot of taped params.
inline NmmParams values_of(const BasicParams<ad::Var>& p) {
  auto strip = [](const std::vector<ad::Var>& xs) {
    std::vector<double> out(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) out[k] = xs[k].value();
    return out;
  };
  return NmmParams(p.graph_ptr(), p.num_classes(), strip(p.alpha_data()),
                   strip(p.attention_data()), strip(p.log_attention_data()));
}

/// Shared concentration for every node and uniform attention.
inline NmmParams uniform_params(std::shared_ptr<const Graph> graph,
                                std::size_t num_classes, double alpha = 1.0) {
  const std::size_t n = graph->num_nodes();
  std::vector<double> attention(graph->neighborhood_entries());
  for (std::size_t i = 0; i < n; ++i) {
    const auto size = graph->neighborhood(static_cast<NodeId>(i)).size();
    const auto off = graph->neighborhood_offset(static_cast<NodeId>(i));
    for (std::size_t k = 0; k < size; ++k) {
      attention[off + k] = 1.0 / static_cast<double>(size);
    }
  }
  return make_params(std::move(graph), num_classes,
                     std::vector<double>(n * num_classes, alpha),
                     std::move(attention));
}

/// Attention fixed to L_i = onehot(i): the labels become independent.
inline NmmParams identity_attention_params(std::shared_ptr<const Graph> graph,
                                           std::size_t num_classes,
                                           std::vector<double> alpha) {
  std::vector<double> attention(graph->neighborhood_entries(), 0.0);
  for (std::size_t i = 0; i < graph->num_nodes(); ++i) {
    const auto id = static_cast<NodeId>(i);
    attention[graph->neighborhood_offset(id) + graph->self_slot(id)] = 1.0;
  }
  return make_params(std::move(graph), num_classes, std::move(alpha),
                     std::move(attention));
}

// ---------------------------------------------------------------------------
// Sufficient statistics

/// Sparse per-node class counts s_j with cached row totals. Clearing keeps
/// the allocated storage so one table can be reused across many samples.
class CountTable {
 public:
  explicit CountTable(std::size_t num_classes = 0) : num_classes_(num_classes) {}

  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  /// Nodes with a non-empty row, in first-touch order.
  std::span<const NodeId> nodes() const { return keys_; }

  bool contains(NodeId j) const { return slots_.count(j) != 0; }

  void add(NodeId j, Label k) {
    if (k < 0 || static_cast<std::size_t>(k) >= num_classes_) {
      throw InvalidInput("label " + std::to_string(k) + " out of range");
    }
    auto [it, inserted] = slots_.try_emplace(j, keys_.size());
    if (inserted) {
      keys_.push_back(j);
      counts_.resize(counts_.size() + num_classes_, 0);
      totals_.push_back(0);
    }
    ++counts_[it->second * num_classes_ + static_cast<std::size_t>(k)];
    ++totals_[it->second];
  }

  std::uint32_t count(NodeId j, Label k) const {
    auto it = slots_.find(j);
    if (it == slots_.end()) return 0;
    return counts_[it->second * num_classes_ + static_cast<std::size_t>(k)];
  }

  std::uint32_t total(NodeId j) const {
    auto it = slots_.find(j);
    return it == slots_.end() ? 0 : totals_[it->second];
  }

  /// Row s_j; empty span when j is absent.
  std::span<const std::uint32_t> row(NodeId j) const {
    auto it = slots_.find(j);
    if (it == slots_.end()) return {};
    return {counts_.data() + it->second * num_classes_, num_classes_};
  }

  void clear() {
    slots_.clear();
    keys_.clear();
    counts_.clear();
    totals_.clear();
  }

  friend bool operator==(const CountTable& a, const CountTable& b) {
    if (a.num_classes_ != b.num_classes_ || a.size() != b.size()) return false;
    for (NodeId j : a.keys_) {
      auto ra = a.row(j), rb = b.row(j);
      if (rb.empty() || !std::equal(ra.begin(), ra.end(), rb.begin())) {
        return false;
      }
    }
    return true;
  }

 private:
  std::size_t num_classes_;
  std::unordered_map<NodeId, std::size_t> slots_;
  std::vector<NodeId> keys_;
  std::vector<std::uint32_t> counts_;
  std::vector<std::uint32_t> totals_;
};

inline CountTable suff_stats(std::span<const Observation> y,
                             std::span<const NodeId> c, std::size_t num_classes) {
  if (y.size() != c.size()) {
    throw InvalidInput("suff_stats: labels and assignment cover different sets");
  }
  CountTable table(num_classes);
  for (std::size_t k = 0; k < y.size(); ++k) table.add(c[k], y[k].label);
  return table;
}

namespace detail {

template <class T>
void check_observation(const BasicParams<T>& p, const Observation& o) {
  if (o.node >= p.num_nodes()) {
    throw InvalidInput("node id " + std::to_string(o.node) + " out of range");
  }
  if (o.label < 0 || static_cast<std::size_t>(o.label) >= p.num_classes()) {
    throw InvalidInput("label " + std::to_string(o.label) + " of node " +
                       std::to_string(o.node) + " out of range");
  }
}

template <class T>
std::size_t checked_slot(const BasicParams<T>& p, NodeId i, NodeId j) {
  auto s = p.graph().slot(i, j);
  if (!s) {
    throw InvalidInput("assignment: node " + std::to_string(j) +
                       " is not in the neighborhood of " + std::to_string(i));
  }
  return *s;
}

}  // namespace detail

/// log p(y_tau, c_tau | alpha, L) in O(C |tau|). Returns -inf when some
/// chosen attention weight is zero.
template <class T>
T log_joint(const BasicParams<T>& p, std::span<const Observation> y,
            std::span<const NodeId> c) {
  if (y.size() != c.size()) {
    throw InvalidInput("log_joint: labels and assignment cover different sets");
  }
  T total(0.0);
  for (std::size_t k = 0; k < y.size(); ++k) {
    detail::check_observation(p, y[k]);
    total += p.log_attention(y[k].node)[detail::checked_slot(p, y[k].node, c[k])];
  }
  const CountTable table = suff_stats(y, c, p.num_classes());
  for (NodeId j : table.nodes()) {
    const auto a = p.alpha(j);
    const auto s = table.row(j);
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] == 0) continue;
      total += log_gamma(a[k] + static_cast<double>(s[k])) - log_gamma(a[k]);
    }
    const T& a0 = p.alpha_total(j);
    total -= log_gamma(a0 + static_cast<double>(table.total(j))) - log_gamma(a0);
  }
  return total;
}

/// Log-weight of each candidate c_i in n(i) given counts from already placed
/// nodes: log L_ij + log(alpha_{j,y} + s_{j,y}) - log(alpha_{j,0} + s_{j,0}).
/// Candidates with zero attention get -inf.
template <class T>
void chain_log_weights(const BasicParams<T>& p, const CountTable& counts,
                       NodeId i, Label y, std::vector<T>& out) {
  using std::log;
  const auto nbrs = p.graph().neighborhood(i);
  const auto log_l = p.log_attention(i);
  out.clear();
  out.reserve(nbrs.size());
  for (std::size_t k = 0; k < nbrs.size(); ++k) {
    if (value_of(log_l[k]) == kNegInf) {
      out.emplace_back(kNegInf);
      continue;
    }
    const NodeId j = nbrs[k];
    const double s_y = counts.count(j, y);
    const double s_0 = counts.total(j);
    out.push_back(log_l[k] + log(p.alpha(j)[static_cast<std::size_t>(y)] + s_y) -
                  log(p.alpha_total(j) + s_0));
  }
}

/// Exact enumeration limits. Enumeration is refused, rather than left to
/// stall, when the assignment space exceeds the budget.
struct EnumerationBudget {
  std::size_t max_nodes = 12;
  std::uint64_t max_configurations = std::uint64_t{1} << 24;
};

/// Size of prod_{i in nodes} |n(i)|, saturating at UINT64_MAX.
inline std::uint64_t assignment_space_size(const Graph& g,
                                           std::span<const NodeId> nodes) {
  std::uint64_t size = 1;
  for (NodeId i : nodes) {
    const std::uint64_t d = g.neighborhood(i).size();
    if (size > UINT64_MAX / d) return UINT64_MAX;
    size *= d;
  }
  return size;
}

inline void check_budget(const Graph& g, std::span<const Observation> y,
                         const EnumerationBudget& budget) {
  if (y.size() > budget.max_nodes) {
    throw BudgetExceeded("exact enumeration over " + std::to_string(y.size()) +
                         " nodes exceeds the cap of " +
                         std::to_string(budget.max_nodes));
  }
  std::vector<NodeId> nodes;
  nodes.reserve(y.size());
  for (const auto& o : y) nodes.push_back(o.node);
  const auto size = assignment_space_size(g, nodes);
  if (size > budget.max_configurations) {
    throw BudgetExceeded("exact enumeration over " + std::to_string(size) +
                         " neighbor assignments exceeds the budget of " +
                         std::to_string(budget.max_configurations));
  }
}

/// log p(y_tau | alpha, L) by summing the collapsed joint over every
/// assignment in prod_i n(i). The joint is built incrementally along a
/// depth-first walk, so each assignment costs O(1) amortized.
inline double exact_marginal(const NmmParams& p, std::span<const Observation> y,
                             const EnumerationBudget& budget = {}) {
  for (const auto& o : y) detail::check_observation(p, o);
  check_budget(p.graph(), y, budget);
  if (y.empty()) return 0.0;

  // Dense local indexing of n(tau).
  const std::size_t num_classes = p.num_classes();
  std::unordered_map<NodeId, std::size_t> local;
  std::vector<NodeId> members;
  std::vector<std::vector<std::size_t>> cand_local(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    for (NodeId j : p.graph().neighborhood(y[k].node)) {
      auto [it, inserted] = local.try_emplace(j, members.size());
      if (inserted) members.push_back(j);
      cand_local[k].push_back(it->second);
    }
  }
  std::vector<double> counts(members.size() * num_classes, 0.0);
  std::vector<double> totals(members.size(), 0.0);

  LogSumExpAccumulator acc;
  auto visit = [&](auto&& self, std::size_t depth, double partial) -> void {
    if (depth == y.size()) {
      acc.add(partial);
      return;
    }
    const NodeId i = y[depth].node;
    const auto label = static_cast<std::size_t>(y[depth].label);
    const auto nbrs = p.graph().neighborhood(i);
    const auto log_l = p.log_attention(i);
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      if (log_l[k] == kNegInf) continue;
      const std::size_t m = cand_local[depth][k];
      const NodeId j = members[m];
      double& s_y = counts[m * num_classes + label];
      double& s_0 = totals[m];
      const double w = log_l[k] + std::log(p.alpha(j)[label] + s_y) -
                       std::log(p.alpha_total(j) + s_0);
      s_y += 1.0;
      s_0 += 1.0;
      self(self, depth + 1, partial + w);
      s_y -= 1.0;
      s_0 -= 1.0;
    }
  };
  visit(visit, 0, 0.0);
  return acc.value();
}

/// Closed form of the independent special case (L = identity):
/// sum_i log(alpha_{i,y_i} / alpha_{i,0}).
inline double independent_log_marginal(const NmmParams& p,
                                       std::span<const Observation> y) {
  double total = 0.0;
  for (const auto& o : y) {
    detail::check_observation(p, o);
    total += std::log(p.alpha(o.node)[static_cast<std::size_t>(o.label)] /
                      p.alpha_total(o.node));
  }
  return total;
}

/// alpha'_j = alpha_j + s_j(y, c) for every node (untouched rows unchanged).
inline std::vector<double> posterior_alpha(const NmmParams& p,
                                           std::span<const Observation> y,
                                           std::span<const NodeId> c) {
  for (std::size_t k = 0; k < y.size(); ++k) {
    detail::check_observation(p, y[k]);
  }
  const CountTable table = suff_stats(y, c, p.num_classes());
  for (std::size_t k = 0; k < y.size(); ++k) {
    detail::checked_slot(p, y[k].node, c[k]);
  }
  std::vector<double> out = p.alpha_data();
  for (NodeId j : table.nodes()) {
    const auto s = table.row(j);
    for (std::size_t k = 0; k < s.size(); ++k) {
      out[static_cast<std::size_t>(j) * p.num_classes() + k] += s[k];
    }
  }
  return out;
}

namespace detail {

/// Calls fn(s) for every count vector s of length C summing to m.
template <class Fn>
void for_each_composition(std::size_t num_classes, std::uint32_t m, Fn&& fn) {
  std::vector<std::uint32_t> s(num_classes, 0);
  auto rec = [&](auto&& self, std::size_t k, std::uint32_t left) -> void {
    if (k + 1 == num_classes) {
      s[k] = left;
      fn(std::span<const std::uint32_t>(s));
      return;
    }
    for (std::uint32_t v = 0; v <= left; ++v) {
      s[k] = v;
      self(self, k + 1, left - v);
    }
  };
  rec(rec, 0, m);
}

}  // namespace detail

/// E_{p(y, c)}[log p(y, c)] over all of V, in closed form. The attention
/// part is sum_i sum_j L_ij ln L_ij. For the Dirichlet part, the nodes that
/// pick j are independent Bernoulli(L_ij) draws over n(j), and given m of
/// them their labels are Dirichlet-multinomial, so
///   E[logB(alpha_j + s_j) - logB(alpha_j)] = sum_m P(m) sum_{|s| = m}
///       multinom(m; s) exp(l(s)) l(s),   l(s) = logB(alpha_j + s) - logB(alpha_j).
inline double expected_log_joint(const NmmParams& p) {
  const Graph& g = p.graph();
  double total = 0.0;
  for (double l : p.attention_data()) {
    if (l > 0.0) total += l * std::log(l);
  }
  const std::size_t num_classes = p.num_classes();
  std::vector<double> count_prob;
  for (std::size_t jj = 0; jj < g.num_nodes(); ++jj) {
    const auto j = static_cast<NodeId>(jj);
    const auto choosers = g.neighborhood(j);
    // Poisson-binomial distribution of the number of choosers.
    count_prob.assign(choosers.size() + 1, 0.0);
    count_prob[0] = 1.0;
    for (std::size_t k = 0; k < choosers.size(); ++k) {
      const double q = p.attention(choosers[k])[*g.slot(choosers[k], j)];
      for (std::size_t m = k + 1; m-- > 0;) {
        count_prob[m + 1] += count_prob[m] * q;
        count_prob[m] *= 1.0 - q;
      }
    }
    const auto a = p.alpha(j);
    const double a0 = p.alpha_total(j);
    for (std::uint32_t m = 1; m < count_prob.size(); ++m) {
      if (count_prob[m] == 0.0) continue;
      double expect = 0.0;
      const double log_m_fact = log_gamma(m + 1.0);
      detail::for_each_composition(num_classes, m, [&](std::span<const std::uint32_t> s) {
        double l = -(log_gamma(a0 + m) - log_gamma(a0));
        double log_multinom = log_m_fact;
        for (std::size_t k = 0; k < num_classes; ++k) {
          if (s[k] == 0) continue;
          l += log_gamma(a[k] + s[k]) - log_gamma(a[k]);
          log_multinom -= log_gamma(s[k] + 1.0);
        }
        expect += std::exp(log_multinom + l) * l;
      });
      total += count_prob[m] * expect;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Generative sampling

struct LabelSample {
  std::vector<Label> labels;     // y over V
  NeighborAssignment assignment;  // c over V
};

namespace detail {

inline std::vector<double> draw_all_dirichlet(const NmmParams& p, Rng& rng) {
  const std::size_t n = p.num_nodes(), num_classes = p.num_classes();
  std::vector<double> z(n * num_classes);
  for (std::size_t j = 0; j < n; ++j) {
    rng.dirichlet(p.alpha(static_cast<NodeId>(j)),
                  std::span<double>(z.data() + j * num_classes, num_classes));
  }
  return z;
}

}  // namespace detail

/// Ancestral draw: z_j ~ Dir(alpha_j), c_i ~ Cat(L_i), y_i ~ Cat(z_{c_i}).
/// z is discarded.
inline LabelSample sample_labels_ancestral(const NmmParams& p, Rng& rng) {
  const std::size_t n = p.num_nodes(), num_classes = p.num_classes();
  const auto z = detail::draw_all_dirichlet(p, rng);
  LabelSample out;
  out.labels.resize(n);
  out.assignment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<NodeId>(i);
    const NodeId j = p.graph().neighborhood(id)[rng.categorical(p.attention(id))];
    out.assignment[i] = j;
    out.labels[i] = static_cast<Label>(rng.categorical(
        std::span<const double>(z.data() + j * num_classes, num_classes)));
  }
  return out;
}

/// Draw with the neighbor choices integrated out:
/// y_i ~ Cat(sum_j L_ij z_j).
inline std::vector<Label> sample_labels_marginalized(const NmmParams& p, Rng& rng) {
  const std::size_t n = p.num_nodes(), num_classes = p.num_classes();
  const auto z = detail::draw_all_dirichlet(p, rng);
  std::vector<Label> labels(n);
  std::vector<double> u(num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<NodeId>(i);
    std::fill(u.begin(), u.end(), 0.0);
    const auto nbrs = p.graph().neighborhood(id);
    const auto l = p.attention(id);
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      for (std::size_t c = 0; c < num_classes; ++c) {
        u[c] += l[k] * z[nbrs[k] * num_classes + c];
      }
    }
    labels[i] = static_cast<Label>(rng.categorical(u));
  }
  return labels;
}

}  // namespace nmm
