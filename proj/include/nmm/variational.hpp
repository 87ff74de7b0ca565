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

// Autoregressive variational posterior over neighbor assignments.
//
// For an ordering pi of tau, q(c | y) = prod_i p(c_i | y_i, c_<i, y_<i): each
// factor is the exact model conditional given the nodes placed before it,
// obtained by normalizing the chain log-weights over n(i). q reuses alpha
// and L and holds no state of its own.
//
// Along one pass, the chosen weight w_{c_i} is the increment of
// log p(y, c) and w_{c_i} - logsumexp(w) is the increment of log q, so
// log p - log q is the sum of the per-node log normalizers.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "nmm/kernel.hpp"
#include "nmm/parallel.hpp"
#include "nmm/random.hpp"

namespace nmm {

/// One draw of c_tau under a random ordering, with live count state.
struct QSample {
  std::vector<NodeId> order;   // pi: nodes in visit order
  std::vector<Label> labels;   // aligned with order
  NeighborAssignment choice;   // c_i aligned with order
  double log_q = 0.0;
  double log_joint = 0.0;
  CountTable counts;
  std::unordered_set<NodeId> members;

  std::size_t size() const { return order.size(); }
  bool contains(NodeId i) const { return members.count(i) != 0; }

  /// Observations in visit order (aligned with `choice`).
  Observations observations() const {
    Observations out(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) out[k] = {order[k], labels[k]};
    return out;
  }

  double elbo_term() const { return log_joint - log_q; }
};

/// q(c_i = j | y_i, counts) for each j in n(i), normalized.
inline std::vector<double> q_conditional(const NmmParams& p,
                                         const CountTable& counts, NodeId i,
                                         Label y) {
  detail::check_observation(p, {i, y});
  std::vector<double> w;
  chain_log_weights(p, counts, i, y, w);
  const double max = *std::max_element(w.begin(), w.end());
  if (max == kNegInf) {
    throw InvalidInput("q_conditional: attention of node " + std::to_string(i) +
                       " puts no mass on any feasible neighbor");
  }
  double total = 0.0;
  for (double& v : w) {
    v = std::exp(v - max);
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

namespace detail {

/// Places node i with label y: draws c_i from the conditional and updates
/// counts, log_q and log_joint.
inline void place_node(const NmmParams& p, QSample& s, NodeId i, Label y,
                       Rng& rng, std::vector<double>& scratch) {
  check_observation(p, {i, y});
  chain_log_weights(p, s.counts, i, y, scratch);
  const double lse = log_sum_exp(scratch);
  if (lse == kNegInf) {
    throw InvalidInput("q_conditional: attention of node " + std::to_string(i) +
                       " puts no mass on any feasible neighbor");
  }
  std::vector<double> probs(scratch.size());
  for (std::size_t k = 0; k < scratch.size(); ++k) {
    probs[k] = std::exp(scratch[k] - lse);
  }
  const std::size_t pick = rng.categorical(probs);
  const NodeId j = p.graph().neighborhood(i)[pick];
  s.log_joint += scratch[pick];
  s.log_q += scratch[pick] - lse;
  s.counts.add(j, y);
  s.order.push_back(i);
  s.labels.push_back(y);
  s.choice.push_back(j);
  s.members.insert(i);
}

}  // namespace detail

/// Draws pi uniformly, then c_i ~ q(c_i | ...) node by node in pi order.
inline QSample sample_q(const NmmParams& p, std::span<const Observation> y,
                        Rng& rng) {
  QSample s;
  s.counts = CountTable(p.num_classes());
  s.order.reserve(y.size());
  s.labels.reserve(y.size());
  s.choice.reserve(y.size());
  std::vector<double> scratch;
  for (std::size_t k : rng.permutation(y.size())) {
    if (s.contains(y[k].node)) {
      throw InvalidInput("sample_q: node " + std::to_string(y[k].node) +
                         " listed twice");
    }
    detail::place_node(p, s, y[k].node, y[k].label, rng, scratch);
  }
  return s;
}

/// Appends a new node to an existing draw, sampling its c_i given the
/// current counts.
inline void extend_sample(const NmmParams& p, QSample& s, NodeId i, Label y,
                          Rng& rng) {
  if (s.contains(i)) {
    throw InvalidInput("extend_sample: node " + std::to_string(i) +
                       " already present");
  }
  if (s.counts.num_classes() == 0) s.counts = CountTable(p.num_classes());
  std::vector<double> scratch;
  detail::place_node(p, s, i, y, rng, scratch);
}

struct ElboEstimate {
  double elbo = 0.0;
  std::vector<double> per_sample;  // f_t = log p_t - log q_t

  double std_error() const {
    const auto t = static_cast<double>(per_sample.size());
    if (t < 2) return 0.0;
    double var = 0.0;
    for (double f : per_sample) var += (f - elbo) * (f - elbo);
    return std::sqrt(var / (t - 1.0) / t);
  }
};

/// Monte Carlo ELBO with T draws, each with its own ordering and its own
/// random stream (seed, t).
inline ElboEstimate elbo_estimate(const NmmParams& p,
                                  std::span<const Observation> y,
                                  std::size_t num_samples, std::uint64_t seed) {
  if (num_samples < 1) throw InvalidInput("elbo_estimate: need T >= 1");
  ElboEstimate out;
  out.per_sample.assign(num_samples, 0.0);
  if (y.empty()) return out;
  parallel_for(num_samples, [&](std::size_t t) {
    Rng rng = Rng::stream(seed, t);
    out.per_sample[t] = sample_q(p, y, rng).elbo_term();
  });
  for (double f : out.per_sample) out.elbo += f;
  out.elbo /= static_cast<double>(num_samples);
  return out;
}

template <class T>
struct ChainTerms {
  T log_joint;
  T log_q;
};

/// log p(y, c) and log q(c | y) for a fixed ordering and fixed choices,
/// evaluated on any scalar type. `visit` lists the nodes in pi order and
/// `choice` their c_i.
template <class T>
ChainTerms<T> chain_terms(const BasicParams<T>& p,
                          std::span<const Observation> visit,
                          std::span<const NodeId> choice) {
  if (visit.size() != choice.size()) {
    throw InvalidInput("chain_terms: ordering and choices differ in length");
  }
  ChainTerms<T> out{T(0.0), T(0.0)};
  CountTable counts(p.num_classes());
  std::vector<T> w;
  for (std::size_t k = 0; k < visit.size(); ++k) {
    detail::check_observation(p, visit[k]);
    const std::size_t slot = detail::checked_slot(p, visit[k].node, choice[k]);
    chain_log_weights(p, counts, visit[k].node, visit[k].label, w);
    const T lse = log_sum_exp(std::span<const T>(w));
    out.log_joint += w[slot];
    out.log_q += w[slot] - lse;
    counts.add(choice[k], visit[k].label);
  }
  return out;
}

/// Exact variational bound averaged over every ordering of tau:
/// mean_pi sum_c q_pi(c) [log p(y, c) - log q_pi(c)].
/// Cost |tau|! * prod |n(i)|, checked against the budget.
inline double exact_elbo(const NmmParams& p, std::span<const Observation> y,
                         const EnumerationBudget& budget = {}) {
  check_budget(p.graph(), y, budget);
  if (y.empty()) return 0.0;
  std::uint64_t perms = 1;
  for (std::size_t k = 2; k <= y.size(); ++k) perms *= k;
  std::vector<NodeId> nodes;
  for (const auto& o : y) nodes.push_back(o.node);
  const auto space = assignment_space_size(p.graph(), nodes);
  if (space > budget.max_configurations / perms) {
    throw BudgetExceeded("exact_elbo: orderings x assignments exceed budget");
  }

  std::vector<std::size_t> perm(y.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double total = 0.0;
  CountTable counts(p.num_classes());
  std::vector<std::vector<double>> weights(y.size());
  do {
    double bound = 0.0;
    auto visit = [&](auto&& self, std::size_t depth, double log_prob,
                     double f) -> void {
      if (depth == perm.size()) {
        bound += std::exp(log_prob) * f;
        return;
      }
      const Observation& o = y[perm[depth]];
      auto& w = weights[depth];
      chain_log_weights(p, counts, o.node, o.label, w);
      const double lse = log_sum_exp(w);
      const auto nbrs = p.graph().neighborhood(o.node);
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (w[k] == kNegInf) continue;
        // CountTable has no decrement; restore from a copy.
        CountTable saved = counts;
        counts.add(nbrs[k], o.label);
        self(self, depth + 1, log_prob + w[k] - lse, f + lse);
        counts = std::move(saved);
      }
    };
    counts.clear();
    visit(visit, 0, 0.0, 0.0);
    total += bound;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total / static_cast<double>(perms);
}

}  // namespace nmm
