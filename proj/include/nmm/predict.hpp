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

// Conditional prediction p(y_kappa | y_tau) and evaluation metrics.
//
// Given particles c^(t) ~ q(c_tau | y_tau), the predictive for an unlabeled
// node i is
//
//   p(y_i = k | y_tau) ~= (1/T) sum_t sum_{j in n(i)} L_ij alpha'_{j,k} / alpha'_{j,0}
//
// with alpha'_j = alpha_j + s_j(y_tau, c^(t)).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "nmm/kernel.hpp"
#include "nmm/parallel.hpp"
#include "nmm/random.hpp"
#include "nmm/variational.hpp"

namespace nmm {

/// T draws of c_tau, equally weighted, each carrying its own random stream
/// so later extensions stay reproducible.
struct ParticleSet {
  std::vector<QSample> particles;
  std::vector<Rng> streams;

  std::size_t size() const { return particles.size(); }
};

inline ParticleSet make_particles(const NmmParams& p,
                                  std::span<const Observation> y,
                                  std::size_t num_particles, std::uint64_t seed) {
  if (num_particles < 1) throw InvalidInput("need at least one particle");
  ParticleSet set;
  set.particles.resize(num_particles);
  set.streams.reserve(num_particles);
  for (std::size_t t = 0; t < num_particles; ++t) {
    set.streams.push_back(Rng::stream(seed, t));
  }
  parallel_for(num_particles, [&](std::size_t t) {
    set.particles[t] = sample_q(p, y, set.streams[t]);
  });
  return set;
}

/// Predictive vector of node i under a single particle.
inline std::vector<double> particle_marginal(const NmmParams& p,
                                             const QSample& s, NodeId i) {
  if (i >= p.num_nodes()) {
    throw InvalidInput("node id " + std::to_string(i) + " out of range");
  }
  const std::size_t num_classes = p.num_classes();
  std::vector<double> out(num_classes, 0.0);
  const auto nbrs = p.graph().neighborhood(i);
  const auto l = p.attention(i);
  for (std::size_t k = 0; k < nbrs.size(); ++k) {
    if (l[k] == 0.0) continue;
    const NodeId j = nbrs[k];
    const auto a = p.alpha(j);
    const double denom = p.alpha_total(j) + s.counts.total(j);
    for (std::size_t c = 0; c < num_classes; ++c) {
      out[c] += l[k] * (a[c] + s.counts.count(j, static_cast<Label>(c))) / denom;
    }
  }
  return out;
}

struct MarginalPrediction {
  std::vector<double> probs;
  std::vector<double> std_error;  // across particles, per class
};

inline MarginalPrediction predict_marginal(const NmmParams& p,
                                           const ParticleSet& set, NodeId i) {
  if (set.size() == 0) throw InvalidInput("empty particle set");
  if (set.particles.front().contains(i)) {
    throw InvalidInput("node " + std::to_string(i) + " is already labeled");
  }
  const std::size_t num_classes = p.num_classes();
  const auto t = static_cast<double>(set.size());
  MarginalPrediction out{std::vector<double>(num_classes, 0.0),
                         std::vector<double>(num_classes, 0.0)};
  std::vector<std::vector<double>> each;
  each.reserve(set.size());
  for (const auto& s : set.particles) {
    each.push_back(particle_marginal(p, s, i));
    for (std::size_t c = 0; c < num_classes; ++c) out.probs[c] += each.back()[c];
  }
  for (double& v : out.probs) v /= t;
  if (set.size() > 1) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      double var = 0.0;
      for (const auto& e : each) var += (e[c] - out.probs[c]) * (e[c] - out.probs[c]);
      out.std_error[c] = std::sqrt(var / (t - 1.0) / t);
    }
  }
  return out;
}

/// Lowest index among the maxima.
inline Label argmax_label(std::span<const double> probs) {
  return static_cast<Label>(std::max_element(probs.begin(), probs.end()) -
                            probs.begin());
}

/// Joint distribution over C^|kappa| configurations, first kappa node as
/// the most significant digit.
struct SmallSetPrediction {
  std::vector<NodeId> nodes;
  std::size_t num_classes = 0;
  std::vector<double> probs;

  std::vector<Label> configuration(std::size_t index) const {
    std::vector<Label> out(nodes.size());
    for (std::size_t k = nodes.size(); k-- > 0;) {
      out[k] = static_cast<Label>(index % num_classes);
      index /= num_classes;
    }
    return out;
  }

  /// Single-node marginal of kappa[pos].
  std::vector<double> marginal(std::size_t pos) const {
    std::vector<double> out(num_classes, 0.0);
    for (std::size_t idx = 0; idx < probs.size(); ++idx) {
      out[static_cast<std::size_t>(configuration(idx)[pos])] += probs[idx];
    }
    return out;
  }
};

/// p(y_kappa | y_tau) = exp(marginal(tau + kappa) - marginal(tau)) for every
/// labeling of kappa.
inline SmallSetPrediction predict_exact_smallset(
    const NmmParams& p, std::span<const Observation> y_tau,
    std::span<const NodeId> kappa, const EnumerationBudget& budget = {}) {
  std::unordered_set<NodeId> seen;
  for (const auto& o : y_tau) {
    detail::check_observation(p, o);
    if (!seen.insert(o.node).second) {
      throw InvalidInput("node " + std::to_string(o.node) + " listed twice");
    }
  }
  for (NodeId i : kappa) {
    if (i >= p.num_nodes()) {
      throw InvalidInput("node id " + std::to_string(i) + " out of range");
    }
    if (!seen.insert(i).second) {
      throw InvalidInput("node " + std::to_string(i) +
                         " is both observed and a target");
    }
  }
  SmallSetPrediction out;
  out.nodes.assign(kappa.begin(), kappa.end());
  out.num_classes = p.num_classes();
  if (y_tau.size() + kappa.size() > budget.max_nodes) {
    throw BudgetExceeded("exact prediction over " +
                         std::to_string(y_tau.size() + kappa.size()) +
                         " nodes exceeds the cap of " +
                         std::to_string(budget.max_nodes));
  }
  std::vector<NodeId> all;
  for (const auto& o : y_tau) all.push_back(o.node);
  all.insert(all.end(), kappa.begin(), kappa.end());
  std::uint64_t work = assignment_space_size(p.graph(), all);
  std::uint64_t configs = 1;
  for (std::size_t k = 0; k < kappa.size(); ++k) configs *= p.num_classes();
  if (work > budget.max_configurations / configs) {
    throw BudgetExceeded("exact prediction exceeds the enumeration budget");
  }

  const double base = exact_marginal(p, y_tau, budget);
  Observations joint(y_tau.begin(), y_tau.end());
  joint.resize(y_tau.size() + kappa.size());
  out.probs.resize(configs);
  for (std::size_t idx = 0; idx < configs; ++idx) {
    const auto labels = out.configuration(idx);
    for (std::size_t k = 0; k < kappa.size(); ++k) {
      joint[y_tau.size() + k] = {kappa[k], labels[k]};
    }
    out.probs[idx] = std::exp(exact_marginal(p, joint, budget) - base);
  }
  return out;
}

struct DecodedNode {
  NodeId node;
  Label label;
  std::vector<double> probs;
};

enum class DecodeOrder { kAscendingId, kAsGiven };

/// Sequential decoding: predict the next node of kappa, commit its argmax
/// label, extend every particle with it, repeat.
inline std::vector<DecodedNode> greedy_decode(
    const NmmParams& p, std::span<const Observation> y_tau,
    std::span<const NodeId> kappa, std::size_t num_particles, std::uint64_t seed,
    DecodeOrder order = DecodeOrder::kAscendingId) {
  std::vector<NodeId> queue(kappa.begin(), kappa.end());
  if (order == DecodeOrder::kAscendingId) std::sort(queue.begin(), queue.end());
  ParticleSet set = make_particles(p, y_tau, num_particles, seed);
  std::vector<DecodedNode> out;
  out.reserve(queue.size());
  for (NodeId i : queue) {
    auto pred = predict_marginal(p, set, i);
    const Label label = argmax_label(pred.probs);
    parallel_for(set.size(), [&](std::size_t t) {
      extend_sample(p, set.particles[t], i, label, set.streams[t]);
    });
    out.push_back({i, label, std::move(pred.probs)});
  }
  return out;
}

/// greedy_decode with exact conditionals p(y_i | y_tau, committed labels)
/// instead of particles.
inline std::vector<DecodedNode> greedy_decode_exact(
    const NmmParams& p, std::span<const Observation> y_tau,
    std::span<const NodeId> kappa, DecodeOrder order = DecodeOrder::kAscendingId,
    const EnumerationBudget& budget = {}) {
  std::vector<NodeId> queue(kappa.begin(), kappa.end());
  if (order == DecodeOrder::kAscendingId) std::sort(queue.begin(), queue.end());
  // Fail before any work if the final (largest) enumeration is unaffordable.
  {
    Observations all(y_tau.begin(), y_tau.end());
    for (NodeId i : queue) all.push_back({i, 0});
    check_budget(p.graph(), all, budget);
  }
  Observations known(y_tau.begin(), y_tau.end());
  std::vector<DecodedNode> out;
  out.reserve(queue.size());
  for (NodeId i : queue) {
    const NodeId one[1] = {i};
    auto pred = predict_exact_smallset(p, known, one, budget);
    const Label label = argmax_label(pred.probs);
    known.push_back({i, label});
    out.push_back({i, label, std::move(pred.probs)});
  }
  return out;
}

/// Mean log p(y_i, y_j) over the given edges, each by exact enumeration on
/// the pair.
inline double pairwise_ll(const NmmParams& p, std::span<const Label> labels,
                          std::span<const Edge> edges) {
  if (edges.empty()) throw InvalidInput("no test edges");
  double total = 0.0;
  for (const auto& [u, v] : edges) {
    for (NodeId n : {u, v}) {
      if (n >= labels.size() || labels[n] == kUnknownLabel) {
        throw InvalidInput("edge endpoint " + std::to_string(n) + " is unlabeled");
      }
    }
    const Observation pair[2] = {{u, labels[u]}, {v, labels[v]}};
    total += exact_marginal(p, pair);
  }
  return total / static_cast<double>(edges.size());
}

/// Fraction of labeled targets predicted correctly; nullopt when none of
/// the targets carries a label.
inline std::optional<double> accuracy(std::span<const DecodedNode> predictions,
                                      std::span<const Label> truth) {
  std::size_t hits = 0, scored = 0;
  for (const auto& d : predictions) {
    if (d.node >= truth.size() || truth[d.node] == kUnknownLabel) continue;
    ++scored;
    if (truth[d.node] == d.label) ++hits;
  }
  if (scored == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(scored);
}

/// Edges of g whose endpoints both lie in `nodes`.
inline std::vector<Edge> induced_edges(const Graph& g, std::span<const NodeId> nodes) {
  std::unordered_set<NodeId> in(nodes.begin(), nodes.end());
  std::vector<Edge> out;
  for (const auto& e : g.edges()) {
    if (in.count(e.first) && in.count(e.second)) out.push_back(e);
  }
  return out;
}

}  // namespace nmm
