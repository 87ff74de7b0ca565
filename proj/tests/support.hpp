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

// Shared fixtures and brute-force oracles. Oracles here deliberately avoid
// the library's own special functions and count tables.

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "nmm/nmm.hpp"

namespace nmm::testing {

inline std::shared_ptr<const Graph> edge_graph(std::size_t n, std::vector<Edge> edges) {
  return std::make_shared<const Graph>(Graph::from_edges(n, edges));
}

/// 0 - 1, the smallest graph with a real choice.
inline std::shared_ptr<const Graph> two_node() { return edge_graph(2, {{0, 1}}); }

inline std::shared_ptr<const Graph> random_graph(std::size_t n, std::size_t max_nbrs,
                                                 Rng& rng) {
  const std::size_t e = rng.uniform_index(n * max_nbrs / 2 + 1);
  return std::make_shared<const Graph>(make_random_graph(n, e, max_nbrs, rng));
}

/// alpha ~ U(lo, hi), L_i ~ Dirichlet(1, ..., 1).
inline NmmParams random_params(std::shared_ptr<const Graph> g, std::size_t c,
                               Rng& rng, double lo = 0.2, double hi = 5.0) {
  std::vector<double> alpha(g->num_nodes() * c);
  for (double& a : alpha) a = lo + (hi - lo) * rng.uniform();
  std::vector<double> att(g->neighborhood_entries());
  for (std::size_t i = 0; i < g->num_nodes(); ++i) {
    const auto id = static_cast<NodeId>(i);
    const auto size = g->neighborhood(id).size();
    std::vector<double> ones(size, 1.0), draw(size);
    rng.dirichlet(ones, draw);
    double total = 0.0;
    for (double v : draw) total += v;
    for (std::size_t k = 0; k < size; ++k) {
      att[g->neighborhood_offset(id) + k] = draw[k] / total;
    }
  }
  return make_params(std::move(g), c, std::move(alpha), std::move(att));
}

inline double oracle_attention(const NmmParams& p, NodeId i, NodeId j) {
  const auto nbrs = p.graph().neighborhood(i);
  for (std::size_t k = 0; k < nbrs.size(); ++k) {
    if (nbrs[k] == j) return p.attention(i)[k];
  }
  return 0.0;
}

/// prod_i L_{i c_i} prod_j B(alpha_j + s_j) / B(alpha_j) via std::lgamma.
inline double oracle_log_joint(const NmmParams& p, const Observations& y,
                               const std::vector<NodeId>& c) {
  double total = 0.0;
  std::map<NodeId, std::vector<double>> s;
  for (std::size_t k = 0; k < y.size(); ++k) {
    total += std::log(oracle_attention(p, y[k].node, c[k]));
    auto& row = s[c[k]];
    row.resize(p.num_classes(), 0.0);
    row[static_cast<std::size_t>(y[k].label)] += 1.0;
  }
  for (const auto& [j, row] : s) {
    double a0 = 0.0, m = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      const double a = p.alpha(j)[k];
      total += std::lgamma(a + row[k]) - std::lgamma(a);
      a0 += a;
      m += row[k];
    }
    total -= std::lgamma(a0 + m) - std::lgamma(a0);
  }
  return total;
}

/// Calls fn(c) for every assignment c_i in n(i) over the nodes of y.
inline void for_each_assignment(const Graph& g, const Observations& y,
                                const std::function<void(const std::vector<NodeId>&)>& fn) {
  std::vector<NodeId> c(y.size());
  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == y.size()) {
      fn(c);
      return;
    }
    for (NodeId j : g.neighborhood(y[k].node)) {
      c[k] = j;
      rec(k + 1);
    }
  };
  rec(0);
}

/// log sum_c p(y, c), summed in linear space.
inline double oracle_marginal(const NmmParams& p, const Observations& y) {
  double total = 0.0;
  for_each_assignment(p.graph(), y, [&](const std::vector<NodeId>& c) {
    total += std::exp(oracle_log_joint(p, y, c));
  });
  return std::log(total);
}

/// Calls fn(labels) for every labeling of `nodes`.
inline void for_each_labeling(const std::vector<NodeId>& nodes, std::size_t c,
                              const std::function<void(const Observations&)>& fn) {
  Observations y(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) y[k] = {nodes[k], 0};
  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == nodes.size()) {
      fn(y);
      return;
    }
    for (std::size_t l = 0; l < c; ++l) {
      y[k].label = static_cast<Label>(l);
      rec(k + 1);
    }
  };
  rec(0);
}

/// Distinct random nodes with random labels.
inline Observations random_observations(const NmmParams& p, std::size_t count, Rng& rng) {
  const auto perm = rng.permutation(p.num_nodes());
  Observations y;
  for (std::size_t k = 0; k < std::min(count, perm.size()); ++k) {
    y.push_back({static_cast<NodeId>(perm[k]),
                 static_cast<Label>(rng.uniform_index(p.num_classes()))});
  }
  return y;
}

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double std_error(const std::vector<double>& xs) {
  const double m = mean(xs);
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return std::sqrt(v / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

}  // namespace nmm::testing
