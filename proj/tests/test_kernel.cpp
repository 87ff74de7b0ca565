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

#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"

namespace nmm {
namespace {

using testing::for_each_assignment;
using testing::for_each_labeling;
using testing::oracle_log_joint;
using testing::oracle_marginal;
using testing::random_graph;
using testing::random_observations;
using testing::random_params;
using testing::two_node;

TEST(SuffStats, DirectCounts) {
  const Observations y{{0, 0}, {1, 0}};
  const NeighborAssignment same{0, 0};
  const CountTable a = suff_stats(y, same, 2);
  EXPECT_EQ(a.size(), 1u);
  EXPECT_EQ(a.count(0, 0), 2u);
  EXPECT_EQ(a.count(0, 1), 0u);

  const Observations y2{{0, 0}, {1, 1}};
  const NeighborAssignment own{0, 1};
  const CountTable b = suff_stats(y2, own, 2);
  EXPECT_EQ(b.count(0, 0), 1u);
  EXPECT_EQ(b.count(1, 1), 1u);
  EXPECT_EQ(b.total(1), 1u);

  EXPECT_TRUE(suff_stats({}, {}, 2).empty());
  EXPECT_THROW(suff_stats(y, NeighborAssignment{0}, 2), InvalidInput);
}

TEST(LogJoint, TwoNodeHandValues) {
  const NmmParams p = uniform_params(two_node(), 2);
  const Observations y{{0, 0}, {1, 0}};
  const NeighborAssignment shared{1, 1}, own{0, 1};
  EXPECT_NEAR(log_joint(p, std::span<const Observation>(y), std::span<const NodeId>(shared)),
              std::log(1.0 / 12.0), 1e-14);
  EXPECT_NEAR(log_joint(p, std::span<const Observation>(y), std::span<const NodeId>(own)),
              std::log(1.0 / 16.0), 1e-14);
}

TEST(LogJoint, SingleIsolatedNode) {
  const NmmParams p = uniform_params(testing::edge_graph(1, {}), 2);
  const Observations y{{0, 1}};
  const NeighborAssignment c{0};
  EXPECT_NEAR(log_joint(p, std::span<const Observation>(y), std::span<const NodeId>(c)),
              std::log(0.5), 1e-15);
}

TEST(LogJoint, RejectsNonNeighborChoice) {
  const NmmParams p = uniform_params(testing::edge_graph(3, {{0, 1}}), 2);
  const Observations y{{0, 0}};
  const NeighborAssignment c{2};
  EXPECT_THROW(log_joint(p, std::span<const Observation>(y), std::span<const NodeId>(c)),
               InvalidInput);
}

TEST(LogJointProperty, MatchesLgammaOracle) {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    const auto g = random_graph(2 + rng.uniform_index(7), 3, rng);
    const NmmParams p = random_params(g, 2 + rng.uniform_index(3), rng);
    const Observations y = random_observations(p, 1 + rng.uniform_index(5), rng);
    NeighborAssignment c;
    for (const auto& o : y) {
      const auto n = g->neighborhood(o.node);
      c.push_back(n[rng.uniform_index(n.size())]);
    }
    const double got = log_joint(p, std::span<const Observation>(y), std::span<const NodeId>(c));
    EXPECT_NEAR(got, oracle_log_joint(p, y, c), 1e-10);
  }
}

TEST(ExactMarginal, TwoNodeSevenTwentyFourths) {
  const NmmParams p = uniform_params(two_node(), 2);
  const Observations y{{0, 0}, {1, 0}};
  EXPECT_NEAR(exact_marginal(p, y), std::log(7.0 / 24.0), 1e-14);
  EXPECT_NEAR(exact_marginal(p, y), -1.232144, 5e-7);
}

TEST(ExactMarginal, SingleNodeClosedForm) {
  Rng rng(32);
  for (int t = 0; t < 50; ++t) {
    const auto g = random_graph(6, 3, rng);
    const NmmParams p = random_params(g, 3, rng);
    const auto i = static_cast<NodeId>(rng.uniform_index(6));
    const Label k = static_cast<Label>(rng.uniform_index(3));
    double want = 0.0;
    const auto n = g->neighborhood(i);
    for (std::size_t s = 0; s < n.size(); ++s) {
      want += p.attention(i)[s] * p.alpha(n[s])[static_cast<std::size_t>(k)] / p.alpha_total(n[s]);
    }
    const Observations y{{i, k}};
    EXPECT_NEAR(exact_marginal(p, y), std::log(want), 1e-12);
  }
  const NmmParams u = uniform_params(two_node(), 3, 0.7);
  const Observations y{{1, 2}};
  EXPECT_NEAR(exact_marginal(u, y), std::log(1.0 / 3.0), 1e-14);
}

TEST(ExactMarginal, EmptySetIsLogOne) {
  const NmmParams p = uniform_params(two_node(), 2);
  EXPECT_EQ(exact_marginal(p, {}), 0.0);
}

TEST(ExactMarginalProperty, MatchesEnumerationOracle) {
  Rng rng(33);
  for (int t = 0; t < 100; ++t) {
    const auto g = random_graph(2 + rng.uniform_index(6), 3, rng);
    const NmmParams p = random_params(g, 2 + rng.uniform_index(2), rng);
    const Observations y = random_observations(p, 1 + rng.uniform_index(4), rng);
    EXPECT_NEAR(exact_marginal(p, y), oracle_marginal(p, y), 1e-10);
  }
}

TEST(ExactMarginalProperty, NormalizesOverLabelings) {
  Rng rng(34);
  for (int t = 0; t < 60; ++t) {
    const auto g = random_graph(2 + rng.uniform_index(6), 3, rng);
    const std::size_t c = 2 + rng.uniform_index(2);
    const NmmParams p = random_params(g, c, rng);
    const Observations pick = random_observations(p, 1 + rng.uniform_index(4), rng);
    std::vector<NodeId> nodes;
    for (const auto& o : pick) nodes.push_back(o.node);
    double total = 0.0;
    for_each_labeling(nodes, c, [&](const Observations& y) { total += std::exp(exact_marginal(p, y)); });
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(ExactMarginalProperty, DominatesEveryJointTerm) {
  Rng rng(35);
  for (int t = 0; t < 40; ++t) {
    const auto g = random_graph(5, 3, rng);
    const NmmParams p = random_params(g, 2, rng);
    const Observations y = random_observations(p, 3, rng);
    const double m = exact_marginal(p, y);
    for_each_assignment(*g, y, [&](const std::vector<NodeId>& c) {
      EXPECT_LE(log_joint(p, std::span<const Observation>(y), std::span<const NodeId>(c)), m + 1e-12);
    });
  }
}

TEST(LogJointProperty, IncrementalIdentity) {
  Rng rng(36);
  for (int t = 0; t < 200; ++t) {
    const auto g = random_graph(6, 3, rng);
    const NmmParams p = random_params(g, 3, rng);
    Observations y = random_observations(p, 1 + rng.uniform_index(5), rng);
    NeighborAssignment c;
    for (const auto& o : y) {
      const auto n = g->neighborhood(o.node);
      c.push_back(n[rng.uniform_index(n.size())]);
    }
    const Observation added = y.back();
    const NodeId j = c.back();
    y.pop_back();
    c.pop_back();
    const double before = log_joint(p, std::span<const Observation>(y), std::span<const NodeId>(c));
    const CountTable s = suff_stats(y, c, 3);
    y.push_back(added);
    c.push_back(j);
    const double after = log_joint(p, std::span<const Observation>(y), std::span<const NodeId>(c));
    const auto k = static_cast<std::size_t>(added.label);
    const double want = std::log(testing::oracle_attention(p, added.node, j)) +
                        std::log(p.alpha(j)[k] + s.count(j, added.label)) -
                        std::log(p.alpha_total(j) + s.total(j));
    EXPECT_NEAR(after - before, want, 1e-10);
  }
}

TEST(ExactMarginalProperty, IdentityAttentionIsIndependent) {
  Rng rng(37);
  for (int t = 0; t < 50; ++t) {
    const auto g = random_graph(6, 3, rng);
    std::vector<double> alpha(6 * 2);
    for (double& a : alpha) a = 0.2 + 4.0 * rng.uniform();
    const NmmParams p = identity_attention_params(g, 2, alpha);
    const Observations y = random_observations(p, 4, rng);
    double want = 0.0;
    for (const auto& o : y) {
      want += std::log(p.alpha(o.node)[static_cast<std::size_t>(o.label)] / p.alpha_total(o.node));
    }
    EXPECT_NEAR(exact_marginal(p, y), want, 1e-12);
    EXPECT_NEAR(independent_log_marginal(p, y), want, 1e-12);
  }
}

TEST(ExactMarginal, BudgetEnforced) {
  // 3x5 grid: interior D = 5, and 15 nodes is over the node cap anyway.
  const NmmParams p = uniform_params(std::make_shared<const Graph>(make_grid_graph(3, 5)), 2);
  Observations y;
  for (NodeId i = 0; i < 15; ++i) y.push_back({i, 0});
  EXPECT_THROW(exact_marginal(p, y), BudgetExceeded);
  EnumerationBudget tiny{12, 10};
  const Observations three{{0, 0}, {1, 0}, {2, 0}};
  EXPECT_THROW(exact_marginal(p, three, tiny), BudgetExceeded);
}

TEST(PosteriorAlpha, Updates) {
  const NmmParams p = uniform_params(two_node(), 2);
  const Observations one{{0, 0}};
  const NeighborAssignment to1{1};
  auto a = posterior_alpha(p, one, to1);
  EXPECT_EQ(a, (std::vector<double>{1, 1, 2, 1}));
  EXPECT_EQ(posterior_alpha(p, {}, {}), p.alpha_data());
  const Observations both{{0, 0}, {1, 1}};
  const NeighborAssignment to1b{1, 1};
  EXPECT_EQ(posterior_alpha(p, both, to1b), (std::vector<double>{1, 1, 2, 2}));
}

TEST(Params, Validation) {
  const auto g = two_node();
  EXPECT_THROW(make_params(g, 2, {1, 1, 1, -1}, {0.5, 0.5, 0.5, 0.5}), InvalidInput);
  EXPECT_THROW(make_params(g, 2, {1, 1, 1, 1}, {0.5, 0.6, 0.5, 0.5}), InvalidInput);
  EXPECT_THROW(make_params(g, 2, {1, 1, 1}, {0.5, 0.5, 0.5, 0.5}), InvalidInput);
  EXPECT_THROW(make_params(g, 1, {1, 1}, {0.5, 0.5, 0.5, 0.5}), InvalidInput);
}

TEST(Sampling, AncestralTwoNodeFrequency) {
  const NmmParams p = uniform_params(two_node(), 2);
  Rng rng(38);
  const int n = 100000;
  int hits = 0;
  for (int t = 0; t < n; ++t) {
    const auto s = sample_labels_ancestral(p, rng);
    if (s.labels[0] == 0 && s.labels[1] == 0) ++hits;
  }
  const double q = 7.0 / 24.0;
  EXPECT_NEAR(hits / double(n), q, 4.0 * std::sqrt(q * (1 - q) / n));
}

TEST(Sampling, DegenerateDirichlet) {
  const auto g = two_node();
  const NmmParams p = identity_attention_params(g, 2, {1e6, 1.0, 1e6, 1.0});
  Rng rng(39);
  int zeros = 0;
  for (int t = 0; t < 2000; ++t) zeros += sample_labels_ancestral(p, rng).labels[0] == 0;
  EXPECT_GE(zeros / 2000.0, 0.999);
}

TEST(SamplingProperty, AncestralMatchesExactMarginal) {
  Rng rng(40);
  for (int inst = 0; inst < 3; ++inst) {
    const auto g = random_graph(3, 2, rng);
    const NmmParams p = random_params(g, 2, rng, 0.5, 3.0);
    std::map<std::vector<Label>, int> counts;
    const int n = 60000;
    for (int t = 0; t < n; ++t) ++counts[sample_labels_ancestral(p, rng).labels];
    for_each_labeling({0, 1, 2}, 2, [&](const Observations& y) {
      const double q = std::exp(exact_marginal(p, y));
      std::vector<Label> key{y[0].label, y[1].label, y[2].label};
      EXPECT_NEAR(counts[key] / double(n), q, 4.0 * std::sqrt(q * (1 - q) / n) + 1e-12);
    });
  }
}

TEST(SamplingProperty, SamplersAgreeOnNodeMarginals) {
  Rng rng(41);
  const auto g = random_graph(5, 3, rng);
  const NmmParams p = random_params(g, 3, rng, 0.5, 3.0);
  const int n = 40000;
  std::vector<double> a(5 * 3, 0.0), b(5 * 3, 0.0);
  for (int t = 0; t < n; ++t) {
    const auto ya = sample_labels_ancestral(p, rng).labels;
    const auto yb = sample_labels_marginalized(p, rng);
    for (std::size_t i = 0; i < 5; ++i) {
      a[i * 3 + static_cast<std::size_t>(ya[i])] += 1.0 / n;
      b[i * 3 + static_cast<std::size_t>(yb[i])] += 1.0 / n;
    }
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double q = 0.5 * (a[k] + b[k]);
    EXPECT_NEAR(a[k], b[k], 4.0 * std::sqrt(2.0 * q * (1 - q) / n) + 1e-12);
  }
}

TEST(Sampling, UniformAlphaIsSymmetric) {
  const auto g = std::make_shared<const Graph>(make_grid_graph(2, 2));
  const NmmParams p = uniform_params(g, 3);
  Rng rng(42);
  const int n = 30000;
  std::vector<double> freq(3, 0.0);
  for (int t = 0; t < n; ++t) freq[static_cast<std::size_t>(sample_labels_marginalized(p, rng)[2])] += 1.0 / n;
  for (double f : freq) EXPECT_NEAR(f, 1.0 / 3.0, 4.0 * std::sqrt(2.0 / 9.0 / n));
}

TEST(ExpectedLogJoint, MatchesMonteCarlo) {
  Rng rng(43);
  const auto g = random_graph(4, 2, rng);
  const NmmParams p = random_params(g, 2, rng, 0.5, 3.0);
  std::vector<double> draws;
  for (int t = 0; t < 40000; ++t) {
    const auto s = sample_labels_ancestral(p, rng);
    const Observations y = observations_from(s.labels);
    draws.push_back(log_joint(p, std::span<const Observation>(y), std::span<const NodeId>(s.assignment)));
  }
  EXPECT_NEAR(expected_log_joint(p), testing::mean(draws), 4.0 * testing::std_error(draws));
}

}  // namespace
}  // namespace nmm
