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
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"

namespace nmm {
namespace {

using testing::edge_graph;
using testing::two_node;

Model free_model(std::shared_ptr<const Graph> g, std::size_t c, std::uint64_t seed,
                 double gamma = 0.0) {
  BackboneConfig cfg;
  cfg.embed_dim = 2;
  cfg.init_gamma = gamma;
  return make_model(cfg, std::move(g), c, seed);
}

std::vector<double> fd_exact_elbo(const Model& m, std::span<const Observation> y,
                                  double step = 1e-5) {
  std::vector<double> theta = m.theta, out(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + step;
    const double up = exact_elbo(m.params_at(theta), y);
    theta[k] = saved - step;
    const double down = exact_elbo(m.params_at(theta), y);
    theta[k] = saved;
    out[k] = (up - down) / (2.0 * step);
  }
  return out;
}

TEST(Baselines, LeaveOneOut) {
  const std::vector<double> f{1.0, 2.0, 6.0};
  EXPECT_EQ(baselines(f, BaselineKind::kLeaveOneOut), (std::vector<double>{4.0, 3.5, 1.5}));
  EXPECT_EQ(baselines(f, BaselineKind::kNone), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Reinforce, IsolatedNodeHasAnalyticGradient) {
  // One observed isolated node: elbo = log(alpha_y / alpha_0) with
  // alpha = softplus(u) + 1, so at u = 0, d/du_y = sigmoid(0) * (1/a - 1/(2a)).
  auto g = edge_graph(1, {});
  Model m = free_model(g, 2, 1);
  const Observations y{{0, 0}};
  const auto est = reinforce_gradient(m, m.theta, y, 4, BaselineKind::kLeaveOneOut, 3);
  const double a = 1.0 + std::numbers::ln2;
  EXPECT_NEAR(est.elbo, std::log(0.5), 1e-14);
  const auto& ub = m.layout.block("u");
  EXPECT_NEAR(est.grad[ub.offset], 0.5 * (1.0 / a - 0.5 / a), 1e-14);
  EXPECT_NEAR(est.grad[ub.offset + 1], -0.5 * 0.5 / a, 1e-14);
  for (std::size_t k = ub.offset + 2; k < est.grad.size(); ++k) EXPECT_EQ(est.grad[k], 0.0);
}

TEST(Reinforce, MatchesExactBoundGradientInExpectation) {
  auto g = two_node();
  Model m = free_model(g, 2, 5);
  Rng rng(6);
  for (double& x : m.theta) x += 0.5 * rng.normal();
  const Observations y{{0, 1}, {1, 1}};
  const auto fd = fd_exact_elbo(m, y);
  const std::size_t draws = 3000;
  std::vector<std::vector<double>> g_k(m.theta.size());
  for (std::size_t d = 0; d < draws; ++d) {
    const auto est = reinforce_gradient(m, m.theta, y, 2, BaselineKind::kLeaveOneOut,
                                        derive_seed(77, d));
    for (std::size_t k = 0; k < est.grad.size(); ++k) g_k[k].push_back(est.grad[k]);
  }
  for (std::size_t k = 0; k < fd.size(); ++k) {
    const double se = testing::std_error(g_k[k]);
    EXPECT_NEAR(testing::mean(g_k[k]), fd[k], 4.0 * se + 1e-9) << "coordinate " << k;
  }
}

TEST(Reinforce, IdentityAttentionIgnoresBaseline) {
  Rng rng(7);
  auto g = testing::random_graph(6, 3, rng);
  BackboneConfig cfg;
  cfg.attention = AttentionMode::kIdentity;
  Model m = make_model(cfg, g, 2, 8);
  const Observations y{{0, 0}, {2, 1}, {3, 1}};
  const auto a = reinforce_gradient(m, m.theta, y, 4, BaselineKind::kLeaveOneOut, 9);
  const auto b = reinforce_gradient(m, m.theta, y, 4, BaselineKind::kNone, 9);
  for (std::size_t k = 0; k < a.grad.size(); ++k) EXPECT_NEAR(a.grad[k], b.grad[k], 1e-14);
}

TEST(Reinforce, Deterministic) {
  Rng rng(10);
  auto g = testing::random_graph(8, 4, rng);
  Model m = free_model(g, 3, 11);
  const Observations y{{0, 0}, {1, 2}, {5, 1}, {7, 0}};
  const auto a = reinforce_gradient(m, m.theta, y, 8, BaselineKind::kLeaveOneOut, 12);
  const auto b = reinforce_gradient(m, m.theta, y, 8, BaselineKind::kLeaveOneOut, 12);
  EXPECT_EQ(a.grad, b.grad);
  EXPECT_EQ(a.per_sample, b.per_sample);
}

TEST(Reinforce, RejectsBadSampleCounts) {
  Model m = free_model(two_node(), 2, 1);
  const Observations y{{0, 0}};
  EXPECT_THROW(reinforce_gradient(m, m.theta, y, 0, BaselineKind::kNone, 1), InvalidInput);
  EXPECT_THROW(reinforce_gradient(m, m.theta, y, 1, BaselineKind::kLeaveOneOut, 1),
               InvalidInput);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam adam(0.1);
  std::vector<double> theta{0.0, 1.0};
  const std::vector<double> grad{2.0, -0.5};
  adam.ascend(theta, grad);
  EXPECT_NEAR(theta[0], 0.1, 1e-8);
  EXPECT_NEAR(theta[1], 0.9, 1e-8);
}

TEST(L2, OnlyRegularizedBlocks) {
  Rng rng(13);
  auto base = testing::random_graph(5, 3, rng);
  Matrix x(5, 2, 1.0);
  auto g = std::make_shared<const Graph>(base->with_features(x));
  BackboneConfig cfg;
  cfg.kind = BackboneKind::kLinear;
  Model m = make_model(cfg, g, 2, 14);
  std::vector<double> grad(m.theta.size(), 0.0);
  add_l2_gradient(m.layout, m.theta, 0.5, grad);
  for (const auto& b : m.layout.blocks()) {
    for (std::size_t k = b.offset; k < b.offset + b.size(); ++k) {
      EXPECT_EQ(grad[k], b.regularized ? -m.theta[k] : 0.0);
    }
  }
}

TEST(Train, ZeroLearningRateLeavesThetaUnchanged) {
  Rng rng(15);
  auto g = testing::random_graph(8, 4, rng);
  Model m = free_model(g, 2, 16);
  const Observations y{{0, 0}, {1, 1}, {2, 1}};
  TrainConfig tc;
  tc.epochs = 5;
  tc.lr = 0.0;
  const auto r = train(tc, m, y);
  EXPECT_EQ(r.theta, m.theta);
  EXPECT_EQ(r.trace.size(), 5u);
}

TEST(Train, DeterministicAndImproves) {
  SyntheticConfig sc;
  Rng rng(17);
  const auto data = make_synthetic(sc, rng);
  const Observations y = observations_from(data.labels);
  Model m = free_model(data.graph, 2, 18);
  TrainConfig tc;
  tc.epochs = 150;
  tc.lr = 0.05;
  tc.seed = 19;
  const auto a = train(tc, m, y);
  const auto b = train(tc, m, y);
  EXPECT_EQ(a.theta, b.theta);
  const double before = elbo_estimate(m.params(), y, 2000, 20).elbo;
  Model fitted = m;
  fitted.theta = a.theta;
  const double after = elbo_estimate(fitted.params(), y, 2000, 20).elbo;
  EXPECT_GT(after, before + 0.5);
}

TEST(Train, EarlyStoppingKeepsBestSnapshot) {
  SyntheticConfig sc;
  Rng rng(21);
  const auto data = make_synthetic(sc, rng);
  const Split s = random_split(sc.num_nodes, 0.5, 0.3, rng);
  const Observations train_y = observations_from(data.labels, s.train);
  const Observations val_y = observations_from(data.labels, s.val);
  Model m = free_model(data.graph, 2, 22);
  TrainConfig tc;
  tc.epochs = 60;
  tc.lr = 0.05;
  tc.patience = 10;
  tc.seed = 23;
  const auto r = train(tc, m, train_y, val_y);
  ASSERT_FALSE(r.trace.empty());
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& rec : r.trace) {
    ASSERT_TRUE(rec.val_metric.has_value());
    if (*rec.val_metric > best) {
      best = *rec.val_metric;
      best_epoch = rec.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_LE(r.trace.back().epoch - best_epoch, tc.patience);
}

TEST(Train, ValidatesConfig) {
  Model m = free_model(two_node(), 2, 1);
  const Observations y{{0, 0}};
  TrainConfig tc;
  tc.samples = 1;
  EXPECT_THROW(train(tc, m, y), InvalidInput);
  tc.samples = 4;
  EXPECT_THROW(train(tc, m, {}), InvalidInput);
  tc.lr = -1.0;
  EXPECT_THROW(train(tc, m, y), InvalidInput);
}

}  // namespace
}  // namespace nmm
