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

// Synthetic datasets drawn from a known NMM.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "nmm/graph.hpp"
#include "nmm/kernel.hpp"
#include "nmm/random.hpp"

namespace nmm {

struct SyntheticConfig {
  std::size_t num_nodes = 30;
  std::size_t num_edges = 60;
  std::size_t max_degree = 5;  // self-inclusive
  std::size_t num_classes = 2;
  std::size_t embed_dim = 4;
  std::size_t feature_dim = 4;  // extra noise columns beyond the embedding
  double alpha_low = 0.3;
  double alpha_high = 1.5;
  double omega_sq = 4.0;
  double gamma = 0.0;
  double feature_noise = 0.1;
};

struct SyntheticData {
  std::shared_ptr<const Graph> graph;  // with features and labels attached
  NmmParams truth;
  std::vector<Label> labels;
  NeighborAssignment assignment;
};

/// Random graph, random embeddings v_i ~ N(0, I), cosine attention with the
/// given sharpness, alpha_ik ~ U(low, high), labels by ancestral sampling.
/// Features are (v_i, log alpha_i, noise) plus N(0, noise^2) jitter.
inline SyntheticData make_synthetic(const SyntheticConfig& c, Rng& rng) {
  const Graph base = make_random_graph(c.num_nodes, c.num_edges, c.max_degree, rng);
  const std::size_t n = base.num_nodes(), h = c.embed_dim;
  std::vector<double> v(n * h);
  for (double& x : v) x = rng.normal();
  std::vector<double> alpha(n * c.num_classes);
  for (double& a : alpha) a = c.alpha_low + (c.alpha_high - c.alpha_low) * rng.uniform();

  std::vector<double> attention;
  attention.reserve(base.neighborhood_entries());
  std::vector<double> logits;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<NodeId>(i);
    logits.clear();
    for (NodeId j : base.neighborhood(id)) {
      const std::span<const double> vi(v.data() + i * h, h), vj(v.data() + j * h, h);
      logits.push_back(c.omega_sq * cosine_similarity(vi, vj) + (j == id ? c.gamma : 0.0));
    }
    const double lse = log_sum_exp(logits);
    for (double l : logits) attention.push_back(std::exp(l - lse));
  }
  // Renormalize so each row sums to 1 within rounding.
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<NodeId>(i);
    const auto off = base.neighborhood_offset(id);
    const auto size = base.neighborhood(id).size();
    double total = 0.0;
    for (std::size_t k = 0; k < size; ++k) total += attention[off + k];
    for (std::size_t k = 0; k < size; ++k) attention[off + k] /= total;
  }

  Matrix x(n, h + c.num_classes + c.feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < h; ++k) x(i, k) = v[i * h + k];
    for (std::size_t k = 0; k < c.num_classes; ++k) {
      x(i, h + k) = std::log(alpha[i * c.num_classes + k]);
    }
    for (std::size_t k = 0; k < x.cols; ++k) {
      x(i, k) += c.feature_noise * rng.normal();
    }
  }

  auto plain = std::make_shared<const Graph>(base);
  NmmParams truth = make_params(plain, c.num_classes, alpha, attention);
  LabelSample sample = sample_labels_ancestral(truth, rng);
  SyntheticData out;
  out.graph = std::make_shared<const Graph>(
      base.with_features(std::move(x)).with_labels(sample.labels));
  out.truth = NmmParams(out.graph, c.num_classes, truth.alpha_data(),
                        truth.attention_data(), truth.log_attention_data());
  out.labels = std::move(sample.labels);
  out.assignment = std::move(sample.assignment);
  return out;
}

/// Shuffled train/val/test partition of all nodes.
inline Split random_split(std::size_t num_nodes, double train_frac,
                          double val_frac, Rng& rng) {
  const auto perm = rng.permutation(num_nodes);
  const auto n_train = static_cast<std::size_t>(std::lround(train_frac * num_nodes));
  const auto n_val = std::min(num_nodes - n_train,
                              static_cast<std::size_t>(std::lround(val_frac * num_nodes)));
  Split s;
  for (std::size_t k = 0; k < num_nodes; ++k) {
    const auto id = static_cast<NodeId>(perm[k]);
    if (k < n_train) {
      s.train.push_back(id);
    } else if (k < n_train + n_val) {
      s.val.push_back(id);
    } else {
      s.test.push_back(id);
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace nmm
