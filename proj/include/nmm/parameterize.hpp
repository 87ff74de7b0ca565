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

// Map from a flat parameter vector theta to model parameters (alpha, L).
//
// A backbone produces per-node embeddings u_i (length C) and v_i (length H);
// then alpha_i = act(u_i) with act in {softplus(x) + 1, x^2 + 1}, and
//
//   L_ij = softmax_{j in n(i)} ( omega^2 cos(v_i, v_j) + gamma [i == j] ).
//
// omega^2 is stored as rho^2 with rho unconstrained. The u and v heads never
// share weights.
//
// Backbones:
//   free    u, v read directly from theta (theta grows with N)
//   linear  u_i = W_u x_i + b_u,  v_i = W_v x_i + b_v
//   onehop  m_i = mean_{j in n(i)} x_j,
//           u_i = W2 relu(W1u m_i + b1u) + b2,
//           v_i = W3 relu(W1v m_i + b1v) + b3

#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nmm/autodiff.hpp"
#include "nmm/error.hpp"
#include "nmm/graph.hpp"
#include "nmm/kernel.hpp"
#include "nmm/random.hpp"

namespace nmm {

enum class BackboneKind { kFree, kLinear, kOneHop };
enum class AlphaActivation { kSoftplusPlusOne, kSquarePlusOne };
/// kIdentity pins L_i = onehot(i) (independent labels).
enum class AttentionMode { kLearned, kIdentity };

struct BackboneConfig {
  BackboneKind kind = BackboneKind::kFree;
  std::size_t embed_dim = 8;
  AlphaActivation activation = AlphaActivation::kSoftplusPlusOne;
  double init_omega_sq = 1.0;
  double init_gamma = 0.0;
  std::size_t hidden = 16;
  AttentionMode attention = AttentionMode::kLearned;
};

inline const char* to_string(BackboneKind k) {
  switch (k) {
    case BackboneKind::kFree: return "free";
    case BackboneKind::kLinear: return "linear";
    case BackboneKind::kOneHop: return "onehop";
  }
  return "?";
}
inline const char* to_string(AlphaActivation a) {
  return a == AlphaActivation::kSoftplusPlusOne ? "softplus" : "square";
}
inline const char* to_string(AttentionMode m) {
  return m == AttentionMode::kLearned ? "learned" : "identity";
}

inline BackboneKind parse_backbone(const std::string& s) {
  if (s == "free") return BackboneKind::kFree;
  if (s == "linear") return BackboneKind::kLinear;
  if (s == "onehop") return BackboneKind::kOneHop;
  throw InvalidInput("unknown backbone '" + s + "'");
}
inline AlphaActivation parse_activation(const std::string& s) {
  if (s == "softplus") return AlphaActivation::kSoftplusPlusOne;
  if (s == "square") return AlphaActivation::kSquarePlusOne;
  throw InvalidInput("unknown activation '" + s + "'");
}
inline AttentionMode parse_attention(const std::string& s) {
  if (s == "learned") return AttentionMode::kLearned;
  if (s == "identity") return AttentionMode::kIdentity;
  throw InvalidInput("unknown attention mode '" + s + "'");
}

/// Named slice of theta. Matrices are row-major rows x cols.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool regularized = false;  // backbone weight matrix (L2 applies)

  std::size_t size() const { return rows * cols; }
};

class ParamLayout {
 public:
  void add(std::string name, std::size_t rows, std::size_t cols,
           bool regularized) {
    blocks_.push_back({std::move(name), size_, rows, cols, regularized});
    size_ += rows * cols;
  }
  std::size_t size() const { return size_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const {
    for (const auto& b : blocks_) {
      if (b.name == name) return b;
    }
    throw InvalidInput("layout has no block '" + name + "'");
  }

  std::size_t num_nodes = 0;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t size_ = 0;
};

inline ParamLayout make_layout(const BackboneConfig& config,
                               std::size_t num_nodes, std::size_t num_features,
                               std::size_t num_classes) {
  if (config.embed_dim < 1) throw InvalidInput("embed_dim must be >= 1");
  ParamLayout layout;
  layout.num_nodes = num_nodes;
  layout.num_features = num_features;
  layout.num_classes = num_classes;
  const std::size_t c = num_classes, h = config.embed_dim, f = num_features;
  switch (config.kind) {
    case BackboneKind::kFree:
      layout.add("u", num_nodes, c, false);
      layout.add("v", num_nodes, h, false);
      break;
    case BackboneKind::kLinear:
      if (f == 0) throw InvalidInput("linear backbone needs node features");
      layout.add("W_u", c, f, true);
      layout.add("b_u", c, 1, false);
      layout.add("W_v", h, f, true);
      layout.add("b_v", h, 1, false);
      break;
    case BackboneKind::kOneHop: {
      if (f == 0) throw InvalidInput("onehop backbone needs node features");
      if (config.hidden < 1) throw InvalidInput("hidden width must be >= 1");
      const std::size_t hid = config.hidden;
      layout.add("W1_u", hid, f, true);
      layout.add("b1_u", hid, 1, false);
      layout.add("W2", c, hid, true);
      layout.add("b2", c, 1, false);
      layout.add("W1_v", hid, f, true);
      layout.add("b1_v", hid, 1, false);
      layout.add("W3", h, hid, true);
      layout.add("b3", h, 1, false);
      break;
    }
  }
  layout.add("rho", 1, 1, false);
  layout.add("gamma", 1, 1, false);
  return layout;
}

inline ParamLayout make_layout(const BackboneConfig& config, const Graph& g,
                               std::size_t num_classes) {
  const std::size_t f = g.features() ? g.features()->cols : 0;
  return make_layout(config, g.num_nodes(), f, num_classes);
}

/// Initial theta: weight matrices uniform(-a, a) with
/// a = sqrt(6 / (fan_in + fan_out)), biases 0; free u = 0 and free
/// v ~ 0.1 N(0, 1); rho = sqrt(init omega^2), gamma = init gamma.
inline std::vector<double> initial_theta(const BackboneConfig& config,
                                         const ParamLayout& layout, Rng& rng) {
  if (config.init_omega_sq < 0.0) throw InvalidInput("omega^2 must be >= 0");
  std::vector<double> theta(layout.size(), 0.0);
  for (const auto& b : layout.blocks()) {
    auto slice = std::span<double>(theta).subspan(b.offset, b.size());
    if (b.name == "v") {
      for (double& x : slice) x = 0.1 * rng.normal();
    } else if (b.name == "rho") {
      slice[0] = std::sqrt(config.init_omega_sq);
    } else if (b.name == "gamma") {
      slice[0] = config.init_gamma;
    } else if (b.regularized) {
      const double a = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
      for (double& x : slice) x = a * (2.0 * rng.uniform() - 1.0);
    }
  }
  return theta;
}

template <class T>
struct EmbeddingOutputs {
  std::size_t num_nodes = 0;
  std::size_t num_classes = 0;
  std::size_t embed_dim = 0;
  std::vector<T> u;  // N x C
  std::vector<T> v;  // N x H
  T omega_sq{};
  T gamma{};

  std::span<const T> u_row(std::size_t i) const {
    return {u.data() + i * num_classes, num_classes};
  }
  std::span<const T> v_row(std::size_t i) const {
    return {v.data() + i * embed_dim, embed_dim};
  }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}
inline double square(double x) { return x * x; }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

namespace detail {

/// out_r = W_r . x + b_r for each row r of W.
template <class T>
std::vector<T> affine(std::span<const T> theta, const ParamBlock& w,
                      const ParamBlock& b, std::span<const T> x) {
  std::vector<T> out;
  out.reserve(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    out.push_back(dot(theta.subspan(w.offset + r * w.cols, w.cols), x) +
                  theta[b.offset + r]);
  }
  return out;
}

}  // namespace detail

template <class T>
EmbeddingOutputs<T> backbone_forward(const BackboneConfig& config,
                                     const ParamLayout& layout,
                                     std::span<const T> theta, const Graph& g) {
  if (theta.size() != layout.size()) {
    throw InvalidInput("theta has " + std::to_string(theta.size()) +
                       " entries, layout expects " + std::to_string(layout.size()));
  }
  if (g.num_nodes() != layout.num_nodes) {
    throw InvalidInput("graph size does not match parameter layout");
  }
  const std::size_t n = g.num_nodes(), c = layout.num_classes,
                    h = config.embed_dim;
  EmbeddingOutputs<T> out;
  out.num_nodes = n;
  out.num_classes = c;
  out.embed_dim = h;
  out.u.reserve(n * c);
  out.v.reserve(n * h);
  const T rho = theta[layout.block("rho").offset];
  out.omega_sq = rho * rho;
  out.gamma = theta[layout.block("gamma").offset];

  if (config.kind == BackboneKind::kFree) {
    const auto& ub = layout.block("u");
    const auto& vb = layout.block("v");
    out.u.assign(theta.begin() + ub.offset, theta.begin() + ub.offset + ub.size());
    out.v.assign(theta.begin() + vb.offset, theta.begin() + vb.offset + vb.size());
    return out;
  }

  if (!g.features()) throw InvalidInput("backbone requires node features");
  const Matrix& x = *g.features();
  if (x.cols != layout.num_features) {
    throw InvalidInput("feature width does not match parameter layout");
  }
  auto as_scalars = [](std::span<const double> row) {
    return std::vector<T>(row.begin(), row.end());
  };
  auto append = [](std::vector<T>& dst, const std::vector<T>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
  };

  if (config.kind == BackboneKind::kLinear) {
    const auto &wu = layout.block("W_u"), &bu = layout.block("b_u");
    const auto &wv = layout.block("W_v"), &bv = layout.block("b_v");
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = as_scalars(x.row(i));
      append(out.u, detail::affine<T>(theta, wu, bu, xi));
      append(out.v, detail::affine<T>(theta, wv, bv, xi));
    }
    return out;
  }

  const auto &w1u = layout.block("W1_u"), &b1u = layout.block("b1_u");
  const auto &w2 = layout.block("W2"), &b2 = layout.block("b2");
  const auto &w1v = layout.block("W1_v"), &b1v = layout.block("b1_v");
  const auto &w3 = layout.block("W3"), &b3 = layout.block("b3");
  std::vector<double> mean(x.cols);
  for (std::size_t i = 0; i < n; ++i) {
    const auto nbrs = g.neighborhood(static_cast<NodeId>(i));
    std::fill(mean.begin(), mean.end(), 0.0);
    for (NodeId j : nbrs) {
      for (std::size_t f = 0; f < x.cols; ++f) mean[f] += x(j, f);
    }
    for (double& m : mean) m /= static_cast<double>(nbrs.size());
    const auto mi = as_scalars(mean);
    auto hidden_u = detail::affine<T>(theta, w1u, b1u, mi);
    auto hidden_v = detail::affine<T>(theta, w1v, b1v, mi);
    for (auto& a : hidden_u) a = relu(a);
    for (auto& a : hidden_v) a = relu(a);
    append(out.u, detail::affine<T>(theta, w2, b2, hidden_u));
    append(out.v, detail::affine<T>(theta, w3, b3, hidden_v));
  }
  return out;
}

template <class T>
T alpha_activation(AlphaActivation act, const T& x) {
  return act == AlphaActivation::kSoftplusPlusOne ? softplus(x) + 1.0
                                                  : square(x) + 1.0;
}

/// (alpha, L) from embeddings.
template <class T>
BasicParams<T> compute_params(const BackboneConfig& config,
                              const EmbeddingOutputs<T>& emb,
                              std::shared_ptr<const Graph> graph) {
  const Graph& g = *graph;
  if (emb.num_nodes != g.num_nodes()) {
    throw InvalidInput("embeddings do not match the graph");
  }
  std::vector<T> alpha;
  alpha.reserve(emb.u.size());
  for (const T& x : emb.u) alpha.push_back(alpha_activation(config.activation, x));

  std::vector<T> log_attention;
  log_attention.reserve(g.neighborhood_entries());
  std::vector<T> logits;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto id = static_cast<NodeId>(i);
    const auto nbrs = g.neighborhood(id);
    if (config.attention == AttentionMode::kIdentity) {
      for (NodeId j : nbrs) log_attention.emplace_back(j == id ? 0.0 : kNegInf);
      continue;
    }
    logits.clear();
    for (NodeId j : nbrs) {
      T logit = emb.omega_sq * cosine_similarity(emb.v_row(i), emb.v_row(j));
      if (j == id) logit = logit + emb.gamma;
      logits.push_back(logit);
    }
    const T lse = log_sum_exp(std::span<const T>(logits));
    for (const T& l : logits) log_attention.push_back(l - lse);
  }
  return params_from_log_attention<T>(std::move(graph), emb.num_classes,
                                      std::move(alpha), std::move(log_attention));
}

/// compute_params(backbone_forward(theta)).
template <class T>
BasicParams<T> parameterize(const BackboneConfig& config,
                            const ParamLayout& layout, std::span<const T> theta,
                            std::shared_ptr<const Graph> graph) {
  auto emb = backbone_forward<T>(config, layout, theta, *graph);
  return compute_params<T>(config, emb, std::move(graph));
}

inline NmmParams parameterize(const BackboneConfig& config,
                              const ParamLayout& layout,
                              std::span<const double> theta,
                              std::shared_ptr<const Graph> graph) {
  return parameterize<double>(config, layout, theta, std::move(graph));
}

}  // namespace nmm
