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

// Stochastic ascent on the ELBO with score-function gradients.
//
// With f_t = log p(y, c_t) - log q(c_t | y) and baseline b_t,
//
//   grad = (1/T) sum_t [ (f_t - b_t) grad log q_t + grad log p_t - grad log q_t ]
//
// Each sample is differentiated on its own tape through the surrogate
// (f_t - b_t) log q_t + log p_t - log q_t with (c_t, pi_t) held fixed.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nmm/autodiff.hpp"
#include "nmm/error.hpp"
#include "nmm/kernel.hpp"
#include "nmm/parallel.hpp"
#include "nmm/parameterize.hpp"
#include "nmm/predict.hpp"
#include "nmm/random.hpp"
#include "nmm/variational.hpp"

namespace nmm {

enum class BaselineKind { kNone, kLeaveOneOut };

inline const char* to_string(BaselineKind b) {
  return b == BaselineKind::kNone ? "none" : "loo";
}
inline BaselineKind parse_baseline(const std::string& s) {
  if (s == "none") return BaselineKind::kNone;
  if (s == "loo") return BaselineKind::kLeaveOneOut;
  throw InvalidInput("unknown baseline '" + s + "'");
}

/// Leave-one-out means b_t = mean_{t' != t} f_t' (zeros for kNone or T = 1).
inline std::vector<double> baselines(std::span<const double> f, BaselineKind kind) {
  std::vector<double> b(f.size(), 0.0);
  if (kind == BaselineKind::kNone || f.size() < 2) return b;
  double total = 0.0;
  for (double v : f) total += v;
  const auto rest = static_cast<double>(f.size() - 1);
  for (std::size_t t = 0; t < f.size(); ++t) b[t] = (total - f[t]) / rest;
  return b;
}

/// A backbone, its parameter layout and the graph it runs on.
struct Model {
  BackboneConfig config;
  ParamLayout layout;
  std::shared_ptr<const Graph> graph;
  std::vector<double> theta;

  NmmParams params() const { return params_at(theta); }
  NmmParams params_at(std::span<const double> at) const {
    return parameterize(config, layout, at, graph);
  }
  std::size_t num_classes() const { return layout.num_classes; }
};

inline Model make_model(const BackboneConfig& config,
                        std::shared_ptr<const Graph> graph,
                        std::size_t num_classes, std::uint64_t init_seed) {
  Model m{config, make_layout(config, *graph, num_classes), std::move(graph), {}};
  Rng rng(init_seed);
  m.theta = initial_theta(config, m.layout, rng);
  return m;
}

struct GradientEstimate {
  double elbo = 0.0;
  std::vector<double> per_sample;
  std::vector<double> grad;
};

/// One REINFORCE estimate at theta. Sample t uses stream (seed, t).
inline GradientEstimate reinforce_gradient(const Model& model,
                                           std::span<const double> theta,
                                           std::span<const Observation> y,
                                           std::size_t num_samples,
                                           BaselineKind baseline,
                                           std::uint64_t seed) {
  if (num_samples < 1) throw InvalidInput("reinforce: need T >= 1");
  if (baseline == BaselineKind::kLeaveOneOut && num_samples < 2) {
    throw InvalidInput("reinforce: leave-one-out baseline needs T >= 2");
  }
  const NmmParams p = model.params_at(theta);
  std::vector<QSample> draws(num_samples);
  parallel_for(num_samples, [&](std::size_t t) {
    Rng rng = Rng::stream(seed, t);
    draws[t] = sample_q(p, y, rng);
  });

  GradientEstimate out;
  out.per_sample.resize(num_samples);
  for (std::size_t t = 0; t < num_samples; ++t) {
    out.per_sample[t] = draws[t].elbo_term();
    out.elbo += out.per_sample[t];
  }
  out.elbo /= static_cast<double>(num_samples);
  const auto b = baselines(out.per_sample, baseline);

  std::vector<std::vector<double>> grads(num_samples);
  parallel_for(num_samples, [&](std::size_t t) {
    ad::Tape tape;
    const auto vars = tape.inputs(theta);
    const auto pv = parameterize<ad::Var>(model.config, model.layout,
                                          std::span<const ad::Var>(vars),
                                          model.graph);
    const auto visit = draws[t].observations();
    const auto terms = chain_terms(pv, visit, draws[t].choice);
    const ad::Var surrogate = (out.per_sample[t] - b[t]) * terms.log_q +
                              terms.log_joint - terms.log_q;
    try {
      grads[t] = tape.gradient(surrogate, vars);
    } catch (const NonFiniteValue& e) {
      throw NonFiniteValue("reinforce sample " + std::to_string(t) + ": " + e.what());
    }
  });

  out.grad.assign(theta.size(), 0.0);
  for (const auto& g : grads) {
    for (std::size_t k = 0; k < g.size(); ++k) out.grad[k] += g[k];
  }
  for (std::size_t k = 0; k < out.grad.size(); ++k) {
    out.grad[k] /= static_cast<double>(num_samples);
    if (!std::isfinite(out.grad[k])) {
      throw NonFiniteValue("reinforce: gradient entry " + std::to_string(k) +
                           " is not finite");
    }
  }
  return out;
}

/// Adam, used for ascent.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void ascend(std::vector<double>& theta, std::span<const double> grad) {
    if (m_.empty()) {
      m_.assign(theta.size(), 0.0);
      v_.assign(theta.size(), 0.0);
    }
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
      theta[k] += lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t step_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 0.01;
  std::size_t samples = 8;
  BaselineKind baseline = BaselineKind::kLeaveOneOut;
  std::uint64_t seed = 0;
  double l2 = 0.005;
  std::size_t patience = 100;

  void validate() const {
    if (samples < 1) throw InvalidInput("samples must be >= 1");
    if (baseline == BaselineKind::kLeaveOneOut && samples < 2) {
      throw InvalidInput("the loo baseline needs samples >= 2");
    }
    if (!(lr >= 0.0) || !(l2 >= 0.0)) {
      throw InvalidInput("learning rate and l2 must be >= 0");
    }
  }
};

struct TraceRecord {
  std::size_t epoch = 0;
  double elbo = 0.0;
  std::optional<double> val_metric;
};

struct TrainResult {
  std::vector<double> theta;  // best-validation snapshot (final without val)
  std::vector<double> initial_theta;
  std::vector<double> final_theta;
  std::vector<TraceRecord> trace;
  std::size_t best_epoch = 0;
};

class TrainingDiverged : public NonFiniteValue {
 public:
  TrainingDiverged(const std::string& what, std::vector<TraceRecord> trace)
      : NonFiniteValue(what), trace_(std::move(trace)) {}
  const std::vector<TraceRecord>& trace() const { return trace_; }

 private:
  std::vector<TraceRecord> trace_;
};

/// Argmax accuracy of the particle predictive on `val`, conditioning on
/// `observed`.
inline double validation_accuracy(const NmmParams& p,
                                  std::span<const Observation> observed,
                                  std::span<const Observation> val,
                                  std::size_t num_particles, std::uint64_t seed) {
  if (val.empty()) throw InvalidInput("empty validation set");
  const ParticleSet set = make_particles(p, observed, num_particles, seed);
  std::size_t hits = 0;
  for (const auto& o : val) {
    if (argmax_label(predict_marginal(p, set, o.node).probs) == o.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(val.size());
}

/// L2 penalty gradient (-2 l2 w) on regularized blocks, added in place.
inline void add_l2_gradient(const ParamLayout& layout, std::span<const double> theta,
                            double l2, std::span<double> grad) {
  if (l2 == 0.0) return;
  for (const auto& b : layout.blocks()) {
    if (!b.regularized) continue;
    for (std::size_t k = b.offset; k < b.offset + b.size(); ++k) {
      grad[k] -= 2.0 * l2 * theta[k];
    }
  }
}

/// Full-batch training from model.theta. Early stopping on validation
/// accuracy when `val` is non-empty.
inline TrainResult train(const TrainConfig& config, const Model& model,
                         std::span<const Observation> observed,
                         std::span<const Observation> val = {}) {
  config.validate();
  if (observed.empty()) throw InvalidInput("train: no observed labels");
  TrainResult result;
  result.initial_theta = model.theta;
  std::vector<double> theta = model.theta;
  Adam adam(config.lr);
  const std::uint64_t grad_seed = derive_seed(config.seed, 2);
  const std::uint64_t val_seed = derive_seed(config.seed, 3);
  double best_val = -1.0;
  std::size_t since_best = 0;
  result.theta = theta;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    GradientEstimate est;
    try {
      est = reinforce_gradient(model, theta, observed, config.samples,
                               config.baseline, derive_seed(grad_seed, epoch));
    } catch (const NonFiniteValue& e) {
      throw TrainingDiverged("epoch " + std::to_string(epoch) + ": " + e.what(),
                             result.trace);
    }
    if (!std::isfinite(est.elbo)) {
      throw TrainingDiverged("epoch " + std::to_string(epoch) + ": elbo is " +
                                 std::to_string(est.elbo),
                             result.trace);
    }
    add_l2_gradient(model.layout, theta, config.l2, est.grad);
    adam.ascend(theta, est.grad);

    TraceRecord rec{epoch, est.elbo, std::nullopt};
    if (!val.empty()) {
      const double acc = validation_accuracy(model.params_at(theta), observed, val,
                                             config.samples,
                                             derive_seed(val_seed, epoch));
      rec.val_metric = acc;
      if (acc > best_val) {
        best_val = acc;
        result.theta = theta;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        result.trace.push_back(rec);
        break;
      }
    }
    result.trace.push_back(rec);
  }
  result.final_theta = theta;
  if (val.empty()) {
    result.theta = theta;
    result.best_epoch = result.trace.empty() ? 0 : result.trace.back().epoch;
  }
  return result;
}

}  // namespace nmm
