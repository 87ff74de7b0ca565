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

// nmm: train, predict, eval, approx-ising and generate.
//
// Exit codes: 0 success, 1 runtime failure (budget, divergence), 2 usage or
// input error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nmm/nmm.hpp"

namespace {

using namespace nmm;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string f6(double x) { return fixed(x, 6); }

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  return out;
}

// ---------------------------------------------------------------------------
// Data loading

struct DataFlags {
  std::string graph, labels, split, features;
  std::size_t num_nodes = 0;  // 0: infer
};

void add_data_flags(CLI::App* cmd, DataFlags& d, bool need_split) {
  cmd->add_option("--graph", d.graph, "edge list, one 'u<TAB>v' per line")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--labels", d.labels, "'node,label' lines")
      ->required()
      ->check(CLI::ExistingFile);
  auto* split = cmd->add_option("--split", d.split, "JSON {train, val, test}")
                    ->check(CLI::ExistingFile);
  if (need_split) split->required();
  cmd->add_option("--features", d.features, "numeric table, row i = node i")
      ->check(CLI::ExistingFile);
  cmd->add_option("--num-nodes", d.num_nodes, "node count (default: inferred)");
}

// Largest leading integer id over the first `fields` columns of each line.
std::optional<std::uint64_t> max_id(const std::string& path, const char* delims,
                                    std::size_t fields) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  std::optional<std::uint64_t> best;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skippable(line)) continue;
    const auto parts = detail::split_fields(line, delims);
    for (std::size_t k = 0; k < std::min(fields, parts.size()); ++k) {
      const auto id = detail::parse_id(parts[k], line_no);
      best = best ? std::max(*best, id) : id;
    }
  }
  return best;
}

struct Dataset {
  std::shared_ptr<const Graph> graph;
  std::vector<Label> labels;
  Split split;
};

Dataset load_dataset(const DataFlags& d) {
  std::size_t n = d.num_nodes;
  if (n == 0) {
    for (auto m : {max_id(d.graph, "\t ", 2), max_id(d.labels, ",", 1)}) {
      if (m) n = std::max<std::size_t>(n, *m + 1);
    }
  }
  Graph g = load_edge_list(d.graph, n);
  Dataset out;
  out.labels = load_labels(d.labels, n);
  if (!d.features.empty()) {
    Matrix x = load_features(d.features);
    if (x.rows != n) {
      throw InvalidInput("features: " + std::to_string(x.rows) + " rows for " +
                         std::to_string(n) + " nodes");
    }
    g = g.with_features(std::move(x));
  }
  out.graph = std::make_shared<const Graph>(g.with_labels(out.labels));
  if (!d.split.empty()) out.split = load_split(d.split, n);
  return out;
}

Observations labeled_in(const Dataset& data, std::span<const NodeId> nodes) {
  Observations out;
  for (NodeId i : nodes) {
    if (data.labels[i] != kUnknownLabel) out.push_back({i, data.labels[i]});
  }
  std::sort(out.begin(), out.end(),
            [](const Observation& a, const Observation& b) { return a.node < b.node; });
  return out;
}

Observations all_labeled(const Dataset& data) {
  Observations out;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    if (data.labels[i] != kUnknownLabel) {
      out.push_back({static_cast<NodeId>(i), data.labels[i]});
    }
  }
  return out;
}

std::vector<NodeId> concat(std::span<const NodeId> a, std::span<const NodeId> b) {
  std::vector<NodeId> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  DataFlags data;
  std::string backbone = "free", activation = "softplus", attention = "learned";
  std::string baseline = "loo";
  BackboneConfig bc;
  TrainConfig tc;
  std::size_t num_classes = 0;
  std::string out = "model.json", trace = "trace.jsonl";
};

void add_train(CLI::App& app, TrainFlags& f) {
  auto* cmd = app.add_subcommand("train", "fit a model by stochastic ELBO ascent");
  add_data_flags(cmd, f.data, true);
  cmd->add_option("--backbone", f.backbone)
      ->required()
      ->check(CLI::IsMember({"free", "linear", "onehop"}));
  cmd->add_option("--activation", f.activation)
      ->check(CLI::IsMember({"softplus", "square"}));
  cmd->add_option("--attention", f.attention)
      ->check(CLI::IsMember({"learned", "identity"}));
  cmd->add_option("--embed-dim", f.bc.embed_dim);
  cmd->add_option("--hidden", f.bc.hidden);
  cmd->add_option("--init-omega-sq", f.bc.init_omega_sq);
  cmd->add_option("--init-gamma", f.bc.init_gamma);
  cmd->add_option("--num-classes", f.num_classes, "default: max label + 1");
  cmd->add_option("--epochs", f.tc.epochs);
  cmd->add_option("--lr", f.tc.lr);
  cmd->add_option("--samples", f.tc.samples, "T per gradient step");
  cmd->add_option("--baseline", f.baseline)->check(CLI::IsMember({"none", "loo"}));
  cmd->add_option("--l2", f.tc.l2);
  cmd->add_option("--patience", f.tc.patience);
  cmd->add_option("--seed", f.tc.seed)->required();
  cmd->add_option("--out", f.out, "model document");
  cmd->add_option("--trace", f.trace, "metric trace, one JSON object per line");
}

int run_train(TrainFlags& f) {
  f.bc.kind = parse_backbone(f.backbone);
  f.bc.activation = parse_activation(f.activation);
  f.bc.attention = parse_attention(f.attention);
  f.tc.baseline = parse_baseline(f.baseline);
  if (f.bc.kind != BackboneKind::kFree && f.data.features.empty()) {
    throw UsageError("--features is required for backbone " + f.backbone);
  }
  f.tc.validate();
  const Dataset data = load_dataset(f.data);
  const std::size_t c =
      f.num_classes ? f.num_classes : infer_num_classes(data.labels);
  if (c < 2) throw InvalidInput("need at least two classes");
  const Observations observed = labeled_in(data, data.split.train);
  const Observations val = labeled_in(data, data.split.val);

  Model model = make_model(f.bc, data.graph, c, derive_seed(f.tc.seed, 1));
  auto write_trace = [&](const std::vector<TraceRecord>& trace) {
    auto out = open_output(f.trace);
    for (const auto& r : trace) {
      out << "{\"epoch\":" << r.epoch << ",\"elbo\":" << f6(r.elbo)
          << ",\"val_metric\":" << (r.val_metric ? f6(*r.val_metric) : "null")
          << "}\n";
    }
  };
  TrainResult result;
  try {
    result = train(f.tc, model, observed, val);
  } catch (const TrainingDiverged& e) {
    write_trace(e.trace());
    throw;
  }
  write_trace(result.trace);
  model.theta = result.theta;
  save_model(model, f.tc, f.out);
  std::cout << "epochs=" << result.trace.size() << " best_epoch=" << result.best_epoch;
  if (!result.trace.empty()) std::cout << " final_elbo=" << f6(result.trace.back().elbo);
  std::cout << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictFlags {
  DataFlags data;
  std::string model, targets, out = "predictions.csv";
  std::string mode = "auto", order = "id";
  std::size_t particles = 1000;
  std::uint64_t seed = 0;
};

void add_predict(CLI::App& app, PredictFlags& f) {
  auto* cmd = app.add_subcommand("predict", "sequential label prediction");
  add_data_flags(cmd, f.data, false);
  cmd->add_option("--model", f.model)->required()->check(CLI::ExistingFile);
  cmd->add_option("--targets", f.targets,
                  "file of node ids to predict (default: the test split)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out);
  cmd->add_option("--mode", f.mode)->check(CLI::IsMember({"auto", "exact", "particles"}));
  cmd->add_option("--order", f.order, "decode order: ascending id or as given")
      ->check(CLI::IsMember({"id", "given"}));
  cmd->add_option("--particles", f.particles, "T");
  cmd->add_option("--seed", f.seed);
}

std::vector<NodeId> read_targets(const std::string& path, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  std::vector<NodeId> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skippable(line)) continue;
    for (const auto& tok : detail::split_fields(line, ", \t")) {
      const auto id = detail::parse_id(tok, line_no);
      if (id >= n) throw InvalidInput("unknown node id " + std::to_string(id));
      out.push_back(static_cast<NodeId>(id));
    }
  }
  return out;
}

int run_predict(const PredictFlags& f) {
  const Dataset data = load_dataset(f.data);
  const LoadedModel loaded = load_model(f.model, data.graph);
  const NmmParams p = loaded.model.params();

  std::vector<NodeId> targets =
      f.targets.empty() ? data.split.test : read_targets(f.targets, p.num_nodes());
  std::set<NodeId> target_set(targets.begin(), targets.end());
  if (target_set.size() != targets.size()) throw InvalidInput("duplicate target id");

  // Observed: train and val labels when a split is given, otherwise every
  // labeled node outside the targets.
  Observations observed;
  if (!f.data.split.empty()) {
    observed = labeled_in(data, concat(data.split.train, data.split.val));
  } else {
    observed = all_labeled(data);
  }
  std::erase_if(observed, [&](const Observation& o) { return target_set.count(o.node); });

  const DecodeOrder order =
      f.order == "id" ? DecodeOrder::kAscendingId : DecodeOrder::kAsGiven;
  bool exact = f.mode == "exact";
  if (f.mode == "auto" && !targets.empty()) {
    Observations all = observed;
    for (NodeId i : targets) all.push_back({i, 0});
    try {
      check_budget(p.graph(), all, {});
      exact = true;
    } catch (const BudgetExceeded&) {
      exact = false;
    }
  }
  std::vector<DecodedNode> decoded;
  if (!targets.empty()) {
    decoded = exact ? greedy_decode_exact(p, observed, targets, order)
                    : greedy_decode(p, observed, targets, f.particles, f.seed, order);
  }

  auto out = open_output(f.out);
  for (const auto& d : decoded) {
    out << d.node << ',' << d.label;
    for (double q : d.probs) out << ',' << fixed(q, 5);
    out << '\n';
  }
  const auto acc = accuracy(decoded, data.labels);
  std::cout << "predicted=" << decoded.size()
            << " accuracy=" << (acc ? f6(*acc) : std::string("n/a"))
            << " mode=" << (exact ? "exact" : "particles") << " seed=" << f.seed
            << " T=" << (exact ? std::string("exact") : std::to_string(f.particles))
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalFlags {
  DataFlags data;
  std::string model, metric = "elbo", subset = "all";
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
};

void add_eval(CLI::App& app, EvalFlags& f) {
  auto* cmd = app.add_subcommand("eval", "evaluate a metric on labeled data");
  add_data_flags(cmd, f.data, false);
  cmd->add_option("--model", f.model)->required()->check(CLI::ExistingFile);
  cmd->add_option("--metric", f.metric)
      ->required()
      ->check(CLI::IsMember({"elbo", "pll", "exact-nll"}));
  cmd->add_option("--subset", f.subset, "labels scored by elbo and exact-nll")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));
  cmd->add_option("--samples", f.samples, "T for elbo");
  cmd->add_option("--seed", f.seed);
}

int run_eval(const EvalFlags& f) {
  const Dataset data = load_dataset(f.data);
  const LoadedModel loaded = load_model(f.model, data.graph);
  const NmmParams p = loaded.model.params();
  if (f.subset != "all" && f.data.split.empty()) {
    throw UsageError("--subset " + f.subset + " needs --split");
  }
  Observations y;
  if (f.subset == "all") y = all_labeled(data);
  if (f.subset == "train") y = labeled_in(data, data.split.train);
  if (f.subset == "val") y = labeled_in(data, data.split.val);
  if (f.subset == "test") y = labeled_in(data, data.split.test);

  double value = 0.0;
  std::string t = "0";
  if (f.metric == "elbo") {
    value = elbo_estimate(p, y, f.samples, f.seed).elbo;
    t = std::to_string(f.samples);
  } else if (f.metric == "exact-nll") {
    value = -exact_marginal(p, y);
  } else {
    // Edges with both ends labeled and at least one end held out.
    if (f.data.split.empty()) throw UsageError("--metric pll needs --split");
    const std::set<NodeId> test(data.split.test.begin(), data.split.test.end());
    std::vector<Edge> edges;
    for (const auto& e : data.graph->edges()) {
      if (data.labels[e.first] == kUnknownLabel ||
          data.labels[e.second] == kUnknownLabel) {
        continue;
      }
      if (test.count(e.first) || test.count(e.second)) edges.push_back(e);
    }
    value = pairwise_ll(p, data.labels, edges);
  }
  std::cout << f.metric << '=' << f6(value) << " seed=" << f.seed << " T=" << t << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// approx-ising

struct IsingFlags {
  std::string method = "nmm-free", ising, trace = "approx_trace.jsonl";
  std::size_t height = 4, width = 4;
  double j = 0.4, h = 0.0;
  ApproxConfig ac;
};

void add_approx(CLI::App& app, IsingFlags& f) {
  auto* cmd = app.add_subcommand("approx-ising", "bound the free energy of an Ising grid");
  cmd->add_option("--method", f.method)
      ->check(CLI::IsMember({"mf", "nmm-free", "nmm-onehop"}));
  cmd->add_option("--height", f.height);
  cmd->add_option("--width", f.width);
  cmd->add_option("--J", f.j, "coupling on every edge");
  cmd->add_option("--h", f.h, "field on every node");
  cmd->add_option("--ising", f.ising,
                  "key=value file: height, width, J and h (scalar or comma list)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--steps", f.ac.steps);
  cmd->add_option("--samples", f.ac.samples, "S per gradient step");
  cmd->add_option("--eval-samples", f.ac.eval_samples, "S for the reported bound");
  cmd->add_option("--lr", f.ac.lr);
  cmd->add_option("--hidden", f.ac.hidden);
  cmd->add_option("--embed-dim", f.ac.embed_dim);
  cmd->add_option("--seed", f.ac.seed);
  cmd->add_option("--trace", f.trace);
}

std::vector<double> parse_numbers(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : detail::split_fields(text, ", \t")) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw InvalidInput("ising: '" + key + "' holds a non-number '" + tok + "'");
    }
  }
  if (out.empty()) throw InvalidInput("ising: '" + key + "' is empty");
  return out;
}

IsingModel load_ising(const IsingFlags& f) {
  if (f.ising.empty()) {
    if (f.height < 1 || f.width < 1) throw InvalidInput("grid dims must be >= 1");
    return make_ising(f.height, f.width, f.j, f.h);
  }
  const auto kv = load_key_values(f.ising);
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw InvalidInput(std::string("ising: missing '") + key + "'");
    return it->second;
  };
  const auto height = static_cast<std::size_t>(parse_numbers("height", get("height")).at(0));
  const auto width = static_cast<std::size_t>(parse_numbers("width", get("width")).at(0));
  if (height < 1 || width < 1) throw InvalidInput("grid dims must be >= 1");
  const std::size_t n = height * width;
  const std::size_t e = height * (width - 1) + width * (height - 1);
  auto j = parse_numbers("J", get("J"));
  auto h = parse_numbers("h", get("h"));
  if (j.size() == 1) j.assign(e, j[0]);
  if (h.size() == 1) h.assign(n, h[0]);
  return make_ising(height, width, std::move(h), std::move(j));
}

int run_approx(IsingFlags& f) {
  f.ac.method = parse_approx_method(f.method);
  const IsingModel m = load_ising(f);
  const ApproxResult r = approximate_ising(m, f.ac);
  auto trace = open_output(f.trace);
  for (const auto& rec : r.trace) {
    trace << "{\"step\":" << rec.step << ",\"objective\":" << f6(rec.ub) << "}\n";
  }
  std::cout << "method=" << to_string(r.method) << '\n'
            << "nodes=" << m.num_nodes() << '\n'
            << "free_energy=" << f6(r.free_energy) << '\n'
            << "std_error=" << f6(r.std_error) << '\n'
            << "log_Z=" << (r.log_z ? f6(*r.log_z) : std::string("n/a")) << '\n'
            << "kl=" << (r.kl ? f6(*r.kl) : std::string("n/a")) << '\n'
            << "seed=" << f.ac.seed << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateFlags {
  SyntheticConfig sc;
  std::string out_dir;
  double train_frac = 0.5, val_frac = 0.2;
  std::uint64_t seed = 0;
};

void add_generate(CLI::App& app, GenerateFlags& f) {
  auto* cmd = app.add_subcommand("generate", "sample a synthetic dataset from a random NMM");
  cmd->add_option("--out-dir", f.out_dir)->required();
  cmd->add_option("--num-nodes", f.sc.num_nodes);
  cmd->add_option("--num-edges", f.sc.num_edges);
  cmd->add_option("--max-degree", f.sc.max_degree);
  cmd->add_option("--num-classes", f.sc.num_classes);
  cmd->add_option("--embed-dim", f.sc.embed_dim);
  cmd->add_option("--omega-sq", f.sc.omega_sq);
  cmd->add_option("--gamma", f.sc.gamma);
  cmd->add_option("--train-frac", f.train_frac);
  cmd->add_option("--val-frac", f.val_frac);
  cmd->add_option("--seed", f.seed);
}

int run_generate(const GenerateFlags& f) {
  if (f.train_frac < 0 || f.val_frac < 0 || f.train_frac + f.val_frac > 1) {
    throw InvalidInput("split fractions must be >= 0 and sum to <= 1");
  }
  namespace fs = std::filesystem;
  fs::create_directories(f.out_dir);
  Rng rng(derive_seed(f.seed, 1));
  const SyntheticData d = make_synthetic(f.sc, rng);
  Rng split_rng(derive_seed(f.seed, 2));
  const Split s = random_split(d.graph->num_nodes(), f.train_frac, f.val_frac, split_rng);
  const fs::path dir(f.out_dir);
  save_edge_list(*d.graph, (dir / "graph.tsv").string());
  save_labels(d.labels, (dir / "labels.csv").string());
  save_features(*d.graph->features(), (dir / "features.csv").string());
  save_split(s, (dir / "split.json").string());
  save_params(d.truth, (dir / "true_params.json").string());
  std::cout << "nodes=" << d.graph->num_nodes() << " edges=" << d.graph->num_edges()
            << " classes=" << f.sc.num_classes << " dir=" << f.out_dir << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

// Splices the key=value pairs of `--config FILE` in as flags right after the
// subcommand, so flags given on the command line (parsed later) win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> out;
  std::optional<std::string> config;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config") {
      if (k + 1 >= args.size()) throw UsageError("--config needs a file");
      config = args[++k];
    } else if (args[k].rfind("--config=", 0) == 0) {
      config = args[k].substr(9);
    } else {
      out.push_back(args[k]);
    }
  }
  if (!config || out.empty()) return out;
  std::vector<std::string> injected;
  for (const auto& [key, value] : load_key_values(*config)) {
    injected.push_back("--" + key);
    injected.push_back(value);
  }
  out.insert(out.begin() + 1, injected.begin(), injected.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neighbor mixture models over graph node labels", "nmm"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  // "-h" stays free for the Ising field flag.
  app.set_help_flag("--help", "print this help and exit");
  app.set_help_all_flag("--help-all");

  TrainFlags train_flags;
  PredictFlags predict_flags;
  EvalFlags eval_flags;
  IsingFlags ising_flags;
  GenerateFlags generate_flags;
  add_train(app, train_flags);
  add_predict(app, predict_flags);
  add_eval(app, eval_flags);
  add_approx(app, ising_flags);
  add_generate(app, generate_flags);

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("train")) return run_train(train_flags);
    if (app.got_subcommand("predict")) return run_predict(predict_flags);
    if (app.got_subcommand("eval")) return run_eval(eval_flags);
    if (app.got_subcommand("approx-ising")) return run_approx(ising_flags);
    if (app.got_subcommand("generate")) return run_generate(generate_flags);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
