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

// JSON documents: node splits, raw parameters and trained models. Doubles
// are written in shortest round-trip form, so reloading is value-exact.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmm/error.hpp"
#include "nmm/graph.hpp"
#include "nmm/kernel.hpp"
#include "nmm/learning.hpp"
#include "nmm/parameterize.hpp"

namespace nmm {

using Json = nlohmann::json;

inline Json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw InvalidInput("malformed JSON in " + path + ": " + e.what());
  }
}

inline void write_json(const Json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Splits

inline Split split_from_json(const Json& doc, std::size_t num_nodes) {
  Split s;
  std::set<NodeId> seen;
  auto read = [&](const char* key, std::vector<NodeId>& out) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_array()) {
      throw InvalidInput(std::string("split: '") + key + "' must be an array");
    }
    for (const auto& v : doc[key]) {
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw InvalidInput(std::string("split: '") + key + "' holds a non-id");
      }
      const auto id = v.get<std::uint64_t>();
      if (id >= num_nodes) {
        throw InvalidInput("split: node id " + std::to_string(id) + " out of range");
      }
      if (!seen.insert(static_cast<NodeId>(id)).second) {
        throw InvalidInput("split: node " + std::to_string(id) +
                           " appears more than once");
      }
      out.push_back(static_cast<NodeId>(id));
    }
  };
  if (!doc.is_object()) throw InvalidInput("split: expected an object");
  read("train", s.train);
  read("val", s.val);
  read("test", s.test);
  return s;
}

inline Split load_split(const std::string& path, std::size_t num_nodes) {
  return split_from_json(read_json(path), num_nodes);
}

inline void save_split(const Split& s, const std::string& path) {
  write_json(Json{{"train", s.train}, {"val", s.val}, {"test", s.test}}, path);
}

// ---------------------------------------------------------------------------
// Raw parameters

inline Json params_to_json(const NmmParams& p) {
  Json alpha = Json::array(), attention = Json::array();
  for (std::size_t i = 0; i < p.num_nodes(); ++i) {
    const auto id = static_cast<NodeId>(i);
    alpha.push_back(std::vector<double>(p.alpha(id).begin(), p.alpha(id).end()));
    attention.push_back(
        std::vector<double>(p.attention(id).begin(), p.attention(id).end()));
  }
  return Json{{"num_nodes", p.num_nodes()},
              {"num_classes", p.num_classes()},
              {"alpha", alpha},
              {"attention", attention}};
}

inline NmmParams params_from_json(const Json& doc, std::shared_ptr<const Graph> graph) {
  try {
    const auto n = doc.at("num_nodes").get<std::size_t>();
    const auto c = doc.at("num_classes").get<std::size_t>();
    if (n != graph->num_nodes()) {
      throw InvalidInput("params: node count does not match the graph");
    }
    std::vector<double> alpha, attention;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = doc.at("alpha").at(i).get<std::vector<double>>();
      const auto l = doc.at("attention").at(i).get<std::vector<double>>();
      if (row.size() != c) throw InvalidInput("params: alpha row has wrong length");
      if (l.size() != graph->neighborhood(static_cast<NodeId>(i)).size()) {
        throw InvalidInput("params: attention of node " + std::to_string(i) +
                           " does not match its neighborhood");
      }
      alpha.insert(alpha.end(), row.begin(), row.end());
      attention.insert(attention.end(), l.begin(), l.end());
    }
    return make_params(std::move(graph), c, std::move(alpha), std::move(attention));
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("params: ") + e.what());
  }
}

inline void save_params(const NmmParams& p, const std::string& path) {
  write_json(params_to_json(p), path);
}

inline NmmParams load_params(const std::string& path,
                             std::shared_ptr<const Graph> graph) {
  return params_from_json(read_json(path), std::move(graph));
}

// ---------------------------------------------------------------------------
// Model documents

inline constexpr int kModelFormatVersion = 1;

struct GraphFingerprint {
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  std::uint64_t hash = 0;

  static GraphFingerprint of(const Graph& g) {
    return {g.num_nodes(), g.num_edges(), g.content_hash()};
  }
  friend bool operator==(const GraphFingerprint&, const GraphFingerprint&) = default;
};

inline std::string hex64(std::uint64_t x) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << x;
  return s.str();
}

inline Json backbone_to_json(const BackboneConfig& c) {
  return Json{{"kind", to_string(c.kind)},
              {"embed_dim", c.embed_dim},
              {"activation", to_string(c.activation)},
              {"init_omega_sq", c.init_omega_sq},
              {"init_gamma", c.init_gamma},
              {"hidden", c.hidden},
              {"attention", to_string(c.attention)}};
}

inline BackboneConfig backbone_from_json(const Json& j) {
  BackboneConfig c;
  c.kind = parse_backbone(j.at("kind").get<std::string>());
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.init_omega_sq = j.at("init_omega_sq").get<double>();
  c.init_gamma = j.at("init_gamma").get<double>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.attention = parse_attention(j.at("attention").get<std::string>());
  return c;
}

inline Json train_config_to_json(const TrainConfig& t) {
  return Json{{"seed", t.seed},       {"epochs", t.epochs},
              {"lr", t.lr},           {"samples", t.samples},
              {"baseline", to_string(t.baseline)},
              {"l2", t.l2},           {"patience", t.patience}};
}

inline Json model_to_json(const Model& m, const TrainConfig& train) {
  const auto fp = GraphFingerprint::of(*m.graph);
  Json layout = Json::array();
  for (const auto& b : m.layout.blocks()) {
    layout.push_back(Json{{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  }
  return Json{{"format_version", kModelFormatVersion},
              {"backbone", backbone_to_json(m.config)},
              {"num_classes", m.layout.num_classes},
              {"num_features", m.layout.num_features},
              {"graph",
               {{"num_nodes", fp.num_nodes},
                {"num_edges", fp.num_edges},
                {"hash", hex64(fp.hash)}}},
              {"train", train_config_to_json(train)},
              {"layout", layout},
              {"theta", m.theta}};
}

struct LoadedModel {
  Model model;
  std::uint64_t train_seed = 0;
};

/// Rebuilds a model on `graph`, refusing a graph whose fingerprint differs
/// from the one recorded at training time.
inline LoadedModel model_from_json(const Json& doc, std::shared_ptr<const Graph> graph) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw InvalidInput("model: unsupported format version " + std::to_string(version));
    }
    const auto& g = doc.at("graph");
    const auto fp = GraphFingerprint::of(*graph);
    if (g.at("num_nodes").get<std::size_t>() != fp.num_nodes ||
        g.at("num_edges").get<std::size_t>() != fp.num_edges ||
        g.at("hash").get<std::string>() != hex64(fp.hash)) {
      throw InvalidInput("model: graph fingerprint mismatch (model was trained on " +
                         std::to_string(g.at("num_nodes").get<std::size_t>()) +
                         " nodes / " +
                         std::to_string(g.at("num_edges").get<std::size_t>()) +
                         " edges)");
    }
    const BackboneConfig config = backbone_from_json(doc.at("backbone"));
    const auto num_classes = doc.at("num_classes").get<std::size_t>();
    const auto num_features = doc.at("num_features").get<std::size_t>();
    const std::size_t have = graph->features() ? graph->features()->cols : 0;
    if (config.kind != BackboneKind::kFree && have != num_features) {
      throw InvalidInput("model: expects " + std::to_string(num_features) +
                         " feature columns, got " + std::to_string(have));
    }
    LoadedModel out;
    out.model.config = config;
    out.model.layout = make_layout(config, graph->num_nodes(), num_features, num_classes);
    out.model.graph = std::move(graph);
    out.model.theta = doc.at("theta").get<std::vector<double>>();
    if (out.model.theta.size() != out.model.layout.size()) {
      throw InvalidInput("model: theta length does not match its layout");
    }
    out.train_seed = doc.at("train").at("seed").get<std::uint64_t>();
    return out;
  } catch (const Json::exception& e) {
    throw InvalidInput(std::string("model: ") + e.what());
  }
}

inline void save_model(const Model& m, const TrainConfig& train, const std::string& path) {
  write_json(model_to_json(m, train), path);
}

inline LoadedModel load_model(const std::string& path, std::shared_ptr<const Graph> graph) {
  return model_from_json(read_json(path), std::move(graph));
}

// ---------------------------------------------------------------------------
// key=value config files

/// Reads "key = value" lines; '#' starts a comment. Keys use the long flag
/// names without dashes.
inline std::map<std::string, std::string> load_key_values(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput("parse failure at line " + std::to_string(line_no) +
                         ": expected key=value");
    }
    out[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  return out;
}

}  // namespace nmm
