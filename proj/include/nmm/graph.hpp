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

// Immutable undirected graph in compressed sparse row form, plus the small
// dense matrix used for node features and the dataset readers/writers.
//
// Stored adjacency never contains self loops. The self-inclusive
// neighborhood n(i) = adj(i) + {i} is derived once at construction and kept
// as a second CSR, because per-node attention vectors are laid out aligned
// with it.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nmm/error.hpp"
#include "nmm/random.hpp"

namespace nmm {

using NodeId = std::uint32_t;
using Label = std::int32_t;

/// Labels are 0-based class ids; unknown is a distinct sentinel.
inline constexpr Label kUnknownLabel = -1;

using Edge = std::pair<NodeId, NodeId>;

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

class Graph {
 public:
  Graph() = default;

  /// Builds an undirected graph. Both orientations and repeated edges
  /// collapse to one; self loops and out-of-range ids are rejected.
  static Graph from_edges(std::size_t num_nodes, std::span<const Edge> edges) {
    std::vector<std::vector<NodeId>> lists(num_nodes);
    for (const auto& [u, v] : edges) {
      if (u >= num_nodes || v >= num_nodes) {
        throw InvalidInput("edge (" + std::to_string(u) + "," +
                           std::to_string(v) + ") has id out of range");
      }
      if (u == v) {
        throw InvalidInput("self-loop on node " + std::to_string(u) +
                           " (self-inclusion is implicit)");
      }
      lists[u].push_back(v);
      lists[v].push_back(u);
    }
    Graph g;
    g.num_nodes_ = num_nodes;
    g.adj_offsets_.assign(num_nodes + 1, 0);
    g.closed_offsets_.assign(num_nodes + 1, 0);
    for (std::size_t i = 0; i < num_nodes; ++i) {
      auto& l = lists[i];
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
      g.adj_offsets_[i + 1] = g.adj_offsets_[i] + l.size();
      g.closed_offsets_[i + 1] = g.closed_offsets_[i] + l.size() + 1;
    }
    g.adj_.reserve(g.adj_offsets_.back());
    g.closed_.reserve(g.closed_offsets_.back());
    for (std::size_t i = 0; i < num_nodes; ++i) {
      const auto& l = lists[i];
      g.adj_.insert(g.adj_.end(), l.begin(), l.end());
      const auto self = static_cast<NodeId>(i);
      auto split = std::lower_bound(l.begin(), l.end(), self);
      g.closed_.insert(g.closed_.end(), l.begin(), split);
      g.closed_.push_back(self);
      g.closed_.insert(g.closed_.end(), split, l.end());
      g.max_degree_ = std::max(g.max_degree_, l.size() + 1);
    }
    return g;
  }

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return adj_.size() / 2; }
  /// Maximum self-inclusive neighborhood size D.
  std::size_t max_degree() const { return max_degree_; }

  /// Stored neighbors of i (sorted, no self).
  std::span<const NodeId> adjacent(NodeId i) const {
    check_node(i);
    return {adj_.data() + adj_offsets_[i], adj_offsets_[i + 1] - adj_offsets_[i]};
  }

  /// Self-inclusive neighborhood n(i), sorted.
  std::span<const NodeId> neighborhood(NodeId i) const {
    check_node(i);
    return {closed_.data() + closed_offsets_[i],
            closed_offsets_[i + 1] - closed_offsets_[i]};
  }

  /// Offset of n(i) inside the flattened neighborhood layout.
  std::size_t neighborhood_offset(NodeId i) const { return closed_offsets_[i]; }
  /// Total number of (i, j in n(i)) pairs.
  std::size_t neighborhood_entries() const { return closed_.size(); }

  /// Position of j within n(i), or nullopt when j is not a neighbor.
  std::optional<std::size_t> slot(NodeId i, NodeId j) const {
    auto n = neighborhood(i);
    auto it = std::lower_bound(n.begin(), n.end(), j);
    if (it == n.end() || *it != j) return std::nullopt;
    return static_cast<std::size_t>(it - n.begin());
  }

  /// Position of i itself within n(i).
  std::size_t self_slot(NodeId i) const { return *slot(i, i); }

  /// Undirected edges as (u, v) with u < v, sorted.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (std::size_t u = 0; u < num_nodes_; ++u) {
      for (NodeId v : adjacent(static_cast<NodeId>(u))) {
        if (u < v) out.emplace_back(static_cast<NodeId>(u), v);
      }
    }
    return out;
  }

  /// FNV-1a hash over the node count and sorted edge list.
  std::uint64_t content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t x) {
      for (int b = 0; b < 8; ++b) {
        h ^= (x >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    };
    mix(num_nodes_);
    for (const auto& [u, v] : edges()) {
      mix(u);
      mix(v);
    }
    return h;
  }

  const std::optional<Matrix>& features() const { return features_; }
  const std::vector<Label>& labels() const { return labels_; }
  bool has_labels() const { return !labels_.empty(); }

  Graph with_features(Matrix x) const {
    if (x.rows != num_nodes_) {
      throw InvalidInput("feature matrix has " + std::to_string(x.rows) +
                         " rows, graph has " + std::to_string(num_nodes_) +
                         " nodes");
    }
    Graph g = *this;
    g.features_ = std::move(x);
    return g;
  }

  Graph with_labels(std::vector<Label> labels) const {
    if (labels.size() != num_nodes_) {
      throw InvalidInput("label vector length does not match node count");
    }
    Graph g = *this;
    g.labels_ = std::move(labels);
    return g;
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.adj_offsets_ == b.adj_offsets_ &&
           a.adj_ == b.adj_;
  }

 private:
  void check_node(NodeId i) const {
    if (i >= num_nodes_) {
      throw InvalidInput("node id " + std::to_string(i) + " out of range (N=" +
                         std::to_string(num_nodes_) + ")");
    }
  }

  std::size_t num_nodes_ = 0;
  std::size_t max_degree_ = 0;
  std::vector<std::size_t> adj_offsets_{0};
  std::vector<NodeId> adj_;
  std::vector<std::size_t> closed_offsets_{0};
  std::vector<NodeId> closed_;
  std::optional<Matrix> features_;
  std::vector<Label> labels_;
};

/// Ordered list of distinct, valid node ids.
class NodeSet {
 public:
  NodeSet() = default;
  NodeSet(std::vector<NodeId> ids, std::size_t num_nodes) : ids_(std::move(ids)) {
    std::vector<bool> seen(num_nodes, false);
    for (NodeId i : ids_) {
      if (i >= num_nodes) {
        throw InvalidInput("node id " + std::to_string(i) + " out of range");
      }
      if (seen[i]) {
        throw InvalidInput("node id " + std::to_string(i) + " repeated");
      }
      seen[i] = true;
    }
  }
  std::span<const NodeId> ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }

 private:
  std::vector<NodeId> ids_;
};

/// Disjoint train / validation / test node lists.
struct Split {
  std::vector<NodeId> train, val, test;
};

/// Convenience wrapper for the free-function form of the neighborhood query.
inline std::vector<NodeId> neighborhood(const Graph& g, NodeId i) {
  auto n = g.neighborhood(i);
  return {n.begin(), n.end()};
}

/// H x W 4-connected lattice, nodes in row-major order.
inline Graph make_grid_graph(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) {
    throw InvalidInput("grid dimensions must be positive");
  }
  std::vector<Edge> edges;
  auto id = [width](std::size_t r, std::size_t c) {
    return static_cast<NodeId>(r * width + c);
  };
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      if (c + 1 < width) edges.emplace_back(id(r, c), id(r, c + 1));
      if (r + 1 < height) edges.emplace_back(id(r, c), id(r + 1, c));
    }
  }
  return Graph::from_edges(height * width, edges);
}

/// Random simple graph with `num_edges` edges, rejecting edges that would
/// push any node above `max_degree` stored neighbors. Stops early if the cap
/// makes the edge count unreachable.
inline Graph make_random_graph(std::size_t num_nodes, std::size_t num_edges,
                               std::size_t max_degree, Rng& rng) {
  if (num_nodes < 2) return Graph::from_edges(num_nodes, {});
  std::vector<Edge> edges;
  std::vector<std::size_t> degree(num_nodes, 0);
  std::vector<std::vector<bool>> present(num_nodes,
                                         std::vector<bool>(num_nodes, false));
  std::size_t attempts = 0;
  const std::size_t max_attempts = 100 * (num_edges + 1) * num_nodes;
  while (edges.size() < num_edges && attempts++ < max_attempts) {
    auto u = static_cast<NodeId>(rng.uniform_index(num_nodes));
    auto v = static_cast<NodeId>(rng.uniform_index(num_nodes));
    if (u == v || present[u][v]) continue;
    if (degree[u] >= max_degree || degree[v] >= max_degree) continue;
    present[u][v] = present[v][u] = true;
    ++degree[u];
    ++degree[v];
    edges.emplace_back(std::min(u, v), std::max(u, v));
  }
  return Graph::from_edges(num_nodes, edges);
}

// ---------------------------------------------------------------------------
// Dataset files

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  return in;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool skippable(const std::string& line) {
  const std::string t = trim(line);
  return t.empty() || t[0] == '#';
}

inline std::uint64_t parse_id(const std::string& token, std::size_t line_no) {
  const std::string t = trim(token);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
    throw InvalidInput("parse failure at line " + std::to_string(line_no) +
                       ": '" + t + "' is not a node id");
  }
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw InvalidInput("parse failure at line " + std::to_string(line_no));
  }
}

inline std::vector<std::string> split_fields(const std::string& line,
                                             const std::string& delims) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const auto next = line.find_first_of(delims, pos);
    std::string field =
        line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (!trim(field).empty()) out.push_back(trim(field));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace detail

/// Reads "u<TAB>v" lines ('#' comments and blank lines ignored).
inline Graph load_edge_list(const std::string& path, std::size_t num_nodes) {
  auto in = detail::open_input(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skippable(line)) continue;
    const auto fields = detail::split_fields(line, "\t ");
    if (fields.size() != 2) {
      throw InvalidInput("parse failure at line " + std::to_string(line_no) +
                         ": expected two ids");
    }
    const auto u = detail::parse_id(fields[0], line_no);
    const auto v = detail::parse_id(fields[1], line_no);
    if (u >= num_nodes || v >= num_nodes) {
      throw InvalidInput("id out of range at line " + std::to_string(line_no));
    }
    if (u == v) {
      throw InvalidInput("self-loop at line " + std::to_string(line_no));
    }
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }
  return Graph::from_edges(num_nodes, edges);
}

inline void save_edge_list(const Graph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  for (const auto& [u, v] : g.edges()) out << u << '\t' << v << '\n';
}

/// Edge list with arbitrary string node names. Names are mapped to dense
/// ids in order of first appearance; `id_map[k]` is the name of node k.
struct RemappedGraph {
  Graph graph;
  std::vector<std::string> id_map;
};

inline RemappedGraph load_edge_list_remapped(const std::string& path) {
  auto in = detail::open_input(path);
  std::unordered_map<std::string, NodeId> ids;
  RemappedGraph result;
  std::vector<Edge> edges;
  auto intern = [&](const std::string& name) {
    auto [it, inserted] = ids.emplace(name, static_cast<NodeId>(ids.size()));
    if (inserted) result.id_map.push_back(name);
    return it->second;
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skippable(line)) continue;
    const auto fields = detail::split_fields(line, "\t");
    if (fields.size() != 2) {
      throw InvalidInput("parse failure at line " + std::to_string(line_no) +
                         ": expected two names");
    }
    const NodeId u = intern(fields[0]);
    const NodeId v = intern(fields[1]);
    if (u == v) throw InvalidInput("self-loop at line " + std::to_string(line_no));
    edges.emplace_back(u, v);
  }
  result.graph = Graph::from_edges(result.id_map.size(), edges);
  return result;
}

inline void save_id_map(std::span<const std::string> id_map,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  for (std::size_t k = 0; k < id_map.size(); ++k) {
    out << k << '\t' << id_map[k] << '\n';
  }
}

/// Delimited numeric table (comma, tab or space separated); row i = node i.
inline Matrix load_features(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skippable(line)) continue;
    std::vector<double> row;
    for (const auto& f : detail::split_fields(line, ",\t ")) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(f, &used));
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        throw InvalidInput("parse failure at line " + std::to_string(line_no) +
                           ": '" + f + "' is not a number");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InvalidInput("ragged feature row at line " + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

inline void save_features(const Matrix& x, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  out.precision(17);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      if (c) out << ',';
      out << x(r, c);
    }
    out << '\n';
  }
}

/// "node_id,label_id" lines; nodes not listed are unknown.
inline std::vector<Label> load_labels(const std::string& path,
                                      std::size_t num_nodes) {
  auto in = detail::open_input(path);
  std::vector<Label> labels(num_nodes, kUnknownLabel);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skippable(line)) continue;
    const auto fields = detail::split_fields(line, ",");
    if (fields.size() != 2) {
      throw InvalidInput("parse failure at line " + std::to_string(line_no) +
                         ": expected node_id,label_id");
    }
    const auto node = detail::parse_id(fields[0], line_no);
    const auto label = detail::parse_id(fields[1], line_no);
    if (node >= num_nodes) {
      throw InvalidInput("id out of range at line " + std::to_string(line_no));
    }
    labels[node] = static_cast<Label>(label);
  }
  return labels;
}

inline void save_labels(std::span<const Label> labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kUnknownLabel) out << i << ',' << labels[i] << '\n';
  }
}

/// Number of classes implied by a label vector (max id + 1).
inline std::size_t infer_num_classes(std::span<const Label> labels) {
  Label max = -1;
  for (Label l : labels) max = std::max(max, l);
  return static_cast<std::size_t>(max + 1);
}

}  // namespace nmm
