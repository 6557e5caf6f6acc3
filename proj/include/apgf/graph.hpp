#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "apgf/error.hpp"
#include "apgf/random.hpp"
#include "apgf/tensor.hpp"

namespace apgf {

using NodeIndex = std::size_t;
using Edge = std::pair<NodeIndex, NodeIndex>;  // stored with first < second

// Undirected connected graph with a weight in [0,1] on every node and a
// designated start node.
class WeightedGraph {
 public:
  WeightedGraph() = default;

  // Validates every invariant; throws ValidationError on violation.
  WeightedGraph(std::vector<double> weights, std::vector<Edge> edges, NodeIndex start)
      : weights_(std::move(weights)), start_(start) {
    const std::size_t n = weights_.size();
    if (n == 0) throw ValidationError("graph must have at least one node");
    if (start_ >= n) throw ValidationError("start_index " + std::to_string(start_) + " out of range");
    for (std::size_t i = 0; i < n; ++i)
      if (!(weights_[i] >= 0.0 && weights_[i] <= 1.0))
        throw ValidationError("weight out of range at node " + std::to_string(i));
    neighbors_.assign(n, {});
    std::set<Edge> seen;
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) throw ValidationError("edge endpoint out of range");
      if (u == v) throw ValidationError("self-loop at node " + std::to_string(u));
      Edge e{std::min(u, v), std::max(u, v)};
      if (!seen.insert(e).second)
        throw ValidationError("duplicate edge (" + std::to_string(e.first) + ", " +
                              std::to_string(e.second) + ")");
      edges_.push_back(e);
      neighbors_[u].push_back(v);
      neighbors_[v].push_back(u);
    }
    for (auto& list : neighbors_) std::sort(list.begin(), list.end());
    if (!connected()) throw ValidationError("graph is not connected");
  }

  std::size_t node_count() const { return weights_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  NodeIndex start_index() const { return start_; }
  double weight(NodeIndex v) const { return weights_.at(v); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Edge>& edges() const { return edges_; }
  // Sorted ascending.
  const std::vector<NodeIndex>& neighbors(NodeIndex v) const { return neighbors_.at(v); }

  bool adjacent(NodeIndex u, NodeIndex v) const {
    const auto& list = neighbors_.at(u);
    return std::binary_search(list.begin(), list.end(), v);
  }

  // n×n 0/1 matrix, symmetric with zero diagonal.
  std::vector<std::vector<unsigned char>> adjacency() const {
    std::vector<std::vector<unsigned char>> a(node_count(), std::vector<unsigned char>(node_count(), 0));
    for (auto [u, v] : edges_) a[u][v] = a[v][u] = 1;
    return a;
  }

  WeightedGraph with_start(NodeIndex start) const {
    return WeightedGraph(weights_, edges_, start);
  }

  friend bool operator==(const WeightedGraph& a, const WeightedGraph& b) {
    auto ea = a.edges_, eb = b.edges_;
    std::sort(ea.begin(), ea.end());
    std::sort(eb.begin(), eb.end());
    return a.weights_ == b.weights_ && a.start_ == b.start_ && ea == eb;
  }

 private:
  bool connected() const {
    std::vector<char> seen(node_count(), 0);
    std::vector<NodeIndex> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      NodeIndex u = stack.back();
      stack.pop_back();
      for (NodeIndex v : neighbors_[u])
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
    }
    return count == node_count();
  }

  std::vector<double> weights_;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeIndex>> neighbors_;
  NodeIndex start_ = 0;
};

enum class Topology {
  random_tree,  // node i > 0 attaches to a uniformly random node < i
  star,         // every node attaches to the start node
};

struct GraphGenOptions {
  Topology topology = Topology::random_tree;
};

// Random connected graph: weights first, then the start index, then a spanning
// tree, then uniformly random extra edges until num_edges is reached.
inline WeightedGraph generate_random_graph(std::size_t num_nodes, std::size_t num_edges,
                                           std::uint64_t seed, GraphGenOptions options = {}) {
  if (num_nodes == 0) throw ValidationError("num_nodes must be positive");
  if (num_edges + 1 < num_nodes)
    throw ValidationError("cannot connect " + std::to_string(num_nodes) + " nodes with " +
                          std::to_string(num_edges) + " edges (need at least " +
                          std::to_string(num_nodes - 1) + ")");
  const std::size_t max_edges = num_nodes * (num_nodes - 1) / 2;
  if (num_edges > max_edges)
    throw ValidationError("num_edges " + std::to_string(num_edges) +
                          " exceeds the simple-graph maximum " + std::to_string(max_edges));

  Rng rng(seed);
  std::vector<double> weights(num_nodes);
  for (double& w : weights) w = rng.uniform();
  const NodeIndex start = static_cast<NodeIndex>(rng.below(num_nodes));

  std::set<Edge> present;
  std::vector<Edge> edges;
  auto add = [&](NodeIndex u, NodeIndex v) {
    Edge e{std::min(u, v), std::max(u, v)};
    if (present.insert(e).second) edges.push_back(e);
  };
  for (NodeIndex i = 1; i < num_nodes; ++i) {
    if (options.topology == Topology::star) {
      // Relabelled so that the hub is `start`.
      NodeIndex leaf = i <= start ? i - 1 : i;
      add(start, leaf);
    } else {
      add(i, static_cast<NodeIndex>(rng.below(i)));
    }
  }

  const std::size_t missing = max_edges - edges.size();
  const std::size_t wanted = num_edges - edges.size();
  if (wanted > 0 && 2 * wanted > missing) {
    // Dense request: sample from the explicit complement.
    std::vector<Edge> absent;
    for (NodeIndex u = 0; u < num_nodes; ++u)
      for (NodeIndex v = u + 1; v < num_nodes; ++v)
        if (!present.count({u, v})) absent.push_back({u, v});
    for (std::size_t k = 0; k < wanted; ++k) {
      std::size_t pick = k + static_cast<std::size_t>(rng.below(absent.size() - k));
      std::swap(absent[k], absent[pick]);
      add(absent[k].first, absent[k].second);
    }
  } else {
    while (edges.size() < num_edges) {
      NodeIndex u = static_cast<NodeIndex>(rng.below(num_nodes));
      NodeIndex v = static_cast<NodeIndex>(rng.below(num_nodes));
      if (u != v) add(u, v);
    }
  }
  return WeightedGraph(std::move(weights), std::move(edges), start);
}

// Stack 0/1 adjacency matrices into a [batch, n, n] tensor.
inline Tensor to_adjacency_tensor(const std::vector<WeightedGraph>& graphs) {
  if (graphs.empty()) throw ValidationError("to_adjacency_tensor: empty batch");
  const std::size_t n = graphs.front().node_count();
  Tensor out({graphs.size(), n, n});
  for (std::size_t b = 0; b < graphs.size(); ++b) {
    if (graphs[b].node_count() != n)
      throw ValidationError("to_adjacency_tensor: graph " + std::to_string(b) + " has " +
                            std::to_string(graphs[b].node_count()) + " nodes, expected " +
                            std::to_string(n));
    for (auto [u, v] : graphs[b].edges()) {
      out.values[(b * n + u) * n + v] = 1.0;
      out.values[(b * n + v) * n + u] = 1.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph files
// ---------------------------------------------------------------------------

inline constexpr int kGraphFormatVersion = 1;

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string graph_to_json(const WeightedGraph& g) {
  std::ostringstream out;
  out << "{\n  \"version\": " << kGraphFormatVersion << ",\n  \"num_nodes\": " << g.node_count()
      << ",\n  \"start_index\": " << g.start_index() << ",\n  \"weights\": [";
  for (std::size_t i = 0; i < g.node_count(); ++i)
    out << (i ? ", " : "") << format_double(g.weight(i));
  out << "],\n  \"edges\": [";
  for (std::size_t i = 0; i < g.edges().size(); ++i)
    out << (i ? ", " : "") << '[' << g.edges()[i].first << ", " << g.edges()[i].second << ']';
  out << "]\n}\n";
  return out.str();
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& doc, const char* name) {
  if (!doc.is_object() || !doc.contains(name)) throw ParseError(name, "missing");
  return doc.at(name);
}

inline std::size_t require_index(const nlohmann::json& v, const std::string& field) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ParseError(field, "expected a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace detail

inline WeightedGraph graph_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("<document>", e.what());
  }
  const auto& version = detail::require_field(doc, "version");
  if (!version.is_number_integer() || version.get<int>() != kGraphFormatVersion)
    throw ParseError("version", "unsupported graph format version");
  const std::size_t n = detail::require_index(detail::require_field(doc, "num_nodes"), "num_nodes");
  const std::size_t start =
      detail::require_index(detail::require_field(doc, "start_index"), "start_index");
  const auto& jw = detail::require_field(doc, "weights");
  if (!jw.is_array()) throw ParseError("weights", "expected an array");
  if (jw.size() != n)
    throw ParseError("weights", "expected " + std::to_string(n) + " entries, found " +
                                    std::to_string(jw.size()));
  std::vector<double> weights;
  for (std::size_t i = 0; i < jw.size(); ++i) {
    const std::string field = "weights[" + std::to_string(i) + "]";
    if (!jw[i].is_number()) throw ParseError(field, "expected a number");
    const double w = jw[i].get<double>();
    if (!(w >= 0.0 && w <= 1.0)) throw ParseError(field, "weight out of range [0,1]");
    weights.push_back(w);
  }
  if (n == 0) throw ParseError("num_nodes", "must be positive");
  if (start >= n) throw ParseError("start_index", "out of range");
  const auto& je = detail::require_field(doc, "edges");
  if (!je.is_array()) throw ParseError("edges", "expected an array");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < je.size(); ++i) {
    const std::string field = "edges[" + std::to_string(i) + "]";
    if (!je[i].is_array() || je[i].size() != 2) throw ParseError(field, "expected [u, v]");
    const std::size_t u = detail::require_index(je[i][0], field);
    const std::size_t v = detail::require_index(je[i][1], field);
    if (u >= n || v >= n) throw ParseError(field, "endpoint out of range");
    edges.push_back({u, v});
  }
  try {
    return WeightedGraph(std::move(weights), std::move(edges), start);
  } catch (const ParseError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ParseError("edges", e.what());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Write to a sibling temp file, then rename over the target.
inline void write_text_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << text;
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void save_graph(const WeightedGraph& g, const std::filesystem::path& path) {
  write_text_file_atomic(path, graph_to_json(g));
}

inline WeightedGraph load_graph(const std::filesystem::path& path) {
  return graph_from_json(read_text_file(path));
}

}  // namespace apgf
