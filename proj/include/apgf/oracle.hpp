#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "apgf/error.hpp"
#include "apgf/graph.hpp"
#include "apgf/parallel.hpp"
#include "apgf/rollout.hpp"

namespace apgf {

struct OracleEntry {
  double best_score = 0.0;
  std::vector<NodeIndex> best_path;  // start ... end node, simple
  std::uint64_t explored_path_count = 0;
};

struct OracleResult {
  NodeIndex start = 0;
  Aggregator aggregator = Aggregator::product;
  std::vector<OracleEntry> per_node;  // indexed by end node
  double wall_clock_seconds = 0.0;
};

struct OracleOptions {
  std::size_t max_nodes = 20;
  std::size_t threads = 0;  // 0: worker_count()
};

namespace detail {

// Extends current_path to every unvisited neighbour until end_node is reached;
// keeps the first path with the strictly highest score.
class SimplePathSearch {
 public:
  SimplePathSearch(const WeightedGraph& g, NodeIndex end, Aggregator agg)
      : graph_(g), end_(end), agg_(agg), on_path_(g.node_count(), 0) {}

  OracleEntry run(NodeIndex start) {
    visit(start, graph_.weight(start));
    return std::move(best_);
  }

 private:
  void visit(NodeIndex node, double score) {
    path_.push_back(node);
    on_path_[node] = 1;
    if (node == end_) {
      ++best_.explored_path_count;
      if (best_.best_path.empty() || score > best_.best_score) {
        best_.best_score = score;
        best_.best_path = path_;
      }
    } else {
      for (NodeIndex next : graph_.neighbors(node))
        if (!on_path_[next]) visit(next, extend_score(score, graph_.weight(next), agg_));
    }
    on_path_[node] = 0;
    path_.pop_back();
  }

  const WeightedGraph& graph_;
  NodeIndex end_;
  Aggregator agg_;
  std::vector<char> on_path_;
  std::vector<NodeIndex> path_;
  OracleEntry best_;
};

}  // namespace detail

// Exact maximum path score from the graph's start node to every node, by
// exhaustive enumeration of simple paths. Runtime is exponential; graphs above
// options.max_nodes are refused.
inline OracleResult brute_force_scores(const WeightedGraph& graph, const ScoreConfig& score,
                                       const OracleOptions& options = {}) {
  if (graph.node_count() > options.max_nodes)
    throw CapExceededError("brute-force oracle refused: graph has " +
                           std::to_string(graph.node_count()) + " nodes, cap is " +
                           std::to_string(options.max_nodes) +
                           " (raise the cap explicitly to run anyway; cost grows factorially)");
  const auto t0 = std::chrono::steady_clock::now();
  OracleResult result;
  result.start = graph.start_index();
  result.aggregator = score.aggregator;
  result.per_node.resize(graph.node_count());
  const std::size_t threads = options.threads ? options.threads : worker_count();
  parallel_for(graph.node_count(), threads, [&](std::size_t end) {
    result.per_node[end] =
        detail::SimplePathSearch(graph, end, score.aggregator).run(graph.start_index());
  });
  for (std::size_t v = 0; v < graph.node_count(); ++v)
    if (result.per_node[v].best_path.empty())
      throw ValidationError("oracle: node " + std::to_string(v) + " unreachable from start");
  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

inline nlohmann::json oracle_to_json(const OracleResult& r, const WeightedGraph& graph) {
  nlohmann::json doc;
  doc["format"] = "apgf-oracle";
  doc["version"] = 1;
  doc["graph"] = nlohmann::json::parse(graph_to_json(graph));
  doc["start"] = r.start;
  doc["aggregator"] = to_string(r.aggregator);
  doc["wall_clock_seconds"] = r.wall_clock_seconds;
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t v = 0; v < r.per_node.size(); ++v)
    nodes.push_back({{"node", v},
                     {"best_score", r.per_node[v].best_score},
                     {"best_path", r.per_node[v].best_path},
                     {"explored_path_count", r.per_node[v].explored_path_count}});
  doc["nodes"] = std::move(nodes);
  return doc;
}

// Parses an oracle document; returns nothing unless it was computed for
// exactly this graph and aggregator.
inline std::optional<OracleResult> oracle_from_json(const nlohmann::json& doc,
                                                    const WeightedGraph& graph,
                                                    Aggregator aggregator) {
  try {
    if (doc.at("format") != "apgf-oracle" || doc.at("version") != 1) return std::nullopt;
    if (!(graph_from_json(doc.at("graph").dump()) == graph)) return std::nullopt;
    if (parse_aggregator(doc.at("aggregator").get<std::string>()) != aggregator) return std::nullopt;
    OracleResult r;
    r.start = doc.at("start").get<NodeIndex>();
    r.aggregator = aggregator;
    r.wall_clock_seconds = doc.at("wall_clock_seconds").get<double>();
    for (const auto& node : doc.at("nodes"))
      r.per_node.push_back(OracleEntry{node.at("best_score").get<double>(),
                                       node.at("best_path").get<std::vector<NodeIndex>>(),
                                       node.at("explored_path_count").get<std::uint64_t>()});
    if (r.per_node.size() != graph.node_count()) return std::nullopt;
    return r;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  } catch (const ValidationError&) {
    return std::nullopt;
  }
}

struct ComparisonRow {
  NodeIndex node;
  double oracle_score;
  double model_score;
  double ratio;  // model / oracle; 0/0 counts as 1
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  double mean_ratio = 0.0;
  double max_abs_gap = 0.0;
};

inline ComparisonReport compare(const OracleResult& oracle, const RolloutResult& rollout) {
  if (oracle.per_node.size() != rollout.per_node_score.size())
    throw ValidationError("compare: oracle covers " + std::to_string(oracle.per_node.size()) +
                          " nodes, rollout covers " +
                          std::to_string(rollout.per_node_score.size()));
  if (!rollout.visit_order.empty() && rollout.visit_order.front() != oracle.start)
    throw ValidationError("compare: rollout and oracle use different start nodes");
  ComparisonReport report;
  double ratio_sum = 0.0;
  for (std::size_t v = 0; v < oracle.per_node.size(); ++v) {
    const double o = oracle.per_node[v].best_score;
    const double m = rollout.per_node_score[v];
    const double ratio = (o == 0.0 && m == 0.0) ? 1.0 : m / o;
    report.rows.push_back({v, o, m, ratio});
    ratio_sum += ratio;
    report.max_abs_gap = std::max(report.max_abs_gap, std::abs(o - m));
  }
  report.mean_ratio = report.rows.empty() ? 1.0 : ratio_sum / static_cast<double>(report.rows.size());
  return report;
}

inline std::string comparison_to_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out << "node,oracle_score,model_score,ratio\n";
  for (const auto& row : report.rows)
    out << row.node << ',' << format_double(row.oracle_score) << ','
        << format_double(row.model_score) << ',' << format_double(row.ratio) << '\n';
  return out.str();
}

}  // namespace apgf
