#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "apgf/error.hpp"
#include "apgf/graph.hpp"
#include "apgf/model.hpp"
#include "apgf/random.hpp"
#include "apgf/tape.hpp"

namespace apgf {

enum class Aggregator { product, sum };

enum class RewardMode {
  per_node_path_scores,  // sum over nodes of the score of the DFS-tree path start→node
  literal_weight_sum,    // sum of the weights of the selected nodes
};

struct ScoreConfig {
  Aggregator aggregator = Aggregator::product;
  RewardMode reward_mode = RewardMode::per_node_path_scores;

  friend bool operator==(const ScoreConfig&, const ScoreConfig&) = default;
};

inline const char* to_string(Aggregator a) { return a == Aggregator::product ? "product" : "sum"; }
inline const char* to_string(RewardMode m) {
  return m == RewardMode::per_node_path_scores ? "per_node_path_scores" : "literal_weight_sum";
}
inline Aggregator parse_aggregator(const std::string& s) {
  if (s == "product") return Aggregator::product;
  if (s == "sum") return Aggregator::sum;
  throw ValidationError("aggregator must be 'product' or 'sum', got '" + s + "'");
}
inline RewardMode parse_reward_mode(const std::string& s) {
  if (s == "per_node_path_scores") return RewardMode::per_node_path_scores;
  if (s == "literal_weight_sum") return RewardMode::literal_weight_sum;
  throw ValidationError("reward_mode must be 'per_node_path_scores' or 'literal_weight_sum', got '" +
                        s + "'");
}

// Extends a path score by one more node. Rollout, oracle and path_score all
// fold with this so equal paths give bit-equal scores.
inline double extend_score(double score, double weight, Aggregator aggregator) {
  return aggregator == Aggregator::product ? score * weight : score + weight;
}

// Left fold of the weights along a path.
inline double path_score(std::span<const double> weights, Aggregator aggregator) {
  if (weights.empty()) throw ValidationError("path_score: empty path");
  double score = weights[0];
  for (std::size_t i = 1; i < weights.size(); ++i) score = extend_score(score, weights[i], aggregator);
  return score;
}

inline double path_score_of(const WeightedGraph& g, std::span<const NodeIndex> path,
                            Aggregator aggregator) {
  std::vector<double> w;
  for (NodeIndex v : path) w.push_back(g.weight(v));
  return path_score(w, aggregator);
}

enum class DecodeMode { sample, greedy };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::sample;
  double temperature = 1.0;
  ScoreConfig score;
  // When set, selection step k takes replay_choices[k] instead of sampling.
  std::optional<std::vector<NodeIndex>> replay_choices;
};

// One row per selection step.
struct TraceRow {
  NodeIndex selected;
  std::vector<NodeIndex> neighbors;  // unvisited neighbours of `selected`
  NodeIndex next;
  std::vector<NodeIndex> visited;    // in visit order, after the move
  std::vector<NodeIndex> stack;      // bottom to top, after the move
};

struct RolloutResult {
  std::vector<NodeIndex> visit_order;
  std::vector<std::optional<NodeIndex>> dfs_parent;  // indexed by node; empty for start
  std::vector<double> step_log_probs;                // one per selection step
  std::vector<Var> log_prob_terms;                   // tape values for steps with ≥2 candidates
  std::vector<double> per_node_score;                // indexed by node
  double reward = 0.0;
  std::vector<TraceRow> branch_trace;
};

// Stack-based DFS traversal. At each node the unvisited neighbours are the
// candidates; a node with two or more candidates is remembered as a branch
// point; the scorer ranks candidates and the next node is sampled (or taken
// greedily); with no candidates the most recent branch point that still has
// unvisited neighbours is resumed.
//
// Scorer: (NodeIndex current, const std::vector<NodeIndex>& candidates) -> Var
// holding one score per candidate, recorded on `tape`.
template <class Scorer>
RolloutResult decode_all(Tape& tape, const WeightedGraph& graph, NodeIndex start, Scorer&& scorer,
                         const DecodeOptions& options, Rng& rng) {
  const std::size_t n = graph.node_count();
  if (start >= n) throw ValidationError("decode_all: start node out of range");
  if (!(options.temperature > 0.0)) throw ValidationError("temperature must be positive");
  const Aggregator agg = options.score.aggregator;

  RolloutResult r;
  r.dfs_parent.assign(n, std::nullopt);
  r.per_node_score.assign(n, 0.0);
  std::vector<char> visited(n, 0);
  std::vector<NodeIndex> stack;

  visited[start] = 1;
  r.visit_order.push_back(start);
  r.per_node_score[start] = graph.weight(start);
  double literal = 0.0;

  auto unvisited_neighbors = [&](NodeIndex v) {
    std::vector<NodeIndex> out;
    for (NodeIndex u : graph.neighbors(v))
      if (!visited[u]) out.push_back(u);
    return out;
  };

  NodeIndex current = start;
  while (true) {
    std::vector<NodeIndex> candidates = unvisited_neighbors(current);
    if (candidates.empty()) {
      bool resumed = false;
      while (!stack.empty()) {
        NodeIndex top = stack.back();
        stack.pop_back();
        if (!unvisited_neighbors(top).empty()) {
          current = top;
          resumed = true;
          break;
        }
      }
      if (resumed) continue;
      if (r.visit_order.size() != n)
        throw ValidationError("decode_all: " + std::to_string(n - r.visit_order.size()) +
                              " node(s) unreachable from start " + std::to_string(start));
      break;
    }

    if (candidates.size() >= 2) stack.push_back(current);

    const std::size_t step = r.step_log_probs.size();
    std::size_t choice = 0;
    double log_prob = 0.0;
    if (candidates.size() >= 2) {
      Var scores = scorer(current, candidates);
      if (scores.tape != &tape) throw ValidationError("decode_all: scorer recorded on a different tape");
      if (scores.shape() != Shape{candidates.size(), 1})
        throw ValidationError("decode_all: scorer must return one score per candidate as a column");
      const std::vector<double> sv = scores.values();
      Var logits = mul_scalar(transpose(scores), 1.0 / options.temperature);
      Var probs = masked_softmax(logits, std::vector<unsigned char>(candidates.size(), 1));
      if (options.replay_choices) {
        if (step >= options.replay_choices->size())
          throw ValidationError("decode_all: replay sequence too short");
        const NodeIndex wanted = (*options.replay_choices)[step];
        choice = candidates.size();
        for (std::size_t i = 0; i < candidates.size(); ++i)
          if (candidates[i] == wanted) choice = i;
        if (choice == candidates.size())
          throw ValidationError("decode_all: replayed node is not a candidate");
      } else if (options.mode == DecodeMode::greedy) {
        for (std::size_t i = 1; i < sv.size(); ++i)
          if (sv[i] > sv[choice]) choice = i;
      } else {
        const double u = rng.uniform();
        const auto& pv = probs.values();
        double cumulative = 0.0;
        choice = candidates.size() - 1;
        for (std::size_t i = 0; i < pv.size(); ++i) {
          cumulative += pv[i];
          if (u < cumulative) {
            choice = i;
            break;
          }
        }
      }
      Var lp = log(pick(probs, choice));
      log_prob = lp.item();
      r.log_prob_terms.push_back(lp);
    } else if (options.replay_choices) {
      if (step >= options.replay_choices->size() ||
          (*options.replay_choices)[step] != candidates[0])
        throw ValidationError("decode_all: replay sequence disagrees with a forced step");
    }

    const NodeIndex next = candidates[choice];
    r.step_log_probs.push_back(log_prob);
    r.dfs_parent[next] = current;
    visited[next] = 1;
    r.visit_order.push_back(next);
    r.per_node_score[next] = extend_score(r.per_node_score[current], graph.weight(next), agg);
    literal += graph.weight(next);
    r.branch_trace.push_back(TraceRow{current, candidates, next, r.visit_order, stack});
    current = next;
  }

  if (options.score.reward_mode == RewardMode::per_node_path_scores) {
    for (double s : r.per_node_score) r.reward += s;
  } else {
    r.reward = literal;
  }
  return r;
}

// Model-driven traversal: encode the graph, then score candidates with the
// decoder.
inline RolloutResult decode_all(Tape& tape, const WeightedGraph& graph, const ModelParams& params,
                                NodeIndex start, const DecodeOptions& options, Rng& rng) {
  Var embeddings = encode(tape, graph, params);
  DecoderContext ctx = prepare_decoder(tape, embeddings, params.decoder);
  return decode_all(
      tape, graph, start,
      [&](NodeIndex current, const std::vector<NodeIndex>& candidates) {
        return decoder_scores(ctx, current, candidates);
      },
      options, rng);
}

inline RolloutResult greedy_rollout(const WeightedGraph& graph, const ModelParams& params,
                                    NodeIndex start, const ScoreConfig& score) {
  Tape tape;
  Rng unused(0);
  DecodeOptions options;
  options.mode = DecodeMode::greedy;
  options.score = score;
  RolloutResult r = decode_all(tape, graph, params, start, options, unused);
  r.log_prob_terms.clear();
  return r;
}

inline double greedy_reward(const WeightedGraph& graph, const ModelParams& params, NodeIndex start,
                            const ScoreConfig& score) {
  return greedy_rollout(graph, params, start, score).reward;
}

namespace detail {
inline std::string join_nodes(const std::vector<NodeIndex>& nodes) {
  std::string out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(nodes[i]);
  }
  return out;
}
}  // namespace detail

// Trace dump with one line per selection step; list cells are space-separated.
inline std::string trace_to_csv(const RolloutResult& r) {
  std::ostringstream out;
  out << "step,selected,neighbors,next,visited,stack\n";
  for (std::size_t i = 0; i < r.branch_trace.size(); ++i) {
    const TraceRow& row = r.branch_trace[i];
    out << i << ',' << row.selected << ',' << detail::join_nodes(row.neighbors) << ',' << row.next
        << ',' << detail::join_nodes(row.visited) << ',' << detail::join_nodes(row.stack) << '\n';
  }
  return out.str();
}

}  // namespace apgf
