#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "apgf/adam.hpp"
#include "apgf/error.hpp"
#include "apgf/graph.hpp"
#include "apgf/model.hpp"
#include "apgf/oracle.hpp"
#include "apgf/parallel.hpp"
#include "apgf/random.hpp"
#include "apgf/rollout.hpp"
#include "apgf/tape.hpp"

namespace apgf {

enum class DatasetMode {
  fixed,      // graphs generated once and reused every epoch
  resampled,  // fresh graphs every epoch
};

inline const char* to_string(DatasetMode m) { return m == DatasetMode::fixed ? "fixed" : "resampled"; }
inline DatasetMode parse_dataset_mode(const std::string& s) {
  if (s == "fixed") return DatasetMode::fixed;
  if (s == "resampled") return DatasetMode::resampled;
  throw ValidationError("dataset_mode must be 'fixed' or 'resampled', got '" + s + "'");
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t graphs_per_epoch = 16;
  std::size_t num_nodes = 20;
  std::size_t num_edges = 25;
  double learning_rate = 1e-3;
  std::size_t baseline_sync_period = 10;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  ScoreConfig score;
  DatasetMode dataset_mode = DatasetMode::fixed;
  ModelConfig model;

  // Collects every invalid field before throwing, one per line.
  void validate() const {
    std::vector<std::string> problems;
    if (graphs_per_epoch == 0) problems.push_back("graphs_per_epoch must be positive");
    if (num_nodes == 0) problems.push_back("num_nodes must be positive");
    if (num_nodes > 0 && num_edges + 1 < num_nodes)
      problems.push_back("num_edges cannot connect num_nodes (need at least num_nodes - 1)");
    if (num_nodes > 0 && num_edges > num_nodes * (num_nodes - 1) / 2)
      problems.push_back("num_edges exceeds the simple-graph maximum for num_nodes");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      problems.push_back("learning_rate must be positive");
    if (baseline_sync_period == 0) problems.push_back("baseline_sync_period must be at least 1");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      problems.push_back("temperature must be positive");
    try {
      model.validate();
    } catch (const ValidationError& e) {
      problems.push_back(std::string("model: ") + e.what());
    }
    if (problems.empty()) return;
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"graphs_per_epoch", c.graphs_per_epoch},
          {"num_nodes", c.num_nodes},
          {"num_edges", c.num_edges},
          {"learning_rate", c.learning_rate},
          {"baseline_sync_period", c.baseline_sync_period},
          {"temperature", c.temperature},
          {"seed", c.seed},
          {"aggregator", to_string(c.score.aggregator)},
          {"reward_mode", to_string(c.score.reward_mode)},
          {"dataset_mode", to_string(c.dataset_mode)},
          {"d_h", c.model.d_h},
          {"heads", c.model.heads},
          {"d_ff", c.model.d_ff},
          {"C", c.model.clip}};
}

// Fields absent from `doc` keep their defaults; unknown fields are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("<document>", "expected an object");
  TrainConfig c;
  std::vector<std::string> problems;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    try {
      auto count = [&]() {
        if (!v.is_number_unsigned()) throw ValidationError("expected a non-negative integer");
        return v.get<std::size_t>();
      };
      auto real = [&]() {
        if (!v.is_number()) throw ValidationError("expected a number");
        return v.get<double>();
      };
      if (key == "epochs") c.epochs = count();
      else if (key == "graphs_per_epoch") c.graphs_per_epoch = count();
      else if (key == "num_nodes") c.num_nodes = count();
      else if (key == "num_edges") c.num_edges = count();
      else if (key == "learning_rate") c.learning_rate = real();
      else if (key == "baseline_sync_period") c.baseline_sync_period = count();
      else if (key == "temperature") c.temperature = real();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "aggregator") c.score.aggregator = parse_aggregator(v.get<std::string>());
      else if (key == "reward_mode") c.score.reward_mode = parse_reward_mode(v.get<std::string>());
      else if (key == "dataset_mode") c.dataset_mode = parse_dataset_mode(v.get<std::string>());
      else if (key == "d_h") c.model.d_h = count();
      else if (key == "heads") c.model.heads = count();
      else if (key == "d_ff") c.model.d_ff = count();
      else if (key == "C") c.model.clip = real();
      else throw ValidationError("unknown field");
    } catch (const std::exception& e) {
      problems.push_back(key + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  c.validate();
  return c;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double mean_reward = 0.0;
  double baseline_mean_reward = 0.0;
  double wall_clock_seconds = 0.0;
  bool synced_baseline = false;
};

// L = -(reward - baseline) * sum(log p). Reward and baseline are constants;
// only the log-probability terms carry gradient.
inline Var reinforce_loss(Tape& tape, double reward, double baseline_reward,
                          const std::vector<Var>& log_prob_terms) {
  const double advantage = reward - baseline_reward;
  if (log_prob_terms.empty()) {
    if (advantage != 0.0)
      std::cerr << "warning: rollout made no choices; reinforce loss is 0 despite advantage "
                << advantage << '\n';
    return tape.scalar(0.0);
  }
  Var total = log_prob_terms.front();
  for (std::size_t i = 1; i < log_prob_terms.size(); ++i) total = add(total, log_prob_terms[i]);
  return mul_scalar(total, -advantage);
}

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;
  double total_wall_clock_seconds = 0.0;
};

struct TrainSeeds {
  std::uint64_t init, data, rollout;
  explicit TrainSeeds(std::uint64_t seed)
      : init(Rng::mix(seed ^ 0x1)), data(Rng::mix(seed ^ 0x2)), rollout(Rng::mix(seed ^ 0x3)) {}
};

inline std::vector<WeightedGraph> make_dataset(std::size_t count, std::size_t num_nodes,
                                               std::size_t num_edges, std::uint64_t seed) {
  std::vector<WeightedGraph> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(generate_random_graph(num_nodes, num_edges, Rng::mix(seed + i)));
  return out;
}

inline ModelParams initial_params(const TrainConfig& config) {
  return init_params(config.model, TrainSeeds(config.seed).init);
}

using SyncCallback = std::function<void(std::size_t epoch, const ModelParams& policy)>;

// Policy-gradient training against a greedy-rollout baseline network. One
// Adam step per epoch on the loss averaged over the epoch's graphs; the
// baseline takes a full copy of the policy every baseline_sync_period epochs.
inline TrainResult train(const TrainConfig& config, const SyncCallback& on_sync = {}) {
  config.validate();
  const auto run_start = std::chrono::steady_clock::now();
  const TrainSeeds seeds(config.seed);

  ModelParams policy = init_params(config.model, seeds.init);
  ModelParams baseline = policy;
  baseline.set_requires_grad(false);
  AdamState adam;
  adam.config.learning_rate = config.learning_rate;
  Rng rng(seeds.rollout);

  std::vector<WeightedGraph> graphs;
  if (config.dataset_mode == DatasetMode::fixed)
    graphs = make_dataset(config.graphs_per_epoch, config.num_nodes, config.num_edges, seeds.data);

  DecodeOptions sample;
  sample.mode = DecodeMode::sample;
  sample.temperature = config.temperature;
  sample.score = config.score;

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    if (config.dataset_mode == DatasetMode::resampled)
      graphs = make_dataset(config.graphs_per_epoch, config.num_nodes, config.num_edges,
                            seeds.data + (epoch + 1) * config.graphs_per_epoch);

    Tape tape;
    std::optional<Var> total;
    double reward_sum = 0.0, baseline_sum = 0.0;
    for (const WeightedGraph& graph : graphs) {
      const NodeIndex start = static_cast<NodeIndex>(rng.below(graph.node_count()));
      RolloutResult rollout = decode_all(tape, graph, policy, start, sample, rng);
      const double base = greedy_reward(graph, baseline, start, config.score);
      Var loss = reinforce_loss(tape, rollout.reward, base, rollout.log_prob_terms);
      total = total ? add(*total, loss) : loss;
      reward_sum += rollout.reward;
      baseline_sum += base;
    }
    const double count = static_cast<double>(graphs.size());
    Var mean_loss = mul_scalar(*total, 1.0 / count);
    if (!std::isfinite(mean_loss.item()))
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
    try {
      backward_into(tape, mean_loss, [&](auto&& f) { policy.for_each(f); });
      adam_step(policy.tensors(), adam);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what() + " (mean loss " +
                         std::to_string(mean_loss.item()) + ")");
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.mean_loss = mean_loss.item();
    m.mean_reward = reward_sum / count;
    m.baseline_mean_reward = baseline_sum / count;
    if ((epoch + 1) % config.baseline_sync_period == 0) {
      baseline.copy_values_from(policy);
      m.synced_baseline = true;
      if (on_sync) on_sync(epoch, policy);
    }
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.metrics.push_back(m);
  }
  result.params = std::move(policy);
  result.total_wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
  return result;
}

struct GraphEvaluation {
  double greedy_reward = 0.0;
  std::optional<ComparisonReport> comparison;  // absent when the graph exceeds the oracle cap
};

struct EvaluationReport {
  std::vector<GraphEvaluation> graphs;
  double mean_reward = 0.0;
  double mean_ratio = 0.0;  // over graphs with a comparison; 1 when none
};

// Greedy rollout from each graph's start node, compared against the oracle
// for graphs within the cap.
inline EvaluationReport evaluate(const ModelParams& params, const std::vector<WeightedGraph>& graphs,
                                 const ScoreConfig& score, const OracleOptions& oracle = {}) {
  EvaluationReport report;
  report.graphs.resize(graphs.size());
  OracleOptions inner = oracle;
  inner.threads = 1;
  parallel_for(graphs.size(), oracle.threads ? oracle.threads : worker_count(), [&](std::size_t i) {
    const WeightedGraph& g = graphs[i];
    RolloutResult r = greedy_rollout(g, params, g.start_index(), score);
    report.graphs[i].greedy_reward = r.reward;
    if (g.node_count() <= oracle.max_nodes)
      report.graphs[i].comparison = compare(brute_force_scores(g, score, inner), r);
  });
  double reward_sum = 0.0, ratio_sum = 0.0;
  std::size_t compared = 0;
  for (const auto& e : report.graphs) {
    reward_sum += e.greedy_reward;
    if (e.comparison) {
      ratio_sum += e.comparison->mean_ratio;
      ++compared;
    }
  }
  report.mean_reward = graphs.empty() ? 0.0 : reward_sum / static_cast<double>(graphs.size());
  report.mean_ratio = compared ? ratio_sum / static_cast<double>(compared) : 1.0;
  return report;
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "epoch,mean_loss,mean_reward,baseline_mean_reward,wall_clock_seconds,synced_baseline";

// With include_wall_clock false the wall_clock_seconds column is written as 0
// so that reruns produce byte-identical files.
inline std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics,
                                  bool include_wall_clock = false) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  for (const auto& m : metrics)
    out << m.epoch << ',' << format_double(m.mean_loss) << ',' << format_double(m.mean_reward) << ','
        << format_double(m.baseline_mean_reward) << ','
        << format_double(include_wall_clock ? m.wall_clock_seconds : 0.0) << ','
        << (m.synced_baseline ? 1 : 0) << '\n';
  return out.str();
}

inline std::vector<EpochMetrics> metrics_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw ParseError("header", "expected '" + std::string(kMetricsHeader) + "'");
  std::vector<EpochMetrics> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != 6) throw ParseError(where, "expected 6 columns");
    try {
      EpochMetrics m;
      m.epoch = std::stoul(cells[0]);
      m.mean_loss = std::stod(cells[1]);
      m.mean_reward = std::stod(cells[2]);
      m.baseline_mean_reward = std::stod(cells[3]);
      m.wall_clock_seconds = std::stod(cells[4]);
      m.synced_baseline = cells[5] == "1";
      out.push_back(m);
    } catch (const std::logic_error&) {
      throw ParseError(where, "malformed number");
    }
  }
  return out;
}

}  // namespace apgf
