#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "apgf/trainer.hpp"

namespace {

using apgf::TrainConfig;
using apgf::WeightedGraph;

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 4;
  c.graphs_per_epoch = 3;
  c.num_nodes = 8;
  c.num_edges = 11;
  c.baseline_sync_period = 2;
  c.seed = 5;
  c.model.d_h = 8;
  c.model.heads = 2;
  c.model.d_ff = 6;
  return c;
}

TEST(ReinforceLoss, Values) {
  apgf::Tape tape;
  const std::vector<apgf::Var> terms = {tape.scalar(-0.5), tape.scalar(-1.5)};
  EXPECT_DOUBLE_EQ(apgf::reinforce_loss(tape, 1.0, 0.0, terms).item(), 2.0);
  EXPECT_EQ(apgf::reinforce_loss(tape, 0.7, 0.7, terms).item(), 0.0);
  EXPECT_EQ(apgf::reinforce_loss(tape, 0.7, 0.2, {}).item(), 0.0);
}

// A positive advantage on a chosen action must raise its probability after
// one optimiser step.
TEST(ReinforceLoss, PositiveAdvantageRaisesChosenProbability) {
  apgf::ModelConfig mc;
  mc.d_h = 8;
  mc.heads = 2;
  mc.d_ff = 6;
  apgf::ModelParams p = apgf::init_params(mc, 12);
  const WeightedGraph star({0.8, 0.3, 0.6}, {{0, 1}, {0, 2}}, 0);
  auto prob_of = [&](apgf::NodeIndex node) {
    const auto scores = apgf::decoder_scores(apgf::encode_values(star, p), 0, {1, 2}, p.decoder);
    return apgf::candidate_probs(scores, 1.0).at(node);
  };
  for (apgf::NodeIndex chosen : {1u, 2u}) {
    p = apgf::init_params(mc, 12);
    const double before = prob_of(chosen);
    apgf::Tape tape;
    apgf::Rng rng(0);
    apgf::DecodeOptions opts;
    opts.replay_choices = std::vector<apgf::NodeIndex>{chosen, chosen == 1 ? 2u : 1u};
    const auto r = apgf::decode_all(tape, star, p, 0, opts, rng);
    ASSERT_EQ(r.log_prob_terms.size(), 1u);
    apgf::Var loss = apgf::reinforce_loss(tape, 1.0, 0.0, r.log_prob_terms);
    apgf::backward_into(tape, loss, [&](auto&& f) { p.for_each(f); });
    apgf::AdamState adam;
    adam.config.learning_rate = 1e-2;
    apgf::adam_step(p.tensors(), adam);
    EXPECT_GT(prob_of(chosen), before) << "chosen " << chosen;
  }
}

TEST(Train, ZeroEpochsReturnsInitialParams) {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  const auto result = apgf::train(c);
  EXPECT_TRUE(result.metrics.empty());
  EXPECT_EQ(result.params, apgf::initial_params(c));
  EXPECT_EQ(apgf::metrics_to_csv(result.metrics), std::string(apgf::kMetricsHeader) + "\n");
}

TEST(Train, SyncCallbackSeesPolicy) {
  TrainConfig c = tiny_config();
  std::vector<std::size_t> synced;
  apgf::ModelParams last;
  const auto result = apgf::train(c, [&](std::size_t epoch, const apgf::ModelParams& p) {
    synced.push_back(epoch);
    last = p;
  });
  EXPECT_EQ(synced, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(last, result.params);
  for (const auto& m : result.metrics) EXPECT_EQ(m.synced_baseline, (m.epoch + 1) % 2 == 0);
  const auto g = apgf::generate_random_graph(8, 11, 99);
  EXPECT_EQ(apgf::greedy_reward(g, last, 0, {}), apgf::greedy_reward(g, result.params, 0, {}));
}

TEST(Train, BitReproducible) {
  const auto a = apgf::train(tiny_config());
  const auto b = apgf::train(tiny_config());
  EXPECT_EQ(apgf::metrics_to_csv(a.metrics), apgf::metrics_to_csv(b.metrics));
  EXPECT_EQ(apgf::checkpoint_to_string(a.params), apgf::checkpoint_to_string(b.params));
  TrainConfig other = tiny_config();
  other.seed = 6;
  EXPECT_NE(apgf::metrics_to_csv(a.metrics), apgf::metrics_to_csv(apgf::train(other).metrics));
}

TEST(Train, ResampledModeRuns) {
  TrainConfig c = tiny_config();
  c.dataset_mode = apgf::DatasetMode::resampled;
  const auto result = apgf::train(c);
  EXPECT_EQ(result.metrics.size(), 4u);
  for (const auto& m : result.metrics) EXPECT_TRUE(std::isfinite(m.mean_loss));
}

TEST(Train, TreesGiveZeroLoss) {
  // Every DFS order of a tree reaches each node along its unique path, so
  // reward equals baseline.
  TrainConfig c = tiny_config();
  c.num_edges = c.num_nodes - 1;
  for (const auto& m : apgf::train(c).metrics) {
    EXPECT_EQ(m.mean_loss, 0.0);
    EXPECT_EQ(m.mean_reward, m.baseline_mean_reward);
  }
}

TEST(Train, ValidationListsEveryField) {
  TrainConfig c = tiny_config();
  c.learning_rate = -1.0;
  c.graphs_per_epoch = 0;
  c.num_edges = 2;
  c.temperature = 0.0;
  try {
    apgf::train(c);
    FAIL();
  } catch (const apgf::ValidationError& e) {
    const std::string msg = e.what();
    for (const char* field : {"learning_rate", "graphs_per_epoch", "num_edges", "temperature"})
      EXPECT_NE(msg.find(field), std::string::npos) << field;
  }
}

TEST(TrainConfigJson, ParsesAndRejects) {
  const auto c = apgf::train_config_from_json(
      nlohmann::json::parse(R"({"epochs": 3, "learning_rate": 0.01, "aggregator": "sum", "d_h": 16})"));
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.score.aggregator, apgf::Aggregator::sum);
  EXPECT_EQ(c.model.d_h, 16u);
  EXPECT_EQ(c.num_nodes, 20u);
  const auto round = apgf::train_config_from_json(apgf::to_json(c));
  EXPECT_EQ(apgf::to_json(round), apgf::to_json(c));
  try {
    apgf::train_config_from_json(nlohmann::json::parse(R"({"epoch": 3, "heads": -1})"));
    FAIL();
  } catch (const apgf::ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch:"), std::string::npos);
    EXPECT_NE(msg.find("heads"), std::string::npos);
  }
}

TEST(Evaluate, TreeAndSingleNode) {
  const auto p = apgf::init_params(tiny_config().model, 3);
  const std::vector<WeightedGraph> graphs = {
      WeightedGraph({0.9, 0.2, 0.5, 0.7}, {{0, 1}, {1, 2}, {1, 3}}, 0),
      WeightedGraph({0.4}, {}, 0),
      apgf::generate_random_graph(9, 14, 2),
  };
  const auto report = apgf::evaluate(p, graphs, {});
  ASSERT_EQ(report.graphs.size(), 3u);
  EXPECT_EQ(report.graphs[0].comparison->mean_ratio, 1.0);
  EXPECT_EQ(report.graphs[1].comparison->mean_ratio, 1.0);
  EXPECT_EQ(report.graphs[1].greedy_reward, 0.4);
  for (const auto& row : report.graphs[2].comparison->rows) EXPECT_LE(row.ratio, 1.0 + 1e-12);
  apgf::OracleOptions capped;
  capped.max_nodes = 5;
  const auto partial = apgf::evaluate(p, graphs, {}, capped);
  EXPECT_FALSE(partial.graphs[2].comparison.has_value());
}

TEST(MetricsCsv, RoundTrip) {
  std::vector<apgf::EpochMetrics> m = {{0, -0.125, 3.5, 3.25, 0.5, false}, {1, 1.0 / 3.0, 2.0, 2.5, 0.25, true}};
  const auto back = apgf::metrics_from_csv(apgf::metrics_to_csv(m, true));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].mean_loss, 1.0 / 3.0);
  EXPECT_EQ(back[1].wall_clock_seconds, 0.25);
  EXPECT_TRUE(back[1].synced_baseline);
  EXPECT_EQ(apgf::metrics_from_csv(apgf::metrics_to_csv(m))[0].wall_clock_seconds, 0.0);
  EXPECT_THROW(apgf::metrics_from_csv("epoch,loss\n"), apgf::ParseError);
  EXPECT_THROW(apgf::metrics_from_csv(std::string(apgf::kMetricsHeader) + "\n1,2\n"), apgf::ParseError);
}

}  // namespace
