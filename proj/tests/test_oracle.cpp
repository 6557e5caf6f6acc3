#include <cmath>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "apgf/oracle.hpp"
#include "support/permutation_oracle.hpp"

namespace {

using apgf::Aggregator;
using apgf::NodeIndex;
using apgf::ScoreConfig;
using apgf::WeightedGraph;

const std::filesystem::path kFixtures = APGF_FIXTURE_DIR;

ScoreConfig with(Aggregator a) {
  ScoreConfig s;
  s.aggregator = a;
  return s;
}

TEST(BruteForce, UnitWeightsGiveOne) {
  const WeightedGraph g({1, 1, 1, 1, 1}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}}, 0);
  const auto r = apgf::brute_force_scores(g, {});
  for (const auto& e : r.per_node) EXPECT_EQ(e.best_score, 1.0);
}

TEST(BruteForce, StarLeavesAreDirect) {
  const WeightedGraph g({0.9, 0.2, 0.5, 0.7}, {{0, 1}, {0, 2}, {0, 3}}, 0);
  const auto r = apgf::brute_force_scores(g, {});
  for (NodeIndex leaf = 1; leaf < 4; ++leaf) {
    EXPECT_EQ(r.per_node[leaf].best_path, (std::vector<NodeIndex>{0, leaf}));
    EXPECT_EQ(r.per_node[leaf].best_score, 0.9 * g.weight(leaf));
    EXPECT_EQ(r.per_node[leaf].explored_path_count, 1u);
  }
  EXPECT_EQ(r.per_node[0].best_path, std::vector<NodeIndex>{0});
}

TEST(BruteForce, PrefersHeavierDetour) {
  // 0-1-3 is short; 0-2-4-3 keeps more weight under the sum.
  const WeightedGraph g({0.5, 0.1, 0.9, 0.4, 0.8}, {{0, 1}, {1, 3}, {0, 2}, {2, 4}, {3, 4}}, 0);
  const auto sum = apgf::brute_force_scores(g, with(Aggregator::sum));
  EXPECT_EQ(sum.per_node[3].best_path, (std::vector<NodeIndex>{0, 2, 4, 3}));
  EXPECT_DOUBLE_EQ(sum.per_node[3].best_score, 0.5 + 0.9 + 0.8 + 0.4);
  EXPECT_EQ(sum.per_node[3].explored_path_count, 2u);
}

TEST(BruteForce, AgreesWithPermutationChecker) {
  apgf::Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = apgf::generate_random_graph(7, 8 + rng.below(6), rng.next_u64());
    for (bool product : {true, false}) {
      const auto r = apgf::brute_force_scores(g, with(product ? Aggregator::product : Aggregator::sum));
      const auto expected = apgf::testing::permutation_best_scores(g, product);
      for (NodeIndex v = 0; v < 7; ++v) {
        EXPECT_EQ(r.per_node[v].best_score, expected[v]) << "node " << v;
        EXPECT_EQ(apgf::path_score_of(g, r.per_node[v].best_path,
                                      product ? Aggregator::product : Aggregator::sum),
                  r.per_node[v].best_score);
        EXPECT_EQ(r.per_node[v].best_path.front(), g.start_index());
        EXPECT_EQ(r.per_node[v].best_path.back(), v);
      }
    }
  }
}

TEST(BruteForce, CapRefusesWithGuidance) {
  const auto g = apgf::generate_random_graph(25, 30, 1);
  try {
    apgf::brute_force_scores(g, {});
    FAIL();
  } catch (const apgf::CapExceededError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("25"), std::string::npos);
    EXPECT_NE(msg.find("20"), std::string::npos);
  }
  apgf::OracleOptions small;
  small.max_nodes = 4;
  EXPECT_THROW(apgf::brute_force_scores(apgf::generate_random_graph(5, 4, 1), {}, small),
               apgf::CapExceededError);
}

TEST(BruteForce, DominatesAnyRollout) {
  apgf::ModelConfig c;
  c.d_h = 8;
  c.heads = 2;
  c.d_ff = 6;
  apgf::Rng rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = apgf::generate_random_graph(9, 13, rng.next_u64());
    const auto p = apgf::init_params(c, rng.next_u64());
    const auto oracle = apgf::brute_force_scores(g, {});
    apgf::Tape tape;
    apgf::DecodeOptions opts;
    const auto r = apgf::decode_all(tape, g, p, g.start_index(), opts, rng);
    for (NodeIndex v = 0; v < 9; ++v)
      EXPECT_LE(r.per_node_score[v], oracle.per_node[v].best_score + 1e-12);
  }
}

TEST(BruteForce, MonotoneInWeights) {
  apgf::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = apgf::generate_random_graph(7, 10, rng.next_u64());
    std::vector<double> w = g.weights();
    const NodeIndex bumped = rng.below(7);
    w[bumped] = std::min(1.0, w[bumped] + 0.3);
    const WeightedGraph h(w, g.edges(), g.start_index());
    for (Aggregator a : {Aggregator::product, Aggregator::sum}) {
      const auto before = apgf::brute_force_scores(g, with(a));
      const auto after = apgf::brute_force_scores(h, with(a));
      for (NodeIndex v = 0; v < 7; ++v)
        EXPECT_GE(after.per_node[v].best_score, before.per_node[v].best_score);
    }
  }
}

TEST(Compare, TreeGivesExactRatios) {
  const WeightedGraph g({0.9, 0.2, 0.5, 0.7, 0.6}, {{0, 1}, {0, 2}, {2, 3}, {2, 4}}, 0);
  const auto p = apgf::init_params(apgf::ModelConfig{}, 1);
  const auto report = apgf::compare(apgf::brute_force_scores(g, {}),
                                    apgf::greedy_rollout(g, p, 0, {}));
  for (const auto& row : report.rows) EXPECT_EQ(row.ratio, 1.0);
  EXPECT_EQ(report.mean_ratio, 1.0);
  EXPECT_EQ(report.max_abs_gap, 0.0);
}

TEST(Compare, RatiosNeverExceedOne) {
  const auto p = apgf::init_params(apgf::ModelConfig{}, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = apgf::generate_random_graph(10, 15, seed);
    const auto report = apgf::compare(apgf::brute_force_scores(g, {}),
                                      apgf::greedy_rollout(g, p, g.start_index(), {}));
    for (const auto& row : report.rows) EXPECT_LE(row.ratio, 1.0 + 1e-12);
    EXPECT_GT(report.mean_ratio, 0.0);
  }
}

TEST(Compare, ZeroOverZeroCountsAsOne) {
  const WeightedGraph g({0.0, 0.4}, {{0, 1}}, 0);
  const auto p = apgf::init_params(apgf::ModelConfig{}, 1);
  const auto report = apgf::compare(apgf::brute_force_scores(g, {}), apgf::greedy_rollout(g, p, 0, {}));
  EXPECT_EQ(report.rows[0].ratio, 1.0);
  EXPECT_EQ(report.rows[1].ratio, 1.0);
}

TEST(Compare, MismatchRejected) {
  const auto p = apgf::init_params(apgf::ModelConfig{}, 1);
  const auto g = apgf::generate_random_graph(5, 6, 1);
  const auto h = apgf::generate_random_graph(6, 6, 1);
  EXPECT_THROW(apgf::compare(apgf::brute_force_scores(g, {}), apgf::greedy_rollout(h, p, 0, {})),
               apgf::ValidationError);
  const NodeIndex other = (g.start_index() + 1) % 5;
  EXPECT_THROW(apgf::compare(apgf::brute_force_scores(g, {}), apgf::greedy_rollout(g, p, other, {})),
               apgf::ValidationError);
}

TEST(Compare, GoldenFixture) {
  const auto g = apgf::load_graph(kFixtures / "fixture6.json");
  const auto p = apgf::load_checkpoint(kFixtures / "checkpoint_small.json");
  const auto report = apgf::compare(apgf::brute_force_scores(g, {}),
                                    apgf::greedy_rollout(g, p, g.start_index(), {}));
  EXPECT_EQ(apgf::comparison_to_csv(report), apgf::read_text_file(kFixtures / "comparison_golden.csv"));
}

TEST(OracleJson, RoundTripAndMismatch) {
  const auto g = apgf::generate_random_graph(8, 11, 3);
  const auto r = apgf::brute_force_scores(g, {});
  const auto doc = apgf::oracle_to_json(r, g);
  const auto back = apgf::oracle_from_json(nlohmann::json::parse(doc.dump()), g, Aggregator::product);
  ASSERT_TRUE(back.has_value());
  for (NodeIndex v = 0; v < 8; ++v) {
    EXPECT_EQ(back->per_node[v].best_score, r.per_node[v].best_score);
    EXPECT_EQ(back->per_node[v].best_path, r.per_node[v].best_path);
  }
  EXPECT_FALSE(apgf::oracle_from_json(doc, g, Aggregator::sum).has_value());
  EXPECT_FALSE(apgf::oracle_from_json(doc, apgf::generate_random_graph(8, 11, 4), Aggregator::product)
                   .has_value());
  EXPECT_FALSE(apgf::oracle_from_json(nlohmann::json::object(), g, Aggregator::product).has_value());
}

}  // namespace
