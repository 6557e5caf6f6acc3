// apgf: generate graphs, train the path model, and check it against the
// brute-force oracle.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "apgf/apgf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

#ifndef APGF_VERSION
#define APGF_VERSION "dev"
#endif

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kValidation = 2,
  kNumeric = 3,
  kCapRefused = 4,
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Every option of a subcommand with its resolved value (defaults included).
json resolved_options(const CLI::App& sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help" || opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (opt->get_expected_max() == 0) {
      out[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      const auto& results = opt->results();
      if (opt->get_expected_max() > 1)
        out[name] = results;
      else
        out[name] = results.back();
    } else if (!opt->get_default_str().empty()) {
      out[name] = opt->get_default_str();
    }
  }
  return out;
}

struct Manifest {
  std::string command;
  json options;
  json config = json::object();
  std::vector<std::string> inputs = {};
  std::vector<std::string> outputs = {};
  std::string started_at = utc_now();
  json extra = json::object();

  void write(const fs::path& path) const {
    json doc = {{"command", command},
                {"options", options},
                {"config", config},
                {"inputs", inputs},
                {"outputs", outputs},
                {"tool_version", APGF_VERSION},
                {"started_at", started_at},
                {"finished_at", utc_now()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) doc[it.key()] = it.value();
    apgf::write_text_file_atomic(path, doc.dump(2) + "\n");
  }
};

apgf::ScoreConfig score_config(const std::string& aggregator, const std::string& reward_mode) {
  return {apgf::parse_aggregator(aggregator), apgf::parse_reward_mode(reward_mode)};
}

void write_training_plots(const std::vector<apgf::EpochMetrics>& metrics, const fs::path& dir) {
  apgf::svg::Series loss{"mean_loss", {}, {}, "#1f77b4"};
  apgf::svg::Series reward{"mean_reward", {}, {}, "#2ca02c"};
  apgf::svg::Series baseline{"baseline_mean_reward", {}, {}, "#ff7f0e"};
  for (const auto& m : metrics) {
    const double x = static_cast<double>(m.epoch + 1);
    loss.x.push_back(x);
    loss.y.push_back(m.mean_loss);
    reward.x.push_back(x);
    reward.y.push_back(m.mean_reward);
    baseline.x.push_back(x);
    baseline.y.push_back(m.baseline_mean_reward);
  }
  apgf::write_text_file_atomic(dir / "loss.svg",
                               apgf::svg::line_chart("Model loss", "epoch", "mean loss", {loss}));
  apgf::write_text_file_atomic(
      dir / "reward.svg",
      apgf::svg::line_chart("Model reward", "epoch", "mean reward", {reward, baseline}));
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::uint64_t seed = 0;
  std::string topology = "tree";
  std::string out;
};

int run_gen(const GenArgs& a, const CLI::App& sub) {
  apgf::GraphGenOptions options;
  if (a.topology == "star")
    options.topology = apgf::Topology::star;
  else if (a.topology != "tree")
    throw apgf::ValidationError("--topology must be 'tree' or 'star'");
  const apgf::WeightedGraph g = apgf::generate_random_graph(a.nodes, a.edges, a.seed, options);
  apgf::save_graph(g, a.out);
  Manifest m{"gen", resolved_options(sub)};
  m.config = {{"nodes", a.nodes}, {"edges", a.edges}, {"seed", a.seed}, {"topology", a.topology}};
  m.outputs = {a.out};
  m.write(a.out + ".manifest.json");
  std::cout << "wrote " << a.out << " (" << g.node_count() << " nodes, " << g.edge_count()
            << " edges, start " << g.start_index() << ")\n";
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::string out_dir;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  bool record_wall_clock = false;
};

int run_train(const TrainArgs& a, const CLI::App& sub) {
  json doc = json::object();
  if (!a.config.empty()) {
    try {
      doc = json::parse(apgf::read_text_file(a.config));
    } catch (const json::parse_error& e) {
      throw apgf::ParseError("<config>", e.what());
    }
  }
  if (a.epochs) doc["epochs"] = *a.epochs;
  if (a.seed) doc["seed"] = *a.seed;
  const apgf::TrainConfig config = apgf::train_config_from_json(doc);

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  Manifest m{"train", resolved_options(sub)};
  m.config = apgf::to_json(config);
  if (!a.config.empty()) m.inputs = {a.config};

  auto checkpoint_name = [](std::size_t epoch) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "checkpoint_epoch_%04zu.json", epoch + 1);
    return std::string(buf);
  };
  apgf::TrainResult result = apgf::train(config, [&](std::size_t epoch, const apgf::ModelParams& p) {
    const fs::path path = dir / checkpoint_name(epoch);
    apgf::save_checkpoint(p, path);
    m.outputs.push_back(path.string());
  });

  apgf::save_checkpoint(result.params, dir / "checkpoint_final.json");
  apgf::write_text_file_atomic(dir / "config.json", apgf::to_json(config).dump(2) + "\n");
  apgf::write_text_file_atomic(dir / "metrics.csv",
                               apgf::metrics_to_csv(result.metrics, a.record_wall_clock));
  write_training_plots(result.metrics, dir);
  for (const char* f : {"checkpoint_final.json", "config.json", "metrics.csv", "loss.svg", "reward.svg"})
    m.outputs.push_back((dir / f).string());
  m.extra["total_wall_clock_seconds"] = result.total_wall_clock_seconds;
  m.write(dir / "manifest.json");

  if (!result.metrics.empty()) {
    const auto& last = result.metrics.back();
    std::cout << "epochs=" << result.metrics.size() << " final_mean_loss=" << last.mean_loss
              << " final_mean_reward=" << last.mean_reward << '\n';
  } else {
    std::cout << "epochs=0\n";
  }
  std::cout << "total_wall_clock_seconds=" << result.total_wall_clock_seconds << '\n';
  return kOk;
}

struct CompareArgs {
  std::string graph;
  std::string checkpoint;
  std::string out_dir;
  std::string oracle_cache;
  std::size_t max_nodes = 20;
  std::string aggregator = "product";
  std::string reward_mode = "per_node_path_scores";
};

int run_compare(const CompareArgs& a, const CLI::App& sub) {
  const apgf::WeightedGraph g = apgf::load_graph(a.graph);
  const apgf::ModelParams params = apgf::load_checkpoint(a.checkpoint);
  const apgf::ScoreConfig score = score_config(a.aggregator, a.reward_mode);
  apgf::OracleOptions oracle_options;
  oracle_options.max_nodes = a.max_nodes;

  std::optional<apgf::OracleResult> oracle;
  bool cache_hit = false;
  if (!a.oracle_cache.empty() && fs::exists(a.oracle_cache)) {
    try {
      oracle = apgf::oracle_from_json(json::parse(apgf::read_text_file(a.oracle_cache)), g,
                                      score.aggregator);
    } catch (const json::parse_error&) {
    }
    cache_hit = oracle.has_value();
  }
  if (!oracle) {
    if (g.node_count() > a.max_nodes)
      throw apgf::CapExceededError("graph has " + std::to_string(g.node_count()) +
                                   " nodes, above the oracle cap of " + std::to_string(a.max_nodes) +
                                   "; pass --max-nodes " + std::to_string(g.node_count()) +
                                   " to run the exhaustive search anyway");
    oracle = apgf::brute_force_scores(g, score, oracle_options);
    if (!a.oracle_cache.empty())
      apgf::write_text_file_atomic(a.oracle_cache, apgf::oracle_to_json(*oracle, g).dump(1) + "\n");
  }

  const apgf::RolloutResult rollout = apgf::greedy_rollout(g, params, g.start_index(), score);
  const apgf::ComparisonReport report = apgf::compare(*oracle, rollout);

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  apgf::write_text_file_atomic(dir / "comparison.csv", apgf::comparison_to_csv(report));
  apgf::write_text_file_atomic(dir / "comparison.svg",
                               apgf::svg::comparison_chart(report, "Attack path score per node"));
  apgf::write_text_file_atomic(dir / "trace.csv", apgf::trace_to_csv(rollout));

  Manifest m{"compare", resolved_options(sub)};
  m.config = {{"aggregator", a.aggregator}, {"reward_mode", a.reward_mode}, {"max_nodes", a.max_nodes}};
  m.inputs = {a.graph, a.checkpoint};
  if (!a.oracle_cache.empty()) m.inputs.push_back(a.oracle_cache);
  m.outputs = {(dir / "comparison.csv").string(), (dir / "comparison.svg").string(),
               (dir / "trace.csv").string()};
  m.extra["oracle_cache_hit"] = cache_hit;
  m.write(dir / "manifest.json");

  std::cout << "greedy_reward=" << apgf::format_double(rollout.reward) << '\n'
            << "mean_ratio=" << apgf::format_double(report.mean_ratio) << '\n'
            << "max_abs_gap=" << apgf::format_double(report.max_abs_gap) << '\n'
            << "oracle_cache=" << (a.oracle_cache.empty() ? "off" : cache_hit ? "hit" : "miss")
            << '\n';
  return kOk;
}

struct OracleArgs {
  std::string graph;
  std::string out;
  std::size_t max_nodes = 20;
  std::string aggregator = "product";
};

int run_oracle(const OracleArgs& a, const CLI::App& sub) {
  const apgf::WeightedGraph g = apgf::load_graph(a.graph);
  apgf::OracleOptions options;
  options.max_nodes = a.max_nodes;
  const apgf::ScoreConfig score{apgf::parse_aggregator(a.aggregator)};
  const apgf::OracleResult r = apgf::brute_force_scores(g, score, options);
  apgf::write_text_file_atomic(a.out, apgf::oracle_to_json(r, g).dump(1) + "\n");
  Manifest m{"oracle", resolved_options(sub)};
  m.config = {{"aggregator", a.aggregator}, {"max_nodes", a.max_nodes}};
  m.inputs = {a.graph};
  m.outputs = {a.out};
  m.write(a.out + ".manifest.json");
  for (std::size_t v = 0; v < r.per_node.size(); ++v)
    std::cout << v << ' ' << apgf::format_double(r.per_node[v].best_score) << '\n';
  std::cout << "wall_clock_seconds=" << r.wall_clock_seconds << '\n';
  return kOk;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::vector<std::string> graphs;
  std::size_t count = 20;
  std::size_t nodes = 10;
  std::size_t edges = 12;
  std::uint64_t seed = 1;
  std::string out_dir;
  std::size_t max_nodes = 20;
  std::string aggregator = "product";
  std::string reward_mode = "per_node_path_scores";
};

int run_evaluate(const EvaluateArgs& a, const CLI::App& sub) {
  const apgf::ModelParams params = apgf::load_checkpoint(a.checkpoint);
  std::vector<apgf::WeightedGraph> graphs;
  if (!a.graphs.empty()) {
    for (const auto& p : a.graphs) graphs.push_back(apgf::load_graph(p));
  } else {
    graphs = apgf::make_dataset(a.count, a.nodes, a.edges, a.seed);
  }
  apgf::OracleOptions options;
  options.max_nodes = a.max_nodes;
  const apgf::EvaluationReport report =
      apgf::evaluate(params, graphs, score_config(a.aggregator, a.reward_mode), options);

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  std::string csv = "graph,greedy_reward,mean_ratio,max_abs_gap\n";
  for (std::size_t i = 0; i < report.graphs.size(); ++i) {
    const auto& e = report.graphs[i];
    csv += std::to_string(i) + ',' + apgf::format_double(e.greedy_reward) + ',' +
           (e.comparison ? apgf::format_double(e.comparison->mean_ratio) : "") + ',' +
           (e.comparison ? apgf::format_double(e.comparison->max_abs_gap) : "") + '\n';
    if (e.comparison)
      apgf::write_text_file_atomic(dir / ("comparison_" + std::to_string(i) + ".csv"),
                                   apgf::comparison_to_csv(*e.comparison));
  }
  apgf::write_text_file_atomic(dir / "evaluation.csv", csv);
  Manifest m{"evaluate", resolved_options(sub)};
  m.config = {{"aggregator", a.aggregator}, {"reward_mode", a.reward_mode}, {"max_nodes", a.max_nodes}};
  m.inputs = {a.checkpoint};
  for (const auto& p : a.graphs) m.inputs.push_back(p);
  m.outputs = {(dir / "evaluation.csv").string()};
  m.write(dir / "manifest.json");
  std::cout << "graphs=" << graphs.size() << " mean_reward=" << apgf::format_double(report.mean_reward)
            << " mean_ratio=" << apgf::format_double(report.mean_ratio) << '\n';
  return kOk;
}

struct PlotArgs {
  std::string metrics;
  std::string comparison;
  std::string out_dir;
};

apgf::ComparisonReport comparison_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "node,oracle_score,model_score,ratio")
    throw apgf::ParseError("header", "not a comparison CSV");
  apgf::ComparisonReport report;
  double sum = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    apgf::ComparisonRow row{};
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf", &row.node, &row.oracle_score, &row.model_score,
                    &row.ratio) != 4)
      throw apgf::ParseError("row", "malformed: " + line);
    report.rows.push_back(row);
    sum += row.ratio;
    report.max_abs_gap = std::max(report.max_abs_gap, std::abs(row.oracle_score - row.model_score));
  }
  report.mean_ratio = report.rows.empty() ? 1.0 : sum / static_cast<double>(report.rows.size());
  return report;
}

int run_plot(const PlotArgs& a, const CLI::App& sub) {
  if (a.metrics.empty() && a.comparison.empty())
    throw apgf::ValidationError("plot needs --metrics and/or --comparison");
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  Manifest m{"plot", resolved_options(sub)};
  if (!a.metrics.empty()) {
    write_training_plots(apgf::metrics_from_csv(apgf::read_text_file(a.metrics)), dir);
    m.inputs.push_back(a.metrics);
    m.outputs.push_back((dir / "loss.svg").string());
    m.outputs.push_back((dir / "reward.svg").string());
  }
  if (!a.comparison.empty()) {
    apgf::write_text_file_atomic(
        dir / "comparison.svg",
        apgf::svg::comparison_chart(comparison_from_csv(apgf::read_text_file(a.comparison)),
                                    "Attack path score per node"));
    m.inputs.push_back(a.comparison);
    m.outputs.push_back((dir / "comparison.svg").string());
  }
  m.write(dir / "manifest.json");
  return kOk;
}

// Rebuild the argument vector recorded in a manifest.
std::vector<std::string> argv_from_manifest(const json& doc) {
  std::vector<std::string> args{"apgf", doc.at("command").get<std::string>()};
  for (auto it = doc.at("options").begin(); it != doc.at("options").end(); ++it) {
    const auto& v = it.value();
    if (v.is_boolean()) {
      if (v.get<bool>()) args.push_back("--" + it.key());
    } else if (v.is_array()) {
      args.push_back("--" + it.key());
      for (const auto& x : v) args.push_back(x.get<std::string>());
    } else {
      args.push_back("--" + it.key());
      args.push_back(v.get<std::string>());
    }
  }
  return args;
}

int dispatch(int argc, const char* const* argv);

int run_replay(const std::string& manifest_path) {
  json doc;
  try {
    doc = json::parse(apgf::read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw apgf::ParseError("<manifest>", e.what());
  }
  std::vector<std::string> args;
  try {
    args = argv_from_manifest(doc);
  } catch (const json::exception& e) {
    throw apgf::ParseError("options", e.what());
  }
  if (args[1] == "replay") throw apgf::ValidationError("cannot replay a replay manifest");
  std::vector<const char*> ptrs;
  for (const auto& s : args) ptrs.push_back(s.c_str());
  return dispatch(static_cast<int>(ptrs.size()), ptrs.data());
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Attack-path inference on weighted graphs: generation, training, oracle comparison"};
  app.set_version_flag("--version", APGF_VERSION);
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a random connected weighted graph");
  gen_cmd->add_option("--nodes", gen.nodes, "Number of nodes")->required();
  gen_cmd->add_option("--edges", gen.edges, "Number of edges (>= nodes - 1)")->required();
  gen_cmd->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  gen_cmd->add_option("--topology", gen.topology, "tree (random attachment) or star")
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output graph file")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the encoder-decoder with policy gradients");
  train_cmd->add_option("--config", train.config, "Training config (JSON)");
  train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required();
  train_cmd->add_option("--epochs", train.epochs, "Override epochs from the config");
  train_cmd->add_option("--seed", train.seed, "Override seed from the config");
  train_cmd->add_flag("--record-wall-clock", train.record_wall_clock,
                      "Write measured epoch times into metrics.csv (breaks byte-identical reruns)");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare greedy model scores with the oracle");
  cmp_cmd->add_option("--graph", cmp.graph, "Graph file")->required();
  cmp_cmd->add_option("--checkpoint", cmp.checkpoint, "Checkpoint file")->required();
  cmp_cmd->add_option("--out-dir", cmp.out_dir, "Output directory")->required();
  cmp_cmd->add_option("--oracle-cache", cmp.oracle_cache, "Reuse or store oracle results here");
  cmp_cmd->add_option("--max-nodes", cmp.max_nodes, "Oracle node cap")->capture_default_str();
  cmp_cmd->add_option("--aggregator", cmp.aggregator, "product or sum")->capture_default_str();
  cmp_cmd->add_option("--reward-mode", cmp.reward_mode, "per_node_path_scores or literal_weight_sum")
      ->capture_default_str();

  OracleArgs orc;
  auto* orc_cmd = app.add_subcommand("oracle", "Exhaustive best attack-path score per node");
  orc_cmd->add_option("--graph", orc.graph, "Graph file")->required();
  orc_cmd->add_option("--out", orc.out, "Output JSON")->required();
  orc_cmd->add_option("--max-nodes", orc.max_nodes, "Node cap")->capture_default_str();
  orc_cmd->add_option("--aggregator", orc.aggregator, "product or sum")->capture_default_str();

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Greedy rewards and oracle comparison on a graph set");
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  ev_cmd->add_option("--graphs", ev.graphs, "Graph files (otherwise generated)");
  ev_cmd->add_option("--count", ev.count, "Generated graph count")->capture_default_str();
  ev_cmd->add_option("--nodes", ev.nodes, "Generated graph nodes")->capture_default_str();
  ev_cmd->add_option("--edges", ev.edges, "Generated graph edges")->capture_default_str();
  ev_cmd->add_option("--seed", ev.seed, "Generation seed")->capture_default_str();
  ev_cmd->add_option("--out-dir", ev.out_dir, "Output directory")->required();
  ev_cmd->add_option("--max-nodes", ev.max_nodes, "Oracle node cap")->capture_default_str();
  ev_cmd->add_option("--aggregator", ev.aggregator, "product or sum")->capture_default_str();
  ev_cmd->add_option("--reward-mode", ev.reward_mode, "per_node_path_scores or literal_weight_sum")
      ->capture_default_str();

  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plot", "Render SVG charts from metrics/comparison CSV");
  plot_cmd->add_option("--metrics", plot.metrics, "metrics.csv from train");
  plot_cmd->add_option("--comparison", plot.comparison, "comparison.csv from compare");
  plot_cmd->add_option("--out-dir", plot.out_dir, "Output directory")->required();

  std::string manifest;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay_cmd->add_option("--manifest", manifest, "manifest JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  if (*gen_cmd) return run_gen(gen, *gen_cmd);
  if (*train_cmd) return run_train(train, *train_cmd);
  if (*cmp_cmd) return run_compare(cmp, *cmp_cmd);
  if (*orc_cmd) return run_oracle(orc, *orc_cmd);
  if (*ev_cmd) return run_evaluate(ev, *ev_cmd);
  if (*plot_cmd) return run_plot(plot, *plot_cmd);
  if (*replay_cmd) return run_replay(manifest);
  return kValidation;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const apgf::CapExceededError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCapRefused;
  } catch (const apgf::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const apgf::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
