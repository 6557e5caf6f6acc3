#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "apgf/error.hpp"
#include "apgf/graph.hpp"
#include "apgf/random.hpp"
#include "apgf/tape.hpp"
#include "apgf/tensor.hpp"

namespace apgf {

struct ModelConfig {
  std::size_t d_h = 64;    // embedding width
  std::size_t heads = 4;   // attention heads per GAT layer
  std::size_t d_ff = 128;  // feedforward hidden width
  double clip = 10.0;      // decoder clipping constant C
  double leaky_slope = 0.2;

  std::size_t d_head() const { return d_h / heads; }

  void validate() const {
    if (d_h == 0 || heads == 0 || d_ff == 0) throw ValidationError("model dimensions must be positive");
    if (d_h % heads != 0)
      throw ValidationError("d_h (" + std::to_string(d_h) + ") must be divisible by heads (" +
                            std::to_string(heads) + ")");
    if (!(clip > 0.0)) throw ValidationError("clip constant C must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::size_t kGatLayers = 2;

struct GatHead {
  Tensor weight;     // d_h × d_head
  Tensor attention;  // 2·d_head × 1; first half scores the receiving node, second the sender
};

struct GatLayer {
  std::vector<GatHead> heads;
};

struct EncoderParams {
  Tensor input_lift;  // 1 × d_h, applied to the scalar node weight
  std::array<GatLayer, kGatLayers> layers;
  Tensor ff_hidden_weight;  // d_h × d_ff
  Tensor ff_hidden_bias;    // 1 × d_ff
  Tensor ff_out_weight;     // d_ff × d_h
  Tensor ff_out_bias;       // 1 × d_h
};

struct DecoderParams {
  Tensor query_proj;  // Φ1, d_h × d_h
  Tensor key_proj;    // Φ2, d_h × d_h
  double clip = 10.0;
  std::size_t d_h = 64;
};

struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  DecoderParams decoder;

  // Visits every learnable tensor with a stable name, in a fixed order.
  template <class F>
  void for_each_named(F&& f) {
    f(std::string("encoder.input_lift"), encoder.input_lift);
    for (std::size_t l = 0; l < kGatLayers; ++l)
      for (std::size_t h = 0; h < encoder.layers[l].heads.size(); ++h) {
        const std::string prefix =
            "encoder.gat" + std::to_string(l + 1) + ".head" + std::to_string(h) + ".";
        f(prefix + "weight", encoder.layers[l].heads[h].weight);
        f(prefix + "attention", encoder.layers[l].heads[h].attention);
      }
    f(std::string("encoder.ff.hidden_weight"), encoder.ff_hidden_weight);
    f(std::string("encoder.ff.hidden_bias"), encoder.ff_hidden_bias);
    f(std::string("encoder.ff.out_weight"), encoder.ff_out_weight);
    f(std::string("encoder.ff.out_bias"), encoder.ff_out_bias);
    f(std::string("decoder.query_proj"), decoder.query_proj);
    f(std::string("decoder.key_proj"), decoder.key_proj);
  }
  template <class F>
  void for_each_named(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_named(
        [&](const std::string& name, const Tensor& t) { f(name, t); });
  }
  template <class F>
  void for_each(F&& f) {
    for_each_named([&](const std::string&, Tensor& t) { f(t); });
  }

  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for_each([&](Tensor& t) { out.push_back(&t); });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_named([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }

  void set_requires_grad(bool on) {
    for_each([&](Tensor& t) {
      t.requires_grad = on;
      if (!on) t.grad.clear();
    });
  }

  // Copy values only; gradient flags of *this are kept.
  void copy_values_from(const ModelParams& other) {
    if (other.config != config) throw ValidationError("copy_values_from: model configs differ");
    std::vector<const Tensor*> src;
    other.for_each_named([&](const std::string&, const Tensor& t) { src.push_back(&t); });
    std::size_t k = 0;
    for_each([&](Tensor& t) { t.values = src[k++]->values; });
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    if (a.config != b.config) return false;
    std::vector<const Tensor*> ta, tb;
    a.for_each_named([&](const std::string&, const Tensor& t) { ta.push_back(&t); });
    b.for_each_named([&](const std::string&, const Tensor& t) { tb.push_back(&t); });
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (!(*ta[i] == *tb[i])) return false;
    return true;
  }
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialisation, seeded.
inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  auto make = [&](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape), 0.0, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values) v = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
  };
  const std::size_t d = config.d_h, dh = config.d_head();
  ModelParams p;
  p.config = config;
  p.encoder.input_lift = make({1, d}, 1);
  for (auto& layer : p.encoder.layers)
    for (std::size_t h = 0; h < config.heads; ++h)
      layer.heads.push_back(GatHead{make({d, dh}, d), make({2 * dh, 1}, 2 * dh)});
  p.encoder.ff_hidden_weight = make({d, config.d_ff}, d);
  p.encoder.ff_hidden_bias = make({1, config.d_ff}, d);
  p.encoder.ff_out_weight = make({config.d_ff, d}, config.d_ff);
  p.encoder.ff_out_bias = make({1, d}, config.d_ff);
  p.decoder.query_proj = make({d, d}, d);
  p.decoder.key_proj = make({d, d}, d);
  p.decoder.clip = config.clip;
  p.decoder.d_h = d;
  return p;
}

// Attention neighbourhood of each node: its graph neighbours plus itself.
inline std::vector<unsigned char> attention_mask(const WeightedGraph& graph) {
  const std::size_t n = graph.node_count();
  std::vector<unsigned char> mask(n * n, 0);
  for (NodeIndex i = 0; i < n; ++i) {
    mask[i * n + i] = 1;
    for (NodeIndex j : graph.neighbors(i)) mask[i * n + j] = 1;
  }
  return mask;
}

// One multi-head GAT layer with a residual connection.
inline Var gat_layer(Tape& tape, Var h, const GatLayer& layer, const std::vector<unsigned char>& mask,
                     double slope) {
  std::vector<Var> heads;
  for (const GatHead& head : layer.heads) {
    Var projected = matmul(h, tape.leaf(head.weight));
    const std::size_t dh = projected.cols();
    Var attention = tape.leaf(head.attention);
    Var receiver = matmul(projected, slice_rows(attention, 0, dh));
    Var sender = matmul(projected, slice_rows(attention, dh, 2 * dh));
    Var logits = leaky_relu(outer_add(receiver, sender), slope);
    Var coeffs = masked_softmax(logits, mask);
    heads.push_back(matmul(coeffs, projected));
  }
  return add(h, concat(heads, 1));
}

// Node embeddings V (n × d_h): scalar weight lifted to d_h, two GAT layers,
// then a residual feedforward block.
inline Var encode(Tape& tape, const WeightedGraph& graph, const EncoderParams& params,
                  double slope = 0.2) {
  const std::size_t n = graph.node_count();
  Var features = tape.constant({n, 1}, graph.weights());
  Var h = matmul(features, tape.leaf(params.input_lift));
  const auto mask = attention_mask(graph);
  for (const GatLayer& layer : params.layers) h = gat_layer(tape, h, layer, mask, slope);
  Var hidden = leaky_relu(
      add(matmul(h, tape.leaf(params.ff_hidden_weight)), tape.leaf(params.ff_hidden_bias)), slope);
  Var out = add(matmul(hidden, tape.leaf(params.ff_out_weight)), tape.leaf(params.ff_out_bias));
  return add(h, out);
}

inline Var encode(Tape& tape, const WeightedGraph& graph, const ModelParams& params) {
  return encode(tape, graph, params.encoder, params.config.leaky_slope);
}

// Embedding-only evaluation, no gradient tracking needed by the caller.
inline Tensor encode_values(const WeightedGraph& graph, const ModelParams& params) {
  Tape tape;
  Var v = encode(tape, graph, params);
  return Tensor(v.shape(), v.values());
}

// Per-rollout decoder projections: row i of queries is (Φ1 v_i)ᵀ, row j of
// keys is (Φ2 v_j)ᵀ.
struct DecoderContext {
  Var queries;
  Var keys;
  double clip;
  std::size_t d_h;
};

inline DecoderContext prepare_decoder(Tape& tape, Var embeddings, const DecoderParams& params) {
  if (embeddings.cols() != params.d_h)
    throw ValidationError("decoder: embedding width " + std::to_string(embeddings.cols()) +
                          " differs from d_h " + std::to_string(params.d_h));
  Var q = matmul(embeddings, transpose(tape.leaf(params.query_proj)));
  Var k = matmul(embeddings, transpose(tape.leaf(params.key_proj)));
  return {q, k, params.clip, params.d_h};
}

// Column of scores C·tanh((Φ1 v_current)ᵀ(Φ2 v_j)/sqrt(d_h)), one row per
// candidate in the given order.
inline Var decoder_scores(const DecoderContext& ctx, NodeIndex current,
                          const std::vector<NodeIndex>& candidates) {
  if (candidates.empty()) throw ValidationError("decoder_scores: empty candidate set");
  Var q = gather_rows(ctx.queries, {current});
  Var k = gather_rows(ctx.keys, candidates);
  Var raw = matmul(k, transpose(q));
  Var scaled = mul_scalar(raw, 1.0 / std::sqrt(static_cast<double>(ctx.d_h)));
  return mul_scalar(tanh(scaled), ctx.clip);
}

// Value-level decoder scores from a plain embedding matrix (rows = nodes).
inline std::map<NodeIndex, double> decoder_scores(const Tensor& embeddings, NodeIndex current,
                                                  const std::vector<NodeIndex>& candidates,
                                                  const DecoderParams& params) {
  if (candidates.empty()) throw ValidationError("decoder_scores: empty candidate set");
  if (current >= embeddings.rows()) throw ValidationError("decoder_scores: current node out of range");
  Tape tape;
  DecoderContext ctx = prepare_decoder(tape, tape.constant(embeddings), params);
  Var scores = decoder_scores(ctx, current, candidates);
  std::map<NodeIndex, double> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) out[candidates[i]] = scores.values()[i];
  return out;
}

// Softmax of scores / temperature over the candidates.
inline std::map<NodeIndex, double> candidate_probs(const std::map<NodeIndex, double>& scores,
                                                   double temperature) {
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (scores.empty()) throw ValidationError("candidate_probs: empty score set");
  Tape tape;
  std::vector<double> logits;
  for (const auto& [node, s] : scores) logits.push_back(s / temperature);
  Var p = masked_softmax(tape.constant({1, logits.size()}, logits),
                         std::vector<unsigned char>(logits.size(), 1));
  std::map<NodeIndex, double> out;
  std::size_t i = 0;
  for (const auto& [node, s] : scores) out[node] = p.values()[i++];
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON container with a hyperparameter header and named blobs.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_to_json(const ModelParams& params) {
  nlohmann::json doc;
  doc["format"] = "apgf-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["hyperparameters"] = {{"d_h", params.config.d_h},
                            {"heads", params.config.heads},
                            {"d_ff", params.config.d_ff},
                            {"C", params.config.clip},
                            {"leaky_slope", params.config.leaky_slope}};
  nlohmann::json blobs = nlohmann::json::object();
  params.for_each_named([&](const std::string& name, const Tensor& t) {
    blobs[name] = {{"shape", t.shape}, {"values", t.values}};
  });
  doc["params"] = std::move(blobs);
  return doc;
}

inline std::string checkpoint_to_string(const ModelParams& params) {
  return checkpoint_to_json(params).dump(1) + "\n";
}

inline ModelParams checkpoint_from_string(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("<document>", e.what());
  }
  if (detail::require_field(doc, "format") != "apgf-checkpoint")
    throw ParseError("format", "not an apgf checkpoint");
  const auto& version = detail::require_field(doc, "version");
  if (!version.is_number_integer() || version.get<int>() != kCheckpointVersion)
    throw ParseError("version", "unsupported checkpoint version");
  const auto& hp = detail::require_field(doc, "hyperparameters");
  ModelConfig config;
  try {
    config.d_h = detail::require_field(hp, "d_h").get<std::size_t>();
    config.heads = detail::require_field(hp, "heads").get<std::size_t>();
    config.d_ff = detail::require_field(hp, "d_ff").get<std::size_t>();
    config.clip = detail::require_field(hp, "C").get<double>();
    if (hp.contains("leaky_slope")) config.leaky_slope = hp.at("leaky_slope").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("hyperparameters", e.what());
  }
  config.validate();
  ModelParams params = init_params(config, 0);
  const auto& blobs = detail::require_field(doc, "params");
  params.for_each_named([&](const std::string& name, Tensor& t) {
    if (!blobs.contains(name)) throw ParseError("params." + name, "missing");
    const auto& blob = blobs.at(name);
    try {
      Shape shape = blob.at("shape").get<Shape>();
      if (shape != t.shape)
        throw ParseError("params." + name, "shape " + shape_string(shape) + " does not match header (expected " +
                                               shape_string(t.shape) + ")");
      std::vector<double> values = blob.at("values").get<std::vector<double>>();
      if (values.size() != t.size()) throw ParseError("params." + name, "value count mismatch");
      require_finite(values, "checkpoint load");
      t.values = std::move(values);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("params." + name, e.what());
    }
  });
  return params;
}

inline void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  write_text_file_atomic(path, checkpoint_to_string(params));
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_string(read_text_file(path));
}

// Load and require the stored hyperparameters to match `expected`.
inline ModelParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  ModelParams p = load_checkpoint(path);
  auto mismatch = [](const char* what, auto stored, auto wanted) {
    throw ValidationError(std::string("checkpoint ") + what + " mismatch: file has " +
                          std::to_string(stored) + ", config expects " + std::to_string(wanted));
  };
  if (p.config.d_h != expected.d_h) mismatch("d_h", p.config.d_h, expected.d_h);
  if (p.config.heads != expected.heads) mismatch("heads", p.config.heads, expected.heads);
  if (p.config.d_ff != expected.d_ff) mismatch("d_ff", p.config.d_ff, expected.d_ff);
  if (p.config.clip != expected.clip) mismatch("C", p.config.clip, expected.clip);
  return p;
}

}  // namespace apgf
