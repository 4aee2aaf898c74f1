#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegnn/cells.hpp"
#include "eegnn/exit.hpp"

namespace eegnn {

struct ModelConfig {
  ModelKind kind = ModelKind::sas;
  TaskKind task = TaskKind::node_class;
  std::size_t input_dim = 0;
  std::size_t output_dim = 2;
  std::size_t hidden = 32;
  std::size_t layers = 10;
  double tau = 0.1;
  Activation sigma1 = Activation::relu_tanh;  // SAS outer activation; baseline activation for gcn/graff
  Activation sigma2 = Activation::relu;
  EdgeMode edge_mode = EdgeMode::zero;
  std::size_t edge_dim = 0;
  std::vector<std::size_t> decoder_hidden;
  bool decoder_bias = true;
  std::size_t head_depth = 2;
  std::size_t head_hidden = 16;
  double nu0 = 0.05;

  bool graph_level() const { return task != TaskKind::node_class; }
  ModelShape shape() const;
};

nlohmann::json to_json(const ModelConfig& c);
/// Throws InputError on a missing or malformed field.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ForwardOptions {
  ExitMode mode = ExitMode::eval_argmax;
  Rng* rng = nullptr;
  NoiseTape* tape = nullptr;
  ExitControl control;
  bool keep_layers = false;
};

struct ForwardPass {
  Var output;                       // node: n x C logits, graph: 1 x C logits or 1 x T values
  Var embedding;                    // node: Z (n x m), graph: pooled Z (1 x m)
  std::vector<Var> layers;          // H^0..H^L when keep_layers is set
  std::optional<ExitState> exits;   // eegnn only
  std::vector<LayerTrace> trace;    // eegnn only
};

/// Encoder, message-passing cell and decoder for any supported model kind.
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  ForwardPass forward(const GraphContext& ctx, const ForwardOptions& opts = {}) const;

  /// H^0 = ReLU(X W + b).
  Var encode(const GraphContext& ctx) const;
  /// One fixed-step layer of the backbone cell. For eegnn the configured
  /// constant tau is used.
  Var step(const Var& h, const GraphContext& ctx, std::size_t layer) const;
  /// Decoder applied to a node state (graph tasks pool first).
  Var decode(const Var& z) const;

  std::vector<std::pair<std::string, Var>> named_parameters() const;
  std::vector<Var> parameters() const;
  std::size_t parameter_count() const;

  const CellParams& cell() const { return cell_; }
  CellParams& cell() { return cell_; }
  const ExitHeads& heads() const { return heads_; }

  /// Deep copy of all parameter values into fresh leaves.
  Model clone() const;

  /// Checkpoint: config plus every parameter matrix by name.
  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);

 private:
  ModelConfig config_;
  Dense encoder_;
  std::vector<Dense> decoder_;
  CellParams cell_;
  BaselineParams baseline_;
  ExitHeads heads_;
};

}  // namespace eegnn
