#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "eegnn/autodiff.hpp"
#include "eegnn/cells.hpp"
#include "eegnn/random.hpp"

namespace eegnn {

/// i.i.d. Gumbel(0, 1) draws.
struct GumbelSample {
  Matrix g;
};

/// -log(-log(u)) with u clamped to [1e-12, 1 - 1e-12].
double gumbel_from_uniform(double u);
GumbelSample sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng);

enum class ExitMode { train_sample, eval_argmax };

std::string_view to_string(ExitMode m);
ExitMode parse_exit_mode(std::string_view s);

/// One head layer. Node level: mean-aggregation(H) W + H W_self + b.
/// Graph level (on pooled features): H W + b, and self_weight is unset.
struct HeadLayer {
  Dense neighbor;
  std::optional<Var> self_weight;
};

/// Confidence head f_c (2 logits per agent) and inverse temperature head
/// f_nu (1 value per agent), shared by every layer.
struct ExitHeads {
  std::vector<HeadLayer> confidence;
  std::vector<HeadLayer> temperature;
  double nu0 = 0.05;
  bool graph_level = false;
};

/// depth in {1, 2, 3}; hidden is the width of inner head layers.
ExitHeads make_exit_heads(std::size_t input, std::size_t depth, std::size_t hidden, double nu0,
                          bool graph_level, Rng& rng);

/// ReLU between layers, none after the last. `mean` is ignored at graph level.
Var head_forward(const Var& h, const SparseMatrix& mean, const std::vector<HeadLayer>& layers,
                 bool graph_level);

/// softplus(f_nu(H)) + nu0, one value per agent.
Var inv_temperature(const Var& h, const SparseMatrix& mean, const ExitHeads& heads);

struct GumbelSoftmax {
  Var soft;  // row-softmax((log_softmax(logits) + g) * inv_nu)
  Var hard;  // one-hot of the soft argmax, gradient routed to soft
};

/// g is ignored (treated as zero) in eval_argmax mode. Ties go to column 0.
GumbelSoftmax gumbel_softmax_st(const Var& logits, const Var& inv_nu, const Matrix& g,
                                ExitMode mode);

/// Gumbel draws indexed by layer. An empty tape records the draws of the next
/// forward pass; a filled tape replays them, which makes the forward pass a
/// deterministic function of the parameters.
struct NoiseTape {
  std::vector<Matrix> draws;
};

/// Replaces the learned exit decision, for ablations and tests.
struct ExitControl {
  enum class Kind { learned, never_exit, forced_logits };
  Kind kind = Kind::learned;
  double tau0 = 0.1;     // never_exit: constant step for every agent and layer
  Matrix logits{1, 2};   // forced_logits: one row broadcast to every agent, inv_nu = 1, g = 0
};

struct ExitState {
  std::vector<bool> exited;
  std::vector<std::size_t> exit_layer;  // L for agents that never exited
  std::vector<double> exit_time;        // sum of tau over layers before the exit
};

struct LayerTrace {
  std::size_t layer = 0;
  std::size_t exits = 0;     // agents exiting at this layer
  std::size_t active = 0;    // agents not yet exited before this layer
  double mean_tau = 0.0;
};

struct ExitForwardOptions {
  ExitMode mode = ExitMode::eval_argmax;
  Rng* rng = nullptr;          // required in train_sample mode unless the tape is filled
  NoiseTape* tape = nullptr;
  ExitControl control;
  bool keep_layers = true;     // keep H^0..H^L in the result
};

struct ExitResult {
  Var z;                     // node level: n x m, graph level: 1 x m pooled
  ExitState state;
  std::vector<Var> layers;   // H^0..H^L (up to the exit layer at graph level)
  std::vector<Var> taus;     // tau^l per layer, n x 1 or 1 x 1
  std::vector<LayerTrace> trace;
};

/// Node-level adaptive-step early exit over L SAS steps starting at H^0.
/// Every node keeps evolving after it exits; only its Z row is frozen.
ExitResult eegnn_forward_node(const Var& h0, const GraphContext& ctx, const CellParams& cell,
                              const ExitHeads& heads, std::size_t layers,
                              const ExitForwardOptions& opts);

/// Graph-level variant: decisions on the mean-pooled state; the pooled state
/// at the first hard exit is returned immediately.
ExitResult eegnn_forward_graph(const Var& h0, const GraphContext& ctx, const CellParams& cell,
                               const ExitHeads& heads, std::size_t layers,
                               const ExitForwardOptions& opts);

struct ExitDistribution {
  std::vector<std::size_t> histogram;  // counts for layers 0..L
  std::size_t min = 0;
  double median = 0.0;
  std::size_t max = 0;
  std::vector<double> exit_times;
  double mean_layer = 0.0;
  double mean_time = 0.0;
};

/// Summary over the selected agents (all when `select` is empty).
ExitDistribution exit_distribution(const ExitState& state, std::size_t layers,
                                   const std::vector<bool>& select = {});
/// Summary over pooled records; layers and times are parallel arrays.
ExitDistribution exit_distribution(std::span<const std::size_t> exit_layers,
                                   std::span<const double> exit_times, std::size_t layers);

/// CSV with header agent_id,exit_layer,exit_time; row k describes agent
/// agent_ids[k] (agent k when agent_ids is empty).
void write_exits_csv(const std::filesystem::path& path, const ExitState& state,
                     std::span<const std::size_t> agent_ids = {});

}  // namespace eegnn
