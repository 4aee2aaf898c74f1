#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eegnn/autodiff.hpp"
#include "eegnn/graph.hpp"
#include "eegnn/random.hpp"

namespace eegnn {

enum class ModelKind { sas, eegnn, gcn, graff, adgn };
enum class TaskKind { node_class, graph_class, graph_reg };
/// How edge features enter the SAS derivative: absent, B E W_e, or -ReLU(B E W_e).
enum class EdgeMode { zero, linear, neg_relu };

std::string_view to_string(ModelKind k);
std::string_view to_string(TaskKind k);
std::string_view to_string(EdgeMode m);
ModelKind parse_model_kind(std::string_view s);
TaskKind parse_task_kind(std::string_view s);
EdgeMode parse_edge_mode(std::string_view s);

/// Affine layer x W (+ b). The bias is optional.
struct Dense {
  Var weight;
  std::optional<Var> bias;

  Var forward(const Var& x) const { return matmul_add(x, weight, bias); }
  std::size_t param_count() const;
};

Dense make_dense(std::size_t in, std::size_t out, bool bias, Rng& rng);

/// Raw parameters of one SAS-GNN cell. Omega and W are stored
/// unconstrained; antisymmetric and symmetric effective weights are derived
/// on every forward pass.
struct CellParams {
  Var omega_raw;
  Var w_raw;
  std::optional<Var> w_e;  // edge_dim x hidden, only with a non-zero edge mode
  double tau = 0.1;
  Activation sigma1 = Activation::relu_tanh;
  Activation sigma2 = Activation::relu;
  EdgeMode edge_mode = EdgeMode::zero;
};

CellParams make_cell(std::size_t hidden, std::size_t edge_dim, EdgeMode edge_mode, double tau,
                     Activation sigma1, Activation sigma2, Rng& rng);

/// Per-graph quantities computed once and reused by every forward pass.
struct GraphContext {
  NormAdj adj;                  // D^-1/2 A D^-1/2
  SparseMatrix mean;            // D^-1 A
  std::optional<Matrix> edge_sum;  // B E when the graph has edge features
  Var x;                        // node features as a constant
  std::size_t n = 0;
};

/// Throws IsolatedNodeError when a node has no neighbours.
GraphContext make_context(const Graph& g);

/// Omega - Omega^T. Throws ShapeError for non-square input.
Var antisymmetrize(const Var& omega_raw);
/// (W + W^T) / 2. Throws ShapeError for non-square input.
Var symmetrize(const Var& w_raw);

/// Effective weights of one forward pass, shared by every layer.
struct SasWeights {
  Var omega_as;
  Var w_s;
  Activation sigma1 = Activation::relu_tanh;
  Activation sigma2 = Activation::relu;
};

SasWeights derive_weights(const CellParams& p);

/// f_e(E) for the configured edge mode; nullopt when edge_mode is zero.
/// edge_sum is the incidence aggregate B E (n x d).
std::optional<Var> edge_term(const CellParams& p, const Matrix& edge_sum);

/// One Euler step H + tau * sigma1(-sigma2(H Omega_as) + f_e + A H W_s).
/// tau is 1 x 1 or a per-node n x 1 column with entries in [0, 1]; a row
/// with tau_i == 0 is returned bit-identical.
Var sas_step(const Var& h, const NormAdj& a, const SasWeights& w, const Var& tau,
             const std::optional<Var>& edge = std::nullopt);
Var sas_step(const Var& h, const NormAdj& a, const SasWeights& w, double tau,
             const std::optional<Var>& edge = std::nullopt);

/// Parameters of the comparison cells.
///   gcn:   sigma(A H W_l + b_l) with independent weights per layer, no residual
///   graff: H + tau sigma(H Omega_s + A H W_s), Omega_s and W_s symmetrised
///   adgn:  H + tau tanh(H (Omega - Omega^T) + A H W + b)
struct BaselineParams {
  ModelKind kind = ModelKind::gcn;
  std::vector<Dense> gcn_layers;
  Var omega_raw;
  Var w_raw;
  Var bias;  // adgn only
  Activation sigma = Activation::relu;
  double tau = 0.1;
};

BaselineParams make_baseline(ModelKind kind, std::size_t hidden, std::size_t layers,
                             Activation sigma, double tau, Rng& rng);

/// One layer of a baseline cell. `layer` selects the GCN weight set.
Var baseline_step(const Var& h, const NormAdj& a, const BaselineParams& p, std::size_t layer);

/// ReLU(X W + b)
Var encode(const Var& x, const Dense& encoder);

/// Node task: per-row MLP. Graph tasks: masked mean pool, then MLP.
Var decode(const Var& z, TaskKind task, const std::vector<Dense>& decoder,
           const std::vector<bool>& pool_mask = {});
Var mlp_forward(const Var& x, const std::vector<Dense>& layers);

/// Shape of a model, enough to count its parameters without building it.
struct ModelShape {
  ModelKind kind = ModelKind::sas;
  std::size_t input_dim = 0;
  std::size_t hidden = 32;
  std::size_t output_dim = 2;
  std::size_t layers = 10;
  std::size_t edge_dim = 0;  // > 0 only with a non-zero edge mode
  std::vector<std::size_t> decoder_hidden;
  bool decoder_bias = true;
  std::size_t head_depth = 2;
  std::size_t head_hidden = 16;
  bool graph_level = false;
};

/// Scalar parameter counts by module. Storage counts: the raw Omega and W
/// matrices are counted in full even though only about half their entries
/// are independent after (anti)symmetrisation.
struct ParamBreakdown {
  std::map<std::string, std::size_t> by_module;
  std::size_t total() const;
};

ParamBreakdown param_count(const ModelShape& shape);

}  // namespace eegnn
