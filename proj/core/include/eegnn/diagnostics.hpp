#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "eegnn/cells.hpp"
#include "eegnn/model.hpp"
#include "eegnn/train.hpp"

namespace eegnn {

/// A per-layer series with free-form metadata.
struct Trace {
  std::string name;
  std::vector<std::size_t> layers;
  std::vector<double> values;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const Trace&, const Trace&) = default;
};

/// '#'-prefixed "key: value" metadata lines (name first), a layer,value
/// header, then one row per entry.
void emit_trace(const Trace& trace, const std::filesystem::path& path);
Trace parse_trace(const std::filesystem::path& path);

/// Sum over stored arcs (both directions) of ||h_j/sqrt(d_j+1) - h_i/sqrt(d_i+1)||^2.
double dirichlet_energy(const Matrix& h, const CsrSkeleton& adj);

/// -sum over stored arcs (i, j) of (d_i d_j)^-1/2 <h_i, W_s h_j>.
/// Throws InputError when W_s is not symmetric to 1e-12.
double energy_functional(const Matrix& h, const Matrix& w_s, const CsrSkeleton& adj);

struct DescentViolation {
  std::size_t step = 0;   // E(H^{step}) exceeded E(H^{step-1}) + slack
  double increase = 0.0;
};

struct DescentReport {
  Trace trace;  // E_theta at steps 0..steps
  std::vector<DescentViolation> violations;
};

/// Runs `steps` SAS steps with step size tau from h0 and checks that the
/// energy functional never increases by more than `slack`.
DescentReport descent_trace(const GraphContext& ctx, const CsrSkeleton& adj, const CellParams& cell,
                            const Matrix& h0, std::size_t steps, double tau, double slack = 1e-8);

/// A random connected-ish graph with random cell parameters and initial state.
struct DescentInstance {
  Graph graph;
  GraphContext ctx;
  CellParams cell;
  Matrix h0;
};

/// n in [6, 30], hidden in [2, 16], weights N(0, weight_scale^2), H0 N(0, 1).
/// Edge features (3 columns) are attached when edge_mode is not zero.
DescentInstance random_descent_instance(std::uint64_t seed, EdgeMode edge_mode,
                                        Activation sigma2 = Activation::relu,
                                        double weight_scale = 1.0);

struct SpectrumReport {
  Matrix jacobian;
  std::vector<std::complex<double>> eigenvalues;
  double max_abs_real = 0.0;
  double skew_residual = 0.0;   // ||M + M^T||_inf of M = D (Omega - Omega^T) D
};

/// Jacobian of h -> sigma1(-sigma2(h Omega_as) + neighbor) at h, in the row
/// convention J[j][k] = d out_j / d h_k. The neighbour term is held fixed.
/// Throws InputError for hidden sizes above 32.
SpectrumReport sas_jacobian(const Matrix& omega_raw, std::span<const double> h,
                            std::span<const double> neighbor,
                            Activation sigma1 = Activation::relu_tanh,
                            Activation sigma2 = Activation::relu);

/// sas_jacobian at a random Omega and h of size m, with the neighbour term
/// drawn as ReLU(h Omega_as) + N(0, 1) noise.
SpectrumReport random_spectrum(std::uint64_t seed, std::size_t m);

struct SensitivityResult {
  double value = 0.0;      // S_l
  double log_value = 0.0;  // ln S_l (-inf when S_l = 0)
};

/// S_l = sum over stored arcs (v, u) of the entrywise L1 norm of
/// d h_v^L / d h_u^l, by one reverse sweep per output coordinate.
/// Throws InputError when n * hidden exceeds 2000.
SensitivityResult sensitivity(const Model& model, const GraphContext& ctx, const CsrSkeleton& adj,
                              std::size_t layer);

/// H^0..H^L of an eval-mode forward pass.
std::vector<Matrix> layer_states(const Model& model, const GraphContext& ctx);

/// E^dir(H^l) for l = 0..L; `mean` divides by the node count.
Trace dirichlet_trace(const Model& model, const GraphContext& ctx, const CsrSkeleton& adj,
                      bool mean = false);

struct DepthRow {
  ModelKind kind = ModelKind::sas;
  std::size_t layers = 0;
  double test_metric = 0.0;
  double val_metric = 0.0;
  std::size_t best_epoch = 0;
};

/// Trains every (kind, depth) pair independently from `base` and reports the
/// test metric of its best validation checkpoint.
std::vector<DepthRow> depth_retention(const TaskData& data, const std::vector<ModelKind>& kinds,
                                      const std::vector<std::size_t>& depths, const RunConfig& base);
void write_depth_csv(const std::filesystem::path& path, const std::vector<DepthRow>& rows);

struct OracleExitResult {
  double oracle = 0.0;        // accuracy when each node may use its best layer
  double final_metric = 0.0;  // accuracy of the model output
  std::vector<std::size_t> oracle_layer;  // earliest correct layer per node, L + 1 when none
};

/// Node tasks only. Candidates are the decoder applied to H^0..H^L plus the
/// model output itself.
OracleExitResult oracle_exit_eval(const Model& model, const TaskData& data, Split split);

}  // namespace eegnn
