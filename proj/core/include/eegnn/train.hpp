#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegnn/graph_io.hpp"
#include "eegnn/losses.hpp"
#include "eegnn/metrics.hpp"
#include "eegnn/model.hpp"
#include "eegnn/optim.hpp"

namespace eegnn {

/// Everything a training run needs besides the data. Input, output and edge
/// dimensions of `model` are filled in from the data by fit_dims().
struct RunConfig {
  ModelConfig model;
  std::size_t epochs = 300;
  AdamOptions adam;
  std::uint64_t seed = 0;
  MetricKind metric = MetricKind::accuracy;
  LossKind loss = LossKind::ce;
  std::size_t eval_every = 1;
  ExitMode eval_mode = ExitMode::eval_argmax;
};

/// Reads a run configuration, appending every problem found. Keys listed in
/// `extra_keys` are accepted and left for the caller.
RunConfig run_config_from_json(const nlohmann::json& doc, std::vector<std::string>& problems,
                               const std::vector<std::string>& extra_keys = {});
nlohmann::json to_json(const RunConfig& cfg);

/// Graphs with their per-graph contexts. Node tasks use a single graph with
/// split masks; graph tasks use per-graph splits.
struct TaskData {
  TaskKind task = TaskKind::node_class;
  std::vector<Graph> graphs;
  std::vector<GraphContext> contexts;
  std::vector<Split> split;
  std::size_t classes = 0;        // class tasks
  std::size_t target_dim = 0;     // regression

  /// Node task: indices of nodes in the split. Graph task: graph indices.
  std::vector<std::size_t> members(Split s) const;
};

/// Validates the data against the task and precomputes contexts.
/// Throws ValidationError listing every problem.
TaskData prepare_data(GraphDataset data, TaskKind task);

/// Sets input_dim, output_dim and edge_dim of cfg.model from the data.
void fit_dims(RunConfig& cfg, const TaskData& data);

struct EvalOptions {
  ExitMode mode = ExitMode::eval_argmax;
  std::uint64_t seed = 0;  // Gumbel noise when mode is train_sample
  MetricKind metric = MetricKind::accuracy;
  LossKind loss = LossKind::ce;
};

struct EvalRecord {
  Split split = Split::test;
  double metric = 0.0;
  double loss = 0.0;
  std::size_t count = 0;
  std::optional<ExitDistribution> exits;   // eegnn only
  std::vector<std::size_t> agent_ids;       // agents behind `exits`
  ExitState exit_state;                     // restricted to agent_ids, eegnn only
};

EvalRecord evaluate(const Model& model, const TaskData& data, Split split, const EvalOptions& opts);

struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  double mean_exit_layer = 0.0;
};

struct TrainResult {
  Model model;                  // best validation checkpoint
  std::vector<HistoryRow> history;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

/// Full-batch training with Adam; deterministic in cfg.seed. Row 0 of the
/// history is the untrained model. Throws DivergenceError on a non-finite loss.
TrainResult train_run(const RunConfig& cfg, const TaskData& data);

/// Mean loss of the model over a split (no parameter update).
double split_loss(const Model& model, const TaskData& data, Split split, LossKind loss);

/// Header epoch,train_loss,val_metric,test_metric,mean_exit_layer.
void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history);

/// Formats a double so that it parses back to the same value.
std::string format_double(double v);

}  // namespace eegnn
