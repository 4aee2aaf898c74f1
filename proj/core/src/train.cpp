#include "eegnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "eegnn/config.hpp"
#include "eegnn/errors.hpp"
#include "eegnn/parallel.hpp"

namespace eegnn {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- configuration -----------------------------------------------------

RunConfig run_config_from_json(const json& doc, std::vector<std::string>& problems,
                               const std::vector<std::string>& extra_keys) {
  RunConfig cfg;
  ConfigReader r(doc, problems);
  for (const auto& k : extra_keys) r.allow(k);

  ModelConfig& m = cfg.model;
  r.read_enum("task", m.task, parse_task_kind);
  r.read_enum("model", m.kind, parse_model_kind);
  r.read("layers", m.layers);
  r.read("hidden", m.hidden);
  r.read("tau", m.tau);
  r.read_enum("sigma1", m.sigma1, parse_activation);
  r.read_enum("sigma2", m.sigma2, parse_activation);
  r.read_enum("edge_mode", m.edge_mode, parse_edge_mode);
  r.read("decoder_hidden", m.decoder_hidden);
  r.read("decoder_bias", m.decoder_bias);
  if (const json* heads = r.object("heads")) {
    ConfigReader h(*heads, problems, "heads");
    h.read("depth", m.head_depth);
    h.read("hidden", m.head_hidden);
    h.read("nu0", m.nu0);
    h.finish();
  }
  r.read("epochs", cfg.epochs);
  r.read("lr", cfg.adam.lr);
  r.read("beta1", cfg.adam.beta1);
  r.read("beta2", cfg.adam.beta2);
  r.read("weight_decay", cfg.adam.weight_decay);
  r.read("decoupled_weight_decay", cfg.adam.decoupled);
  r.read("seed", cfg.seed);
  cfg.metric = m.task == TaskKind::graph_reg ? MetricKind::mae : MetricKind::accuracy;
  cfg.loss = m.task == TaskKind::graph_reg ? LossKind::mse : LossKind::ce;
  r.read_enum("metric", cfg.metric, parse_metric_kind);
  r.read_enum("loss", cfg.loss, parse_loss_kind);
  r.read("eval_every", cfg.eval_every);
  r.read_enum("eval_mode", cfg.eval_mode, parse_exit_mode);
  r.finish();

  if (m.layers < 1) r.problem("layers", "must be >= 1");
  if (m.hidden < 1) r.problem("hidden", "must be >= 1");
  if (!(m.tau > 0.0 && m.tau <= 1.0)) r.problem("tau", "must lie in (0, 1]");
  if (m.head_depth < 1 || m.head_depth > 3) r.problem("heads.depth", "must be 1, 2 or 3");
  if (m.head_hidden < 1) r.problem("heads.hidden", "must be >= 1");
  if (!(m.nu0 >= 0.0)) r.problem("heads.nu0", "must be >= 0");
  if (!(cfg.adam.lr >= 0.0)) r.problem("lr", "must be >= 0");
  if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0)) r.problem("beta1", "must lie in [0, 1)");
  if (!(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0)) r.problem("beta2", "must lie in [0, 1)");
  if (!(cfg.adam.weight_decay >= 0.0)) r.problem("weight_decay", "must be >= 0");
  if (cfg.eval_every < 1) r.problem("eval_every", "must be >= 1");
  const bool reg = m.task == TaskKind::graph_reg;
  if (reg && cfg.metric != MetricKind::mae) r.problem("metric", "regression supports only mae");
  if (!reg && cfg.metric == MetricKind::mae) r.problem("metric", "mae needs a regression task");
  if (reg && (cfg.loss == LossKind::ce || cfg.loss == LossKind::bce_logits))
    r.problem("loss", "regression needs mse or l1");
  if (!reg && (cfg.loss == LossKind::mse || cfg.loss == LossKind::l1))
    r.problem("loss", "classification needs ce or bce_logits");
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  return json{{"task", to_string(m.task)},
              {"model", to_string(m.kind)},
              {"layers", m.layers},
              {"hidden", m.hidden},
              {"tau", m.tau},
              {"sigma1", to_string(m.sigma1)},
              {"sigma2", to_string(m.sigma2)},
              {"edge_mode", to_string(m.edge_mode)},
              {"decoder_hidden", m.decoder_hidden},
              {"decoder_bias", m.decoder_bias},
              {"heads", {{"depth", m.head_depth}, {"hidden", m.head_hidden}, {"nu0", m.nu0}}},
              {"epochs", cfg.epochs},
              {"lr", cfg.adam.lr},
              {"beta1", cfg.adam.beta1},
              {"beta2", cfg.adam.beta2},
              {"weight_decay", cfg.adam.weight_decay},
              {"decoupled_weight_decay", cfg.adam.decoupled},
              {"seed", cfg.seed},
              {"metric", to_string(cfg.metric)},
              {"loss", to_string(cfg.loss)},
              {"eval_every", cfg.eval_every},
              {"eval_mode", to_string(cfg.eval_mode)}};
}

// ---- data --------------------------------------------------------------

std::vector<std::size_t> TaskData::members(Split s) const {
  if (task == TaskKind::node_class) return graphs.front().split_nodes(s);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < graphs.size(); ++i)
    if (s == Split::all || split[i] == s) out.push_back(i);
  return out;
}

TaskData prepare_data(GraphDataset ds, TaskKind task) {
  std::vector<std::string> problems;
  TaskData d;
  d.task = task;
  if (ds.graphs.empty()) throw ValidationError({"data: no graphs"});
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    const std::string where = ds.graphs.size() == 1 ? "data" : "data.graphs[" + std::to_string(i) + "]";
    for (const auto& p : validate(ds.graphs[i])) problems.push_back(where + ": " + p);
    for (std::size_t u = 0; u < ds.graphs[i].n(); ++u)
      if (ds.graphs[i].adj.degree(u) == 0) {
        problems.push_back(where + ": node " + std::to_string(u) + " is isolated");
        break;
      }
  }
  if (task == TaskKind::node_class) {
    if (ds.graphs.size() != 1) problems.push_back("data: node tasks need exactly one graph");
    const Graph& g = ds.graphs.front();
    if (g.labels.size() != g.n()) problems.push_back("data.y: node labels required");
    if (g.masks.train.empty() || g.masks.val.empty() || g.masks.test.empty())
      problems.push_back("data.masks: train, val and test masks required");
    int max_label = 0;
    for (int y : g.labels) max_label = std::max(max_label, y);
    d.classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  } else {
    if (ds.split.size() != ds.graphs.size()) problems.push_back("data.split: one entry per graph required");
    std::size_t max_class = 0;
    for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
      const auto& t = ds.graphs[i].graph_target;
      const std::string where = "data.graphs[" + std::to_string(i) + "].y";
      if (task == TaskKind::graph_class) {
        if (t.size() != 1 || !(t[0] >= 0.0) || t[0] != std::floor(t[0]))
          problems.push_back(where + ": graph classification needs one non-negative integer target");
        else
          max_class = std::max(max_class, static_cast<std::size_t>(t[0]));
      } else {
        if (t.empty()) problems.push_back(where + ": regression target required");
        else if (d.target_dim == 0) d.target_dim = t.size();
        else if (t.size() != d.target_dim) problems.push_back(where + ": target length differs");
      }
    }
    d.classes = task == TaskKind::graph_class ? std::max<std::size_t>(2, max_class + 1) : 0;
  }
  if (!problems.empty()) throw ValidationError(problems);
  d.graphs = std::move(ds.graphs);
  d.split = std::move(ds.split);
  for (const Graph& g : d.graphs) d.contexts.push_back(make_context(g));
  for (Split s : {Split::train, Split::val, Split::test})
    if (d.members(s).empty())
      problems.push_back(std::string("data: the ") +
                         (s == Split::train ? "train" : s == Split::val ? "val" : "test") +
                         " split is empty");
  if (!problems.empty()) throw ValidationError(problems);
  return d;
}

void fit_dims(RunConfig& cfg, const TaskData& data) {
  const Graph& g = data.graphs.front();
  cfg.model.task = data.task;
  cfg.model.input_dim = g.x.cols();
  cfg.model.edge_dim = g.edge_attr ? g.edge_attr->cols() : 0;
  if (data.task == TaskKind::graph_reg)
    cfg.model.output_dim = data.target_dim;
  else
    cfg.model.output_dim = cfg.loss == LossKind::bce_logits ? 1 : data.classes;
  if (cfg.loss == LossKind::bce_logits && data.classes != 2)
    throw ValidationError({"loss: bce_logits needs binary labels"});
}

// ---- evaluation --------------------------------------------------------

namespace {

Matrix node_targets(const Graph& g, const std::vector<std::size_t>& nodes) {
  Matrix t(nodes.size(), 1);
  for (std::size_t k = 0; k < nodes.size(); ++k) t(k, 0) = g.labels[nodes[k]];
  return t;
}

Matrix graph_targets(const Graph& g, TaskKind task) {
  if (task == TaskKind::graph_class) return Matrix(1, 1, g.graph_target[0]);
  return Matrix(1, g.graph_target.size(), g.graph_target);
}

// Class-1 probability and predicted class of one output row.
std::pair<double, std::size_t> classify(std::span<const double> row) {
  if (row.size() == 1) {
    const double p = 1.0 / (1.0 + std::exp(-row[0]));
    return {p, row[0] > 0.0 ? 1 : 0};
  }
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  const std::size_t arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  return {std::exp(row[1] - mx) / z, arg};
}

double score(MetricKind kind, const Matrix& outputs, const Matrix& targets, std::size_t classes) {
  if (kind == MetricKind::mae) return mae(outputs.data(), targets.data());
  std::vector<double> p1;
  std::vector<std::size_t> pred;
  std::vector<std::size_t> truth;
  std::vector<int> binary;
  for (std::size_t i = 0; i < outputs.rows(); ++i) {
    auto [p, c] = classify(outputs.row(i));
    p1.push_back(p);
    pred.push_back(c);
    truth.push_back(static_cast<std::size_t>(targets(i, 0)));
    binary.push_back(truth.back() == 1 ? 1 : 0);
  }
  switch (kind) {
    case MetricKind::accuracy: return accuracy(pred, truth);
    case MetricKind::macro_f1: return macro_f1(pred, truth, classes);
    case MetricKind::auroc:
    case MetricKind::ap:
      if (classes != 2) throw InputError("needs a binary task", std::string(to_string(kind)));
      return kind == MetricKind::auroc ? auroc(p1, binary) : average_precision(p1, binary);
    case MetricKind::mae: break;
  }
  return 0.0;
}

ForwardOptions forward_options(ExitMode mode, Rng* rng) {
  ForwardOptions fo;
  fo.mode = mode;
  fo.rng = rng;
  return fo;
}

std::vector<EvalRecord> evaluate_splits(const Model& model, const TaskData& data,
                                        const std::vector<Split>& splits, const EvalOptions& opts) {
  std::vector<EvalRecord> out;
  const bool eegnn = model.config().kind == ModelKind::eegnn;
  const std::size_t layers = model.config().layers;

  if (data.task == TaskKind::node_class) {
    NoGradGuard guard;
    Rng rng = Rng::split(opts.seed, 0);
    ForwardPass pass = model.forward(data.contexts.front(), forward_options(opts.mode, &rng));
    for (Split s : splits) {
      EvalRecord rec;
      rec.split = s;
      rec.agent_ids = data.members(s);
      rec.count = rec.agent_ids.size();
      Var rows = gather_rows(pass.output, rec.agent_ids);
      Matrix t = node_targets(data.graphs.front(), rec.agent_ids);
      rec.loss = loss_eval(rows, t, opts.loss).value()(0, 0);
      rec.metric = score(opts.metric, rows.value(), t, data.classes);
      if (eegnn) {
        for (std::size_t i : rec.agent_ids) {
          rec.exit_state.exited.push_back(pass.exits->exited[i]);
          rec.exit_state.exit_layer.push_back(pass.exits->exit_layer[i]);
          rec.exit_state.exit_time.push_back(pass.exits->exit_time[i]);
        }
        rec.exits = exit_distribution(rec.exit_state, layers);
      }
      out.push_back(std::move(rec));
    }
    return out;
  }

  struct GraphEval {
    Matrix output;
    double loss = 0.0;
    std::size_t exit_layer = 0;
    double exit_time = 0.0;
    bool exited = false;
  };
  for (Split s : splits) {
    EvalRecord rec;
    rec.split = s;
    rec.agent_ids = data.members(s);
    rec.count = rec.agent_ids.size();
    auto results = parallel_map<GraphEval>(rec.count, [&](std::size_t k) {
      NoGradGuard guard;
      const std::size_t gi = rec.agent_ids[k];
      Rng rng = Rng::split(opts.seed, gi);
      ForwardPass pass = model.forward(data.contexts[gi], forward_options(opts.mode, &rng));
      GraphEval e;
      e.output = pass.output.value();
      e.loss = loss_eval(pass.output, graph_targets(data.graphs[gi], data.task), opts.loss).value()(0, 0);
      if (pass.exits) {
        e.exited = pass.exits->exited[0];
        e.exit_layer = pass.exits->exit_layer[0];
        e.exit_time = pass.exits->exit_time[0];
      }
      return e;
    });
    const std::size_t width = results.front().output.cols();
    const std::size_t tw = data.task == TaskKind::graph_class ? 1 : data.target_dim;
    Matrix outputs(rec.count, width);
    Matrix targets(rec.count, tw);
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < rec.count; ++k) {
      std::copy(results[k].output.data().begin(), results[k].output.data().end(), outputs.row(k).begin());
      Matrix t = graph_targets(data.graphs[rec.agent_ids[k]], data.task);
      std::copy(t.data().begin(), t.data().end(), targets.row(k).begin());
      loss_sum += results[k].loss;
      if (eegnn) {
        rec.exit_state.exited.push_back(results[k].exited);
        rec.exit_state.exit_layer.push_back(results[k].exit_layer);
        rec.exit_state.exit_time.push_back(results[k].exit_time);
      }
    }
    rec.loss = loss_sum / static_cast<double>(rec.count);
    rec.metric = score(opts.metric, outputs, targets, data.classes);
    if (eegnn) rec.exits = exit_distribution(rec.exit_state, layers);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<Matrix> snapshot(const Model& m) {
  std::vector<Matrix> out;
  for (const Var& v : m.parameters()) out.push_back(v.value());
  return out;
}

void restore(Model& m, const std::vector<Matrix>& values) {
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = values[i];
}

}  // namespace

EvalRecord evaluate(const Model& model, const TaskData& data, Split split, const EvalOptions& opts) {
  if (data.members(split).empty()) throw InputError("split has no members", "split");
  return evaluate_splits(model, data, {split}, opts).front();
}

double split_loss(const Model& model, const TaskData& data, Split split, LossKind loss) {
  EvalOptions eo;
  eo.loss = loss;
  eo.metric = data.task == TaskKind::graph_reg ? MetricKind::mae : MetricKind::accuracy;
  return evaluate(model, data, split, eo).loss;
}

TrainResult train_run(const RunConfig& cfg_in, const TaskData& data) {
  RunConfig cfg = cfg_in;
  fit_dims(cfg, data);
  TrainResult result;
  result.model = Model(cfg.model, cfg.seed);
  Model& model = result.model;
  Adam adam(model.parameters(), cfg.adam);
  Rng noise = Rng::split(cfg.seed, 1);

  EvalOptions eo;
  eo.mode = cfg.eval_mode;
  eo.seed = cfg.seed;
  eo.metric = cfg.metric;
  eo.loss = cfg.loss;
  const bool higher = higher_is_better(cfg.metric);

  const auto train_members = data.members(Split::train);
  const Matrix node_target =
      data.task == TaskKind::node_class ? node_targets(data.graphs.front(), train_members) : Matrix();

  std::vector<Matrix> best;
  auto record = [&](std::size_t epoch, double train_loss) {
    auto recs = evaluate_splits(model, data, {Split::val, Split::test}, eo);
    HistoryRow row{epoch, train_loss, recs[0].metric, recs[1].metric,
                   recs[1].exits ? recs[1].exits->mean_layer : static_cast<double>(cfg.model.layers)};
    result.history.push_back(row);
    const bool improved = best.empty() || (higher ? row.val_metric > result.best_val
                                                  : row.val_metric < result.best_val);
    if (improved) {
      best = snapshot(model);
      result.best_val = row.val_metric;
      result.best_epoch = epoch;
    }
  };
  record(0, split_loss(model, data, Split::train, cfg.loss));

  ForwardOptions fo;
  fo.mode = ExitMode::train_sample;
  fo.rng = &noise;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    adam.zero_grad();
    double loss_value = 0.0;
    if (data.task == TaskKind::node_class) {
      ForwardPass pass = model.forward(data.contexts.front(), fo);
      Var loss = loss_eval(gather_rows(pass.output, train_members), node_target, cfg.loss);
      loss_value = loss.value()(0, 0);
      if (!std::isfinite(loss_value)) throw DivergenceError(static_cast<int>(epoch));
      backward(loss);
    } else {
      const double w = 1.0 / static_cast<double>(train_members.size());
      for (std::size_t gi : train_members) {
        ForwardPass pass = model.forward(data.contexts[gi], fo);
        Var loss = scale(loss_eval(pass.output, graph_targets(data.graphs[gi], data.task), cfg.loss), w);
        loss_value += loss.value()(0, 0);
        if (!std::isfinite(loss_value)) throw DivergenceError(static_cast<int>(epoch));
        backward(loss);
      }
    }
    adam.step();
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) record(epoch, loss_value);
  }
  restore(model, best);
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_metric,test_metric,mean_exit_layer\n";
  for (const auto& r : history)
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_metric) << ','
        << format_double(r.test_metric) << ',' << format_double(r.mean_exit_layer) << '\n';
}

}  // namespace eegnn
