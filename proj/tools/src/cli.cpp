#include "eegnn_cli/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "eegnn/config.hpp"
#include "eegnn/diagnostics.hpp"
#include "eegnn/errors.hpp"
#include "eegnn/generators.hpp"
#include "eegnn/graph_io.hpp"
#include "eegnn/parallel.hpp"
#include "eegnn/train.hpp"

namespace eegnn::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Defaults <- flags <- config file.
json resolve(const CommonOptions& o, const char* mode_key) {
  json doc = json::object();
  if (o.seed) doc["seed"] = *o.seed;
  if (o.out) doc["out_dir"] = o.out->string();
  if (o.mode) {
    if (!mode_key) throw ValidationError({"mode: this command has no --mode"});
    doc[mode_key] = *o.mode;
  }
  if (o.config) {
    json file = read_json_file(*o.config);
    if (!file.is_object()) throw ValidationError({"config: must be a JSON object"});
    for (auto& [key, value] : file.items()) doc[key] = value;
  }
  return doc;
}

fs::path read_out_dir(ConfigReader& r) {
  std::string out = "out";
  r.read("out_dir", out);
  return out;
}

void require_clean(const std::vector<std::string>& problems) {
  if (!problems.empty()) throw ValidationError(problems);
}

GraphDataset load_dataset(const fs::path& path) {
  json doc = read_json_file(path);
  if (doc.is_object() && doc.contains("graphs")) return dataset_from_json(doc);
  GraphDataset ds;
  ds.graphs.push_back(graph_from_json(doc));
  ds.split.push_back(Split::train);
  return ds;
}

json distribution_json(const ExitDistribution& d, std::size_t count) {
  return json{{"count", count},       {"histogram", d.histogram}, {"min", d.min},
              {"median", d.median},   {"max", d.max},             {"mean_layer", d.mean_layer},
              {"mean_time", d.mean_time}};
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::all: return "all";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  for (Split v : {Split::train, Split::val, Split::test, Split::all})
    if (s == split_name(v)) return v;
  throw InputError("unknown split '" + s + "' (expected train, val, test, all)", "split");
}

// Every metric that applies to the task, plus the loss.
json split_metrics(const Model& model, const TaskData& data, Split split, ExitMode mode,
                   std::uint64_t seed, LossKind loss) {
  json out;
  std::vector<MetricKind> kinds;
  if (data.task == TaskKind::graph_reg) {
    kinds = {MetricKind::mae};
  } else {
    kinds = {MetricKind::accuracy, MetricKind::macro_f1};
    if (data.classes == 2) kinds.insert(kinds.end(), {MetricKind::auroc, MetricKind::ap});
  }
  for (MetricKind k : kinds) {
    EvalOptions eo{mode, seed, k, loss};
    try {
      EvalRecord rec = evaluate(model, data, split, eo);
      out[std::string(to_string(k))] = rec.metric;
      out["loss"] = rec.loss;
      out["count"] = rec.count;
    } catch (const InputError&) {
      out[std::string(to_string(k))] = nullptr;  // e.g. a single-class split for auroc
    }
  }
  return out;
}

LossKind default_loss(const ModelConfig& m) {
  if (m.task == TaskKind::graph_reg) return LossKind::mse;
  return m.output_dim == 1 ? LossKind::bce_logits : LossKind::ce;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Writes the exit CSV and returns the JSON summary for an eegnn evaluation.
json write_exits(const EvalRecord& rec, std::size_t layers, const fs::path& path) {
  write_exits_csv(path, rec.exit_state, rec.agent_ids);
  return distribution_json(exit_distribution(rec.exit_state, layers), rec.count);
}

}  // namespace

const std::vector<std::string>& diagnostic_names() {
  static const std::vector<std::string> names{"dirichlet",   "energy_descent",  "spectrum",
                                              "sensitivity", "depth_retention", "oracle_exit"};
  return names;
}

// ---- generate ----------------------------------------------------------

int cmd_generate(const CommonOptions& opts, std::ostream& log) {
  const json doc = resolve(opts, nullptr);
  std::vector<std::string> problems;
  ConfigReader r(doc, problems);
  const fs::path out = read_out_dir(r);
  std::string generator = "minesweeper_grid";
  r.read("generator", generator);
  std::uint64_t seed = 0;
  r.read("seed", seed);
  SplitFractions split;
  r.read("train_frac", split.train);
  r.read("val_frac", split.val);
  json resolved{{"generator", generator}, {"seed", seed}, {"train_frac", split.train}, {"val_frac", split.val}};

  Graph g;
  if (generator == "minesweeper_grid") {
    MinesweeperOptions mo;
    r.read("rows", mo.rows);
    r.read("cols", mo.cols);
    r.read("mine_prob", mo.mine_prob);
    r.read("unknown_frac", mo.unknown_frac);
    r.finish();
    require_clean(problems);
    mo.seed = seed;
    mo.split = split;
    resolved.update({{"rows", mo.rows}, {"cols", mo.cols}, {"mine_prob", mo.mine_prob},
                     {"unknown_frac", mo.unknown_frac}});
    g = minesweeper_grid(mo);
  } else if (generator == "sbm") {
    SbmOptions so;
    bool drop = true;
    r.read("sizes", so.sizes);
    r.read("p_in", so.p_in);
    r.read("p_out", so.p_out);
    r.read("feature_dim", so.feature_dim);
    r.read("feature_shift", so.feature_shift);
    r.read("drop_isolated", drop);
    r.finish();
    require_clean(problems);
    so.seed = seed;
    so.split = split;
    resolved.update({{"sizes", so.sizes}, {"p_in", so.p_in}, {"p_out", so.p_out},
                     {"feature_dim", so.feature_dim}, {"feature_shift", so.feature_shift},
                     {"drop_isolated", drop}});
    g = sbm(so);
    if (drop) g = drop_isolated(g);
  } else {
    r.problem("generator", "unknown generator '" + generator + "' (expected minesweeper_grid, sbm)");
    throw ValidationError(problems);
  }

  std::vector<std::size_t> counts;
  for (int y : g.labels) {
    if (static_cast<std::size_t>(y) >= counts.size()) counts.resize(static_cast<std::size_t>(y) + 1);
    ++counts[static_cast<std::size_t>(y)];
  }
  std::vector<double> fractions;
  for (std::size_t c : counts) fractions.push_back(static_cast<double>(c) / static_cast<double>(g.n()));
  json stats{{"n", g.n()},
             {"edges", g.num_arcs() / 2},
             {"arcs", g.num_arcs()},
             {"feature_dim", g.x.cols()},
             {"class_counts", counts},
             {"class_fractions", fractions},
             {"edge_homophily", edge_homophily(g)}};
  save_graph(g, out / "graph.json");
  write_json_file(stats, out / "graph_stats.json");
  write_json_file(resolved, out / "resolved_config.json");
  log << "wrote " << (out / "graph.json").string() << " (n=" << g.n() << ", edges=" << g.num_arcs() / 2
      << ", edge_homophily=" << edge_homophily(g) << ")\n";
  return ok;
}

// ---- train -------------------------------------------------------------

int cmd_train(const CommonOptions& opts, std::ostream& log) {
  const json doc = resolve(opts, "eval_mode");
  std::vector<std::string> problems;
  RunConfig cfg = run_config_from_json(doc, problems, {"data", "out_dir"});
  ConfigReader r(doc, problems);
  const fs::path out = read_out_dir(r);
  std::string data_path;
  if (!r.read("data", data_path)) r.problem("data", "path to the graph or dataset JSON is required");
  require_clean(problems);

  TaskData data = prepare_data(load_dataset(data_path), cfg.model.task);
  fit_dims(cfg, data);
  if ((cfg.metric == MetricKind::auroc || cfg.metric == MetricKind::ap) && data.classes != 2)
    throw ValidationError({"metric: " + std::string(to_string(cfg.metric)) + " needs binary labels"});

  TrainResult res = train_run(cfg, data);
  const Model& model = res.model;
  write_json_file(model.to_json(), out / "checkpoint.json");
  write_history_csv(out / "history.csv", res.history);

  json metrics{{"model", to_string(cfg.model.kind)},
               {"task", to_string(cfg.model.task)},
               {"layers", cfg.model.layers},
               {"selection_metric", to_string(cfg.metric)},
               {"best_epoch", res.best_epoch},
               {"best_val", res.best_val},
               {"param_count", model.parameter_count()}};
  for (Split s : {Split::train, Split::val, Split::test})
    metrics["splits"][split_name(s)] = split_metrics(model, data, s, cfg.eval_mode, cfg.seed, cfg.loss);
  if (cfg.model.kind == ModelKind::eegnn) {
    EvalRecord rec = evaluate(model, data, Split::test, EvalOptions{cfg.eval_mode, cfg.seed, cfg.metric, cfg.loss});
    metrics["exits"] = write_exits(rec, cfg.model.layers, out / "exits.csv");
  }
  write_json_file(metrics, out / "metrics.json");
  json resolved = to_json(cfg);
  resolved["data"] = data_path;
  write_json_file(resolved, out / "resolved_config.json");
  log << "trained " << to_string(cfg.model.kind) << " for " << cfg.epochs << " epochs; best "
      << to_string(cfg.metric) << " on val " << res.best_val << " at epoch " << res.best_epoch << '\n';
  return ok;
}

// ---- evaluate ----------------------------------------------------------

int cmd_evaluate(const CommonOptions& opts, std::ostream& log) {
  const json doc = resolve(opts, "mode");
  std::vector<std::string> problems;
  ConfigReader r(doc, problems);
  const fs::path out = read_out_dir(r);
  std::string checkpoint;
  std::string data_path;
  std::string split = "test";
  ExitMode mode = ExitMode::eval_argmax;
  std::uint64_t seed = 0;
  if (!r.read("checkpoint", checkpoint)) r.problem("checkpoint", "path to a checkpoint is required");
  if (!r.read("data", data_path)) r.problem("data", "path to the graph or dataset JSON is required");
  r.read("split", split);
  r.read_enum("mode", mode, parse_exit_mode);
  r.read("seed", seed);
  r.finish();
  Split which = Split::test;
  try {
    which = parse_split(split);
  } catch (const InputError& e) {
    problems.push_back(e.what());
  }
  require_clean(problems);

  Model model = Model::from_json(read_json_file(checkpoint));
  TaskData data = prepare_data(load_dataset(data_path), model.config().task);
  const LossKind loss = default_loss(model.config());
  json metrics{{"model", to_string(model.config().kind)},
               {"split", split},
               {"mode", to_string(mode)},
               {"metrics", split_metrics(model, data, which, mode, seed, loss)}};
  if (model.config().kind == ModelKind::eegnn) {
    const MetricKind k = data.task == TaskKind::graph_reg ? MetricKind::mae : MetricKind::accuracy;
    EvalRecord rec = evaluate(model, data, which, EvalOptions{mode, seed, k, loss});
    metrics["exits"] = write_exits(rec, model.config().layers, out / "exits.csv");
  }
  write_json_file(metrics, out / "metrics.json");
  write_json_file(json{{"checkpoint", checkpoint}, {"data", data_path}, {"split", split},
                       {"mode", to_string(mode)}, {"seed", seed}},
                  out / "resolved_config.json");
  log << "evaluated " << checkpoint << " on " << split << '\n';
  return ok;
}

// ---- diagnose ----------------------------------------------------------

namespace {

struct DiagnoseContext {
  std::uint64_t seed = 0;
  fs::path out;
  std::optional<TaskData> data;
  std::vector<Model> models;
};

json status(bool pass) { return pass ? "pass" : "fail"; }

std::string unique_name(const std::string& base, const std::string& kind, std::set<std::string>& used) {
  std::string name = base + "_" + kind;
  for (int k = 2; used.count(name); ++k) name = base + "_" + kind + "_" + std::to_string(k);
  used.insert(name);
  return name;
}

json run_dirichlet(DiagnoseContext& c) {
  json models = json::array();
  bool pass = true;
  std::set<std::string> used;
  for (const Model& m : c.models) {
    const std::string kind(to_string(m.config().kind));
    const CsrSkeleton& adj = c.data->graphs.front().adj;
    Trace sum_trace = dirichlet_trace(m, c.data->contexts.front(), adj, false);
    Trace mean_trace = dirichlet_trace(m, c.data->contexts.front(), adj, true);
    const std::string name = unique_name("dirichlet", kind, used);
    emit_trace(sum_trace, c.out / (name + ".csv"));
    emit_trace(mean_trace, c.out / ("dirichlet_mean" + name.substr(9) + ".csv"));
    const double first = sum_trace.values.front();
    const double last = sum_trace.values.back();
    const double ratio = first > 0.0 ? last / first : 0.0;
    const bool in_band = ratio >= 0.1 && ratio <= 10.0;
    if (m.config().kind == ModelKind::sas || m.config().kind == ModelKind::eegnn) pass = pass && in_band;
    models.push_back(json{{"model", kind}, {"file", name + ".csv"}, {"initial", first},
                          {"final", last}, {"ratio", ratio}, {"collapsed", ratio < 1e-3},
                          {"within_band", in_band}});
  }
  return json{{"models", models}, {"status", status(pass)}};
}

json run_energy_descent(DiagnoseContext& c, const json& cfg, std::vector<std::string>& problems) {
  ConfigReader r(cfg, problems, "energy_descent");
  std::size_t trials = 100;
  std::size_t steps = 50;
  double tau = 0.05;
  double weight_scale = 1.0;
  std::vector<std::string> modes{"zero", "neg_relu"};
  Activation sigma2 = Activation::relu;
  r.read("trials", trials);
  r.read("steps", steps);
  r.read("tau", tau);
  r.read("weight_scale", weight_scale);
  r.read("edge_modes", modes);
  r.read_enum("sigma2", sigma2, parse_activation);
  r.finish();
  std::vector<EdgeMode> edge_modes;
  for (const auto& m : modes) {
    try {
      edge_modes.push_back(parse_edge_mode(m));
    } catch (const InputError& e) {
      problems.push_back(std::string("energy_descent.edge_modes: ") + e.what());
    }
  }
  require_clean(problems);

  json per_mode = json::object();
  bool pass = true;
  for (EdgeMode mode : edge_modes) {
    struct Outcome {
      std::size_t violations = 0;
      double worst = 0.0;
    };
    auto outcomes = parallel_map<Outcome>(trials, [&](std::size_t t) {
      DescentInstance inst = random_descent_instance(Rng::split(c.seed, t).next(), mode, sigma2, weight_scale);
      DescentReport rep = descent_trace(inst.ctx, inst.graph.adj, inst.cell, inst.h0, steps, tau);
      if (t == 0) {
        rep.trace.metadata["trial"] = "0";
        emit_trace(rep.trace, c.out / ("energy_descent_" + std::string(to_string(mode)) + ".csv"));
      }
      Outcome o;
      o.violations = rep.violations.size();
      for (const auto& v : rep.violations) o.worst = std::max(o.worst, v.increase);
      return o;
    });
    std::size_t total = 0;
    std::size_t failing = 0;
    double worst = 0.0;
    for (const auto& o : outcomes) {
      total += o.violations;
      failing += o.violations > 0 ? 1 : 0;
      worst = std::max(worst, o.worst);
    }
    pass = pass && total == 0;
    per_mode[std::string(to_string(mode))] =
        json{{"trials", trials}, {"violations", total}, {"trials_with_violations", failing}, {"max_increase", worst}};
  }
  return json{{"steps", steps}, {"tau", tau}, {"sigma2", to_string(sigma2)}, {"edge_modes", per_mode},
              {"status", status(pass)}};
}

json run_spectrum(DiagnoseContext& c, const json& cfg, std::vector<std::string>& problems) {
  ConfigReader r(cfg, problems, "spectrum");
  std::size_t trials = 100;
  std::size_t lo = 2;
  std::size_t hi = 16;
  r.read("trials", trials);
  r.read("min_hidden", lo);
  r.read("max_hidden", hi);
  r.finish();
  if (lo < 1 || hi < lo || hi > 32) r.problem("max_hidden", "need 1 <= min_hidden <= max_hidden <= 32");
  require_clean(problems);

  struct Row {
    std::size_t m = 0;
    double re = 0.0;
    double skew = 0.0;
  };
  auto rows = parallel_map<Row>(trials, [&](std::size_t t) {
    Rng rng = Rng::split(c.seed, t);
    const std::size_t m = lo + rng.index(hi - lo + 1);
    SpectrumReport rep = random_spectrum(rng.next(), m);
    return Row{m, rep.max_abs_real, rep.skew_residual};
  });
  std::string csv = "trial,hidden,max_abs_real,skew_residual\n";
  double max_re = 0.0;
  double max_skew = 0.0;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    csv += std::to_string(t) + "," + std::to_string(rows[t].m) + "," + format_double(rows[t].re) + "," +
           format_double(rows[t].skew) + "\n";
    max_re = std::max(max_re, rows[t].re);
    max_skew = std::max(max_skew, rows[t].skew);
  }
  write_text(c.out / "spectrum.csv", csv);
  return json{{"trials", trials}, {"max_re_lambda", max_re}, {"max_skew_residual", max_skew},
              {"status", status(max_re <= 1e-8 && max_skew <= 1e-12)}};
}

json run_sensitivity(DiagnoseContext& c, const json& cfg, std::vector<std::string>& problems) {
  ConfigReader r(cfg, problems, "sensitivity");
  std::vector<std::size_t> layers;
  r.read("layers", layers);
  r.finish();
  require_clean(problems);
  const Model& m = c.models.front();
  if (layers.empty())
    for (std::size_t l = 0; l <= m.config().layers; ++l) layers.push_back(l);
  Trace s{"sensitivity", {}, {}, {{"model", std::string(to_string(m.config().kind))}}};
  Trace ln{"ln_sensitivity", {}, {}, s.metadata};
  for (std::size_t l : layers) {
    SensitivityResult res = sensitivity(m, c.data->contexts.front(), c.data->graphs.front().adj, l);
    s.layers.push_back(l);
    s.values.push_back(res.value);
    ln.layers.push_back(l);
    ln.values.push_back(res.log_value);
  }
  emit_trace(s, c.out / "sensitivity.csv");
  emit_trace(ln, c.out / "sensitivity_log.csv");
  json values = json::array();
  for (double v : s.values) values.push_back(v);
  return json{{"model", to_string(m.config().kind)}, {"layers", layers}, {"values", values}, {"status", "pass"}};
}

RunConfig nested_run_config(const json* cfg, const char* key, std::vector<std::string>& problems) {
  json train = json::object();
  if (cfg && cfg->contains(key)) train = (*cfg)[key];
  std::vector<std::string> inner;
  RunConfig rc = run_config_from_json(train, inner);
  for (auto& p : inner) problems.push_back(std::string(key) + "." + p);
  return rc;
}

json run_depth_retention(DiagnoseContext& c, const json& cfg, std::vector<std::string>& problems) {
  ConfigReader r(cfg, problems, "depth_retention");
  std::vector<std::string> names{"sas"};
  std::vector<std::size_t> depths{10, 50};
  double tolerance = 0.05;
  r.read("models", names);
  r.read("depths", depths);
  r.read("tolerance", tolerance);
  r.allow("train");
  r.finish();
  RunConfig base = nested_run_config(&cfg, "train", problems);
  std::vector<ModelKind> kinds;
  for (const auto& n : names) {
    try {
      kinds.push_back(parse_model_kind(n));
    } catch (const InputError& e) {
      problems.push_back(std::string("depth_retention.models: ") + e.what());
    }
  }
  if (depths.empty()) r.problem("depths", "needs at least one depth");
  require_clean(problems);
  if (!c.data->graphs.front().labels.empty()) base.model.task = TaskKind::node_class;
  base.seed = c.seed;
  fit_dims(base, *c.data);

  auto rows = depth_retention(*c.data, kinds, depths, base);
  write_depth_csv(c.out / "depth_retention.csv", rows);
  bool pass = true;
  json gaps = json::object();
  for (ModelKind k : kinds) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& row : rows) {
      if (row.kind != k) continue;
      lo = first ? row.test_metric : std::min(lo, row.test_metric);
      hi = first ? row.test_metric : std::max(hi, row.test_metric);
      first = false;
    }
    gaps[std::string(to_string(k))] = hi - lo;
    pass = pass && hi - lo <= tolerance;
  }
  json table = json::array();
  for (const auto& row : rows)
    table.push_back(json{{"model", to_string(row.kind)}, {"layers", row.layers}, {"test_metric", row.test_metric}});
  return json{{"metric", to_string(base.metric)}, {"rows", table}, {"gaps", gaps},
              {"tolerance", tolerance}, {"status", status(pass)}};
}

json run_oracle_exit(DiagnoseContext& c, const json& cfg, std::vector<std::string>& problems,
                     bool have_checkpoints) {
  ConfigReader r(cfg, problems, "oracle_exit");
  std::string split = "test";
  r.read("split", split);
  r.allow("train");
  r.finish();
  RunConfig base = nested_run_config(&cfg, "train", problems);
  Split which = Split::test;
  try {
    which = parse_split(split);
  } catch (const InputError& e) {
    problems.push_back(std::string("oracle_exit.") + e.what());
  }
  require_clean(problems);

  std::vector<Model> models;
  if (have_checkpoints) {
    models = c.models;
  } else {
    base.seed = c.seed;
    base.model.task = TaskKind::node_class;
    models.push_back(train_run(base, *c.data).model);
  }
  json runs = json::array();
  bool pass = true;
  std::set<std::string> used;
  for (const Model& m : models) {
    OracleExitResult res = oracle_exit_eval(m, *c.data, which);
    const std::string name = unique_name("oracle_exit", std::string(to_string(m.config().kind)), used);
    std::string csv = "node_id,oracle_layer\n";
    const auto nodes = c.data->members(which);
    for (std::size_t k = 0; k < nodes.size(); ++k)
      csv += std::to_string(nodes[k]) + "," + std::to_string(res.oracle_layer[k]) + "\n";
    write_text(c.out / (name + ".csv"), csv);
    pass = pass && res.oracle >= res.final_metric;
    runs.push_back(json{{"model", to_string(m.config().kind)}, {"file", name + ".csv"},
                        {"oracle_accuracy", res.oracle}, {"final_accuracy", res.final_metric},
                        {"improvement", res.oracle - res.final_metric}});
  }
  return json{{"split", split}, {"runs", runs}, {"status", status(pass)}};
}

}  // namespace

int cmd_diagnose(const CommonOptions& opts, std::ostream& log) {
  const json doc = resolve(opts, nullptr);
  std::vector<std::string> problems;
  ConfigReader r(doc, problems);
  DiagnoseContext c;
  c.out = read_out_dir(r);
  std::vector<std::string> names;
  std::string data_path;
  std::vector<std::string> checkpoints;
  std::vector<std::string> model_names{"gcn", "sas"};
  ModelConfig fresh;
  fresh.layers = 50;
  if (!r.read("diagnostics", names) || names.empty())
    r.problem("diagnostics", "list at least one of: dirichlet, energy_descent, spectrum, sensitivity, "
                             "depth_retention, oracle_exit");
  r.read("seed", c.seed);
  r.read("data", data_path);
  r.read("checkpoints", checkpoints);
  r.read("models", model_names);
  r.read("layers", fresh.layers);
  r.read("hidden", fresh.hidden);
  r.read("tau", fresh.tau);
  std::map<std::string, json> sections;
  for (const auto& n : diagnostic_names()) {
    sections[n] = json::object();
    if (const json* s = r.object(n)) sections[n] = *s;
  }
  r.finish();
  for (const auto& n : names)
    if (std::find(diagnostic_names().begin(), diagnostic_names().end(), n) == diagnostic_names().end())
      problems.push_back("diagnostics: unknown name '" + n +
                         "' (valid: dirichlet, energy_descent, spectrum, sensitivity, depth_retention, "
                         "oracle_exit)");
  auto wants = [&](const char* n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  const bool needs_data = wants("dirichlet") || wants("sensitivity") || wants("depth_retention") || wants("oracle_exit");
  if (needs_data && data_path.empty()) r.problem("data", "required by the requested diagnostics");
  std::vector<ModelKind> kinds;
  for (const auto& n : model_names) {
    try {
      kinds.push_back(parse_model_kind(n));
    } catch (const InputError& e) {
      problems.push_back(std::string("models: ") + e.what());
    }
  }
  require_clean(problems);

  if (needs_data) {
    std::vector<Model> loaded;
    for (const auto& p : checkpoints) loaded.push_back(Model::from_json(read_json_file(p)));
    const TaskKind task = loaded.empty() ? TaskKind::node_class : loaded.front().config().task;
    c.data = prepare_data(load_dataset(data_path), task);
    if (!loaded.empty()) {
      c.models = std::move(loaded);
    } else {
      RunConfig rc;
      rc.model = fresh;
      fit_dims(rc, *c.data);
      for (ModelKind k : kinds) {
        rc.model.kind = k;
        c.models.emplace_back(rc.model, c.seed);
      }
    }
    if (c.models.empty()) throw ValidationError({"models: at least one model is required"});
  }

  json report{{"seed", c.seed}};
  bool pass = true;
  for (const auto& n : names) {
    json res;
    if (n == "dirichlet") res = run_dirichlet(c);
    else if (n == "energy_descent") res = run_energy_descent(c, sections[n], problems);
    else if (n == "spectrum") res = run_spectrum(c, sections[n], problems);
    else if (n == "sensitivity") res = run_sensitivity(c, sections[n], problems);
    else if (n == "depth_retention") res = run_depth_retention(c, sections[n], problems);
    else res = run_oracle_exit(c, sections[n], problems, !checkpoints.empty());
    pass = pass && res["status"] == "pass";
    report["diagnostics"][n] = res;
    log << n << ": " << res["status"].get<std::string>() << '\n';
  }
  report["status"] = status(pass);
  write_json_file(report, c.out / "report.json");
  json resolved = doc;
  resolved.erase("out_dir");
  resolved["seed"] = c.seed;
  write_json_file(resolved, c.out / "resolved_config.json");
  return pass ? ok : tolerance_failure;
}

// ---- param-count -------------------------------------------------------

int cmd_param_count(const CommonOptions& opts, std::ostream& log) {
  const json doc = resolve(opts, nullptr);
  std::vector<std::string> problems;
  ConfigReader r(doc, problems);
  const fs::path out = read_out_dir(r);
  ModelShape s;
  r.read_enum("model", s.kind, parse_model_kind);
  r.read("input_dim", s.input_dim);
  r.read("hidden", s.hidden);
  r.read("output_dim", s.output_dim);
  r.read("layers", s.layers);
  r.read("edge_dim", s.edge_dim);
  r.read("decoder_hidden", s.decoder_hidden);
  r.read("decoder_bias", s.decoder_bias);
  r.read("graph_level", s.graph_level);
  if (const json* heads = r.object("heads")) {
    ConfigReader h(*heads, problems, "heads");
    h.read("depth", s.head_depth);
    h.read("hidden", s.head_hidden);
    h.finish();
  }
  r.allow("seed");
  r.finish();
  require_clean(problems);
  const ParamBreakdown b = param_count(s);
  json result{{"model", to_string(s.kind)}, {"layers", s.layers}, {"total", b.total()}, {"by_module", b.by_module}};
  write_json_file(result, out / "param_count.json");
  write_json_file(json{{"model", to_string(s.kind)}, {"input_dim", s.input_dim}, {"hidden", s.hidden},
                       {"output_dim", s.output_dim}, {"layers", s.layers}, {"edge_dim", s.edge_dim},
                       {"decoder_hidden", s.decoder_hidden}, {"decoder_bias", s.decoder_bias},
                       {"graph_level", s.graph_level},
                       {"heads", {{"depth", s.head_depth}, {"hidden", s.head_hidden}}}},
                  out / "resolved_config.json");
  log << result.dump() << '\n';
  return ok;
}

// ---- entry point -------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive-step early-exit graph networks: data generation, training, evaluation and diagnostics"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::string config, out_dir, mode;
  std::uint64_t seed = 0;

  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const CommonOptions&, std::ostream&);
  };
  const Entry entries[] = {
      {"generate", "Write a synthetic graph and its statistics", cmd_generate},
      {"train", "Train a model and write checkpoint, history and metrics", cmd_train},
      {"evaluate", "Evaluate a checkpoint on a data split", cmd_evaluate},
      {"diagnose", "Run diagnostics and write traces and a report", cmd_diagnose},
      {"param-count", "Count model parameters by module", cmd_param_count},
  };
  std::vector<CLI::App*> subs;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", config, "JSON config file; its values override flags");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--mode", mode, "Forward mode: train (sampled exits) or eval")->check(CLI::IsMember({"train", "eval"}));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : validation_error;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    CLI::App* sub = subs[i];
    if (!sub->parsed()) continue;
    if (sub->count("--config")) opts.config = config;
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->count("--out")) opts.out = out_dir;
    if (sub->count("--mode")) opts.mode = mode;
    try {
      return entries[i].fn(opts, out);
    } catch (const ValidationError& e) {
      err << "error: " << e.what() << '\n';
      return validation_error;
    } catch (const std::invalid_argument& e) {
      err << "error: " << e.what() << '\n';
      return validation_error;
    } catch (const std::exception& e) {
      err << "failure: " << e.what() << '\n';
      return runtime_failure;
    }
  }
  return validation_error;
}

}  // namespace eegnn::cli
