#include "eegnn/exit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "eegnn/errors.hpp"

namespace eegnn {

double gumbel_from_uniform(double u) {
  constexpr double kClamp = 1e-12;
  u = std::clamp(u, kClamp, 1.0 - kClamp);
  return -std::log(-std::log(u));
}

GumbelSample sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng) {
  GumbelSample s{Matrix(rows, cols)};
  for (double& v : s.g.data()) v = gumbel_from_uniform(rng.uniform());
  return s;
}

std::string_view to_string(ExitMode m) {
  return m == ExitMode::train_sample ? "train" : "eval";
}

ExitMode parse_exit_mode(std::string_view s) {
  if (s == "train") return ExitMode::train_sample;
  if (s == "eval") return ExitMode::eval_argmax;
  throw InputError("unknown mode '" + std::string(s) + "' (expected train or eval)", "mode");
}

ExitHeads make_exit_heads(std::size_t input, std::size_t depth, std::size_t hidden, double nu0,
                          bool graph_level, Rng& rng) {
  if (depth < 1 || depth > 3) throw InputError("must be 1, 2 or 3", "heads.depth");
  if (!(nu0 >= 0.0)) throw InputError("must be >= 0", "heads.nu0");
  auto build = [&](std::size_t out_dim) {
    std::vector<HeadLayer> layers;
    std::size_t fan_in = input;
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t fan_out = l + 1 == depth ? out_dim : hidden;
      HeadLayer layer;
      layer.neighbor = make_dense(fan_in, fan_out, true, rng);
      if (!graph_level) layer.self_weight = parameter(glorot(fan_in, fan_out, rng));
      layers.push_back(std::move(layer));
      fan_in = fan_out;
    }
    return layers;
  };
  ExitHeads heads;
  heads.confidence = build(2);
  heads.temperature = build(1);
  heads.nu0 = nu0;
  heads.graph_level = graph_level;
  return heads;
}

Var head_forward(const Var& h, const SparseMatrix& mean, const std::vector<HeadLayer>& layers,
                 bool graph_level) {
  Var out = h;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const HeadLayer& layer = layers[l];
    if (graph_level) {
      out = layer.neighbor.forward(out);
    } else {
      Var self_term = matmul_add(out, *layer.self_weight, layer.neighbor.bias);
      out = matmul_add(spmm(mean, out), layer.neighbor.weight, self_term);
    }
    if (l + 1 < layers.size()) out = activation(out, Activation::relu);
  }
  return out;
}

Var inv_temperature(const Var& h, const SparseMatrix& mean, const ExitHeads& heads) {
  Var raw = head_forward(h, mean, heads.temperature, heads.graph_level);
  return add_scalar(activation(raw, Activation::softplus), heads.nu0);
}

GumbelSoftmax gumbel_softmax_st(const Var& logits, const Var& inv_nu, const Matrix& g,
                                ExitMode mode) {
  if (logits.cols() != 2) throw ShapeError("gumbel_softmax_st: logits " + shape_string(logits.value()));
  if (!all_finite(logits.value())) throw InputError("non-finite exit logits", "logits");
  Var scores = row_log_softmax(logits);
  if (mode == ExitMode::train_sample) {
    if (!g.same_shape(logits.value()))
      throw ShapeError("gumbel_softmax_st: noise " + shape_string(g) + " for logits " +
                       shape_string(logits.value()));
    scores = add(scores, constant(g));
  }
  Var soft = row_softmax(mul_rows(scores, inv_nu));
  Matrix hard(soft.rows(), 2);
  for (std::size_t i = 0; i < soft.rows(); ++i) {
    const std::size_t pick = soft.value()(i, 1) > soft.value()(i, 0) ? 1 : 0;
    hard(i, pick) = 1.0;
  }
  return {soft, straight_through(std::move(hard), soft)};
}

namespace {

const Matrix& noise_for_layer(std::size_t layer, std::size_t rows, const ExitForwardOptions& opts,
                              Matrix& scratch) {
  if (opts.tape && layer < opts.tape->draws.size()) {
    const Matrix& g = opts.tape->draws[layer];
    if (g.rows() != rows || g.cols() != 2)
      throw ShapeError("noise tape layer " + std::to_string(layer) + " has shape " +
                       shape_string(g));
    return g;
  }
  if (!opts.rng) throw InputError("train_sample mode needs a random generator", "rng");
  scratch = sample_gumbel(rows, 2, *opts.rng).g;
  if (opts.tape) {
    opts.tape->draws.push_back(scratch);
    return opts.tape->draws.back();
  }
  return scratch;
}

std::optional<Var> cell_edge_term(const GraphContext& ctx, const CellParams& cell) {
  if (cell.edge_mode == EdgeMode::zero) return std::nullopt;
  if (!ctx.edge_sum) throw InputError("edge mode set but the graph has no edge features", "edge_mode");
  return edge_term(cell, *ctx.edge_sum);
}

// Decision for one layer: the step tau (n x 1 or 1 x 1) and the hard exit column.
struct Decision {
  Var tau;
  std::vector<bool> exit;
};

Decision decide(const Var& state, const GraphContext& ctx, const ExitHeads& heads,
                std::size_t layer, const ExitForwardOptions& opts) {
  const std::size_t rows = state.rows();
  Decision d;
  switch (opts.control.kind) {
    case ExitControl::Kind::never_exit:
      d.tau = constant(Matrix(1, 1, opts.control.tau0));
      d.exit.assign(rows, false);
      return d;
    case ExitControl::Kind::forced_logits: {
      const Matrix& row = opts.control.logits;
      if (row.rows() != 1 || row.cols() != 2)
        throw ShapeError("forced exit logits must be 1 x 2, got " + shape_string(row));
      Matrix logits(rows, 2);
      for (std::size_t i = 0; i < rows; ++i) {
        logits(i, 0) = row(0, 0);
        logits(i, 1) = row(0, 1);
      }
      auto gs = gumbel_softmax_st(constant(std::move(logits)), constant(Matrix(rows, 1, 1.0)),
                                  Matrix(), ExitMode::eval_argmax);
      d.tau = column(gs.soft, 0);
      for (std::size_t i = 0; i < rows; ++i) d.exit.push_back(gs.hard.value()(i, 1) == 1.0);
      return d;
    }
    case ExitControl::Kind::learned:
      break;
  }
  Var logits = head_forward(state, ctx.mean, heads.confidence, heads.graph_level);
  Var inv_nu = inv_temperature(state, ctx.mean, heads);
  Matrix scratch;
  const Matrix& g = opts.mode == ExitMode::train_sample
                        ? noise_for_layer(layer, rows, opts, scratch)
                        : scratch;
  auto gs = gumbel_softmax_st(logits, inv_nu, g, opts.mode);
  d.tau = column(gs.soft, 0);
  for (std::size_t i = 0; i < rows; ++i) d.exit.push_back(gs.hard.value()(i, 1) == 1.0);
  return d;
}

double mean_of(const Matrix& m) { return m.size() == 0 ? 0.0 : sum(m) / static_cast<double>(m.size()); }

}  // namespace

ExitResult eegnn_forward_node(const Var& h0, const GraphContext& ctx, const CellParams& cell,
                              const ExitHeads& heads, std::size_t layers,
                              const ExitForwardOptions& opts) {
  if (layers < 1) throw InputError("must be >= 1", "layers");
  if (h0.rows() != ctx.n) throw ShapeError("eegnn_forward_node: state rows " + shape_string(h0.value()));
  const std::size_t n = h0.rows();
  const SasWeights w = derive_weights(cell);
  const std::optional<Var> edge = cell_edge_term(ctx, cell);

  ExitResult r;
  r.state.exited.assign(n, false);
  r.state.exit_layer.assign(n, layers);
  r.state.exit_time.assign(n, 0.0);
  std::vector<Var> states{h0};
  Var h = h0;
  for (std::size_t l = 0; l < layers; ++l) {
    Decision d = decide(h, ctx, heads, l, opts);
    const Matrix& tv = d.tau.value();
    LayerTrace t{l, 0, 0, mean_of(tv)};
    for (std::size_t i = 0; i < n; ++i) {
      if (r.state.exited[i]) continue;
      ++t.active;
      if (d.exit[i]) {
        r.state.exited[i] = true;
        r.state.exit_layer[i] = l;
        ++t.exits;
      } else {
        r.state.exit_time[i] += tv.size() == 1 ? tv(0, 0) : tv(i, 0);
      }
    }
    r.trace.push_back(t);
    h = sas_step(h, ctx.adj, w, d.tau, edge);
    states.push_back(h);
    r.taus.push_back(std::move(d.tau));
  }
  r.z = assemble_rows(states, r.state.exit_layer);
  if (opts.keep_layers) r.layers = std::move(states);
  return r;
}

ExitResult eegnn_forward_graph(const Var& h0, const GraphContext& ctx, const CellParams& cell,
                               const ExitHeads& heads, std::size_t layers,
                               const ExitForwardOptions& opts) {
  if (layers < 1) throw InputError("must be >= 1", "layers");
  if (h0.rows() != ctx.n) throw ShapeError("eegnn_forward_graph: state rows " + shape_string(h0.value()));
  const SasWeights w = derive_weights(cell);
  const std::optional<Var> edge = cell_edge_term(ctx, cell);

  ExitResult r;
  r.state.exited.assign(1, false);
  r.state.exit_layer.assign(1, layers);
  r.state.exit_time.assign(1, 0.0);
  Var h = h0;
  if (opts.keep_layers) r.layers.push_back(h);
  for (std::size_t l = 0; l < layers; ++l) {
    Var pooled = masked_mean_pool(h);
    Decision d = decide(pooled, ctx, heads, l, opts);
    const double tau = d.tau.value()(0, 0);
    LayerTrace t{l, 0, 1, tau};
    if (d.exit[0]) {
      t.exits = 1;
      r.trace.push_back(t);
      r.state.exited[0] = true;
      r.state.exit_layer[0] = l;
      r.taus.push_back(std::move(d.tau));
      r.z = pooled;
      return r;
    }
    r.state.exit_time[0] += tau;
    r.trace.push_back(t);
    h = sas_step(h, ctx.adj, w, d.tau, edge);
    if (opts.keep_layers) r.layers.push_back(h);
    r.taus.push_back(std::move(d.tau));
  }
  r.z = masked_mean_pool(h);
  return r;
}

ExitDistribution exit_distribution(std::span<const std::size_t> exit_layers,
                                   std::span<const double> exit_times, std::size_t layers) {
  if (exit_layers.empty()) throw InputError("no exit records", "exits");
  if (exit_layers.size() != exit_times.size())
    throw ShapeError("exit_distribution: layer and time arrays differ in length");
  ExitDistribution d;
  d.histogram.assign(layers + 1, 0);
  for (std::size_t l : exit_layers) {
    if (l > layers) throw InputError("exit layer " + std::to_string(l) + " exceeds L", "exits");
    ++d.histogram[l];
  }
  std::vector<std::size_t> sorted(exit_layers.begin(), exit_layers.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  d.min = sorted.front();
  d.max = sorted.back();
  d.median = k % 2 == 1 ? static_cast<double>(sorted[k / 2])
                        : 0.5 * static_cast<double>(sorted[k / 2 - 1] + sorted[k / 2]);
  d.exit_times.assign(exit_times.begin(), exit_times.end());
  d.mean_layer = static_cast<double>(std::accumulate(sorted.begin(), sorted.end(), std::size_t{0})) /
                 static_cast<double>(k);
  d.mean_time = std::accumulate(d.exit_times.begin(), d.exit_times.end(), 0.0) / static_cast<double>(k);
  return d;
}

ExitDistribution exit_distribution(const ExitState& state, std::size_t layers,
                                   const std::vector<bool>& select) {
  std::vector<std::size_t> l;
  std::vector<double> t;
  for (std::size_t i = 0; i < state.exit_layer.size(); ++i) {
    if (!select.empty() && !select[i]) continue;
    l.push_back(state.exit_layer[i]);
    t.push_back(state.exit_time[i]);
  }
  return exit_distribution(l, t, layers);
}

void write_exits_csv(const std::filesystem::path& path, const ExitState& state,
                     std::span<const std::size_t> agent_ids) {
  if (!agent_ids.empty() && agent_ids.size() != state.exit_layer.size())
    throw ShapeError("write_exits_csv: " + std::to_string(agent_ids.size()) + " ids for " +
                     std::to_string(state.exit_layer.size()) + " agents");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "agent_id,exit_layer,exit_time\n";
  char buf[64];
  for (std::size_t i = 0; i < state.exit_layer.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", state.exit_time[i]);
    out << (agent_ids.empty() ? i : agent_ids[i]) << ',' << state.exit_layer[i] << ',' << buf << '\n';
  }
}

}  // namespace eegnn
