#include "eegnn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "eegnn/eigen_solver.hpp"
#include "eegnn/errors.hpp"

namespace eegnn {

// ---- traces ------------------------------------------------------------

void emit_trace(const Trace& trace, const std::filesystem::path& path) {
  if (trace.layers.size() != trace.values.size())
    throw ShapeError("trace '" + trace.name + "': layer and value arrays differ in length");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# name: " << trace.name << '\n';
  for (const auto& [key, value] : trace.metadata) out << "# " << key << ": " << value << '\n';
  out << "layer,value\n";
  for (std::size_t i = 0; i < trace.layers.size(); ++i)
    out << trace.layers[i] << ',' << format_double(trace.values[i]) << '\n';
}

Trace parse_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string(), "path");
  Trace t;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(": ");
      if (colon == std::string::npos) throw InputError("bad metadata line '" + line + "'", "trace");
      const std::string key = line.substr(2, colon - 2);
      const std::string value = line.substr(colon + 2);
      if (key == "name")
        t.name = value;
      else
        t.metadata[key] = value;
      continue;
    }
    if (!header) {
      if (line != "layer,value") throw InputError("missing layer,value header", "trace");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InputError("bad row '" + line + "'", "trace");
    try {
      t.layers.push_back(std::stoull(line.substr(0, comma)));
      t.values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw InputError("bad row '" + line + "'", "trace");
    }
  }
  return t;
}

// ---- energies ----------------------------------------------------------

double dirichlet_energy(const Matrix& h, const CsrSkeleton& adj) {
  if (h.rows() != adj.n)
    throw ShapeError("dirichlet_energy: state " + shape_string(h) + " for " + std::to_string(adj.n) + " nodes");
  std::vector<double> inv(adj.n);
  for (std::size_t u = 0; u < adj.n; ++u) inv[u] = 1.0 / std::sqrt(static_cast<double>(adj.degree(u)) + 1.0);
  double total = 0.0;
  for (std::size_t u = 0; u < adj.n; ++u) {
    auto hu = h.row(u);
    for (std::size_t v : adj.neighbors(u)) {
      auto hv = h.row(v);
      for (std::size_t k = 0; k < h.cols(); ++k) {
        const double d = hv[k] * inv[v] - hu[k] * inv[u];
        total += d * d;
      }
    }
  }
  return total;
}

double energy_functional(const Matrix& h, const Matrix& w_s, const CsrSkeleton& adj) {
  if (h.rows() != adj.n || w_s.rows() != h.cols() || w_s.cols() != h.cols())
    throw ShapeError("energy_functional: state " + shape_string(h) + ", weight " + shape_string(w_s));
  if (symmetry_residual(w_s) > 1e-12) throw InputError("W_s must be symmetric", "w_s");
  const Matrix hw = matmul(h, w_s);
  double total = 0.0;
  for (std::size_t u = 0; u < adj.n; ++u) {
    auto hu = h.row(u);
    for (std::size_t v : adj.neighbors(u)) {
      auto hv = hw.row(v);
      double dot = 0.0;
      for (std::size_t k = 0; k < h.cols(); ++k) dot += hu[k] * hv[k];
      total -= dot / std::sqrt(static_cast<double>(adj.degree(u) * adj.degree(v)));
    }
  }
  return total;
}

DescentReport descent_trace(const GraphContext& ctx, const CsrSkeleton& adj, const CellParams& cell,
                            const Matrix& h0, std::size_t steps, double tau, double slack) {
  NoGradGuard guard;
  const SasWeights w = derive_weights(cell);
  std::optional<Var> edge;
  if (cell.edge_mode != EdgeMode::zero) {
    if (!ctx.edge_sum) throw InputError("edge mode set but the graph has no edge features", "edge_mode");
    edge = edge_term(cell, *ctx.edge_sum);
  }
  const Matrix& ws = w.w_s.value();
  DescentReport r;
  r.trace.name = "energy_functional";
  r.trace.metadata["tau"] = format_double(tau);
  r.trace.metadata["edge_mode"] = std::string(to_string(cell.edge_mode));
  Var h = constant(h0);
  double prev = energy_functional(h0, ws, adj);
  r.trace.layers.push_back(0);
  r.trace.values.push_back(prev);
  for (std::size_t t = 1; t <= steps; ++t) {
    h = sas_step(h, ctx.adj, w, tau, edge);
    const double e = energy_functional(h.value(), ws, adj);
    if (e > prev + slack) r.violations.push_back({t, e - prev});
    r.trace.layers.push_back(t);
    r.trace.values.push_back(e);
    prev = e;
  }
  return r;
}

DescentInstance random_descent_instance(std::uint64_t seed, EdgeMode edge_mode, Activation sigma2,
                                        double weight_scale) {
  Rng rng = Rng::split(seed, 0xde5c);
  const std::size_t n = 6 + rng.index(25);
  const std::size_t m = 2 + rng.index(15);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(0.2)) edges.emplace_back(u, v);
  std::vector<std::size_t> degree(n);
  for (auto [u, v] : edges) ++degree[u], ++degree[v];
  for (std::size_t u = 0; u < n; ++u)
    if (degree[u] == 0) {
      const std::size_t v = (u + 1 + rng.index(n - 1)) % n;
      edges.emplace_back(u, v);
      ++degree[u];
      ++degree[v];
    }

  DescentInstance inst;
  inst.graph.adj = canonicalize(edges, n);
  inst.graph.x = Matrix(n, 1);
  if (edge_mode != EdgeMode::zero) {
    const CsrSkeleton& s = inst.graph.adj;
    Matrix attr(s.num_arcs(), 3);
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t k = s.row_offsets[u]; k < s.row_offsets[u + 1]; ++k) {
        const std::size_t v = s.col_indices[k];
        if (v < u) continue;
        const std::size_t back = s.find_arc(v, u);
        for (std::size_t c = 0; c < 3; ++c) attr(k, c) = attr(back, c) = rng.normal();
      }
    inst.graph.edge_attr = std::move(attr);
  }
  inst.ctx = make_context(inst.graph);
  inst.cell.omega_raw = parameter(normal_matrix(m, m, rng, weight_scale));
  inst.cell.w_raw = parameter(normal_matrix(m, m, rng, weight_scale));
  if (edge_mode != EdgeMode::zero) inst.cell.w_e = parameter(normal_matrix(3, m, rng, weight_scale));
  inst.cell.edge_mode = edge_mode;
  inst.cell.sigma2 = sigma2;
  inst.cell.tau = 0.05;
  inst.h0 = normal_matrix(n, m, rng);
  return inst;
}

// ---- spectrum ----------------------------------------------------------

SpectrumReport sas_jacobian(const Matrix& omega_raw, std::span<const double> h,
                            std::span<const double> neighbor, Activation sigma1, Activation sigma2) {
  const std::size_t m = h.size();
  if (m > 32) throw InputError("dense eigensolver budget is hidden <= 32", "hidden");
  if (omega_raw.rows() != m || omega_raw.cols() != m || neighbor.size() != m)
    throw ShapeError("sas_jacobian: Omega " + shape_string(omega_raw) + " for a state of size " +
                     std::to_string(m));
  Matrix omega_as(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) omega_as(i, j) = omega_raw(i, j) - omega_raw(j, i);

  std::vector<double> factor(m);
  for (std::size_t j = 0; j < m; ++j) {
    double pre2 = 0.0;
    for (std::size_t k = 0; k < m; ++k) pre2 += h[k] * omega_as(k, j);
    const double pre1 = -activate(sigma2, pre2) + neighbor[j];
    factor[j] = activate_derivative(sigma1, pre1) * activate_derivative(sigma2, pre2);
  }

  SpectrumReport r;
  r.jacobian = Matrix(m, m);
  Matrix similar(m, m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < m; ++k) {
      r.jacobian(j, k) = -factor[j] * omega_as(k, j);
      similar(j, k) = std::sqrt(std::abs(factor[j])) * omega_as(j, k) * std::sqrt(std::abs(factor[k]));
    }
  r.skew_residual = skew_residual(similar);
  r.eigenvalues = eigenvalues(r.jacobian);
  for (const auto& z : r.eigenvalues) r.max_abs_real = std::max(r.max_abs_real, std::abs(z.real()));
  return r;
}

SpectrumReport random_spectrum(std::uint64_t seed, std::size_t m) {
  Rng rng = Rng::split(seed, 0x5bec);
  Matrix omega = normal_matrix(m, m, rng);
  Matrix h = normal_matrix(1, m, rng);
  // Neighbour term centred on sigma2(h Omega_as) so that both activation
  // factors are active for a fair share of coordinates.
  Matrix nb = normal_matrix(1, m, rng);
  for (std::size_t j = 0; j < m; ++j) {
    double pre2 = 0.0;
    for (std::size_t k = 0; k < m; ++k) pre2 += h(0, k) * (omega(k, j) - omega(j, k));
    nb(0, j) += activate(Activation::relu, pre2);
  }
  return sas_jacobian(omega, h.data(), nb.data());
}

// ---- sensitivity -------------------------------------------------------

SensitivityResult sensitivity(const Model& model, const GraphContext& ctx, const CsrSkeleton& adj,
                              std::size_t layer) {
  const std::size_t n = ctx.n;
  const std::size_t m = model.config().hidden;
  const std::size_t depth = model.config().layers;
  if (n * m > 2000) throw InputError("n * hidden = " + std::to_string(n * m) + " exceeds 2000", "sensitivity");
  if (layer > depth) throw InputError("layer exceeds the model depth", "layer");

  Model frozen = model.clone();
  Matrix start;
  {
    NoGradGuard guard;
    Var h = frozen.encode(ctx);
    for (std::size_t l = 0; l < layer; ++l) h = frozen.step(h, ctx, l);
    start = h.value();
  }
  Var leaf = parameter(start);
  Var out = leaf;
  for (std::size_t l = layer; l < depth; ++l) out = frozen.step(out, ctx, l);

  double total = 0.0;
  Matrix seed(n, m);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t k = 0; k < m; ++k) {
      seed(v, k) = 1.0;
      leaf.zero_grad();
      backward_from(out, seed);
      seed(v, k) = 0.0;
      const Matrix& g = leaf.grad();
      for (std::size_t u : adj.neighbors(v))
        for (std::size_t j = 0; j < m; ++j) total += std::abs(g(u, j));
    }
  }
  return {total, total > 0.0 ? std::log(total) : -std::numeric_limits<double>::infinity()};
}

// ---- layer-wise diagnostics --------------------------------------------

std::vector<Matrix> layer_states(const Model& model, const GraphContext& ctx) {
  NoGradGuard guard;
  ForwardOptions fo;
  fo.keep_layers = true;
  ForwardPass pass = model.forward(ctx, fo);
  std::vector<Matrix> out;
  for (const Var& v : pass.layers) out.push_back(v.value());
  return out;
}

Trace dirichlet_trace(const Model& model, const GraphContext& ctx, const CsrSkeleton& adj, bool mean) {
  Trace t;
  t.name = mean ? "dirichlet_mean" : "dirichlet";
  t.metadata["model"] = std::string(to_string(model.config().kind));
  t.metadata["layers"] = std::to_string(model.config().layers);
  const auto states = layer_states(model, ctx);
  for (std::size_t l = 0; l < states.size(); ++l) {
    double e = dirichlet_energy(states[l], adj);
    if (mean) e /= static_cast<double>(adj.n);
    t.layers.push_back(l);
    t.values.push_back(e);
  }
  return t;
}

std::vector<DepthRow> depth_retention(const TaskData& data, const std::vector<ModelKind>& kinds,
                                      const std::vector<std::size_t>& depths, const RunConfig& base) {
  std::vector<DepthRow> rows;
  for (ModelKind kind : kinds) {
    for (std::size_t depth : depths) {
      RunConfig cfg = base;
      cfg.model.kind = kind;
      cfg.model.layers = depth;
      TrainResult res = train_run(cfg, data);
      EvalOptions eo;
      eo.mode = cfg.eval_mode;
      eo.seed = cfg.seed;
      eo.metric = cfg.metric;
      eo.loss = cfg.loss;
      DepthRow row;
      row.kind = kind;
      row.layers = depth;
      row.test_metric = evaluate(res.model, data, Split::test, eo).metric;
      row.val_metric = res.best_val;
      row.best_epoch = res.best_epoch;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_depth_csv(const std::filesystem::path& path, const std::vector<DepthRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "model,layers,test_metric,val_metric,best_epoch\n";
  for (const auto& r : rows)
    out << to_string(r.kind) << ',' << r.layers << ',' << format_double(r.test_metric) << ','
        << format_double(r.val_metric) << ',' << r.best_epoch << '\n';
}

namespace {

std::size_t predicted_class(std::span<const double> row) {
  if (row.size() == 1) return row[0] > 0.0 ? 1 : 0;
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

OracleExitResult oracle_exit_eval(const Model& model, const TaskData& data, Split split) {
  if (data.task != TaskKind::node_class) throw InputError("oracle exit needs a node task", "task");
  NoGradGuard guard;
  ForwardOptions fo;
  fo.keep_layers = true;
  const GraphContext& ctx = data.contexts.front();
  ForwardPass pass = model.forward(ctx, fo);
  std::vector<Matrix> logits;
  for (const Var& h : pass.layers) logits.push_back(model.decode(h).value());
  const Matrix& final_logits = pass.output.value();
  const std::size_t depth = pass.layers.size() - 1;

  const auto nodes = data.members(split);
  if (nodes.empty()) throw InputError("split has no members", "split");
  const Graph& g = data.graphs.front();
  OracleExitResult r;
  std::size_t oracle_hits = 0;
  std::size_t final_hits = 0;
  for (std::size_t i : nodes) {
    const auto truth = static_cast<std::size_t>(g.labels[i]);
    const bool final_ok = predicted_class(final_logits.row(i)) == truth;
    std::size_t first = depth + 1;
    for (std::size_t l = 0; l <= depth; ++l)
      if (predicted_class(logits[l].row(i)) == truth) {
        first = l;
        break;
      }
    if (first > depth && final_ok) first = depth;
    r.oracle_layer.push_back(first);
    oracle_hits += first <= depth ? 1 : 0;
    final_hits += final_ok ? 1 : 0;
  }
  r.oracle = static_cast<double>(oracle_hits) / static_cast<double>(nodes.size());
  r.final_metric = static_cast<double>(final_hits) / static_cast<double>(nodes.size());
  return r;
}

}  // namespace eegnn
