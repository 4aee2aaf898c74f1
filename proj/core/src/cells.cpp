#include "eegnn/cells.hpp"

#include "eegnn/errors.hpp"

namespace eegnn {

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::sas: return "sas";
    case ModelKind::eegnn: return "eegnn";
    case ModelKind::gcn: return "gcn";
    case ModelKind::graff: return "graff";
    case ModelKind::adgn: return "adgn";
  }
  return "?";
}

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::node_class: return "node_class";
    case TaskKind::graph_class: return "graph_class";
    case TaskKind::graph_reg: return "graph_reg";
  }
  return "?";
}

std::string_view to_string(EdgeMode m) {
  switch (m) {
    case EdgeMode::zero: return "zero";
    case EdgeMode::linear: return "linear";
    case EdgeMode::neg_relu: return "neg_relu";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::sas, ModelKind::eegnn, ModelKind::gcn, ModelKind::graff,
                 ModelKind::adgn})
    if (to_string(k) == s) return k;
  throw InputError("unknown model '" + std::string(s) + "' (expected sas, eegnn, gcn, graff, adgn)",
                   "model");
}

TaskKind parse_task_kind(std::string_view s) {
  for (auto k : {TaskKind::node_class, TaskKind::graph_class, TaskKind::graph_reg})
    if (to_string(k) == s) return k;
  throw InputError("unknown task '" + std::string(s) +
                       "' (expected node_class, graph_class, graph_reg)",
                   "task");
}

EdgeMode parse_edge_mode(std::string_view s) {
  for (auto m : {EdgeMode::zero, EdgeMode::linear, EdgeMode::neg_relu})
    if (to_string(m) == s) return m;
  throw InputError("unknown edge mode '" + std::string(s) + "' (expected zero, linear, neg_relu)",
                   "edge_mode");
}

std::size_t Dense::param_count() const {
  return weight.value().size() + (bias ? bias->value().size() : 0);
}

Dense make_dense(std::size_t in, std::size_t out, bool bias, Rng& rng) {
  Dense d;
  d.weight = parameter(glorot(in, out, rng));
  if (bias) d.bias = parameter(Matrix(1, out));
  return d;
}

CellParams make_cell(std::size_t hidden, std::size_t edge_dim, EdgeMode edge_mode, double tau,
                     Activation sigma1, Activation sigma2, Rng& rng) {
  if (!(tau > 0.0 && tau <= 1.0)) throw InputError("must lie in (0, 1]", "tau");
  CellParams p;
  p.omega_raw = parameter(glorot(hidden, hidden, rng));
  p.w_raw = parameter(glorot(hidden, hidden, rng));
  if (edge_mode != EdgeMode::zero) {
    if (edge_dim == 0) throw InputError("a non-zero edge mode needs edge features", "edge_mode");
    p.w_e = parameter(glorot(edge_dim, hidden, rng));
  }
  p.tau = tau;
  p.sigma1 = sigma1;
  p.sigma2 = sigma2;
  p.edge_mode = edge_mode;
  return p;
}

GraphContext make_context(const Graph& g) {
  GraphContext ctx;
  ctx.adj = norm_adj(g.adj);
  ctx.mean = mean_adj(g.adj);
  if (g.edge_attr) ctx.edge_sum = incidence_aggregate(g.adj, *g.edge_attr);
  ctx.x = constant(g.x);
  ctx.n = g.n();
  return ctx;
}

namespace {

void require_square(const char* op, const Var& v) {
  if (v.rows() != v.cols()) throw ShapeError(std::string(op) + ": non-square " + shape_string(v.value()));
}

void require_tau_range(const Matrix& tau) {
  for (double t : tau.data())
    if (!(t >= 0.0 && t <= 1.0))
      throw InputError("step " + std::to_string(t) + " outside [0, 1]", "tau");
}

}  // namespace

Var antisymmetrize(const Var& omega_raw) {
  require_square("antisymmetrize", omega_raw);
  return sub(omega_raw, transpose(omega_raw));
}

Var symmetrize(const Var& w_raw) {
  require_square("symmetrize", w_raw);
  return scale(add(w_raw, transpose(w_raw)), 0.5);
}

SasWeights derive_weights(const CellParams& p) {
  return {antisymmetrize(p.omega_raw), symmetrize(p.w_raw), p.sigma1, p.sigma2};
}

std::optional<Var> edge_term(const CellParams& p, const Matrix& edge_sum) {
  if (p.edge_mode == EdgeMode::zero) return std::nullopt;
  if (!p.w_e) throw InputError("edge mode requires an edge weight matrix", "edge_mode");
  Var lin = matmul_add(constant(edge_sum), *p.w_e);
  if (p.edge_mode == EdgeMode::linear) return lin;
  return neg(activation(lin, Activation::relu));
}

Var sas_step(const Var& h, const NormAdj& a, const SasWeights& w, const Var& tau,
             const std::optional<Var>& edge) {
  require_tau_range(tau.value());
  Var self_term = activation(matmul_add(h, w.omega_as), w.sigma2);
  Var neighbor_term = matmul_add(spmm(a, h), w.w_s, edge);
  Var drift = activation(sub(neighbor_term, self_term), w.sigma1);
  return euler_step(h, drift, tau);
}

Var sas_step(const Var& h, const NormAdj& a, const SasWeights& w, double tau,
             const std::optional<Var>& edge) {
  return sas_step(h, a, w, constant(Matrix(1, 1, tau)), edge);
}

BaselineParams make_baseline(ModelKind kind, std::size_t hidden, std::size_t layers,
                             Activation sigma, double tau, Rng& rng) {
  BaselineParams p;
  p.kind = kind;
  p.sigma = sigma;
  p.tau = tau;
  switch (kind) {
    case ModelKind::gcn:
      for (std::size_t l = 0; l < layers; ++l) p.gcn_layers.push_back(make_dense(hidden, hidden, true, rng));
      break;
    case ModelKind::graff:
      p.omega_raw = parameter(glorot(hidden, hidden, rng));
      p.w_raw = parameter(glorot(hidden, hidden, rng));
      break;
    case ModelKind::adgn:
      p.omega_raw = parameter(glorot(hidden, hidden, rng));
      p.w_raw = parameter(glorot(hidden, hidden, rng));
      p.bias = parameter(Matrix(1, hidden));
      p.sigma = Activation::tanh;
      break;
    default:
      throw InputError("not a baseline cell: " + std::string(to_string(kind)), "model");
  }
  return p;
}

Var baseline_step(const Var& h, const NormAdj& a, const BaselineParams& p, std::size_t layer) {
  switch (p.kind) {
    case ModelKind::gcn: {
      if (layer >= p.gcn_layers.size())
        throw ShapeError("gcn layer " + std::to_string(layer) + " of " +
                         std::to_string(p.gcn_layers.size()));
      return activation(p.gcn_layers[layer].forward(spmm(a, h)), p.sigma);
    }
    case ModelKind::graff: {
      Var self_term = matmul_add(h, symmetrize(p.omega_raw));
      Var drift = activation(matmul_add(spmm(a, h), symmetrize(p.w_raw), self_term), p.sigma);
      return euler_step(h, drift, p.tau);
    }
    case ModelKind::adgn: {
      Var self_term = matmul_add(h, antisymmetrize(p.omega_raw));
      Var neighbor_term = matmul_add(spmm(a, h), p.w_raw, p.bias);
      Var drift = activation(add(self_term, neighbor_term), p.sigma);
      return euler_step(h, drift, p.tau);
    }
    default:
      throw InputError("not a baseline cell: " + std::string(to_string(p.kind)), "model");
  }
}

Var encode(const Var& x, const Dense& encoder) {
  if (x.cols() != encoder.weight.rows())
    throw ShapeError("encode: features " + shape_string(x.value()) + " vs encoder " +
                     shape_string(encoder.weight.value()));
  return activation(encoder.forward(x), Activation::relu);
}

Var mlp_forward(const Var& x, const std::vector<Dense>& layers) {
  Var out = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (out.cols() != layers[i].weight.rows())
      throw ShapeError("mlp layer " + std::to_string(i) + ": input " + shape_string(out.value()) +
                       " vs weight " + shape_string(layers[i].weight.value()));
    out = layers[i].forward(out);
    if (i + 1 < layers.size()) out = activation(out, Activation::relu);
  }
  return out;
}

Var decode(const Var& z, TaskKind task, const std::vector<Dense>& decoder,
           const std::vector<bool>& pool_mask) {
  if (task == TaskKind::node_class) return mlp_forward(z, decoder);
  return mlp_forward(masked_mean_pool(z, pool_mask), decoder);
}

std::size_t ParamBreakdown::total() const {
  std::size_t t = 0;
  for (const auto& [_, c] : by_module) t += c;
  return t;
}

ParamBreakdown param_count(const ModelShape& s) {
  ParamBreakdown out;
  const std::size_t h = s.hidden;
  out.by_module["encoder"] = s.input_dim * h + h;

  std::size_t dec = 0;
  std::size_t in = h;
  std::vector<std::size_t> dims = s.decoder_hidden;
  dims.push_back(s.output_dim);
  for (std::size_t d : dims) {
    dec += in * d + (s.decoder_bias ? d : 0);
    in = d;
  }
  out.by_module["decoder"] = dec;

  switch (s.kind) {
    case ModelKind::sas:
    case ModelKind::eegnn:
      out.by_module["cell"] = 2 * h * h + s.edge_dim * h;
      break;
    case ModelKind::gcn:
      out.by_module["cell"] = s.layers * (h * h + h);
      break;
    case ModelKind::graff:
      out.by_module["cell"] = 2 * h * h;
      break;
    case ModelKind::adgn:
      out.by_module["cell"] = 2 * h * h + h;
      break;
  }

  if (s.kind == ModelKind::eegnn) {
    // confidence head ends in 2 logits, temperature head in 1 scalar
    auto head = [&](std::size_t out_dim) {
      std::size_t count = 0;
      std::size_t fan_in = h;
      for (std::size_t l = 0; l < s.head_depth; ++l) {
        const std::size_t fan_out = l + 1 == s.head_depth ? out_dim : s.head_hidden;
        const std::size_t weights = s.graph_level ? fan_in * fan_out : 2 * fan_in * fan_out;
        count += weights + fan_out;
        fan_in = fan_out;
      }
      return count;
    };
    out.by_module["exit_heads"] = head(2) + head(1);
  }
  return out;
}

}  // namespace eegnn
