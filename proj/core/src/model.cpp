#include "eegnn/model.hpp"

#include <algorithm>

#include "eegnn/errors.hpp"

namespace eegnn {

using nlohmann::json;

ModelShape ModelConfig::shape() const {
  ModelShape s;
  s.kind = kind;
  s.input_dim = input_dim;
  s.hidden = hidden;
  s.output_dim = output_dim;
  s.layers = layers;
  s.edge_dim = edge_mode == EdgeMode::zero ? 0 : edge_dim;
  s.decoder_hidden = decoder_hidden;
  s.decoder_bias = decoder_bias;
  s.head_depth = head_depth;
  s.head_hidden = head_hidden;
  s.graph_level = graph_level();
  return s;
}

json to_json(const ModelConfig& c) {
  return json{{"kind", to_string(c.kind)},
              {"task", to_string(c.task)},
              {"input_dim", c.input_dim},
              {"output_dim", c.output_dim},
              {"hidden", c.hidden},
              {"layers", c.layers},
              {"tau", c.tau},
              {"sigma1", to_string(c.sigma1)},
              {"sigma2", to_string(c.sigma2)},
              {"edge_mode", to_string(c.edge_mode)},
              {"edge_dim", c.edge_dim},
              {"decoder_hidden", c.decoder_hidden},
              {"decoder_bias", c.decoder_bias},
              {"head_depth", c.head_depth},
              {"head_hidden", c.head_hidden},
              {"nu0", c.nu0}};
}

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw InputError("model config must be an object", "model");
  static const char* known[] = {"kind",       "task",      "input_dim",      "output_dim",
                                "hidden",     "layers",    "tau",            "sigma1",
                                "sigma2",     "edge_mode", "edge_dim",       "decoder_hidden",
                                "decoder_bias", "head_depth", "head_hidden", "nu0"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw InputError("unknown field", "model." + key);
  ModelConfig c;
  try {
    c.kind = parse_model_kind(j.at("kind").get<std::string>());
    c.task = parse_task_kind(j.at("task").get<std::string>());
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.output_dim = j.at("output_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.tau = j.at("tau").get<double>();
    c.sigma1 = parse_activation(j.at("sigma1").get<std::string>());
    c.sigma2 = parse_activation(j.at("sigma2").get<std::string>());
    c.edge_mode = parse_edge_mode(j.at("edge_mode").get<std::string>());
    c.edge_dim = j.at("edge_dim").get<std::size_t>();
    c.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
    c.decoder_bias = j.at("decoder_bias").get<bool>();
    c.head_depth = j.at("head_depth").get<std::size_t>();
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.nu0 = j.at("nu0").get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model config: ") + e.what(), "model");
  }
  return c;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (config.input_dim == 0) throw InputError("must be >= 1", "input_dim");
  if (config.output_dim == 0) throw InputError("must be >= 1", "output_dim");
  if (config.hidden == 0) throw InputError("must be >= 1", "hidden");
  if (config.layers == 0) throw InputError("must be >= 1", "layers");
  Rng rng(seed);
  encoder_ = make_dense(config.input_dim, config.hidden, true, rng);
  switch (config.kind) {
    case ModelKind::sas:
    case ModelKind::eegnn:
      cell_ = make_cell(config.hidden, config.edge_dim, config.edge_mode, config.tau,
                        config.sigma1, config.sigma2, rng);
      break;
    default:
      baseline_ = make_baseline(config.kind, config.hidden, config.layers, config.sigma1,
                                config.tau, rng);
  }
  if (config.kind == ModelKind::eegnn)
    heads_ = make_exit_heads(config.hidden, config.head_depth, config.head_hidden, config.nu0,
                             config.graph_level(), rng);
  std::size_t in = config.hidden;
  std::vector<std::size_t> dims = config.decoder_hidden;
  dims.push_back(config.output_dim);
  for (std::size_t d : dims) {
    decoder_.push_back(make_dense(in, d, config.decoder_bias, rng));
    in = d;
  }
}

Var Model::encode(const GraphContext& ctx) const { return eegnn::encode(ctx.x, encoder_); }

Var Model::step(const Var& h, const GraphContext& ctx, std::size_t layer) const {
  if (config_.kind == ModelKind::sas || config_.kind == ModelKind::eegnn) {
    std::optional<Var> edge;
    if (cell_.edge_mode != EdgeMode::zero) {
      if (!ctx.edge_sum) throw InputError("edge mode set but the graph has no edge features", "edge_mode");
      edge = edge_term(cell_, *ctx.edge_sum);
    }
    return sas_step(h, ctx.adj, derive_weights(cell_), cell_.tau, edge);
  }
  return baseline_step(h, ctx.adj, baseline_, layer);
}

Var Model::decode(const Var& z) const {
  if (config_.graph_level() && z.rows() != 1) return mlp_forward(masked_mean_pool(z), decoder_);
  return mlp_forward(z, decoder_);
}

ForwardPass Model::forward(const GraphContext& ctx, const ForwardOptions& opts) const {
  ForwardPass out;
  Var h = encode(ctx);
  if (config_.kind == ModelKind::eegnn) {
    ExitForwardOptions eo;
    eo.mode = opts.mode;
    eo.rng = opts.rng;
    eo.tape = opts.tape;
    eo.control = opts.control;
    eo.keep_layers = opts.keep_layers;
    ExitResult r = config_.graph_level()
                       ? eegnn_forward_graph(h, ctx, cell_, heads_, config_.layers, eo)
                       : eegnn_forward_node(h, ctx, cell_, heads_, config_.layers, eo);
    out.embedding = r.z;
    out.output = mlp_forward(r.z, decoder_);
    out.layers = std::move(r.layers);
    out.exits = std::move(r.state);
    out.trace = std::move(r.trace);
    return out;
  }

  if (opts.keep_layers) out.layers.push_back(h);
  if (config_.kind == ModelKind::sas) {
    const SasWeights w = derive_weights(cell_);
    std::optional<Var> edge;
    if (cell_.edge_mode != EdgeMode::zero) {
      if (!ctx.edge_sum) throw InputError("edge mode set but the graph has no edge features", "edge_mode");
      edge = edge_term(cell_, *ctx.edge_sum);
    }
    for (std::size_t l = 0; l < config_.layers; ++l) {
      h = sas_step(h, ctx.adj, w, cell_.tau, edge);
      if (opts.keep_layers) out.layers.push_back(h);
    }
  } else {
    for (std::size_t l = 0; l < config_.layers; ++l) {
      h = baseline_step(h, ctx.adj, baseline_, l);
      if (opts.keep_layers) out.layers.push_back(h);
    }
  }
  out.embedding = config_.graph_level() ? masked_mean_pool(h) : h;
  out.output = mlp_forward(out.embedding, decoder_);
  return out;
}

std::vector<std::pair<std::string, Var>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out;
  auto dense = [&](const std::string& prefix, const Dense& d) {
    out.emplace_back(prefix + ".weight", d.weight);
    if (d.bias) out.emplace_back(prefix + ".bias", *d.bias);
  };
  dense("encoder", encoder_);
  switch (config_.kind) {
    case ModelKind::sas:
    case ModelKind::eegnn:
      out.emplace_back("cell.omega", cell_.omega_raw);
      out.emplace_back("cell.w", cell_.w_raw);
      if (cell_.w_e) out.emplace_back("cell.w_e", *cell_.w_e);
      break;
    case ModelKind::gcn:
      for (std::size_t l = 0; l < baseline_.gcn_layers.size(); ++l)
        dense("gcn." + std::to_string(l), baseline_.gcn_layers[l]);
      break;
    case ModelKind::graff:
      out.emplace_back("graff.omega", baseline_.omega_raw);
      out.emplace_back("graff.w", baseline_.w_raw);
      break;
    case ModelKind::adgn:
      out.emplace_back("adgn.omega", baseline_.omega_raw);
      out.emplace_back("adgn.w", baseline_.w_raw);
      out.emplace_back("adgn.bias", baseline_.bias);
      break;
  }
  if (config_.kind == ModelKind::eegnn) {
    auto head = [&](const std::string& prefix, const std::vector<HeadLayer>& layers) {
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = prefix + "." + std::to_string(l);
        dense(p, layers[l].neighbor);
        if (layers[l].self_weight) out.emplace_back(p + ".self", *layers[l].self_weight);
      }
    };
    head("heads.confidence", heads_.confidence);
    head("heads.temperature", heads_.temperature);
  }
  for (std::size_t l = 0; l < decoder_.size(); ++l) dense("decoder." + std::to_string(l), decoder_[l]);
  return out;
}

std::vector<Var> Model::parameters() const {
  std::vector<Var> out;
  for (auto& [_, v] : named_parameters()) out.push_back(v);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Var& v : parameters()) n += v.value().size();
  return n;
}

Model Model::clone() const {
  Model copy(config_, 0);
  auto src = named_parameters();
  auto dst = copy.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.mutable_value() = src[i].second.value();
  copy.cell_.tau = cell_.tau;
  copy.cell_.sigma1 = cell_.sigma1;
  copy.cell_.sigma2 = cell_.sigma2;
  copy.cell_.edge_mode = cell_.edge_mode;
  copy.baseline_.sigma = baseline_.sigma;
  copy.baseline_.tau = baseline_.tau;
  copy.heads_.nu0 = heads_.nu0;
  return copy;
}

json Model::to_json() const {
  json params = json::object();
  for (const auto& [name, v] : named_parameters()) {
    const Matrix& m = v.value();
    params[name] = json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
  }
  return json{{"format", "eegnn-checkpoint-1"}, {"config", eegnn::to_json(config_)}, {"parameters", params}};
}

Model Model::from_json(const json& j) {
  if (!j.is_object() || !j.contains("config") || !j.contains("parameters"))
    throw InputError("checkpoint needs \"config\" and \"parameters\"", "checkpoint");
  Model m(model_config_from_json(j["config"]), 0);
  const json& params = j["parameters"];
  auto named = m.named_parameters();
  if (params.size() != named.size())
    throw InputError("checkpoint has " + std::to_string(params.size()) + " parameters, model needs " +
                         std::to_string(named.size()),
                     "checkpoint");
  for (auto& [name, v] : named) {
    if (!params.contains(name)) throw InputError("missing parameter " + name, "checkpoint");
    const json& p = params[name];
    try {
      const auto rows = p.at("rows").get<std::size_t>();
      const auto cols = p.at("cols").get<std::size_t>();
      auto data = p.at("data").get<std::vector<double>>();
      if (rows != v.rows() || cols != v.cols() || data.size() != rows * cols)
        throw InputError("parameter " + name + " has the wrong shape", "checkpoint");
      v.mutable_value() = Matrix(rows, cols, std::move(data));
    } catch (const json::exception& e) {
      throw InputError("parameter " + name + ": " + e.what(), "checkpoint");
    }
  }
  return m;
}

}  // namespace eegnn
