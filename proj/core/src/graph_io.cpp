#include "eegnn/graph_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eegnn/errors.hpp"

namespace eegnn {

using nlohmann::json;

namespace {

Matrix matrix_from_json(const json& rows, const std::string& field, std::size_t expected_rows) {
  if (!rows.is_array()) throw InputError("must be an array of rows", field);
  if (rows.size() != expected_rows)
    throw InputError("has " + std::to_string(rows.size()) + " rows, expected " +
                         std::to_string(expected_rows),
                     field);
  std::size_t cols = 0;
  if (!rows.empty()) {
    if (!rows[0].is_array()) throw InputError("row 0 is not an array", field);
    cols = rows[0].size();
  }
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const json& row = rows[r];
    if (!row.is_array() || row.size() != cols)
      throw InputError("row " + std::to_string(r) + " has inconsistent length", field);
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number())
        throw InputError("entry (" + std::to_string(r) + "," + std::to_string(c) +
                             ") is not a number",
                         field);
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(json(std::vector<double>(row.begin(), row.end())));
  }
  return rows;
}

std::vector<bool> mask_from_json(const json& m, const std::string& field, std::size_t n) {
  if (!m.is_array() || m.size() != n)
    throw InputError("must be a boolean array of length " + std::to_string(n), field);
  std::vector<bool> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!m[i].is_boolean()) throw InputError("entry " + std::to_string(i) + " is not a bool", field);
    out[i] = m[i].get<bool>();
  }
  return out;
}

}  // namespace

json graph_to_json(const Graph& g) {
  json doc;
  doc["n"] = g.n();
  json edges = json::array();
  for (std::size_t u = 0; u < g.n(); ++u)
    for (std::size_t v : g.adj.neighbors(u)) edges.push_back({u, v});
  doc["edges"] = std::move(edges);
  doc["x"] = matrix_to_json(g.x);
  if (g.edge_attr) doc["edge_attr"] = matrix_to_json(*g.edge_attr);
  if (!g.labels.empty()) {
    doc["y"] = g.labels;
  } else if (g.graph_target.size() == 1) {
    doc["y"] = g.graph_target[0];
  } else if (!g.graph_target.empty()) {
    doc["y"] = json::array({g.graph_target});
  }
  if (!g.masks.empty()) {
    json masks = json::object();
    if (!g.masks.train.empty()) masks["train"] = g.masks.train;
    if (!g.masks.val.empty()) masks["val"] = g.masks.val;
    if (!g.masks.test.empty()) masks["test"] = g.masks.test;
    doc["masks"] = std::move(masks);
  }
  return doc;
}

Graph graph_from_json(const json& doc) {
  if (!doc.is_object()) throw InputError("graph document must be a JSON object");
  static const char* known[] = {"n", "edges", "x", "edge_attr", "y", "masks"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw InputError("unknown field", key);
  }
  if (!doc.contains("n")) throw InputError("missing required field", "n");
  if (!doc["n"].is_number_integer() || doc["n"].get<long long>() < 0)
    throw InputError("must be a non-negative integer", "n");
  const auto n = doc["n"].get<std::size_t>();

  if (!doc.contains("edges")) throw InputError("missing required field", "edges");
  const json& je = doc["edges"];
  if (!je.is_array()) throw InputError("must be an array of [u, v] pairs", "edges");
  std::vector<Edge> edges;
  edges.reserve(je.size());
  for (std::size_t k = 0; k < je.size(); ++k) {
    const json& e = je[k];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
        !e[1].is_number_integer() || e[0].get<long long>() < 0 || e[1].get<long long>() < 0)
      throw InputError("entry " + std::to_string(k) + " is not a pair of node indices", "edges");
    edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
  }

  Graph g;
  if (doc.contains("edge_attr")) {
    Matrix attr = matrix_from_json(doc["edge_attr"], "edge_attr", edges.size());
    auto [skeleton, feats] = canonicalize_with_features(edges, n, attr);
    g.adj = std::move(skeleton);
    g.edge_attr = std::move(feats);
  } else {
    g.adj = canonicalize(edges, n);
  }

  if (!doc.contains("x")) throw InputError("missing required field", "x");
  g.x = matrix_from_json(doc["x"], "x", n);

  if (doc.contains("y")) {
    const json& y = doc["y"];
    if (y.is_number()) {
      g.graph_target = {y.get<double>()};
    } else if (y.is_array() && y.size() == 1 && y[0].is_array()) {
      for (const auto& t : y[0]) {
        if (!t.is_number()) throw InputError("graph targets must be numbers", "y");
        g.graph_target.push_back(t.get<double>());
      }
    } else if (y.is_array()) {
      if (y.size() != n)
        throw InputError("node labels have length " + std::to_string(y.size()) +
                             ", expected n=" + std::to_string(n),
                         "y");
      g.labels.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!y[i].is_number_integer() || y[i].get<long long>() < 0)
          throw InputError("label " + std::to_string(i) + " is not a non-negative integer", "y");
        g.labels.push_back(y[i].get<int>());
      }
    } else {
      throw InputError("must be a label array, a number or [[targets]]", "y");
    }
  }

  if (doc.contains("masks")) {
    const json& m = doc["masks"];
    if (!m.is_object()) throw InputError("must be an object", "masks");
    for (const auto& [key, value] : m.items()) {
      if (key == "train")
        g.masks.train = mask_from_json(value, "masks.train", n);
      else if (key == "val")
        g.masks.val = mask_from_json(value, "masks.val", n);
      else if (key == "test")
        g.masks.test = mask_from_json(value, "masks.test", n);
      else
        throw InputError("unknown mask '" + key + "'", "masks");
    }
  }
  return g;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string(), "path");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed JSON in ") + path.string() + ": " + e.what());
  }
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

void save_graph(const Graph& g, const std::filesystem::path& path) {
  write_json_file(graph_to_json(g), path);
}

Graph load_graph(const std::filesystem::path& path) { return graph_from_json(read_json_file(path)); }

std::vector<std::size_t> GraphDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < graphs.size(); ++i)
    if (s == Split::all || split[i] == s) out.push_back(i);
  return out;
}

namespace {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::all: return "all";
  }
  return "?";
}

}  // namespace

json dataset_to_json(const GraphDataset& d) {
  json doc;
  doc["graphs"] = json::array();
  for (const auto& g : d.graphs) doc["graphs"].push_back(graph_to_json(g));
  doc["split"] = json::array();
  for (auto s : d.split) doc["split"].push_back(split_name(s));
  return doc;
}

GraphDataset dataset_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("graphs") || !doc["graphs"].is_array())
    throw InputError("dataset must be an object with a \"graphs\" array", "graphs");
  GraphDataset d;
  for (std::size_t i = 0; i < doc["graphs"].size(); ++i) {
    try {
      d.graphs.push_back(graph_from_json(doc["graphs"][i]));
    } catch (const InputError& e) {
      throw InputError(e.what(), "graphs[" + std::to_string(i) + "]");
    }
  }
  if (doc.contains("split")) {
    const json& s = doc["split"];
    if (!s.is_array() || s.size() != d.graphs.size())
      throw InputError("must list one split per graph", "split");
    for (const auto& v : s) {
      const std::string name = v.is_string() ? v.get<std::string>() : "";
      if (name == "train")
        d.split.push_back(Split::train);
      else if (name == "val")
        d.split.push_back(Split::val);
      else if (name == "test")
        d.split.push_back(Split::test);
      else
        throw InputError("entries must be train, val or test", "split");
    }
  } else {
    d.split.assign(d.graphs.size(), Split::train);
  }
  return d;
}

}  // namespace eegnn
