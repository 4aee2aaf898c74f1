#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegnn/graph.hpp"

namespace eegnn {

// Graph JSON schema:
//   {"n": int,
//    "edges": [[u, v], ...],            directed arcs or undirected edges
//    "x": [[f64, ...], ...],             n rows
//    "edge_attr": [[f64, ...], ...],     optional, one row per listed edge
//    "y": [int, ...] | f64 | [[f64, ...]],  node labels | graph target(s)
//    "masks": {"train": [bool], "val": [bool], "test": [bool]}}   optional
//
// Saving writes every stored arc in CSR order so that load(save(g)) == g.

nlohmann::json graph_to_json(const Graph& g);
/// Throws InputError naming the offending field.
Graph graph_from_json(const nlohmann::json& doc);

void save_graph(const Graph& g, const std::filesystem::path& path);
Graph load_graph(const std::filesystem::path& path);

/// A collection of graphs for inductive graph-level tasks:
///   {"graphs": [graph, ...], "split": ["train" | "val" | "test", ...]}
struct GraphDataset {
  std::vector<Graph> graphs;
  std::vector<Split> split;  // one entry per graph

  std::vector<std::size_t> indices(Split s) const;
};

nlohmann::json dataset_to_json(const GraphDataset& d);
GraphDataset dataset_from_json(const nlohmann::json& doc);

/// Reads a JSON file and throws InputError with the parser message on failure.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes pretty JSON followed by a newline.
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace eegnn
