#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eegnn/matrix.hpp"

namespace eegnn {

using Edge = std::pair<std::size_t, std::size_t>;

/// CSR adjacency: arcs of row u are col_indices[row_offsets[u] .. row_offsets[u+1]).
struct CsrSkeleton {
  std::size_t n = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<std::size_t> col_indices;

  std::size_t num_arcs() const noexcept { return col_indices.size(); }
  std::size_t degree(std::size_t u) const noexcept {
    return row_offsets[u + 1] - row_offsets[u];
  }
  std::span<const std::size_t> neighbors(std::size_t u) const noexcept {
    return {col_indices.data() + row_offsets[u], degree(u)};
  }
  /// Arc index of (u, v), or num_arcs() when absent.
  std::size_t find_arc(std::size_t u, std::size_t v) const noexcept;

  friend bool operator==(const CsrSkeleton&, const CsrSkeleton&) = default;
};

/// Weighted CSR matrix sharing a graph's skeleton. values[k] belongs to arc k.
struct SparseMatrix {
  CsrSkeleton skeleton;
  std::vector<double> values;

  std::size_t rows() const noexcept { return skeleton.n; }
};

/// D^{-1/2} A D^{-1/2}
using NormAdj = SparseMatrix;

struct SplitMasks {
  std::vector<bool> train;
  std::vector<bool> val;
  std::vector<bool> test;

  bool empty() const noexcept { return train.empty() && val.empty() && test.empty(); }
  friend bool operator==(const SplitMasks&, const SplitMasks&) = default;
};

enum class Split { train, val, test, all };

/// Undirected graph stored as symmetric CSR with no self-loops.
struct Graph {
  CsrSkeleton adj;
  Matrix x;                              // n x m node features
  std::optional<Matrix> edge_attr;       // num_arcs x d, paired arcs share rows
  std::vector<int> labels;               // node labels; empty for graph-level data
  std::vector<double> graph_target;      // graph-level target(s); empty for node-level data
  SplitMasks masks;

  std::size_t n() const noexcept { return adj.n; }
  std::size_t num_arcs() const noexcept { return adj.num_arcs(); }

  /// Node indices selected by a split mask (all nodes for Split::all).
  std::vector<std::size_t> split_nodes(Split split) const;

  friend bool operator==(const Graph&, const Graph&) = default;
};

/// Drops self-loops, merges duplicates and adds missing reverse arcs.
/// Throws InputError when an endpoint is out of range.
CsrSkeleton canonicalize(std::span<const Edge> edges, std::size_t n);

/// As canonicalize, carrying one feature row per input edge onto both arcs.
/// The first occurrence of an undirected edge decides its feature row;
/// a later occurrence with a different row is rejected.
std::pair<CsrSkeleton, Matrix> canonicalize_with_features(std::span<const Edge> edges,
                                                          std::size_t n,
                                                          const Matrix& edge_features);

/// Returns the list of violated invariants (empty when the graph is valid).
std::vector<std::string> validate(const Graph& g);
std::vector<std::string> validate(const CsrSkeleton& s);

/// values[k] = 1 / sqrt(d_u d_v). Throws IsolatedNodeError on degree-0 nodes.
NormAdj norm_adj(const CsrSkeleton& s);
/// values[k] = 1 / d_u (row-normalised mean aggregation).
SparseMatrix mean_adj(const CsrSkeleton& s);

/// out[u] = sum_{arcs (u,v)} a[u,v] * h[v], summed in CSR arc order.
Matrix spmm(const SparseMatrix& a, const Matrix& h);
/// out[v] += sum_{arcs (u,v)} a[u,v] * g[u]  (multiplication by a^T).
Matrix spmm_transposed(const SparseMatrix& a, const Matrix& g);

/// B E: per node, the sum of feature rows of its incoming arcs.
Matrix incidence_aggregate(const CsrSkeleton& s, const Matrix& edge_features);

/// Removes degree-0 nodes together with their feature rows, labels and masks.
Graph drop_isolated(const Graph& g);

/// Fraction of arcs whose endpoints share a label.
double edge_homophily(const Graph& g);

/// Dense adjacency (n x n, 1 per arc). Test and diagnostic helper.
Matrix dense_adjacency(const CsrSkeleton& s);
Matrix dense(const SparseMatrix& a);

}  // namespace eegnn
