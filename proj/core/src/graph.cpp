#include "eegnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "eegnn/errors.hpp"

namespace eegnn {

std::size_t CsrSkeleton::find_arc(std::size_t u, std::size_t v) const noexcept {
  auto nb = neighbors(u);
  auto it = std::lower_bound(nb.begin(), nb.end(), v);
  if (it == nb.end() || *it != v) return num_arcs();
  return row_offsets[u] + static_cast<std::size_t>(it - nb.begin());
}

std::vector<std::size_t> Graph::split_nodes(Split split) const {
  std::vector<std::size_t> out;
  const std::vector<bool>* mask = nullptr;
  switch (split) {
    case Split::train: mask = &masks.train; break;
    case Split::val: mask = &masks.val; break;
    case Split::test: mask = &masks.test; break;
    case Split::all: break;
  }
  if (mask == nullptr) {
    out.resize(n());
    for (std::size_t i = 0; i < n(); ++i) out[i] = i;
    return out;
  }
  for (std::size_t i = 0; i < mask->size(); ++i)
    if ((*mask)[i]) out.push_back(i);
  return out;
}

namespace {

void check_endpoints(std::span<const Edge> edges, std::size_t n) {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [u, v] = edges[k];
    if (u >= n || v >= n) {
      throw InputError("edge " + std::to_string(k) + " = (" + std::to_string(u) + "," +
                           std::to_string(v) + ") out of range for n=" + std::to_string(n),
                       "edges");
    }
  }
}

// Builds CSR from a sorted, duplicate-free list of directed arcs.
CsrSkeleton from_sorted_arcs(const std::vector<Edge>& arcs, std::size_t n) {
  CsrSkeleton s;
  s.n = n;
  s.row_offsets.assign(n + 1, 0);
  s.col_indices.reserve(arcs.size());
  for (const auto& [u, v] : arcs) {
    ++s.row_offsets[u + 1];
    s.col_indices.push_back(v);
  }
  for (std::size_t u = 0; u < n; ++u) s.row_offsets[u + 1] += s.row_offsets[u];
  return s;
}

}  // namespace

CsrSkeleton canonicalize(std::span<const Edge> edges, std::size_t n) {
  check_endpoints(edges, n);
  std::vector<Edge> arcs;
  arcs.reserve(2 * edges.size());
  for (const auto& [u, v] : edges) {
    if (u == v) continue;
    arcs.emplace_back(u, v);
    arcs.emplace_back(v, u);
  }
  std::sort(arcs.begin(), arcs.end());
  arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());
  return from_sorted_arcs(arcs, n);
}

std::pair<CsrSkeleton, Matrix> canonicalize_with_features(std::span<const Edge> edges,
                                                          std::size_t n,
                                                          const Matrix& edge_features) {
  if (edge_features.rows() != edges.size()) {
    throw InputError("has " + std::to_string(edge_features.rows()) + " rows but there are " +
                         std::to_string(edges.size()) + " arcs",
                     "edge_attr");
  }
  check_endpoints(edges, n);
  // undirected key (min,max) -> source row
  std::map<Edge, std::size_t> first_row;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto [u, v] = edges[k];
    if (u == v) continue;
    const Edge key{std::min(u, v), std::max(u, v)};
    auto [it, inserted] = first_row.emplace(key, k);
    if (!inserted) {
      auto a = edge_features.row(it->second);
      auto b = edge_features.row(k);
      if (!std::equal(a.begin(), a.end(), b.begin())) {
        throw InputError("arcs (" + std::to_string(u) + "," + std::to_string(v) +
                             ") and its pair carry different feature rows",
                         "edge_attr");
      }
    }
  }
  std::vector<Edge> arcs;
  arcs.reserve(2 * first_row.size());
  for (const auto& [key, row] : first_row) {
    arcs.emplace_back(key.first, key.second);
    arcs.emplace_back(key.second, key.first);
  }
  std::sort(arcs.begin(), arcs.end());
  CsrSkeleton s = from_sorted_arcs(arcs, n);
  Matrix feats(arcs.size(), edge_features.cols());
  for (std::size_t k = 0; k < arcs.size(); ++k) {
    const auto [u, v] = arcs[k];
    const std::size_t src = first_row.at({std::min(u, v), std::max(u, v)});
    std::copy_n(edge_features.row(src).begin(), edge_features.cols(), feats.row(k).begin());
  }
  return {std::move(s), std::move(feats)};
}

std::vector<std::string> validate(const CsrSkeleton& s) {
  std::vector<std::string> problems;
  if (s.row_offsets.size() != s.n + 1 || s.row_offsets.front() != 0 ||
      s.row_offsets.back() != s.col_indices.size()) {
    problems.emplace_back("row_offsets must have n+1 entries from 0 to the arc count");
    return problems;
  }
  for (std::size_t u = 0; u < s.n; ++u) {
    if (s.row_offsets[u + 1] < s.row_offsets[u]) {
      problems.emplace_back("row_offsets decrease at row " + std::to_string(u));
      return problems;
    }
  }
  for (std::size_t u = 0; u < s.n; ++u) {
    auto nb = s.neighbors(u);
    for (std::size_t j = 0; j < nb.size(); ++j) {
      const std::size_t v = nb[j];
      if (v >= s.n) {
        problems.emplace_back("arc (" + std::to_string(u) + "," + std::to_string(v) +
                              ") out of range");
        continue;
      }
      if (v == u) problems.emplace_back("self-loop at node " + std::to_string(u));
      if (j > 0 && nb[j - 1] >= v)
        problems.emplace_back("row " + std::to_string(u) + " not strictly ascending");
      if (s.find_arc(v, u) == s.num_arcs())
        problems.emplace_back("arc (" + std::to_string(u) + "," + std::to_string(v) +
                              ") has no reverse");
    }
  }
  return problems;
}

std::vector<std::string> validate(const Graph& g) {
  auto problems = validate(g.adj);
  if (!problems.empty()) return problems;
  if (g.x.rows() != g.n())
    problems.emplace_back("x has " + std::to_string(g.x.rows()) + " rows for n=" +
                          std::to_string(g.n()));
  if (g.edge_attr) {
    const Matrix& e = *g.edge_attr;
    if (e.rows() != g.num_arcs()) {
      problems.emplace_back("edge_attr rows differ from arc count");
    } else {
      for (std::size_t u = 0; u < g.n(); ++u) {
        for (std::size_t k = g.adj.row_offsets[u]; k < g.adj.row_offsets[u + 1]; ++k) {
          const std::size_t rev = g.adj.find_arc(g.adj.col_indices[k], u);
          if (!std::equal(e.row(k).begin(), e.row(k).end(), e.row(rev).begin()))
            problems.emplace_back("paired arcs at arc " + std::to_string(k) +
                                  " carry different edge features");
        }
      }
    }
  }
  if (!g.labels.empty() && g.labels.size() != g.n())
    problems.emplace_back("labels length differs from n");
  for (const auto* m : {&g.masks.train, &g.masks.val, &g.masks.test})
    if (!m->empty() && m->size() != g.n()) problems.emplace_back("mask length differs from n");
  return problems;
}

NormAdj norm_adj(const CsrSkeleton& s) {
  std::vector<double> inv_sqrt(s.n);
  for (std::size_t u = 0; u < s.n; ++u) {
    const std::size_t d = s.degree(u);
    if (d == 0) throw IsolatedNodeError(u);
    inv_sqrt[u] = 1.0 / std::sqrt(static_cast<double>(d));
  }
  NormAdj a{s, std::vector<double>(s.num_arcs())};
  for (std::size_t u = 0; u < s.n; ++u)
    for (std::size_t k = s.row_offsets[u]; k < s.row_offsets[u + 1]; ++k)
      a.values[k] = inv_sqrt[u] * inv_sqrt[s.col_indices[k]];
  return a;
}

SparseMatrix mean_adj(const CsrSkeleton& s) {
  SparseMatrix a{s, std::vector<double>(s.num_arcs())};
  for (std::size_t u = 0; u < s.n; ++u) {
    const std::size_t d = s.degree(u);
    if (d == 0) continue;
    const double w = 1.0 / static_cast<double>(d);
    for (std::size_t k = s.row_offsets[u]; k < s.row_offsets[u + 1]; ++k) a.values[k] = w;
  }
  return a;
}

Matrix spmm(const SparseMatrix& a, const Matrix& h) {
  const auto& s = a.skeleton;
  if (h.rows() != s.n)
    throw ShapeError("spmm: adjacency has " + std::to_string(s.n) + " rows, features " +
                     shape_string(h));
  Matrix out(s.n, h.cols());
  const std::size_t m = h.cols();
  for (std::size_t u = 0; u < s.n; ++u) {
    double* dst = out.row(u).data();
    for (std::size_t k = s.row_offsets[u]; k < s.row_offsets[u + 1]; ++k) {
      const double w = a.values[k];
      const double* src = h.row(s.col_indices[k]).data();
      for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
    }
  }
  return out;
}

Matrix spmm_transposed(const SparseMatrix& a, const Matrix& g) {
  const auto& s = a.skeleton;
  if (g.rows() != s.n)
    throw ShapeError("spmm_transposed: adjacency has " + std::to_string(s.n) + " rows, input " +
                     shape_string(g));
  Matrix out(s.n, g.cols());
  const std::size_t m = g.cols();
  for (std::size_t u = 0; u < s.n; ++u) {
    const double* src = g.row(u).data();
    for (std::size_t k = s.row_offsets[u]; k < s.row_offsets[u + 1]; ++k) {
      const double w = a.values[k];
      double* dst = out.row(s.col_indices[k]).data();
      for (std::size_t j = 0; j < m; ++j) dst[j] += w * src[j];
    }
  }
  return out;
}

Matrix incidence_aggregate(const CsrSkeleton& s, const Matrix& edge_features) {
  if (edge_features.rows() != s.num_arcs())
    throw ShapeError("incidence_aggregate: " + std::to_string(s.num_arcs()) + " arcs, features " +
                     shape_string(edge_features));
  Matrix out(s.n, edge_features.cols());
  for (std::size_t u = 0; u < s.n; ++u) {
    for (std::size_t k = s.row_offsets[u]; k < s.row_offsets[u + 1]; ++k) {
      auto dst = out.row(s.col_indices[k]);  // arc (u,v) is incoming at v
      auto src = edge_features.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
  return out;
}

Graph drop_isolated(const Graph& g) {
  std::vector<std::size_t> remap(g.n(), g.n());
  std::size_t kept = 0;
  for (std::size_t u = 0; u < g.n(); ++u)
    if (g.adj.degree(u) > 0) remap[u] = kept++;
  if (kept == g.n()) return g;

  Graph out;
  out.adj.n = kept;
  out.adj.row_offsets.assign(1, 0);
  for (std::size_t u = 0; u < g.n(); ++u) {
    if (remap[u] == g.n()) continue;
    for (std::size_t v : g.adj.neighbors(u)) out.adj.col_indices.push_back(remap[v]);
    out.adj.row_offsets.push_back(out.adj.col_indices.size());
  }
  out.edge_attr = g.edge_attr;  // arcs keep their order; isolated nodes own none
  out.x = Matrix(kept, g.x.cols());
  for (std::size_t u = 0; u < g.n(); ++u) {
    if (remap[u] == g.n()) continue;
    std::copy_n(g.x.row(u).begin(), g.x.cols(), out.x.row(remap[u]).begin());
    if (!g.labels.empty()) out.labels.push_back(g.labels[u]);
  }
  out.graph_target = g.graph_target;
  auto filter = [&](const std::vector<bool>& mask) {
    std::vector<bool> res;
    if (mask.empty()) return res;
    for (std::size_t u = 0; u < g.n(); ++u)
      if (remap[u] != g.n()) res.push_back(mask[u]);
    return res;
  };
  out.masks = {filter(g.masks.train), filter(g.masks.val), filter(g.masks.test)};
  return out;
}

double edge_homophily(const Graph& g) {
  if (g.labels.empty() || g.num_arcs() == 0) return 0.0;
  std::size_t same = 0;
  for (std::size_t u = 0; u < g.n(); ++u)
    for (std::size_t v : g.adj.neighbors(u))
      if (g.labels[u] == g.labels[v]) ++same;
  return static_cast<double>(same) / static_cast<double>(g.num_arcs());
}

Matrix dense_adjacency(const CsrSkeleton& s) {
  Matrix a(s.n, s.n);
  for (std::size_t u = 0; u < s.n; ++u)
    for (std::size_t v : s.neighbors(u)) a(u, v) = 1.0;
  return a;
}

Matrix dense(const SparseMatrix& a) {
  const auto& s = a.skeleton;
  Matrix d(s.n, s.n);
  for (std::size_t u = 0; u < s.n; ++u)
    for (std::size_t k = s.row_offsets[u]; k < s.row_offsets[u + 1]; ++k)
      d(u, s.col_indices[k]) = a.values[k];
  return d;
}

}  // namespace eegnn
