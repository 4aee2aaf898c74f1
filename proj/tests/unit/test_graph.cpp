#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <filesystem>

#include "eegnn/errors.hpp"
#include "eegnn/generators.hpp"
#include "eegnn/graph.hpp"
#include "eegnn/graph_io.hpp"
#include "oracles.hpp"

using namespace eegnn;

namespace {

std::vector<Edge> arcs_of(const CsrSkeleton& s) {
  std::vector<Edge> out;
  for (std::size_t u = 0; u < s.n; ++u)
    for (std::size_t v : s.neighbors(u)) out.emplace_back(u, v);
  return out;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "eegnn_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Canonicalize, DropsSelfLoopAndAddsReverse) {
  std::vector<Edge> e{{0, 0}, {0, 1}};
  auto s = canonicalize(e, 2);
  EXPECT_EQ(arcs_of(s), (std::vector<Edge>{{0, 1}, {1, 0}}));
}

TEST(Canonicalize, MergesDuplicates) {
  std::vector<Edge> e{{0, 1}, {1, 0}};
  EXPECT_EQ(arcs_of(canonicalize(e, 2)), (std::vector<Edge>{{0, 1}, {1, 0}}));
}

TEST(Canonicalize, HandBuiltOffsets) {
  std::vector<Edge> e{{2, 1}, {0, 2}};
  auto s = canonicalize(e, 3);
  EXPECT_EQ(s.row_offsets, (std::vector<std::size_t>{0, 1, 2, 4}));
  EXPECT_EQ(s.col_indices, (std::vector<std::size_t>{2, 2, 0, 1}));
}

TEST(Canonicalize, RejectsOutOfRange) {
  std::vector<Edge> e{{0, 3}};
  EXPECT_THROW(canonicalize(e, 3), InputError);
}

TEST(Canonicalize, InvariantsAndIdempotence) {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    std::vector<Edge> e;
    const std::size_t n = 2 + rng.index(20);
    for (int k = 0; k < 40; ++k) e.emplace_back(rng.index(n), rng.index(n));
    auto once = canonicalize(e, n);
    EXPECT_TRUE(validate(once).empty());
    auto arcs = arcs_of(once);
    EXPECT_EQ(canonicalize(arcs, n), once);
  }
}

TEST(NormAdj, PathTwo) {
  auto g = oracle::graph_of(2, {{0, 1}});
  auto a = norm_adj(g.adj);
  EXPECT_EQ(a.values, (std::vector<double>{1.0, 1.0}));
}

TEST(NormAdj, Triangle) {
  auto g = oracle::graph_of(3, {{0, 1}, {1, 2}, {0, 2}});
  for (double v : norm_adj(g.adj).values) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(NormAdj, StarLeaves) {
  auto g = oracle::graph_of(4, {{0, 1}, {0, 2}, {0, 3}});
  for (double v : norm_adj(g.adj).values) EXPECT_NEAR(v, 1.0 / std::sqrt(3.0), 1e-15);
}

TEST(NormAdj, IsolatedNodeNamed) {
  auto g = oracle::graph_of(3, {{0, 1}});
  try {
    norm_adj(g.adj);
    FAIL() << "expected IsolatedNodeError";
  } catch (const IsolatedNodeError& e) {
    EXPECT_EQ(e.node(), 2u);
  }
}

TEST(NormAdj, SymmetricZeroDiagonalInUnitInterval) {
  Rng rng(3);
  auto g = oracle::random_graph(25, 0.2, 2, rng);
  Matrix d = dense(norm_adj(g.adj));
  for (std::size_t i = 0; i < g.n(); ++i) {
    EXPECT_EQ(d(i, i), 0.0);
    for (std::size_t j = 0; j < g.n(); ++j) {
      EXPECT_EQ(d(i, j), d(j, i));
      if (d(i, j) != 0.0) {
        EXPECT_GT(d(i, j), 0.0);
        EXPECT_LE(d(i, j), 1.0);
      }
    }
  }
}

TEST(Spmm, PathTwoPermutes) {
  auto g = oracle::graph_of(2, {{0, 1}});
  Matrix out = spmm(norm_adj(g.adj), Matrix::from_rows({{1}, {0}}));
  EXPECT_EQ(out, Matrix::from_rows({{0}, {1}}));
}

TEST(Spmm, ZeroInput) {
  Rng rng(1);
  auto g = oracle::random_graph(10, 0.3, 1, rng);
  EXPECT_EQ(spmm(norm_adj(g.adj), Matrix(10, 3)), Matrix(10, 3));
}

TEST(Spmm, TriangleIdentityColumns) {
  auto g = oracle::graph_of(3, {{0, 1}, {1, 2}, {0, 2}});
  Matrix out = spmm(norm_adj(g.adj), Matrix::identity(3));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(out(i, j), i == j ? 0.0 : 0.5);
}

TEST(Spmm, MatchesDenseOracle) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng.index(49);
    auto g = oracle::random_graph(n, 0.15, 1, rng);
    Matrix h = normal_matrix(n, 4, rng);
    Matrix ref = oracle::dense_matmul(oracle::dense_norm_adj(g.adj), h);
    Matrix got = spmm(norm_adj(g.adj), h);
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(got.data()[k], ref.data()[k], 1e-12);
    Matrix gt = spmm_transposed(norm_adj(g.adj), h);
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(gt.data()[k], ref.data()[k], 1e-12);
  }
}

TEST(Spmm, ShapeMismatch) {
  auto g = oracle::graph_of(2, {{0, 1}});
  EXPECT_THROW(spmm(norm_adj(g.adj), Matrix(3, 1)), ShapeError);
}

TEST(IncidenceAggregate, SingleEdge) {
  auto g = oracle::graph_of(2, {{0, 1}});
  EXPECT_EQ(incidence_aggregate(g.adj, Matrix(2, 1, 1.0)), Matrix::from_rows({{1}, {1}}));
}

TEST(IncidenceAggregate, ZeroFeatures) {
  auto g = oracle::graph_of(3, {{0, 1}, {1, 2}});
  EXPECT_EQ(incidence_aggregate(g.adj, Matrix(4, 2)), Matrix(3, 2));
}

TEST(IncidenceAggregate, PathThree) {
  auto g = oracle::graph_of(3, {{0, 1}, {1, 2}});
  EXPECT_EQ(incidence_aggregate(g.adj, Matrix(4, 1, 1.0)), Matrix::from_rows({{1}, {2}, {1}}));
}

TEST(IncidenceAggregate, MatchesDenseIncidence) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 2 + rng.index(19);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (rng.bernoulli(0.3)) edges.emplace_back(i, j);
    if (edges.empty()) edges.emplace_back(0, 1);
    Matrix feats = normal_matrix(edges.size(), 3, rng);
    auto [s, arc_feats] = canonicalize_with_features(edges, n, feats);
    // B is n x |E| with B[i][e] = 1 when i is an endpoint of undirected edge e.
    Matrix b(n, edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      b(edges[e].first, e) = 1.0;
      b(edges[e].second, e) = 1.0;
    }
    Matrix ref = oracle::dense_matmul(b, feats);
    Matrix got = incidence_aggregate(s, arc_feats);
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(got.data()[k], ref.data()[k], 1e-12);
  }
}

TEST(Minesweeper, NoMinesLimit) {
  MinesweeperOptions o;
  o.rows = o.cols = 2;
  o.mine_prob = 1e-12;
  Graph g = minesweeper_grid(o);
  EXPECT_EQ(g.n(), 4u);
  EXPECT_EQ(g.num_arcs(), 12u);
  for (int y : g.labels) EXPECT_EQ(y, 0);
}

TEST(Minesweeper, GridDegrees) {
  MinesweeperOptions o;
  o.rows = o.cols = 3;
  Graph g = minesweeper_grid(o);
  EXPECT_EQ(g.adj.degree(0), 3u);
  EXPECT_EQ(g.adj.degree(4), 8u);
  EXPECT_TRUE(validate(g).empty());
}

TEST(Minesweeper, DeterministicInSeed) {
  MinesweeperOptions o;
  o.seed = 9;
  EXPECT_EQ(minesweeper_grid(o), minesweeper_grid(o));
}

TEST(Minesweeper, FeaturesAreOneHotOrUnknown) {
  MinesweeperOptions o;
  o.rows = 12;
  o.cols = 9;
  o.seed = 4;
  Graph g = minesweeper_grid(o);
  ASSERT_EQ(g.x.cols(), 10u);
  for (std::size_t i = 0; i < g.n(); ++i) {
    double total = 0.0;
    for (double v : g.x.row(i)) total += v;
    EXPECT_EQ(total, 1.0);
    if (g.x(i, 9) == 0.0) {
      std::size_t mines = 0;
      for (std::size_t v : g.adj.neighbors(i)) mines += g.labels[v] == 1;
      EXPECT_EQ(g.x(i, mines), 1.0);
    }
  }
}

TEST(Sbm, CompleteBlocksLimit) {
  SbmOptions o;
  o.sizes = {3, 3};
  o.p_in = 1.0;
  o.p_out = 0.0;
  Graph g = sbm(o);
  EXPECT_EQ(g.num_arcs(), 12u);
  EXPECT_DOUBLE_EQ(edge_homophily(g), 1.0);
  EXPECT_EQ(g.labels, (std::vector<int>{0, 0, 0, 1, 1, 1}));
}

TEST(Sbm, ReproducibleArcCount) {
  SbmOptions o;
  o.seed = 42;
  Graph a = sbm(o);
  EXPECT_EQ(a, sbm(o));
  EXPECT_EQ(a.num_arcs(), 540u);
  EXPECT_TRUE(validate(a).empty());
}

TEST(Sbm, DropIsolatedKeepsInvariants) {
  SbmOptions o;
  o.sizes = {20, 20};
  o.p_in = 0.05;
  o.p_out = 0.0;
  Graph g = drop_isolated(sbm(o));
  EXPECT_TRUE(validate(g).empty());
  for (std::size_t i = 0; i < g.n(); ++i) EXPECT_GT(g.adj.degree(i), 0u);
  EXPECT_EQ(g.labels.size(), g.n());
  EXPECT_EQ(g.x.rows(), g.n());
}

TEST(GraphIo, RoundTrip) {
  Graph g = oracle::graph_of(2, {{0, 1}}, 2);
  g.x = Matrix::from_rows({{0.1, -2.5}, {1e-300, 3.0}});
  g.edge_attr = Matrix::from_rows({{0.25}, {0.25}});
  g.labels = {0, 1};
  g.masks.train = {true, false};
  g.masks.val = {false, true};
  g.masks.test = {false, false};
  auto path = temp_path("p2.json");
  save_graph(g, path);
  EXPECT_EQ(load_graph(path), g);
}

TEST(GraphIo, RoundTripGenerated) {
  MinesweeperOptions o;
  o.rows = 6;
  o.cols = 7;
  Graph g = minesweeper_grid(o);
  EXPECT_EQ(graph_from_json(graph_to_json(g)), g);
}

TEST(GraphIo, MissingEdgesNamed) {
  nlohmann::json doc{{"n", 2}, {"x", {{1.0}, {2.0}}}};
  try {
    graph_from_json(doc);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(e.field(), "edges");
  }
}

TEST(GraphIo, EdgeAttrRowsNamed) {
  nlohmann::json doc{{"n", 2}, {"edges", {{0, 1}}}, {"x", {{1.0}, {2.0}}}, {"edge_attr", {{1.0}, {2.0}, {3.0}}}};
  try {
    graph_from_json(doc);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_EQ(e.field(), "edge_attr");
  }
}

TEST(GraphIo, MalformedFile) {
  auto path = temp_path("bad.json");
  {
    std::ofstream out(path);
    out << "{\"n\": 2, ";
  }
  EXPECT_THROW(load_graph(path), InputError);
}

TEST(GraphIo, DatasetRoundTrip) {
  GraphDataset d;
  for (int i = 0; i < 3; ++i) {
    Graph g = oracle::graph_of(3, {{0, 1}, {1, 2}});
    g.graph_target = {static_cast<double>(i)};
    d.graphs.push_back(g);
  }
  d.split = {Split::train, Split::val, Split::test};
  GraphDataset back = dataset_from_json(dataset_to_json(d));
  EXPECT_EQ(back.graphs, d.graphs);
  EXPECT_EQ(back.split, d.split);
}

TEST(Homophily, FractionOfSameLabelArcs) {
  Graph g = oracle::graph_of(3, {{0, 1}, {1, 2}});
  g.labels = {0, 0, 1};
  EXPECT_DOUBLE_EQ(edge_homophily(g), 0.5);
}
