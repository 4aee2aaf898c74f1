#include <benchmark/benchmark.h>

#include "eegnn/autodiff.hpp"
#include "eegnn/cells.hpp"
#include "eegnn/eigen_solver.hpp"
#include "eegnn/generators.hpp"
#include "eegnn/model.hpp"

using namespace eegnn;

namespace {

Graph grid_graph(std::size_t side) {
  MinesweeperOptions o;
  o.rows = side;
  o.cols = side;
  o.seed = 1;
  return minesweeper_grid(o);
}

ModelConfig config_for(const Graph& g, ModelKind kind, std::size_t hidden, std::size_t layers) {
  ModelConfig c;
  c.kind = kind;
  c.input_dim = g.x.cols();
  c.hidden = hidden;
  c.layers = layers;
  return c;
}

}  // namespace

static void BM_Spmm(benchmark::State& state) {
  const Graph g = grid_graph(static_cast<std::size_t>(state.range(0)));
  const NormAdj a = norm_adj(g.adj);
  Rng rng(0);
  const Matrix h = normal_matrix(g.n(), 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(spmm(a, h));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.num_arcs()) * 32);
}
BENCHMARK(BM_Spmm)->Arg(30)->Arg(100);

static void BM_SasForward(benchmark::State& state) {
  const Graph g = grid_graph(30);
  const GraphContext ctx = make_context(g);
  const Model m(config_for(g, ModelKind::sas, 32, static_cast<std::size_t>(state.range(0))), 0);
  for (auto _ : state) {
    NoGradGuard guard;
    benchmark::DoNotOptimize(m.forward(ctx).output.value());
  }
}
BENCHMARK(BM_SasForward)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_SasForwardBackward(benchmark::State& state) {
  const Graph g = grid_graph(30);
  const GraphContext ctx = make_context(g);
  const Model m(config_for(g, ModelKind::sas, 32, static_cast<std::size_t>(state.range(0))), 0);
  for (auto _ : state) {
    Var loss = sum(m.forward(ctx).output);
    backward(loss);
    for (auto& p : m.parameters()) p.zero_grad();
  }
}
BENCHMARK(BM_SasForwardBackward)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

static void BM_EegnnForward(benchmark::State& state) {
  const Graph g = grid_graph(30);
  const GraphContext ctx = make_context(g);
  const Model m(config_for(g, ModelKind::eegnn, 32, 20), 0);
  for (auto _ : state) {
    NoGradGuard guard;
    benchmark::DoNotOptimize(m.forward(ctx).output.value());
  }
}
BENCHMARK(BM_EegnnForward)->Unit(benchmark::kMillisecond);

static void BM_Eigenvalues(benchmark::State& state) {
  Rng rng(0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = normal_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(eigenvalues(a));
}
BENCHMARK(BM_Eigenvalues)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK_MAIN();
