#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eegnn/errors.hpp"
#include "eegnn/exit.hpp"
#include "eegnn/model.hpp"
#include "oracles.hpp"

using namespace eegnn;

namespace {

struct Fixture {
  Graph g;
  GraphContext ctx;
  CellParams cell;
  ExitHeads heads;
  Var h0;
};

Fixture make_setup(std::size_t n, std::size_t m, std::uint64_t seed, bool graph_level = false) {
  Rng rng(seed);
  Fixture s;
  s.g = oracle::random_graph(n, 0.3, m, rng);
  s.ctx = make_context(s.g);
  s.cell = make_cell(m, 0, EdgeMode::zero, 0.1, Activation::relu_tanh, Activation::relu, rng);
  s.heads = make_exit_heads(m, 2, 4, 0.05, graph_level, rng);
  s.h0 = constant(normal_matrix(n, m, rng));
  return s;
}

ExitForwardOptions forced(double stay, double leave) {
  ExitForwardOptions o;
  o.control.kind = ExitControl::Kind::forced_logits;
  o.control.logits = Matrix::from_rows({{stay, leave}});
  return o;
}

void zero_heads(std::vector<HeadLayer>& layers, double last_bias) {
  for (auto& l : layers) {
    l.neighbor.weight.mutable_value().fill(0.0);
    l.neighbor.bias->mutable_value().fill(0.0);
    if (l.self_weight) l.self_weight->mutable_value().fill(0.0);
  }
  layers.back().neighbor.bias->mutable_value().fill(last_bias);
}

}  // namespace

TEST(Gumbel, ClosedFormAndClamp) {
  EXPECT_NEAR(gumbel_from_uniform(std::exp(-1.0)), 0.0, 1e-15);
  EXPECT_TRUE(std::isfinite(gumbel_from_uniform(0.0)));
  EXPECT_TRUE(std::isfinite(gumbel_from_uniform(1.0)));
  EXPECT_EQ(gumbel_from_uniform(0.0), gumbel_from_uniform(1e-12));
}

TEST(Gumbel, DeterministicAndEulerMascheroniMean) {
  Rng a(5), b(5);
  EXPECT_EQ(sample_gumbel(3, 2, a).g, sample_gumbel(3, 2, b).g);
  Rng rng(17);
  Matrix g = sample_gumbel(1000, 1000, rng).g;
  EXPECT_NEAR(sum(g) / 1e6, 0.5772156649, 0.01);
}

TEST(InvTemperature, SoftplusFloor) {
  Fixture s = make_setup(6, 3, 1);
  s.heads.nu0 = 0.0;
  zero_heads(s.heads.temperature, 0.0);
  Matrix v = inv_temperature(s.h0, s.ctx.mean, s.heads).value();
  for (double x : v.data()) EXPECT_NEAR(x, std::log(2.0), 1e-15);
  s.heads.nu0 = 10.0;
  zero_heads(s.heads.temperature, -1e3);
  v = inv_temperature(s.h0, s.ctx.mean, s.heads).value();
  for (double x : v.data()) EXPECT_NEAR(x, 10.0, 1e-12);
}

TEST(InvTemperature, GradientMatchesFd) {
  Fixture s = make_setup(8, 3, 2);
  std::vector<Var> params;
  for (auto& l : s.heads.temperature) {
    params.push_back(l.neighbor.weight);
    params.push_back(*l.neighbor.bias);
    params.push_back(*l.self_weight);
  }
  auto build = [&] { return sum(inv_temperature(s.h0, s.ctx.mean, s.heads)); };
  EXPECT_LE(oracle::check_gradients(build, params), 1e-5);
}

TEST(GumbelSoftmax, EqualLogitsHalf) {
  auto gs = gumbel_softmax_st(constant(Matrix(3, 2, 0.7)), constant(Matrix(3, 1, 4.0)), Matrix(3, 2),
                              ExitMode::train_sample);
  for (double v : gs.soft.value().data()) EXPECT_DOUBLE_EQ(v, 0.5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(gs.hard.value()(i, 0), 1.0);
}

TEST(GumbelSoftmax, LargeGapOneHot) {
  auto gs = gumbel_softmax_st(constant(Matrix::from_rows({{0, 20}})), constant(Matrix(1, 1, 1e3)), Matrix(),
                              ExitMode::eval_argmax);
  EXPECT_EQ(gs.hard.value(), Matrix::from_rows({{0, 1}}));
  EXPECT_NEAR(gs.soft.value()(0, 1), 1.0, 1e-12);
}

TEST(GumbelSoftmax, HighInverseTemperatureConverges) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    double a = rng.normal() * 3.0;
    double b = a + (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(1.0, 5.0);
    auto gs = gumbel_softmax_st(constant(Matrix::from_rows({{a, b}})), constant(Matrix(1, 1, 1e4)), Matrix(),
                                ExitMode::eval_argmax);
    const Matrix& soft = gs.soft.value();
    EXPECT_LE(std::min(soft(0, 0), soft(0, 1)), 1e-6);
  }
}

TEST(GumbelSoftmax, ForwardIsExactlyOneHot) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    Matrix logits = normal_matrix(7, 2, rng, 3.0);
    Matrix g = sample_gumbel(7, 2, rng).g;
    auto gs = gumbel_softmax_st(constant(logits), constant(Matrix(7, 1, rng.uniform(0.05, 5.0))), g,
                                ExitMode::train_sample);
    for (std::size_t i = 0; i < 7; ++i) {
      const double a = gs.hard.value()(i, 0), b = gs.hard.value()(i, 1);
      EXPECT_TRUE((a == 1.0 && b == 0.0) || (a == 0.0 && b == 1.0));
    }
  }
}

TEST(GumbelSoftmax, StraightThroughGradientIsSoftGradient) {
  Rng rng(5);
  Var logits = parameter(normal_matrix(5, 2, rng));
  Var inv_nu = parameter(Matrix(5, 1, 1.3));
  Matrix g = sample_gumbel(5, 2, rng).g;
  Matrix r = normal_matrix(5, 2, rng);
  auto gs = gumbel_softmax_st(logits, inv_nu, g, ExitMode::train_sample);
  backward_from(gs.hard, r);
  Matrix st_logits = logits.grad(), st_nu = inv_nu.grad();
  // FD on the soft path only.
  auto soft_dot = [&] {
    NoGradGuard guard;
    Matrix s = gumbel_softmax_st(logits, inv_nu, g, ExitMode::train_sample).soft.value();
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) acc += r.data()[k] * s.data()[k];
    return acc;
  };
  EXPECT_LE(oracle::max_rel_err(oracle::central_diff(soft_dot, logits.mutable_value()), st_logits), 1e-5);
  EXPECT_LE(oracle::max_rel_err(oracle::central_diff(soft_dot, inv_nu.mutable_value()), st_nu), 1e-5);
}

TEST(GumbelSoftmax, RejectsNonFinite) {
  Matrix bad = Matrix::from_rows({{0.0, std::nan("")}});
  EXPECT_THROW(gumbel_softmax_st(constant(bad), constant(Matrix(1, 1, 1.0)), Matrix(), ExitMode::eval_argmax),
               InputError);
}

TEST(NodeExit, ForcedExitAtLayerZero) {
  Fixture s = make_setup(10, 4, 6);
  ExitResult r = eegnn_forward_node(s.h0, s.ctx, s.cell, s.heads, 5, forced(0.0, 50.0));
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_TRUE(r.state.exited[i]);
    EXPECT_EQ(r.state.exit_layer[i], 0u);
    EXPECT_EQ(r.state.exit_time[i], 0.0);
  }
  EXPECT_EQ(r.z.value(), s.h0.value());
}

TEST(NodeExit, ForcedStayGivesLastStateAndSummedTau) {
  Fixture s = make_setup(10, 4, 7);
  const std::size_t depth = 6;
  ExitResult r = eegnn_forward_node(s.h0, s.ctx, s.cell, s.heads, depth, forced(3.0, 0.0));
  ASSERT_EQ(r.layers.size(), depth + 1);
  EXPECT_EQ(r.z.value(), r.layers.back().value());
  const double tau = 1.0 / (1.0 + std::exp(-3.0));
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_FALSE(r.state.exited[i]);
    EXPECT_EQ(r.state.exit_layer[i], depth);
    EXPECT_NEAR(r.state.exit_time[i], depth * tau, 1e-12);
  }
}

TEST(NodeExit, ZeroStepKeepsInitialRows) {
  Fixture s = make_setup(9, 3, 8);
  ExitForwardOptions o;
  o.control.kind = ExitControl::Kind::never_exit;
  o.control.tau0 = 0.0;
  ExitResult r = eegnn_forward_node(s.h0, s.ctx, s.cell, s.heads, 7, o);
  EXPECT_EQ(r.z.value(), s.h0.value());
}

TEST(NodeExit, NeverExitMatchesFixedDepthSasBitExactly) {
  Fixture s = make_setup(12, 4, 9);
  ExitForwardOptions o;
  o.control.kind = ExitControl::Kind::never_exit;
  o.control.tau0 = 0.1;
  ExitResult r = eegnn_forward_node(s.h0, s.ctx, s.cell, s.heads, 10, o);
  SasWeights w = derive_weights(s.cell);
  Var h = s.h0;
  for (int l = 0; l < 10; ++l) h = sas_step(h, s.ctx.adj, w, 0.1);
  EXPECT_EQ(r.z.value(), h.value());
}

TEST(NodeExit, ModelAblationMatchesSasModel) {
  Rng rng(10);
  Graph g = oracle::random_graph(15, 0.25, 5, rng);
  GraphContext ctx = make_context(g);
  ModelConfig c;
  c.input_dim = 5;
  c.hidden = 6;
  c.layers = 8;
  c.kind = ModelKind::sas;
  Model sas(c, 3);
  c.kind = ModelKind::eegnn;
  Model ee(c, 4);
  auto sas_params = sas.named_parameters();
  for (auto& [name, var] : ee.named_parameters())
    for (auto& [other, src] : sas_params)
      if (name == other) var.mutable_value() = src.value();
  ForwardOptions o;
  o.control.kind = ExitControl::Kind::never_exit;
  o.control.tau0 = c.tau;
  EXPECT_EQ(ee.forward(ctx, o).output.value(), sas.forward(ctx).output.value());
}

TEST(NodeExit, ConservationAndDeterminism) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Fixture s = make_setup(14, 4, 20 + seed);
    // Centre the confidence logits so that exits are mixed.
    s.heads.confidence.back().neighbor.bias->mutable_value() = Matrix::from_rows({{0.0, 0.2}});
    ExitForwardOptions o;
    o.mode = ExitMode::eval_argmax;
    ExitResult a = eegnn_forward_node(s.h0, s.ctx, s.cell, s.heads, 8, o);
    ExitResult b = eegnn_forward_node(s.h0, s.ctx, s.cell, s.heads, 8, o);
    EXPECT_EQ(a.z.value(), b.z.value());
    EXPECT_EQ(a.state.exit_layer, b.state.exit_layer);
    EXPECT_EQ(a.state.exit_time, b.state.exit_time);
    ASSERT_EQ(a.z.rows(), 14u);
    std::size_t exits = 0;
    for (const auto& t : a.trace) exits += t.exits;
    std::size_t exited = 0;
    for (std::size_t i = 0; i < 14; ++i) {
      exited += a.state.exited[i];
      EXPECT_EQ(a.state.exit_layer[i] == 8, !a.state.exited[i]);
      EXPECT_GE(a.state.exit_time[i], 0.0);
      EXPECT_LE(a.state.exit_time[i], 8.0);
      const auto& row = a.layers[a.state.exit_layer[i]].value().row(i);
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(a.z.value()(i, k), row[k]);
    }
    EXPECT_EQ(exits, exited);
  }
}

TEST(NodeExit, TapeReplayIsDeterministic) {
  Fixture s = make_setup(10, 3, 30);
  Rng rng(1);
  NoiseTape tape;
  ExitForwardOptions o;
  o.mode = ExitMode::train_sample;
  o.rng = &rng;
  o.tape = &tape;
  ExitResult a = eegnn_forward_node(s.h0, s.ctx, s.cell, s.heads, 6, o);
  EXPECT_EQ(tape.draws.size(), 6u);
  o.rng = nullptr;
  ExitResult b = eegnn_forward_node(s.h0, s.ctx, s.cell, s.heads, 6, o);
  EXPECT_EQ(a.z.value(), b.z.value());
  EXPECT_EQ(a.state.exit_layer, b.state.exit_layer);
}

TEST(NodeExit, ExitTimeAccumulatesActiveTaus) {
  Fixture s = make_setup(12, 4, 31);
  s.heads.confidence.back().neighbor.bias->mutable_value() = Matrix::from_rows({{0.0, 0.1}});
  ExitResult r = eegnn_forward_node(s.h0, s.ctx, s.cell, s.heads, 10, ExitForwardOptions{});
  for (std::size_t i = 0; i < 12; ++i) {
    double t = 0.0;
    for (std::size_t l = 0; l < r.state.exit_layer[i]; ++l) t += r.taus[l].value()(i, 0);
    EXPECT_NEAR(r.state.exit_time[i], t, 1e-12);
  }
}

TEST(GraphExit, ForcedLimits) {
  Fixture s = make_setup(10, 3, 40, true);
  ExitResult now = eegnn_forward_graph(s.h0, s.ctx, s.cell, s.heads, 5, forced(0.0, 50.0));
  EXPECT_EQ(now.z.value(), masked_mean_pool(s.h0).value());
  EXPECT_EQ(now.state.exit_layer[0], 0u);
  ExitForwardOptions o;
  o.control.kind = ExitControl::Kind::never_exit;
  o.keep_layers = true;
  ExitResult never = eegnn_forward_graph(s.h0, s.ctx, s.cell, s.heads, 5, o);
  EXPECT_EQ(never.z.value(), masked_mean_pool(never.layers.back()).value());
  EXPECT_EQ(never.state.exit_layer[0], 5u);
}

TEST(GraphExit, DifferentGraphsGetDifferentSteps) {
  Fixture a = make_setup(10, 3, 41, true);
  Fixture b = make_setup(14, 3, 42, true);
  ExitResult ra = eegnn_forward_graph(a.h0, a.ctx, a.cell, a.heads, 6, ExitForwardOptions{});
  ExitResult rb = eegnn_forward_graph(b.h0, b.ctx, a.cell, a.heads, 6, ExitForwardOptions{});
  ASSERT_FALSE(ra.taus.empty());
  ASSERT_FALSE(rb.taus.empty());
  EXPECT_NE(ra.taus[0].value()(0, 0), rb.taus[0].value()(0, 0));
}

TEST(GraphExit, GradientMatchesFd) {
  Fixture s = make_setup(8, 3, 43, true);
  Rng rng(2);
  NoiseTape tape;
  ExitForwardOptions o;
  o.mode = ExitMode::train_sample;
  o.rng = &rng;
  o.tape = &tape;
  std::vector<Var> params{s.cell.omega_raw, s.cell.w_raw};
  for (auto* heads : {&s.heads.confidence, &s.heads.temperature})
    for (auto& l : *heads) {
      params.push_back(l.neighbor.weight);
      params.push_back(*l.neighbor.bias);
    }
  auto build = [&] { return sum(eegnn_forward_graph(s.h0, s.ctx, s.cell, s.heads, 4, o).z); };
  build();
  o.rng = nullptr;
  EXPECT_LE(oracle::check_gradients(build, params), 1e-4);
}

TEST(ExitDistribution, Limits) {
  ExitState all0{{true, true, true}, {0, 0, 0}, {0.0, 0.0, 0.0}};
  auto d = exit_distribution(all0, 20);
  EXPECT_EQ(d.min, 0u);
  EXPECT_EQ(d.median, 0.0);
  EXPECT_EQ(d.max, 0u);
  ExitState none{{false, false}, {20, 20}, {2.0, 2.0}};
  d = exit_distribution(none, 20);
  EXPECT_EQ(d.histogram[20], 2u);
  EXPECT_EQ(d.min, 20u);
  EXPECT_EQ(d.max, 20u);
}

TEST(ExitDistribution, QuantilesMatchSortOracle) {
  Rng rng(50);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.index(30), depth = 1 + rng.index(20);
    std::vector<std::size_t> layers(n);
    std::vector<double> times(n);
    for (std::size_t i = 0; i < n; ++i) {
      layers[i] = rng.index(depth + 1);
      times[i] = rng.uniform() * static_cast<double>(layers[i]);
    }
    auto d = exit_distribution(layers, times, depth);
    std::vector<std::size_t> sorted = layers;
    std::sort(sorted.begin(), sorted.end());
    const double median = n % 2 ? static_cast<double>(sorted[n / 2])
                                : (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) / 2.0;
    EXPECT_EQ(d.min, sorted.front());
    EXPECT_EQ(d.max, sorted.back());
    EXPECT_EQ(d.median, median);
    std::size_t total = 0;
    for (auto c : d.histogram) total += c;
    EXPECT_EQ(total, n);
    EXPECT_EQ(d.exit_times, times);
  }
}

TEST(ExitDistribution, CsvLayout) {
  ExitState s{{true, false}, {1, 3}, {0.25, 0.5}};
  auto path = std::filesystem::temp_directory_path() / "eegnn_unit" / "exits.csv";
  std::vector<std::size_t> ids{7, 9};
  write_exits_csv(path, s, ids);
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  EXPECT_EQ(buf.str(), "agent_id,exit_layer,exit_time\n7,1,0.25\n9,3,0.5\n");
}
