#include <gtest/gtest.h>

#include <cmath>

#include "eegnn/autodiff.hpp"
#include "eegnn/errors.hpp"
#include "oracles.hpp"

using namespace eegnn;

namespace {

std::size_t dim(Rng& rng) { return 1 + rng.index(8); }

void expect_op(const char* name, const std::function<std::vector<Var>(Rng&)>& make,
               const std::function<Var(const std::vector<Var>&)>& op, double tol = 1e-6) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    worst = std::max(worst, oracle::op_error(op, make(rng), rng));
  }
  EXPECT_LE(worst, tol) << name;
}

Var rand_param(std::size_t r, std::size_t c, Rng& rng) { return parameter(normal_matrix(r, c, rng)); }

}  // namespace

TEST(Activations, ClosedForms) {
  EXPECT_EQ(activate(Activation::relu_tanh, -1.0), 0.0);
  EXPECT_NEAR(activate(Activation::relu_tanh, 1.0), 0.7615941559557649, 1e-15);
  EXPECT_EQ(activate_derivative(Activation::relu_tanh, 0.0), 0.0);
  EXPECT_EQ(activate_derivative(Activation::relu, 0.0), 0.0);
  EXPECT_NEAR(activate(Activation::softplus, 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(activate(Activation::softplus, 800.0), 800.0, 1e-12);
  EXPECT_NEAR(activate(Activation::softplus, -800.0), 0.0, 1e-300);
  EXPECT_NEAR(activate_derivative(Activation::relu_tanh, 0.5), 1.0 - std::tanh(0.5) * std::tanh(0.5), 1e-15);
}

TEST(Activations, FiniteOnBoundedInputs) {
  for (Activation a : {Activation::identity, Activation::relu, Activation::tanh, Activation::relu_tanh,
                       Activation::softplus, Activation::sigmoid})
    for (double x = -50.0; x <= 50.0; x += 0.25) {
      EXPECT_TRUE(std::isfinite(activate(a, x)));
      EXPECT_TRUE(std::isfinite(activate_derivative(a, x)));
    }
}

TEST(MatmulAdd, IdentityLeft) {
  Matrix b = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul_add(constant(Matrix::identity(2)), constant(b)).value(), b);
}

TEST(MatmulAdd, RowBroadcast) {
  Var out = matmul_add(constant(Matrix::identity(3)), constant(Matrix(3, 2, 1.0)),
                       constant(Matrix::from_rows({{10, 20}})));
  EXPECT_EQ(out.value(), Matrix::from_rows({{11, 21}, {11, 21}, {11, 21}}));
}

TEST(MatmulAdd, OnesSeedGivesATransposeG) {
  Var a = parameter(Matrix::from_rows({{1, 2}, {3, 4}}));
  Var b = parameter(Matrix::from_rows({{0.5, -1}, {2, 0}}));
  backward_from(matmul_add(a, b), Matrix(2, 2, 1.0));
  EXPECT_EQ(b.grad(), Matrix::from_rows({{4, 4}, {6, 6}}));
}

TEST(MatmulAdd, ShapeMismatch) {
  EXPECT_THROW(matmul_add(constant(Matrix(2, 3)), constant(Matrix(2, 3))), ShapeError);
}

TEST(OpGradients, MatmulAdd) {
  expect_op("matmul_add full bias",
            [](Rng& r) {
              auto n = dim(r), k = dim(r), m = dim(r);
              return std::vector<Var>{rand_param(n, k, r), rand_param(k, m, r), rand_param(n, m, r)};
            },
            [](const std::vector<Var>& v) { return matmul_add(v[0], v[1], v[2]); });
  expect_op("matmul_add row bias",
            [](Rng& r) {
              auto n = dim(r), k = dim(r), m = dim(r);
              return std::vector<Var>{rand_param(n, k, r), rand_param(k, m, r), rand_param(1, m, r)};
            },
            [](const std::vector<Var>& v) { return matmul_add(v[0], v[1], v[2]); });
}

TEST(OpGradients, Elementwise) {
  auto two = [](Rng& r) {
    auto n = dim(r), m = dim(r);
    return std::vector<Var>{rand_param(n, m, r), rand_param(n, m, r)};
  };
  auto one = [](Rng& r) { return std::vector<Var>{rand_param(dim(r), dim(r), r)}; };
  expect_op("add", two, [](const auto& v) { return add(v[0], v[1]); });
  expect_op("sub", two, [](const auto& v) { return sub(v[0], v[1]); });
  expect_op("hadamard", two, [](const auto& v) { return hadamard(v[0], v[1]); });
  expect_op("neg", one, [](const auto& v) { return neg(v[0]); });
  expect_op("scale", one, [](const auto& v) { return scale(v[0], -1.7); });
  expect_op("add_scalar", one, [](const auto& v) { return add_scalar(v[0], 0.3); });
  expect_op("transpose", one, [](const auto& v) { return transpose(v[0]); });
  expect_op("exp", one, [](const auto& v) { return exp(v[0]); });
  expect_op("abs", one, [](const auto& v) { return abs(v[0]); });
  expect_op("log_sigmoid", one, [](const auto& v) { return log_sigmoid(v[0]); });
  expect_op("sum", one, [](const auto& v) { return sum(v[0]); });
  expect_op("mean", one, [](const auto& v) { return mean(v[0]); });
  for (Activation a : {Activation::identity, Activation::relu, Activation::tanh, Activation::relu_tanh,
                       Activation::softplus, Activation::sigmoid})
    expect_op(std::string(to_string(a)).c_str(), one, [a](const auto& v) { return activation(v[0], a); });
}

TEST(OpGradients, RowOps) {
  auto one = [](Rng& r) { return std::vector<Var>{rand_param(dim(r), dim(r), r)}; };
  expect_op("row_log_softmax", one, [](const auto& v) { return row_log_softmax(v[0]); });
  expect_op("row_softmax", one, [](const auto& v) { return row_softmax(v[0]); });
  expect_op("masked_mean_pool", one, [](const auto& v) { return masked_mean_pool(v[0]); });
  expect_op("masked_mean_pool mask", one, [](const auto& v) {
    std::vector<bool> mask(v[0].rows(), false);
    for (std::size_t i = 0; i < mask.size(); i += 2) mask[i] = true;
    return masked_mean_pool(v[0], mask);
  });
  expect_op("column", one, [](const auto& v) { return column(v[0], v[0].cols() - 1); });
  expect_op("pick", one, [](const auto& v) {
    std::vector<std::size_t> idx(v[0].rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i % v[0].cols();
    return pick(v[0], idx);
  });
  expect_op("gather_rows", one, [](const auto& v) {
    std::vector<std::size_t> idx{v[0].rows() - 1, 0, v[0].rows() - 1};
    return gather_rows(v[0], idx);
  });
  expect_op("mul_rows",
            [](Rng& r) {
              auto n = dim(r), m = dim(r);
              return std::vector<Var>{rand_param(n, m, r), rand_param(n, 1, r)};
            },
            [](const auto& v) { return mul_rows(v[0], v[1]); });
  expect_op("mul_rows scalar",
            [](Rng& r) { return std::vector<Var>{rand_param(dim(r), dim(r), r), rand_param(1, 1, r)}; },
            [](const auto& v) { return mul_rows(v[0], v[1]); });
}

TEST(OpGradients, ComposedAndSparse) {
  expect_op("spmm",
            [](Rng& r) {
              auto g = oracle::random_graph(2 + r.index(7), 0.4, 1, r);
              return std::vector<Var>{rand_param(g.n(), dim(r), r)};
            },
            [](const auto& v) {
              Rng r(v[0].rows());
              auto g = oracle::random_graph(v[0].rows(), 0.4, 1, r);
              return spmm(norm_adj(g.adj), v[0]);
            });
  expect_op("assemble_rows",
            [](Rng& r) {
              auto n = dim(r), m = dim(r);
              return std::vector<Var>{rand_param(n, m, r), rand_param(n, m, r), rand_param(n, m, r)};
            },
            [](const auto& v) {
              std::vector<std::size_t> which(v[0].rows());
              for (std::size_t i = 0; i < which.size(); ++i) which[i] = i % 3;
              return assemble_rows(v, which);
            });
  expect_op("euler_step",
            [](Rng& r) {
              auto n = dim(r), m = dim(r);
              Matrix tau(n, 1);
              for (std::size_t i = 0; i < n; ++i) tau(i, 0) = r.uniform(0.1, 0.9);
              return std::vector<Var>{rand_param(n, m, r), rand_param(n, m, r), parameter(tau)};
            },
            [](const auto& v) { return euler_step(v[0], v[1], v[2]); });
}

TEST(RowLogSoftmax, Cases) {
  Var out = row_log_softmax(constant(Matrix::from_rows({{0, 0}, {1000, 0}})));
  EXPECT_NEAR(out.value()(0, 0), -std::log(2.0), 1e-15);
  EXPECT_NEAR(out.value()(0, 1), -std::log(2.0), 1e-15);
  EXPECT_NEAR(out.value()(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(out.value()(1, 1), -1000.0, 1e-9);
  Rng rng(2);
  Var p = row_log_softmax(constant(normal_matrix(6, 5, rng, 10.0)));
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (double v : p.value().row(i)) s += std::exp(v);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(MaskedMeanPool, Cases) {
  EXPECT_EQ(masked_mean_pool(constant(Matrix(4, 2, 3.5))).value(), Matrix(1, 2, 3.5));
  EXPECT_EQ(masked_mean_pool(constant(Matrix::from_rows({{0}, {2}}))).value(), Matrix(1, 1, 1.0));
  Matrix a = Matrix::from_rows({{1, 2}, {3, 5}, {-1, 7}});
  Matrix b = Matrix::from_rows({{-1, 7}, {1, 2}, {3, 5}});
  Matrix pa = masked_mean_pool(constant(a)).value();
  Matrix pb = masked_mean_pool(constant(b)).value();
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(pa(0, k), pb(0, k), 1e-15);
  EXPECT_THROW(masked_mean_pool(constant(a), {false, false, false}), InputError);
}

TEST(Backward, SumGivesOnes) {
  Var w = parameter(Matrix::from_rows({{1, -2}, {3, 4}}));
  backward(sum(w));
  EXPECT_EQ(w.grad(), Matrix(2, 2, 1.0));
}

TEST(Backward, DeadRelu) {
  Var w = parameter(Matrix::from_rows({{-1, -2}, {-3, -4}}));
  backward(sum(activation(w, Activation::relu)));
  EXPECT_EQ(w.grad(), Matrix(2, 2));
}

TEST(Backward, AccumulatesUntilReset) {
  Var w = parameter(Matrix(1, 3, 1.0));
  Var root = sum(scale(w, 2.0));
  backward(root);
  backward(root);
  EXPECT_EQ(w.grad(), Matrix(1, 3, 4.0));
  zero_grad_graph(root);
  EXPECT_EQ(w.grad(), Matrix(1, 3));
}

TEST(Backward, RootMustBeScalar) {
  EXPECT_THROW(backward(parameter(Matrix(2, 1))), ShapeError);
}

TEST(Backward, SharedWeightSumsContributions) {
  Rng rng(4);
  Matrix w0 = normal_matrix(3, 3, rng);
  Matrix h0 = normal_matrix(5, 3, rng);
  const std::size_t depth = 6;
  Var shared = parameter(w0);
  Var h = constant(h0);
  for (std::size_t l = 0; l < depth; ++l) h = activation(matmul_add(h, shared), Activation::tanh);
  backward(sum(h));
  std::vector<Var> copies;
  Var g = constant(h0);
  for (std::size_t l = 0; l < depth; ++l) {
    copies.push_back(parameter(w0));
    g = activation(matmul_add(g, copies.back()), Activation::tanh);
  }
  backward(sum(g));
  Matrix total(3, 3);
  for (auto& c : copies) axpy(total, c.grad());
  for (std::size_t k = 0; k < total.size(); ++k) EXPECT_NEAR(shared.grad().data()[k], total.data()[k], 1e-12);
}

TEST(StraightThrough, ValueHardGradientSoft) {
  Rng rng(8);
  Var logits = rand_param(4, 2, rng);
  Var soft = row_softmax(logits);
  Matrix hard(4, 2);
  for (std::size_t i = 0; i < 4; ++i) hard(i, soft.value()(i, 0) >= soft.value()(i, 1) ? 0 : 1) = 1.0;
  Var st = straight_through(hard, soft);
  EXPECT_EQ(st.value(), hard);
  Matrix r = normal_matrix(4, 2, rng);
  backward_from(st, r);
  Matrix via_st = logits.grad();
  logits.zero_grad();
  backward_from(row_softmax(logits), r);
  EXPECT_EQ(via_st, logits.grad());
}

TEST(NoGrad, GuardStopsRecording) {
  Var w = parameter(Matrix(1, 1, 2.0));
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    Var y = scale(w, 3.0);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
}

TEST(FdCheck, QuadraticExact) {
  std::vector<double> theta{0.3, -1.2, 2.0};
  auto f = [](std::span<const double> t) { return t[0] * t[0] + 3.0 * t[1] * t[2] - t[2]; };
  std::vector<double> grad{0.6, 6.0, -3.6 - 1.0};
  EXPECT_LE(fd_check(f, theta, grad), 1e-9);
}

TEST(FdCheck, ConstantZero) {
  std::vector<double> theta{1.0, 2.0};
  std::vector<double> grad{0.0, 0.0};
  EXPECT_EQ(fd_check([](std::span<const double>) { return 5.0; }, theta, grad), 0.0);
}

TEST(FdCheck, GraphVersionAgreesWithOracle) {
  Rng rng(12);
  Var a = rand_param(3, 4, rng);
  Var b = rand_param(4, 2, rng);
  auto build = [&] { return sum(activation(matmul_add(a, b), Activation::tanh)); };
  std::vector<Var> params{a, b};
  FdReport rep = fd_check(build, params);
  EXPECT_LE(rep.max_rel_error, 1e-6);
  EXPECT_EQ(rep.checked, 20u);
  EXPECT_LE(oracle::check_gradients(build, params), 1e-6);
}
