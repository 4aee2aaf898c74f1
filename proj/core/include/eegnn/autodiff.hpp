#pragma once

// Minimal reverse-mode differentiation over dense matrices.
//
// A Var is a shared handle to a node holding a value, a gradient accumulator
// and a backward rule. Gradients accumulate across backward() calls until
// zero_grad() is called, so a weight shared by L layers receives the sum of
// its L contributions in a single sweep.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "eegnn/graph.hpp"
#include "eegnn/matrix.hpp"

namespace eegnn {

enum class Activation { identity, relu, tanh, relu_tanh, softplus, sigmoid };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

double activate(Activation a, double x);
/// Derivative used by the backward rule; ReLU-family kinks take the value 0.
double activate_derivative(Activation a, double x);

namespace detail {
struct Node;
}

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Direct write access for optimizers and finite-difference probes.
  Matrix& mutable_value();
  const Matrix& grad() const;
  bool requires_grad() const;
  bool defined() const noexcept { return node_ != nullptr; }

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

  /// Zeroes this node's own accumulator.
  void zero_grad();

  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Trainable leaf (requires_grad = true unless stated).
Var parameter(Matrix value, bool requires_grad = true);
/// Leaf that never receives gradient.
Var constant(Matrix value);

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// ---- operations --------------------------------------------------------

/// a*b (+ c). c is either the output shape or a 1 x m row broadcast over rows.
Var matmul_add(const Var& a, const Var& b, const std::optional<Var>& c = std::nullopt);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double shift);
Var transpose(const Var& a);
Var hadamard(const Var& a, const Var& b);
/// out[i][j] = a[i][j] * col[i][0]; col is n x 1 or 1 x 1.
Var mul_rows(const Var& a, const Var& col);
Var activation(const Var& x, Activation kind);
Var exp(const Var& x);
Var abs(const Var& x);
/// log(sigmoid(x)) computed without overflow.
Var log_sigmoid(const Var& x);
Var row_log_softmax(const Var& x);
Var row_softmax(const Var& x);
/// Mean of the selected rows (all rows when mask is empty) -> 1 x m.
Var masked_mean_pool(const Var& h, const std::vector<bool>& mask = {});
/// Sparse-dense product with a constant sparse operator.
Var spmm(const SparseMatrix& a, const Var& h);
/// 1 x 1 sum / mean of all entries.
Var sum(const Var& x);
Var mean(const Var& x);
/// Column j as an n x 1 matrix.
Var column(const Var& x, std::size_t j);
/// out[i] = x[i][index[i]] -> n x 1.
Var pick(const Var& x, std::span<const std::size_t> index);
Var gather_rows(const Var& x, std::span<const std::size_t> rows);
/// out[i] = sources[which[i]][i]; all sources share one shape.
Var assemble_rows(std::span<const Var> sources, std::span<const std::size_t> which);
/// Forward value `hard`, gradient routed unchanged to `soft`.
Var straight_through(Matrix hard, const Var& soft);
/// Euler update h + tau * f per row; rows with tau == 0 are copied from h
/// unchanged. tau is n x 1 or 1 x 1.
Var euler_step(const Var& h, const Var& f, const Var& tau);
Var euler_step(const Var& h, const Var& f, double tau);

// ---- gradients ---------------------------------------------------------

/// Seeds d(root)/d(root) = 1 and sweeps in reverse topological order.
/// Throws ShapeError when root is not 1 x 1.
void backward(const Var& root);
/// Seeds the output gradient with an arbitrary matrix of root's shape.
void backward_from(const Var& root, const Matrix& seed);
/// Zeroes every accumulator reachable from root (leaves included).
void zero_grad_graph(const Var& root);

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Central-difference check of d(loss)/d(params). build_loss is re-evaluated
/// for every probe and must be a deterministic function of parameter values.
/// Per coordinate: |fd - grad| / max(1e-8, |fd| + |grad|).
/// max_coords_per_param > 0 probes an evenly strided subset.
FdReport fd_check(const std::function<Var()>& build_loss, std::span<const Var> params,
                  double h = 1e-5, std::size_t max_coords_per_param = 0);

/// Same formula for plain functions: f maps theta to a scalar and grad is
/// the claimed gradient at theta.
double fd_check(const std::function<double(std::span<const double>)>& f,
                std::span<const double> theta, std::span<const double> grad, double h = 1e-5);

}  // namespace eegnn
