#include "eegnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "eegnn/errors.hpp"

namespace eegnn {

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad, adds into parents' grads.
  std::function<void(Node& self)> backward_rule;

  // Unwind long parent chains iteratively so deep graphs do not recurse.
  ~Node() {
    std::vector<std::shared_ptr<Node>> pending;
    pending.swap(parents);
    while (!pending.empty()) {
      auto p = std::move(pending.back());
      pending.pop_back();
      if (p && p.use_count() == 1) {
        for (auto& q : p->parents) pending.push_back(std::move(q));
        p->parents.clear();
      }
    }
  }
};

}  // namespace detail

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

Node& node_of(const Var& v) {
  if (!v.defined()) throw std::invalid_argument("use of an undefined Var");
  return *v.node();
}

// Creates the output node; records parents only when some parent needs grad.
Var make_result(Matrix value, std::initializer_list<Var> parents,
                std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& p : parents) needs = needs || node_of(p).requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->grad = Matrix(node->value.rows(), node->value.cols());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_rule = std::move(rule);
  }
  return Var(std::move(node));
}

Var make_result(Matrix value, const std::vector<Var>& parents, std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& p : parents) needs = needs || node_of(p).requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->grad = Matrix(node->value.rows(), node->value.cols());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_rule = std::move(rule);
  }
  return Var(std::move(node));
}

inline bool wants(const std::shared_ptr<Node>& p) { return p->requires_grad; }

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- activations -------------------------------------------------------

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::relu_tanh: return "relu_tanh";
    case Activation::softplus: return "softplus";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::identity, Activation::relu, Activation::tanh, Activation::relu_tanh,
                 Activation::softplus, Activation::sigmoid})
    if (to_string(a) == name) return a;
  throw InputError("unknown activation '" + std::string(name) +
                   "' (expected identity, relu, tanh, relu_tanh, softplus, sigmoid)");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::relu_tanh: return x > 0.0 ? std::tanh(x) : 0.0;
    case Activation::softplus: return softplus(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::relu_tanh: {
      if (x <= 0.0) return 0.0;
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::softplus: return sigmoid(x);
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

// ---- Var ---------------------------------------------------------------

const Matrix& Var::value() const { return node_of(*this).value; }
Matrix& Var::mutable_value() { return node_of(*this).value; }
bool Var::requires_grad() const { return node_of(*this).requires_grad; }

const Matrix& Var::grad() const {
  const Node& n = node_of(*this);
  if (!n.requires_grad) throw std::logic_error("grad() on a Var that does not require grad");
  return n.grad;
}

void Var::zero_grad() {
  Node& n = node_of(*this);
  if (n.requires_grad) n.grad.fill(0.0);
}

Var parameter(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad = Matrix(value.rows(), value.cols());
  node->value = std::move(value);
  return Var(std::move(node));
}

Var constant(Matrix value) { return parameter(std::move(value), false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- operations --------------------------------------------------------

Var matmul_add(const Var& a, const Var& b, const std::optional<Var>& c) {
  Matrix out = matmul(a.value(), b.value());
  bool row_broadcast = false;
  if (c) {
    const Matrix& cv = c->value();
    if (cv.same_shape(out)) {
      axpy(out, cv);
    } else if (cv.rows() == 1 && cv.cols() == out.cols()) {
      row_broadcast = true;
      for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += cv(0, j);
      }
    } else {
      throw ShapeError("matmul_add: bias " + shape_string(cv) + " vs output " +
                       shape_string(out));
    }
  }
  auto rule = [row_broadcast](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants(pa)) axpy(pa->grad, matmul_nt(self.grad, pb->value));
    if (wants(pb)) axpy(pb->grad, matmul_tn(pa->value, self.grad));
    if (self.parents.size() > 2 && wants(self.parents[2])) {
      auto& pc = self.parents[2];
      if (!row_broadcast) {
        axpy(pc->grad, self.grad);
      } else {
        for (std::size_t i = 0; i < self.grad.rows(); ++i) {
          auto g = self.grad.row(i);
          for (std::size_t j = 0; j < g.size(); ++j) pc->grad(0, j) += g[j];
        }
      }
    }
  };
  if (c) return make_result(std::move(out), {a, b, *c}, rule);
  return make_result(std::move(out), {a, b}, rule);
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a.value(), b.value());
  Matrix out = a.value();
  axpy(out, b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (wants(p)) axpy(p->grad, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a.value(), b.value());
  Matrix out = a.value();
  axpy(out, b.value(), -1.0);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (wants(self.parents[0])) axpy(self.parents[0]->grad, self.grad);
    if (wants(self.parents[1])) axpy(self.parents[1]->grad, self.grad, -1.0);
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double factor) {
  Matrix out = a.value();
  for (double& v : out.data()) v *= factor;
  return make_result(std::move(out), {a}, [factor](Node& self) {
    axpy(self.parents[0]->grad, self.grad, factor);
  });
}

Var add_scalar(const Var& a, double shift) {
  Matrix out = a.value();
  for (double& v : out.data()) v += shift;
  return make_result(std::move(out), {a},
                     [](Node& self) { axpy(self.parents[0]->grad, self.grad); });
}

Var transpose(const Var& a) {
  return make_result(a.value().transposed(), {a}, [](Node& self) {
    axpy(self.parents[0]->grad, self.grad.transposed());
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape("hadamard", a.value(), b.value());
  Matrix out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    auto g = self.grad.data();
    if (wants(pa)) {
      auto dst = pa->grad.data();
      auto other = pb->value.data();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * other[i];
    }
    if (wants(pb)) {
      auto dst = pb->grad.data();
      auto other = pa->value.data();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * other[i];
    }
  });
}

Var mul_rows(const Var& a, const Var& col) {
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  const bool scalar = cv.rows() == 1 && cv.cols() == 1;
  if (cv.cols() != 1 || (!scalar && cv.rows() != av.rows()))
    throw ShapeError("mul_rows: " + shape_string(av) + " by " + shape_string(cv));
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double s = cv(scalar ? 0 : i, 0);
    for (double& v : out.row(i)) v *= s;
  }
  return make_result(std::move(out), {a, col}, [scalar](Node& self) {
    auto& pa = self.parents[0];
    auto& pc = self.parents[1];
    for (std::size_t i = 0; i < self.grad.rows(); ++i) {
      const std::size_t ci = scalar ? 0 : i;
      auto g = self.grad.row(i);
      if (wants(pa)) {
        const double s = pc->value(ci, 0);
        auto dst = pa->grad.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j] * s;
      }
      if (wants(pc)) {
        auto src = pa->value.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) acc += g[j] * src[j];
        pc->grad(ci, 0) += acc;
      }
    }
  });
}

Var activation(const Var& x, Activation kind) {
  Matrix out = x.value();
  for (double& v : out.data()) v = activate(kind, v);
  return make_result(std::move(out), {x}, [kind](Node& self) {
    auto& p = self.parents[0];
    auto g = self.grad.data();
    auto in = p->value.data();
    auto dst = p->grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * activate_derivative(kind, in[i]);
  });
}

Var exp(const Var& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = std::exp(v);
  return make_result(std::move(out), {x}, [](Node& self) {
    auto g = self.grad.data();
    auto y = self.value.data();
    auto dst = self.parents[0]->grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * y[i];
  });
}

Var abs(const Var& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = std::abs(v);
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& p = self.parents[0];
    auto g = self.grad.data();
    auto in = p->value.data();
    auto dst = p->grad.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      dst[i] += in[i] > 0.0 ? g[i] : (in[i] < 0.0 ? -g[i] : 0.0);
  });
}

Var log_sigmoid(const Var& x) {
  Matrix out = x.value();
  // log sigmoid(x) = -softplus(-x)
  for (double& v : out.data()) v = -softplus(-v);
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& p = self.parents[0];
    auto g = self.grad.data();
    auto in = p->value.data();
    auto dst = p->grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * sigmoid(-in[i]);
  });
}

Var row_log_softmax(const Var& x) {
  const Matrix& xv = x.value();
  if (xv.cols() == 0) throw ShapeError("row_log_softmax: zero columns");
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto r = xv.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double acc = 0.0;
    for (double v : r) acc += std::exp(v - mx);
    const double lse = std::log(acc);
    auto o = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) o[j] = r[j] - mx - lse;
  }
  return make_result(std::move(out), {x}, [](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.rows(); ++i) {
      auto g = self.grad.row(i);
      auto y = self.value.row(i);
      double gsum = 0.0;
      for (double v : g) gsum += v;
      auto dst = p->grad.row(i);
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

Var row_softmax(const Var& x) { return exp(row_log_softmax(x)); }

Var masked_mean_pool(const Var& h, const std::vector<bool>& mask) {
  const Matrix& hv = h.value();
  if (!mask.empty() && mask.size() != hv.rows())
    throw ShapeError("masked_mean_pool: mask length " + std::to_string(mask.size()) +
                     " for " + shape_string(hv));
  std::size_t count = 0;
  Matrix out(1, hv.cols());
  for (std::size_t i = 0; i < hv.rows(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ++count;
    auto r = hv.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out(0, j) += r[j];
  }
  if (count == 0) throw InputError("empty selection", "masked_mean_pool");
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : out.data()) v *= inv;
  return make_result(std::move(out), {h}, [mask, inv](Node& self) {
    auto& p = self.parents[0];
    auto g = self.grad.row(0);
    for (std::size_t i = 0; i < p->grad.rows(); ++i) {
      if (!mask.empty() && !mask[i]) continue;
      auto dst = p->grad.row(i);
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j] * inv;
    }
  });
}

Var spmm(const SparseMatrix& a, const Var& h) {
  Matrix out = spmm(a, h.value());
  // The operator is captured by value; graphs are small relative to activations.
  auto op = std::make_shared<const SparseMatrix>(a);
  return make_result(std::move(out), {h}, [op](Node& self) {
    axpy(self.parents[0]->grad, spmm_transposed(*op, self.grad));
  });
}

Var sum(const Var& x) {
  Matrix out(1, 1, eegnn::sum(x.value()));
  return make_result(std::move(out), {x}, [](Node& self) {
    const double g = self.grad(0, 0);
    for (double& v : self.parents[0]->grad.data()) v += g;
  });
}

Var mean(const Var& x) {
  const double count = static_cast<double>(x.value().size());
  if (count == 0) throw ShapeError("mean of an empty matrix");
  return scale(sum(x), 1.0 / count);
}

Var column(const Var& x, std::size_t j) {
  const Matrix& xv = x.value();
  if (j >= xv.cols()) throw ShapeError("column " + std::to_string(j) + " of " + shape_string(xv));
  Matrix out(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) out(i, 0) = xv(i, j);
  return make_result(std::move(out), {x}, [j](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.rows(); ++i) p->grad(i, j) += self.grad(i, 0);
  });
}

Var pick(const Var& x, std::span<const std::size_t> index) {
  const Matrix& xv = x.value();
  if (index.size() != xv.rows())
    throw ShapeError("pick: " + std::to_string(index.size()) + " indices for " + shape_string(xv));
  Matrix out(xv.rows(), 1);
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    if (idx[i] >= xv.cols())
      throw InputError("index " + std::to_string(idx[i]) + " out of range for " +
                       std::to_string(xv.cols()) + " columns");
    out(i, 0) = xv(i, idx[i]);
  }
  return make_result(std::move(out), {x}, [idx = std::move(idx)](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < idx.size(); ++i) p->grad(i, idx[i]) += self.grad(i, 0);
  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  const Matrix& xv = x.value();
  Matrix out(rows.size(), xv.cols());
  std::vector<std::size_t> sel(rows.begin(), rows.end());
  for (std::size_t i = 0; i < sel.size(); ++i) {
    if (sel[i] >= xv.rows()) throw ShapeError("gather_rows: row out of range");
    std::copy_n(xv.row(sel[i]).begin(), xv.cols(), out.row(i).begin());
  }
  return make_result(std::move(out), {x}, [sel = std::move(sel)](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < sel.size(); ++i) {
      auto g = self.grad.row(i);
      auto dst = p->grad.row(sel[i]);
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
    }
  });
}

Var assemble_rows(std::span<const Var> sources, std::span<const std::size_t> which) {
  if (sources.empty()) throw ShapeError("assemble_rows: no sources");
  const Matrix& first = sources[0].value();
  if (which.size() != first.rows())
    throw ShapeError("assemble_rows: selector length differs from row count");
  for (const auto& s : sources) require_same_shape("assemble_rows", first, s.value());
  Matrix out(first.rows(), first.cols());
  std::vector<std::size_t> sel(which.begin(), which.end());
  for (std::size_t i = 0; i < sel.size(); ++i) {
    if (sel[i] >= sources.size()) throw ShapeError("assemble_rows: source index out of range");
    const Matrix& src = sources[sel[i]].value();
    std::copy_n(src.row(i).begin(), src.cols(), out.row(i).begin());
  }
  std::vector<Var> parents(sources.begin(), sources.end());
  return make_result(std::move(out), parents, [sel = std::move(sel)](Node& self) {
    for (std::size_t i = 0; i < sel.size(); ++i) {
      auto& p = self.parents[sel[i]];
      if (!wants(p)) continue;
      auto g = self.grad.row(i);
      auto dst = p->grad.row(i);
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
    }
  });
}

Var straight_through(Matrix hard, const Var& soft) {
  require_same_shape("straight_through", hard, soft.value());
  return make_result(std::move(hard), {soft},
                     [](Node& self) { axpy(self.parents[0]->grad, self.grad); });
}

Var euler_step(const Var& h, const Var& f, const Var& tau) {
  const Matrix& hv = h.value();
  const Matrix& fv = f.value();
  const Matrix& tv = tau.value();
  require_same_shape("euler_step", hv, fv);
  const bool scalar = tv.rows() == 1 && tv.cols() == 1;
  if (tv.cols() != 1 || (!scalar && tv.rows() != hv.rows()))
    throw ShapeError("euler_step: tau " + shape_string(tv) + " for state " + shape_string(hv));
  Matrix out = hv;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double t = tv(scalar ? 0 : i, 0);
    if (t == 0.0) continue;
    auto o = out.row(i);
    auto fr = fv.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = o[j] + t * fr[j];
  }
  return make_result(std::move(out), {h, f, tau}, [scalar](Node& self) {
    auto& ph = self.parents[0];
    auto& pf = self.parents[1];
    auto& pt = self.parents[2];
    if (wants(ph)) axpy(ph->grad, self.grad);
    for (std::size_t i = 0; i < self.grad.rows(); ++i) {
      const std::size_t ti = scalar ? 0 : i;
      const double t = pt->value(ti, 0);
      auto g = self.grad.row(i);
      if (wants(pf) && t != 0.0) {
        auto dst = pf->grad.row(i);
        for (std::size_t j = 0; j < g.size(); ++j) dst[j] += t * g[j];
      }
      if (wants(pt)) {
        auto fr = pf->value.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) acc += g[j] * fr[j];
        pt->grad(ti, 0) += acc;
      }
    }
  });
}

Var euler_step(const Var& h, const Var& f, double tau) {
  return euler_step(h, f, constant(Matrix(1, 1, tau)));
}

// ---- backward ----------------------------------------------------------

namespace {

std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace

void backward_from(const Var& root, const Matrix& seed) {
  Node& r = node_of(root);
  if (!r.requires_grad) return;
  require_same_shape("backward seed", r.value, seed);
  auto order = topo_order(&r);
  // Interior accumulators hold this sweep only; leaves keep accumulating.
  for (Node* n : order)
    if (n->backward_rule) n->grad.fill(0.0);
  axpy(r.grad, seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_rule) n->backward_rule(*n);
  }
}

void backward(const Var& root) {
  const Matrix& v = root.value();
  if (v.rows() != 1 || v.cols() != 1)
    throw ShapeError("backward: root must be 1x1, got " + shape_string(v));
  backward_from(root, Matrix(1, 1, 1.0));
}

void zero_grad_graph(const Var& root) {
  Node& r = node_of(root);
  if (!r.requires_grad) return;
  for (Node* n : topo_order(&r)) n->grad.fill(0.0);
}

}  // namespace eegnn
