#include "eegnn/losses.hpp"

#include <cmath>
#include <vector>

#include "eegnn/errors.hpp"

namespace eegnn {

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::ce: return "ce";
    case LossKind::bce_logits: return "bce_logits";
    case LossKind::mse: return "mse";
    case LossKind::l1: return "l1";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view s) {
  for (auto k : {LossKind::ce, LossKind::bce_logits, LossKind::mse, LossKind::l1})
    if (to_string(k) == s) return k;
  throw InputError("unknown loss '" + std::string(s) + "' (expected ce, bce_logits, mse, l1)", "loss");
}

Var loss_eval(const Var& pred, const Matrix& target, LossKind kind) {
  switch (kind) {
    case LossKind::ce: {
      if (target.rows() != pred.rows() || target.cols() != 1)
        throw ShapeError("ce: logits " + shape_string(pred.value()) + " vs targets " + shape_string(target));
      std::vector<std::size_t> idx(target.rows());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const double t = target(i, 0);
        if (!(t >= 0.0) || t != std::floor(t) || t >= static_cast<double>(pred.cols()))
          throw InputError("class index " + std::to_string(t) + " outside [0, " +
                               std::to_string(pred.cols()) + ")",
                           "labels");
        idx[i] = static_cast<std::size_t>(t);
      }
      return neg(mean(pick(row_log_softmax(pred), idx)));
    }
    case LossKind::bce_logits: {
      if (!pred.value().same_shape(target) || pred.cols() != 1)
        throw ShapeError("bce_logits: logits " + shape_string(pred.value()) + " vs targets " +
                         shape_string(target));
      Matrix pos = target;
      Matrix negw(target.rows(), 1);
      for (std::size_t i = 0; i < target.rows(); ++i) {
        if (target(i, 0) != 0.0 && target(i, 0) != 1.0)
          throw InputError("binary targets must be 0 or 1", "labels");
        negw(i, 0) = 1.0 - target(i, 0);
      }
      Var ll = add(hadamard(constant(std::move(pos)), log_sigmoid(pred)),
                   hadamard(constant(std::move(negw)), log_sigmoid(neg(pred))));
      return neg(mean(ll));
    }
    case LossKind::mse:
    case LossKind::l1: {
      if (!pred.value().same_shape(target))
        throw ShapeError(std::string(to_string(kind)) + ": " + shape_string(pred.value()) + " vs " +
                         shape_string(target));
      Var d = sub(pred, constant(target));
      return kind == LossKind::mse ? mean(hadamard(d, d)) : mean(abs(d));
    }
  }
  throw InputError("unknown loss", "loss");
}

}  // namespace eegnn
