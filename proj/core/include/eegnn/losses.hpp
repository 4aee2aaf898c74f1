#pragma once

#include <string_view>

#include "eegnn/autodiff.hpp"

namespace eegnn {

enum class LossKind { ce, bce_logits, mse, l1 };

std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);

/// Mean-reduced loss.
///   ce:         pred n x C logits, target n x 1 class indices
///   bce_logits: pred n x 1 logits, target n x 1 in {0, 1}
///   mse, l1:    pred and target of equal shape
/// Throws ShapeError on mismatched shapes and InputError on bad labels.
Var loss_eval(const Var& pred, const Matrix& target, LossKind kind);

}  // namespace eegnn
