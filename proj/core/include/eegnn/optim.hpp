#pragma once

#include <cstddef>
#include <vector>

#include "eegnn/autodiff.hpp"

namespace eegnn {

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = true;  // AdamW when true, L2 added to the gradient otherwise
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamOptions options);

  /// Applies one update from the accumulated gradients.
  void step();
  void zero_grad();

  std::size_t steps() const noexcept { return t_; }
  const std::vector<Matrix>& first_moments() const noexcept { return m_; }
  const std::vector<Matrix>& second_moments() const noexcept { return v_; }

 private:
  std::vector<Var> params_;
  AdamOptions opt_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
};

}  // namespace eegnn
