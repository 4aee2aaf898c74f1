#include "eegnn/optim.hpp"

#include <cmath>

namespace eegnn {

Adam::Adam(std::vector<Var> params, AdamOptions options)
    : params_(std::move(params)), opt_(options) {
  for (const Var& p : params_) {
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Matrix& theta = params_[k].mutable_value();
    const Matrix& g = params_[k].grad();
    auto m = m_[k].data();
    auto v = v_[k].data();
    auto th = theta.data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < th.size(); ++i) {
      double gi = gd.empty() ? 0.0 : gd[i];
      if (!opt_.decoupled) gi += opt_.weight_decay * th[i];
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
      if (opt_.decoupled && opt_.weight_decay != 0.0) th[i] -= opt_.lr * opt_.weight_decay * th[i];
      th[i] -= opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

}  // namespace eegnn
