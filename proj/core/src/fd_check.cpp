#include <algorithm>
#include <cmath>

#include "eegnn/autodiff.hpp"
#include "eegnn/errors.hpp"

namespace eegnn {

namespace {

double rel_error(double fd, double analytic) {
  return std::abs(fd - analytic) / std::max(1e-8, std::abs(fd) + std::abs(analytic));
}

double scalar_value(const Var& v) {
  if (v.value().size() != 1) throw ShapeError("fd_check: loss must be 1x1");
  return v.value()(0, 0);
}

}  // namespace

FdReport fd_check(const std::function<Var()>& build_loss, std::span<const Var> params, double h,
                  std::size_t max_coords_per_param) {
  std::vector<Var> ps(params.begin(), params.end());
  for (auto& p : ps) p.zero_grad();
  Var loss = build_loss();
  backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(ps.size());
  for (const auto& p : ps) analytic.push_back(p.grad());

  FdReport report;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    Matrix& value = ps[pi].mutable_value();
    const std::size_t count = value.size();
    std::size_t stride = 1;
    if (max_coords_per_param > 0 && count > max_coords_per_param)
      stride = (count + max_coords_per_param - 1) / max_coords_per_param;
    for (std::size_t k = 0; k < count; k += stride) {
      double& slot = value.data()[k];
      const double saved = slot;
      slot = saved + h;
      const double up = scalar_value(build_loss());
      slot = saved - h;
      const double down = scalar_value(build_loss());
      slot = saved;
      const double fd = (up - down) / (2.0 * h);
      const double err = rel_error(fd, analytic[pi].data()[k]);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = pi;
        report.worst_index = k;
      }
    }
  }
  return report;
}

double fd_check(const std::function<double(std::span<const double>)>& f,
                std::span<const double> theta, std::span<const double> grad, double h) {
  if (theta.size() != grad.size()) throw ShapeError("fd_check: theta and grad lengths differ");
  std::vector<double> probe(theta.begin(), theta.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    worst = std::max(worst, rel_error((up - down) / (2.0 * h), grad[i]));
  }
  return worst;
}

}  // namespace eegnn
