#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "eegnn/matrix.hpp"

namespace eegnn {

/// Balancing (isolation of decoupled rows and columns by permutation, then
/// power-of-two scaling), Householder reduction to upper Hessenberg form, and
/// Francis double-shift QR on a copy of `a`. Throws ConvergenceError after
/// `max_iterations` QR sweeps (default 1000 * n).
std::vector<std::complex<double>> eigenvalues(const Matrix& a, std::size_t max_iterations = 0);

namespace detail {
/// Balances `a` in place; [low, high] is the block left for QR.
void balance(Matrix& a, std::size_t& low, std::size_t& high);
/// Reduces rows and columns low..high to upper Hessenberg form in place.
void hessenberg(Matrix& a, std::size_t low, std::size_t high);
}  // namespace detail

}  // namespace eegnn
