#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "eegnn/matrix.hpp"

namespace eegnn {

/// Seeded generator. All randomness in the library flows through this type so
/// that a run is a pure function of its seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream derived from (seed, index), e.g. one per graph.
  static Rng split(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32), 0x9e3779b9u};
    Rng r;
    r.engine_.seed(seq);
    return r;
  }

  /// Uniform in [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  double normal() { return normal_(engine_); }
  std::uint64_t next() { return engine_(); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Matrix normal_matrix(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = stddev * rng.normal();
  return m;
}

inline Matrix uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

/// Glorot/Xavier uniform initialisation for a fan_in x fan_out weight.
inline Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_matrix(fan_in, fan_out, rng, -limit, limit);
}

}  // namespace eegnn
