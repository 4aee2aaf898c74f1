#pragma once

#include <cstdint>
#include <vector>

#include "eegnn/graph.hpp"

namespace eegnn {

/// Split fractions for randomly assigned train/val/test masks.
struct SplitFractions {
  double train = 0.5;
  double val = 0.25;
};

struct MinesweeperOptions {
  std::size_t rows = 30;
  std::size_t cols = 30;
  double mine_prob = 0.2;
  /// Fraction of nodes whose neighbour count is hidden behind the "unknown" flag.
  double unknown_frac = 0.5;
  std::uint64_t seed = 0;
  SplitFractions split;
};

/// 8-neighbour grid; label 1 marks a mine. Features are 10 columns: a one-hot
/// of the number of mined neighbours (bins 0..8) followed by an "unknown"
/// flag, which replaces the one-hot for a random unknown_frac of nodes.
Graph minesweeper_grid(const MinesweeperOptions& opts);

struct SbmOptions {
  std::vector<std::size_t> sizes{50, 50};
  double p_in = 0.1;
  double p_out = 0.01;
  std::uint64_t seed = 0;
  std::size_t feature_dim = 8;
  /// Block b adds this value to feature column (b mod feature_dim).
  double feature_shift = 1.0;
  SplitFractions split;
};

/// Stochastic block model with block-id labels and Gaussian node features.
/// Isolated nodes are kept; callers that need degree >= 1 use drop_isolated().
Graph sbm(const SbmOptions& opts);

/// Random train/val/test masks; every node lands in exactly one split.
SplitMasks random_split(std::size_t n, const SplitFractions& frac, std::uint64_t seed);

}  // namespace eegnn
