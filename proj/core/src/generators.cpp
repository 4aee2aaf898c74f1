#include "eegnn/generators.hpp"

#include <algorithm>
#include <numeric>

#include "eegnn/errors.hpp"
#include "eegnn/random.hpp"

namespace eegnn {

SplitMasks random_split(std::size_t n, const SplitFractions& frac, std::uint64_t seed) {
  if (frac.train < 0 || frac.val < 0 || frac.train + frac.val > 1.0)
    throw InputError("fractions must be non-negative and sum to at most 1", "split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::split(seed, 0x5b1175);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_train = static_cast<std::size_t>(frac.train * static_cast<double>(n));
  const auto n_val = static_cast<std::size_t>(frac.val * static_cast<double>(n));
  SplitMasks masks{std::vector<bool>(n), std::vector<bool>(n), std::vector<bool>(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t u = order[k];
    if (k < n_train)
      masks.train[u] = true;
    else if (k < n_train + n_val)
      masks.val[u] = true;
    else
      masks.test[u] = true;
  }
  return masks;
}

Graph minesweeper_grid(const MinesweeperOptions& opts) {
  if (opts.rows < 2 || opts.cols < 2) throw InputError("rows and cols must be >= 2", "rows");
  if (!(opts.mine_prob > 0.0 && opts.mine_prob < 1.0))
    throw InputError("must lie in (0, 1)", "mine_prob");
  if (!(opts.unknown_frac >= 0.0 && opts.unknown_frac <= 1.0))
    throw InputError("must lie in [0, 1]", "unknown_frac");

  const std::size_t n = opts.rows * opts.cols;
  Rng rng(opts.seed);
  std::vector<int> mine(n);
  for (auto& m : mine) m = rng.bernoulli(opts.mine_prob) ? 1 : 0;
  std::vector<bool> unknown(n);
  for (std::size_t u = 0; u < n; ++u) unknown[u] = rng.bernoulli(opts.unknown_frac);

  std::vector<Edge> edges;
  edges.reserve(4 * n);
  auto id = [&](std::size_t r, std::size_t c) { return r * opts.cols + c; };
  for (std::size_t r = 0; r < opts.rows; ++r) {
    for (std::size_t c = 0; c < opts.cols; ++c) {
      // forward half of the 8-neighbourhood; canonicalize adds reverse arcs
      if (c + 1 < opts.cols) edges.emplace_back(id(r, c), id(r, c + 1));
      if (r + 1 < opts.rows) {
        edges.emplace_back(id(r, c), id(r + 1, c));
        if (c + 1 < opts.cols) edges.emplace_back(id(r, c), id(r + 1, c + 1));
        if (c > 0) edges.emplace_back(id(r, c), id(r + 1, c - 1));
      }
    }
  }

  Graph g;
  g.adj = canonicalize(edges, n);
  g.x = Matrix(n, 10);
  g.labels = mine;
  for (std::size_t u = 0; u < n; ++u) {
    if (unknown[u]) {
      g.x(u, 9) = 1.0;
      continue;
    }
    std::size_t count = 0;
    for (std::size_t v : g.adj.neighbors(u)) count += static_cast<std::size_t>(mine[v]);
    g.x(u, count) = 1.0;
  }
  g.masks = random_split(n, opts.split, opts.seed);
  return g;
}

Graph sbm(const SbmOptions& opts) {
  if (opts.sizes.empty()) throw InputError("needs at least one block", "sizes");
  if (!(opts.p_in >= 0.0 && opts.p_in <= 1.0)) throw InputError("must lie in [0, 1]", "p_in");
  if (!(opts.p_out >= 0.0 && opts.p_out <= 1.0)) throw InputError("must lie in [0, 1]", "p_out");
  if (opts.feature_dim == 0) throw InputError("must be >= 1", "feature_dim");

  std::vector<int> block;
  for (std::size_t b = 0; b < opts.sizes.size(); ++b)
    block.insert(block.end(), opts.sizes[b], static_cast<int>(b));
  const std::size_t n = block.size();

  Rng rng(opts.seed);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(block[u] == block[v] ? opts.p_in : opts.p_out)) edges.emplace_back(u, v);

  Graph g;
  g.adj = canonicalize(edges, n);
  g.x = Matrix(n, opts.feature_dim);
  for (std::size_t u = 0; u < n; ++u) {
    auto row = g.x.row(u);
    for (double& v : row) v = rng.normal();
    row[static_cast<std::size_t>(block[u]) % opts.feature_dim] += opts.feature_shift;
  }
  g.labels = block;
  g.masks = random_split(n, opts.split, opts.seed);
  return g;
}

}  // namespace eegnn
