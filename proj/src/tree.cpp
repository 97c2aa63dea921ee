#include "potlab/tree.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace potlab {

TreeSpace::TreeSpace(int b, int N, double delta, std::vector<double> weights)
    : b_(b), N_(N), delta_(delta) {
  if (b < 2) throw std::invalid_argument("branching must be >= 2");
  if (N < 1) throw std::invalid_argument("depth must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
  double leaves = std::pow(static_cast<double>(b), N);
  if (leaves > 1e8) throw std::invalid_argument("tree too large: b^N exceeds 1e8 leaves");
  block_.assign(static_cast<std::size_t>(N) + 1, 1);
  for (int k = N - 1; k >= 0; --k) block_[static_cast<std::size_t>(k)] = block_[static_cast<std::size_t>(k) + 1] * static_cast<std::size_t>(b);
  const std::size_t n = block_[0];

  if (weights.empty()) {
    weights_.assign(n, 1.0 / static_cast<double>(n));
  } else {
    if (weights.size() != n)
      throw std::invalid_argument("weights: expected " + std::to_string(n) + " values, got " +
                                  std::to_string(weights.size()));
    for (double w : weights)
      if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and > 0");
    weights_ = std::move(weights);
  }
  prefix_.assign(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix_[i + 1] = prefix_[i] + weights_[i];

  dpow_.resize(static_cast<std::size_t>(N) + 1);
  dpow_[0] = 1.0;
  for (int k = 1; k <= N; ++k) dpow_[static_cast<std::size_t>(k)] = std::pow(delta, k);
}

std::vector<int> TreeSpace::path(Leaf x) const {
  std::vector<int> d(static_cast<std::size_t>(N_));
  for (int k = N_ - 1; k >= 0; --k) {
    d[static_cast<std::size_t>(k)] = static_cast<int>(x % static_cast<std::size_t>(b_));
    x /= static_cast<std::size_t>(b_);
  }
  return d;
}

Leaf TreeSpace::leaf_of(std::span<const int> digits) const {
  if (digits.size() != static_cast<std::size_t>(N_)) throw std::invalid_argument("path length must equal depth");
  Leaf x = 0;
  for (int d : digits) {
    if (d < 0 || d >= b_) throw std::invalid_argument("digit out of range");
    x = x * static_cast<std::size_t>(b_) + static_cast<std::size_t>(d);
  }
  return x;
}

int TreeSpace::lca_level(Leaf x, Leaf y) const {
  int l = N_;
  while (x != y) {
    x /= static_cast<std::size_t>(b_);
    y /= static_cast<std::size_t>(b_);
    --l;
  }
  return l;
}

double TreeSpace::distance(Leaf x, Leaf y) const {
  if (x == y) return 0.0;
  return delta_pow(lca_level(x, y));
}

LeafRange TreeSpace::subtree(Leaf x, int level) const {
  std::size_t blk = block(level);
  std::size_t lo = (x / blk) * blk;
  return {lo, lo + blk};
}

LeafRange TreeSpace::ball(Leaf x, double r) const {
  if (!(r > 0.0)) return {x, x};
  // coarsest level whose node distance is already below r
  for (int l = 0; l < N_; ++l)
    if (delta_pow(l) < r) return subtree(x, l);
  return {x, x + 1};
}

LeafRange TreeSpace::closed_ball(Leaf x, double r) const {
  if (r < 0.0) return {x, x};
  for (int l = 0; l < N_; ++l)
    if (delta_pow(l) <= r) return subtree(x, l);
  return {x, x + 1};
}

TreeSpace build_tree(int b, int N, double delta, MassProfile profile, std::vector<double> weights) {
  if (profile == MassProfile::uniform) weights.clear();
  else if (weights.empty()) throw std::invalid_argument("custom mass profile needs weights");
  return TreeSpace(b, N, delta, std::move(weights));
}

}  // namespace potlab
