#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace potlab {

using Leaf = std::size_t;

// Half-open span of leaves [lo, hi). Subtrees, cubes and balls are all of this form.
struct LeafRange {
  std::size_t lo = 0;
  std::size_t hi = 0;

  std::size_t size() const { return hi > lo ? hi - lo : 0; }
  bool empty() const { return hi <= lo; }
  bool contains(std::size_t i) const { return lo <= i && i < hi; }
  bool intersects(const LeafRange& o) const { return lo < o.hi && o.lo < hi; }
  bool within(const LeafRange& o) const { return o.lo <= lo && hi <= o.hi; }
  friend bool operator==(const LeafRange&, const LeafRange&) = default;
};

// Uniform b-ary tree of depth N truncating the boundary. Leaves are indexed
// lexicographically by their digit path, so every subtree is a contiguous range.
class TreeSpace {
 public:
  TreeSpace(int b, int N, double delta, std::vector<double> weights = {});

  int branching() const { return b_; }
  int depth() const { return N_; }
  double delta() const { return delta_; }
  std::size_t size() const { return weights_.size(); }

  const std::vector<double>& weights() const { return weights_; }
  double total_mass() const { return prefix_.back(); }
  double mass(LeafRange r) const { return prefix_[r.hi] - prefix_[r.lo]; }

  // delta^k for 0 <= k <= N
  double delta_pow(int k) const { return dpow_[static_cast<std::size_t>(k)]; }
  // number of leaves under a node at the given level
  std::size_t block(int level) const { return block_[static_cast<std::size_t>(level)]; }

  std::vector<int> path(Leaf x) const;
  Leaf leaf_of(std::span<const int> digits) const;

  int lca_level(Leaf x, Leaf y) const;
  double distance(Leaf x, Leaf y) const;
  LeafRange subtree(Leaf x, int level) const;
  // open ball {y : rho(x,y) < r}
  LeafRange ball(Leaf x, double r) const;
  // closed ball {y : rho(x,y) <= r}
  LeafRange closed_ball(Leaf x, double r) const;

 private:
  int b_;
  int N_;
  double delta_;
  std::vector<double> weights_;
  std::vector<double> prefix_;
  std::vector<double> dpow_;
  std::vector<std::size_t> block_;
};

enum class MassProfile { uniform, custom };

TreeSpace build_tree(int b, int N, double delta, MassProfile profile = MassProfile::uniform,
                     std::vector<double> weights = {});

}  // namespace potlab
