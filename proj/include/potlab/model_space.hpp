#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "potlab/tree.hpp"

namespace potlab {

enum class SpaceKind { tree_boundary, unit_interval, cantor_set };

std::string to_string(SpaceKind k);
SpaceKind parse_space_kind(const std::string& s);

// A compact Ahlfors-regular space discretized by the leaves of a tree.
// tree_boundary uses the ultrametric rho directly; unit_interval and
// cantor_set place each leaf at its ambient coordinate Lambda(leaf) and use
// the Euclidean distance. In all three kinds balls are contiguous leaf ranges.
class ModelSpace {
 public:
  static ModelSpace tree_boundary(TreeSpace t, std::optional<double> Q = std::nullopt);
  // b-adic subdivision of [0,1]; delta = 1/b, Q = 1
  static ModelSpace unit_interval(int b, int N, std::vector<double> weights = {});
  // middle-thirds Cantor set; b = 2, delta = 1/3, Q = log 2 / log 3
  static ModelSpace cantor_set(int N, std::vector<double> weights = {});

  SpaceKind kind() const { return kind_; }
  double Q() const { return Q_; }
  const TreeSpace& tree() const { return tree_; }
  std::size_t size() const { return tree_.size(); }
  int depth() const { return tree_.depth(); }
  int branching() const { return tree_.branching(); }
  double delta() const { return tree_.delta(); }
  const std::vector<double>& weights() const { return tree_.weights(); }
  double total_mass() const { return tree_.total_mass(); }
  double mass(LeafRange r) const { return tree_.mass(r); }
  bool ultrametric() const { return kind_ == SpaceKind::tree_boundary; }

  // ambient coordinates (empty for the tree kind)
  const std::vector<double>& coords() const { return coords_; }

  double distance(Leaf x, Leaf y) const;
  LeafRange ball(Leaf x, double r) const;         // d < r
  LeafRange closed_ball(Leaf x, double r) const;  // d <= r
  double diam() const { return 1.0; }
  // smallest positive distance between two leaves
  double resolution() const { return resolution_; }
  // distance from x to the nearest leaf outside the range (infinity if none)
  double distance_to_complement(Leaf x, LeafRange r) const;

  // distinct realized distances from x in increasing order, each paired with
  // the mass of the closed ball of that radius
  std::vector<std::pair<double, double>> distance_profile(Leaf x) const;

  ModelSpace with_weights(std::vector<double> w) const;

 private:
  ModelSpace(SpaceKind k, TreeSpace t, double Q, std::vector<double> coords);
  SpaceKind kind_;
  TreeSpace tree_;
  double Q_;
  std::vector<double> coords_;
  double resolution_ = 0.0;
};

// ---- Christ cubes ----

struct ChristCube {
  int level = 0;
  std::size_t index = 0;
  LeafRange range;
  Leaf center = 0;
  double inner_radius = 0.0;  // C3 * delta^level
};

struct ChristDecomposition {
  double delta = 0.5;
  double C3 = 0.0;
  double C4 = 0.0;
  std::vector<std::vector<ChristCube>> levels;  // levels[k] = cubes at level k
};

ChristDecomposition christ_decomposition(const ModelSpace& space);

struct ChristCheck {
  bool covering = true;     // i)  each level partitions X
  bool nested = true;       // ii) nested or disjoint
  bool unique_parent = true;  // iii)
  bool diameter = true;     // iv)
  bool inner_ball = true;   // v)
  bool all() const { return covering && nested && unique_parent && diameter && inner_ball; }
};

ChristCheck check_christ(const ModelSpace& space, const ChristDecomposition& dec);

// ---- Lambda and Ahlfors constants ----

double lambda_map(const ModelSpace& space, Leaf x);

struct AhlforsConstants {
  double K1 = 0.0;
  double K2 = 0.0;
};

// inf / sup of m(closed ball(x, delta^n)) / delta^{nQ} over all leaves x and 1 <= n <= N
AhlforsConstants ahlfors_constants(const ModelSpace& space);

// ---- serialization ----
// header "kind b N delta Q", then one weight per line
void write_space(std::ostream& os, const ModelSpace& space);
ModelSpace read_space(std::istream& is);

}  // namespace potlab
