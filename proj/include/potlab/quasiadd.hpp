#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "potlab/capacity.hpp"

namespace potlab {

// A = [(2^{p'-1}+1) ||K||_1^{p'} + 2^{p'-1}]^{1/(p'-1)}
double theoretical_constant_A(double norm_1, double p);
double theoretical_constant_A(const KernelOperator& op, double p);

enum class FamilyMode { tree, ahlfors };
enum class SetShape { full_ball, singleton, half_density };

std::string to_string(FamilyMode m);
std::string to_string(SetShape s);

struct FamilyOptions {
  FamilyMode mode = FamilyMode::tree;
  double M = 1.0;    // ahlfors: eta* is taken at radius M r
  double psi = 1.0;  // ahlfors: enlarged radius psi * eta*
  int level_lo = 2;  // candidate radii delta^n for n in [level_lo, level_hi]
  int level_hi = -1; // -1: depth - 1
  std::size_t max_candidates = 0;  // 0: 64 * count
};

struct SeparatedFamily {
  FamilyMode mode = FamilyMode::tree;
  double M = 1.0;
  double psi = 1.0;
  std::vector<Leaf> centers;
  std::vector<double> radii;
  std::vector<double> eta_star;       // tree: eta*(x, r); ahlfors: eta*_X(x, M r)
  std::vector<double> enlarged;       // eta_star, times psi in ahlfors mode
  std::vector<LeafRange> balls;       // B(x_j, r_j)
  std::vector<LeafRange> enlarged_balls;
  std::size_t requested = 0;
  std::size_t sentinels = 0;          // candidates skipped for lack of an eta radius
  bool short_family = false;
  std::string warning;
  std::size_t size() const { return centers.size(); }
};

// Greedy sampler: candidates (center, level) in seeded random order; a candidate is
// kept iff its enlarged ball misses all enlarged balls kept so far.
SeparatedFamily generate_separated_family(CapacityEvaluator& ev, std::size_t count, std::uint64_t seed,
                                          const FamilyOptions& opt = {});

// Drop members (in order) until the enlarged balls at a larger psi are disjoint.
SeparatedFamily refilter_family(CapacityEvaluator& ev, const SeparatedFamily& fam, double psi);

struct SeparationCertificate {
  bool pass = true;
  std::vector<std::pair<std::size_t, std::size_t>> violations;
};
SeparationCertificate verify_separation(const SeparatedFamily& fam);

// E_j inside B(x_j, r_j); half_density keeps each leaf with probability 1/2 (at least one)
std::vector<std::vector<Leaf>> family_sets(const SeparatedFamily& fam, SetShape shape, std::uint64_t seed);

struct QuasiReport {
  FamilyMode mode = FamilyMode::tree;
  std::size_t J = 0;
  double sum_cap = 0.0;
  double union_cap = 0.0;
  double ratio = 0.0;
  double bound = 0.0;  // A (tree) or psi (ahlfors)
  bool lower_ok = true;
  bool upper_ok = true;
  bool pass = true;
};

// rejects families that fail verify_separation or sets outside their balls
QuasiReport quasi_additivity_tree(CapacityEvaluator& ev, const SeparatedFamily& fam,
                                  const std::vector<std::vector<Leaf>>& sets);
// no closed-form bound: pass reflects the lower bound only; bound column holds psi
QuasiReport quasi_additivity_ahlfors(CapacityEvaluator& ev, const SeparatedFamily& fam,
                                     const std::vector<std::vector<Leaf>>& sets);

struct PsiEstimate {
  double psi = 8.0;
  bool stabilized = false;
  std::vector<double> grid;
  std::vector<double> max_ratio;  // per grid value
  std::vector<std::size_t> families;
  std::string warning;
};
// smallest psi on {1, 1.5, 2, 3, 4, 6, 8} after which the batch max ratio changes
// by less than 5%. Families for larger psi are refiltered from the previous ones.
PsiEstimate estimate_psi(CapacityEvaluator& ev, double M, const std::vector<std::uint64_t>& seeds,
                         std::size_t count = 6, SetShape shape = SetShape::full_ball);

}  // namespace potlab
