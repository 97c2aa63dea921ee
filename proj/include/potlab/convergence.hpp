#pragma once

#include <optional>
#include <string>
#include <vector>

#include "potlab/capacity.hpp"
#include "potlab/poisson.hpp"

namespace potlab {

enum class RegionKind { nontangential, eta_star, polynomial, exponential };
std::string to_string(RegionKind k);
RegionKind parse_region_kind(const std::string& s);

// Contact region at x0; at height y its slice is the open ball B(x0, R(y)) with
//   nontangential R = y
//   eta_star     R = psi * eta*_X(x0, y)
//   polynomial   R = c * y^exponent
//   exponential  R = (c / log(1/y))^{1/Q}
struct ApproachRegion {
  Leaf x0 = 0;
  RegionKind kind = RegionKind::nontangential;
  double c = 1.0;
  double exponent = 1.0;
  double psi = 1.0;
  double y0 = 1.0;  // height cutoff
};

ApproachRegion nontangential_region(Leaf x0);
ApproachRegion eta_star_region(Leaf x0, double psi);
// exponent p (s - 1/p')
ApproachRegion polynomial_region(Leaf x0, double c, double p, double s);
ApproachRegion exponential_region(Leaf x0, double c);

// ev is only used by the eta_star kind
double region_radius(const ModelSpace& space, const ApproachRegion& reg, double y, CapacityEvaluator* ev = nullptr);
bool region_membership(const ModelSpace& space, const ApproachRegion& reg, Leaf x, double y,
                       CapacityEvaluator* ev = nullptr);

// ---- thin sets ----
struct ThinSetReport {
  std::vector<double> t;
  std::vector<double> capacity;      // C(E*_t)
  std::vector<std::size_t> star_size;
  bool thin = true;                   // last capacity < thin_tol
};
// E*_t = union of B(x,y) over points of E with y < t
std::vector<char> shadow(const ModelSpace& space, const UpperHalfSet& E, const std::vector<double>& heights, double t);
ThinSetReport thinness_decay(CapacityEvaluator& ev, const UpperHalfSet& E, const std::vector<double>& heights,
                             const std::vector<double>& t_grid, double thin_tol = 1e-3);

// ---- enlargement ----
// d(x, X \ E); infinity when E = X
double distance_to_complement(const ModelSpace& space, const std::vector<char>& E, Leaf x);

struct EnlargedSet {
  std::vector<char> mask;
  double mass = 0.0;
  double capacity = 0.0;  // C(E)
  double ratio = 0.0;     // m(E~) / C(E)
};
// union over x in E of B(x, C eta*_X(x, delta_E(x)))
EnlargedSet enlarged_set(CapacityEvaluator& ev, const std::vector<char>& E, double C);

// ---- shadow covering ----
// f given on leaves x heights (row-major by height, heights descending); regions are closed balls
UpperHalfField eta_star_field(CapacityEvaluator& ev, const std::vector<double>& heights, double psi);

struct ShadowCheck {
  bool monotone = true;        // f(x, .) non-decreasing in y
  double measured_alpha = 1.0; // max over y of max_x f / min_x f
  bool hypothesis_ok = true;   // monotone and alpha >= measured_alpha
  bool inclusion = true;       // only meaningful when hypothesis_ok
  std::size_t lhs = 0;
  std::size_t rhs = 0;
};
ShadowCheck shadow_covering_check(const ModelSpace& space, const UpperHalfSet& E, const UpperHalfField& f, double alpha);

// ---- exceptional set capacity ----
struct ExceptionalBound {
  double capacity = 0.0;  // C(E*(f, eps))
  double bound = 0.0;     // (||f||_p / eps)^p
  double ratio = 0.0;
};
ExceptionalBound exceptional_capacity_bound(const PoissonOperator& P, CapacityEvaluator& ev,
                                            const std::vector<double>& f, double eps);

// ---- boundary modulus ----
struct ModulusRow {
  double eps = 0.0;
  std::optional<double> r;
  double sup_error = 0.0;
};

// sup over x0 not in skip, over grid points (x,y) with y < r, d(x,x0) < r and not in
// excluded, of |G(x,y) - v(x0)|; for each eps the largest grid r with sup < eps
std::vector<ModulusRow> modulus_table(const ModelSpace& space, const UpperHalfField& G, const std::vector<double>& v,
                                      const UpperHalfSet* excluded, const std::vector<char>* skip,
                                      const std::vector<double>& eps_grid);

struct SplitOptions {
  double A = 1.0;   // constant in C(E*(g,eps)) <= A (||g||_p / eps)^p
  int max_j = 60;
  std::vector<double> eps_grid{0.2, 0.1, 0.05, 0.02, 0.01};
};

struct SplitResult {
  UpperHalfSet E;
  std::vector<char> E_star;
  std::vector<char> F;
  double cap_E_star = 0.0;
  double cap_F = 0.0;
  std::vector<int> level_pos;  // surrogate level used for f+ at each j
  std::vector<int> level_neg;
  int j_last = 0;              // first j with g_j = f
  bool reached_leaf_level = false;
  bool within_target = false;  // both capacities < delta_target
  std::vector<ModulusRow> modulus;
};

// g_j = g_j^+ - g_j^- with g_j^+ = min(f^+, c_l) and c_l a continuous surrogate of f^+
// at cube level l (cube averages on trees, interpolation at cube left endpoints otherwise);
// l is the coarsest level with ||f^+ - g_j^+||_p <= 2^{-j} (2^{-j} delta / (2A))^{1/p}.
SplitResult approximation_split(const PoissonOperator& P, CapacityEvaluator& ev, const std::vector<double>& f,
                                double delta_target, const SplitOptions& opt = {});
// the surrogate used above, exposed for tests
std::vector<double> level_surrogate(const ModelSpace& space, const std::vector<double>& h, int level);

// ---- convergence experiments ----
struct ErrorRow {
  Leaf x0 = 0;
  double t = 0.0;
  double sup_error = 0.0;
  std::size_t points = 0;      // grid points of the region below t, after exclusion
  std::size_t off_center = 0;  // of which with x != x0
  bool excluded = false;       // x0 in F
};

struct ConvergenceReport {
  RegionKind kind = RegionKind::nontangential;
  std::vector<double> t_grid;         // descending
  std::vector<ErrorRow> rows;         // x0-major, t descending
  double tol = 0.0;
  double fraction_converged = 0.0;    // error at the finest t below tol
  std::vector<double> bad_mass;       // per t: weighted fraction of samples at or above tol
  bool empty_at_resolution = false;   // no off-center region point at the finest t
};

// t grid {2 y_m}: the finest t holds only the finest height row
std::vector<double> default_t_grid(const std::vector<double>& heights);

ConvergenceReport region_experiment(const ModelSpace& space, const UpperHalfField& G, const std::vector<double>& boundary,
                                    const std::vector<ApproachRegion>& regions, const std::vector<double>& t_grid,
                                    double tol, const UpperHalfSet* excluded = nullptr,
                                    const std::vector<char>* F = nullptr, CapacityEvaluator* ev = nullptr);

ConvergenceReport nontangential_experiment(const PoissonOperator& P, const KernelOperator& K,
                                           const std::vector<double>& f, const std::vector<Leaf>& x0s,
                                           const std::vector<double>& t_grid, double tol,
                                           const SplitResult* split = nullptr);

ConvergenceReport tangential_experiment(const PoissonOperator& P, const KernelOperator& K, const std::vector<double>& f,
                                        const std::vector<ApproachRegion>& regions, const std::vector<double>& t_grid,
                                        double tol, const SplitResult* split = nullptr,
                                        CapacityEvaluator* ev = nullptr);

}  // namespace potlab
