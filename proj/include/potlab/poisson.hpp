#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "potlab/kernel.hpp"

namespace potlab {

// heights diam * 2^{-m}, m = 0..max_m, dropping those below the leaf resolution
std::vector<double> height_grid(const ModelSpace& space, int max_m = 20);

// Values on the grid X x {heights}; row-major by height.
struct UpperHalfField {
  std::vector<double> heights;
  std::size_t n = 0;
  std::vector<double> values;

  double at(Leaf x, std::size_t iy) const { return values[iy * n + x]; }
  double& at(Leaf x, std::size_t iy) { return values[iy * n + x]; }
  const double* row(std::size_t iy) const { return values.data() + iy * n; }
  double max() const;
  double min() const;
};

// grid mask of the same shape as a field
struct UpperHalfSet {
  std::size_t n = 0;
  std::size_t rows = 0;
  std::vector<char> mask;
  bool contains(Leaf x, std::size_t iy) const { return mask[iy * n + x] != 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

// Dyadic Poisson integral
//   PI(f)(x,y) = C(x,y) y^{-Q} sum_k 2^{-(Q+1)k} int_{B(x, 2^k y)} f dm
// Each (x, y) is stored as a stencil of nested balls with normalized weights,
// the k-sum stopping at the first ball equal to X and the tail added in closed form.
class PoissonOperator {
 public:
  explicit PoissonOperator(const ModelSpace& space, std::vector<double> heights = {});

  const ModelSpace& space() const { return *space_; }
  const std::vector<double>& heights() const { return heights_; }
  std::size_t rows() const { return heights_.size(); }

  // C(x, y) at a grid height
  double normalization(Leaf x, std::size_t iy) const { return norm_[iy * n_ + x]; }
  // C(x, y) for arbitrary 0 < y <= diam
  double normalization_at(Leaf x, double y) const;

  double integral(const std::vector<double>& f, Leaf x, std::size_t iy) const;
  double integral_at(const std::vector<double>& f, Leaf x, double y) const;
  // plain double loop over leaves, for cross-checks
  double integral_naive(const std::vector<double>& f, Leaf x, double y) const;
  UpperHalfField field(const std::vector<double>& f) const;

  // kernel density of PI at height iy w.r.t. m: PI(f)(x,y) = sum_z P(x,z) f(z) w(z)
  double density(Leaf x, std::size_t iy, Leaf z) const;
  // dense n x n row-major matrix of density(., iy, .)
  std::vector<double> density_matrix(std::size_t iy) const;

  // sup over the height grid
  std::vector<double> maximal_function(const std::vector<double>& f) const;

 private:
  struct Term {
    std::size_t lo, hi;
    double c;
  };
  void build_stencil(Leaf x, double y, std::vector<Term>& out, double& tail, double& C) const;

  const ModelSpace* space_;
  std::size_t n_;
  std::vector<double> heights_;
  std::vector<std::size_t> offset_;  // stencil start for (iy, x)
  std::vector<Term> terms_;
  std::vector<double> tail_;  // coefficient on the total integral
  std::vector<double> norm_;
};

// ---- exceedance sets ----
struct Exceedance {
  UpperHalfSet E;             // {G > eps}
  std::vector<char> E_star;   // union of B(x,y) over E
  UpperHalfSet E_prime;       // union of B(x,y) x {y} over E
};
Exceedance exceedance_sets(const ModelSpace& space, const UpperHalfField& G, double eps);
// naive point-in-ball scan for E*, for cross-checks
std::vector<char> exceedance_star_naive(const ModelSpace& space, const UpperHalfField& G, double eps);

// PI(K*f) on the grid
UpperHalfField potential_field(const PoissonOperator& P, const KernelOperator& K, const std::vector<double>& f);

// ---- calibrations (exhaustive, kernel level; intended for small depths) ----

// max / min of C(x,y) over the grid
double normalization_ratio(const PoissonOperator& P);
// max / min of C(x,y) over all leaves and every y in [finest grid height, diam].
// C is y^Q times a step function of y, so the extremes sit at the breakpoints d / 2^k.
double calibrate_normalization(const PoissonOperator& P);

// min of P(x,y,z) / P(xt,y,z) over heights y, xt, x in B(xt,y), z
double calibrate_harnack(const PoissonOperator& P);

struct Band {
  double lo = 0.0;
  double hi = 0.0;
};
// bounds for K*(PI f(.,y))(x) / PI(K*f)(x,y) valid for every f >= 0, from the
// entrywise ratio of the two composed kernels
Band calibrate_exchange(const PoissonOperator& P, const KernelOperator& K);
// measured pointwise ratio for one f over the whole grid
Band exchange_ratio(const PoissonOperator& P, const KernelOperator& K, const std::vector<double>& f);

struct HarnackResult {
  double min_value = 0.0;  // min of PI(K*f) over E' (infinity if E' is empty)
  double bound = 0.0;      // c_H * eps
  bool pass = true;
  std::size_t points = 0;
};
HarnackResult harnack_check(const ModelSpace& space, const UpperHalfField& G, double eps, double c_H);

// ---- uniform continuity ----
struct ContinuityRow {
  double eps = 0.0;
  std::optional<double> delta;  // largest grid delta that works, empty if none
  double sup_error = 0.0;       // sup error achieved at that delta (or at the finest delta)
};
// for each eps: largest delta on {diam * 2^{-m}} with
//   sup_x0 sup_{d(x,x0) < delta, y < delta} |PI(g)(x,y) - g(x0)| <= eps
std::vector<ContinuityRow> uniform_continuity_probe(const PoissonOperator& P, const std::vector<double>& g,
                                                    const std::vector<double>& eps_grid);

// named Lipschitz profiles on [0,1] (bump = 16 t^2 (1-t)^2), evaluated through the ambient coordinate
// (tree kind: leaf index / n)
enum class Profile { coordinate, hat, bump };
std::vector<double> profile_values(const ModelSpace& space, Profile prof, double lipschitz_scale = 1.0);

// nonnegative test input: uniform [0,1) values, constant on the cubes of the given level.
// Draws depend only on (level, seed), so the same seed gives the same function at every depth.
std::vector<double> random_cube_function(const ModelSpace& space, int level, std::uint64_t seed);

}  // namespace potlab
