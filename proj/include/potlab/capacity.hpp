#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "potlab/kernel.hpp"

namespace potlab {

struct CapacityOptions {
  double tol = 1e-8;          // relative objective (duality gap) tolerance
  int max_iters = 200;        // Newton / active-set iterations
  int max_iters_dual = 20000; // first-order iterations of the dual solver
  double dual_tol = 1e-7;     // gap tolerance of the first-order dual solver
  double feas_slack = 1e-9;
};

struct CapacitySolution {
  double value = 0.0;
  std::vector<double> f;   // primal density, feasible: K*f >= 1 on E
  std::vector<double> mu;  // equilibrium measure, ||K*mu||_{p'} = 1, supported on E
  double primal_value = 0.0;
  double dual_value = 0.0;
  double relative_gap = 0.0;
  int iterations = 0;
  bool converged = true;
};

// Target sets are sorted leaf index lists. Both solvers work on the conic form
//   min  Phi(nu)/p' - sum(nu),  Phi(nu) = sum_y w_y (K*nu)(y)^{p'},  nu >= 0 on E,
// whose minimizer has sum(nu) = Phi(nu) = capacity; f = (K*nu)^{p'-1} is the optimal density.
CapacitySolution capacity_primal(const KernelOperator& op, double p, const std::vector<Leaf>& E,
                                 const CapacityOptions& opt = {});
CapacitySolution capacity_dual(const KernelOperator& op, double p, const std::vector<Leaf>& E,
                               const CapacityOptions& opt = {});
// p = 2 only: exact active-set solve of min 1/2 nu'G nu - 1'nu
CapacitySolution capacity_exact_quadratic(const KernelOperator& op, const std::vector<Leaf>& E,
                                          const CapacityOptions& opt = {});

// (sum_y w_y K(x0,y)^{p'})^{1-p}
double singleton_capacity(const KernelOperator& op, double p, Leaf x0);

std::vector<Leaf> leaves_of(LeafRange r);

// Capacity calculator for one (space, kernel, p) with a cache keyed by leaf range.
// Not thread-safe for concurrent writes; give each worker its own instance.
class CapacityEvaluator {
 public:
  CapacityEvaluator(const KernelOperator& op, double p, CapacityOptions opt = {});

  const KernelOperator& op() const { return *op_; }
  const ModelSpace& space() const { return op_->space(); }
  double p() const { return p_; }
  const CapacityOptions& options() const { return opt_; }

  double of(const std::vector<Leaf>& E);
  double of(LeafRange r);
  double of_mask(const std::vector<char>& mask);
  std::size_t solves() const { return solves_; }

 private:
  const KernelOperator* op_;
  double p_;
  CapacityOptions opt_;
  std::map<std::pair<std::size_t, std::size_t>, double> range_cache_;
  std::size_t solves_ = 0;
};

struct RadiusEta {
  Leaf center = 0;
  double r = 0.0;
  std::optional<double> eta;  // empty = whole-space sentinel
  double eta_star = 0.0;
  double ball_capacity = 0.0;
  bool sentinel() const { return !eta.has_value(); }
};

// tree kind: r on the grid {delta^n}; eta on half steps delta^{n-1/2}
RadiusEta eta_tree(CapacityEvaluator& ev, Leaf x, double r);
// any kind: search over realized distances, eta = inf{R : m(B(x,R)) >= C(B(x,r))}
RadiusEta eta_X(CapacityEvaluator& ev, Leaf x, double r);
// the open ball B(x, eta_star) as a leaf range (all of X for the sentinel)
LeafRange enlarged_ball(const ModelSpace& space, const RadiusEta& e, double factor = 1.0);

struct BallProfile {
  std::vector<int> levels;
  std::vector<double> radii;       // delta^n
  std::vector<double> capacities;  // C(B(x, delta^n))
  double slope = 0.0;              // least squares slope of log C vs log r
  double log_product_min = 0.0;    // min / max of C * log(1/r)
  double log_product_max = 0.0;
  double log_product_factor() const { return log_product_min > 0 ? log_product_max / log_product_min : 0.0; }
};

BallProfile ball_capacity_profile(CapacityEvaluator& ev, Leaf x, int n_lo, int n_hi);

}  // namespace potlab
