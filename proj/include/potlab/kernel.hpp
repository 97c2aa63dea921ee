#pragma once

#include <limits>
#include <memory>
#include <vector>

#include "potlab/model_space.hpp"

namespace potlab {

// How the discrete operator treats K(x,x) for a singular kernel.
//  cylinder_average: the atom integrates the kernel over its own cylinder
//                    (mean of K over pairs of points inside the cell)
//  exclude:          no self-interaction
enum class AtomRule { cylinder_average, exclude };

class RadialKernel {
 public:
  enum class Kind { general, riesz };

  // values[l] is K at lca level l (distance delta^l), l = 0..N-1; values[N] is the diagonal
  static RadialKernel general(std::vector<double> level_values);
  static RadialKernel riesz(double Q, double s, AtomRule rule = AtomRule::cylinder_average);

  Kind kind() const { return kind_; }
  double Q() const { return Q_; }
  double s() const { return s_; }
  AtomRule atom_rule() const { return rule_; }
  const std::vector<double>& level_values() const { return levels_; }

  // Riesz profile d^{-Qs}; only valid for the riesz kind and d > 0
  double riesz_value(double d) const;
  RadialKernel scaled(double c) const;

 private:
  Kind kind_ = Kind::riesz;
  double Q_ = 1.0;
  double s_ = 0.5;
  double scale_ = 1.0;
  AtomRule rule_ = AtomRule::cylinder_average;
  std::vector<double> levels_;
};

// riesz kind requires 1/p' <= s < 1
void validate_riesz_exponents(double p, double s);
double conjugate(double p);

// A kernel bound to a space: K(x,y) for leaves, including the diagonal rule.
class KernelOperator {
 public:
  KernelOperator(const ModelSpace& space, RadialKernel K);

  const ModelSpace& space() const { return *space_; }
  const RadialKernel& kernel() const { return K_; }
  double diagonal() const { return diag_; }

  // K(x,y); the diagonal follows the kernel's atom rule
  double value(Leaf x, Leaf y) const;
  // kernel value at lca level l on the tree kind (l = N is the diagonal)
  double level_value(int l) const { return lv_[static_cast<std::size_t>(l)]; }

  // K * f (f a density w.r.t. the leaf weights): O(nN) on the tree, dense otherwise
  std::vector<double> apply(const std::vector<double>& f) const;
  // K * mu (mu a vector of point masses)
  std::vector<double> apply_measure(const std::vector<double>& mu) const;
  // plain O(n^2) double loop, independent of the hierarchical path
  std::vector<double> apply_naive(const std::vector<double>& f) const;

  double norm_1() const;

  // dense row-major n x n matrix of K(x,y)
  std::vector<double> dense() const;

  static constexpr std::size_t kDenseLimit = 4096;

 private:
  std::vector<double> apply_masses(const std::vector<double>& m) const;
  std::vector<double> build_dense() const;
  const ModelSpace* space_;
  RadialKernel K_;
  double diag_ = 0.0;
  std::vector<double> lv_;  // tree kind: per-level values, lv_[N] = diagonal
  std::shared_ptr<const std::vector<double>> dense_;
};

// free-function forms
double kernel_value(const KernelOperator& op, Leaf x, Leaf y);
double kernel_norm_1(const KernelOperator& op);
std::vector<double> convolve_naive(const KernelOperator& op, const std::vector<double>& f);
std::vector<double> convolve_fast(const KernelOperator& op, const std::vector<double>& f);
std::vector<double> convolve_measure(const KernelOperator& op, const std::vector<double>& mu);

// Lp norm w.r.t. the leaf weights; p = infinity gives the sup norm
double lp_norm(const ModelSpace& space, const std::vector<double>& f, double p);

struct YoungCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};
YoungCheck young_check(const KernelOperator& op, const std::vector<double>& f, double p);

// sum_j 2^{-Qsj} * integral of g over B(x, 2^j), j from floor(log2 delta^N) to floor(log2 diam)+1
std::vector<double> discretized_riesz(const ModelSpace& space, const std::vector<double>& g, double Q, double s);

// Self-interaction value used by the cylinder-average rule.
double cylinder_self_interaction(const ModelSpace& space, double a);

}  // namespace potlab
