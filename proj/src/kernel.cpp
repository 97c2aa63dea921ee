#include "potlab/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace potlab {

RadialKernel RadialKernel::general(std::vector<double> level_values) {
  if (level_values.size() < 2) throw std::invalid_argument("general kernel needs N+1 level values");
  for (double v : level_values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("kernel level values must be finite and >= 0");
  RadialKernel k;
  k.kind_ = Kind::general;
  k.levels_ = std::move(level_values);
  return k;
}

RadialKernel RadialKernel::riesz(double Q, double s, AtomRule rule) {
  if (!(Q > 0.0)) throw std::invalid_argument("riesz kernel: Q must be > 0");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("riesz kernel: s must lie in (0,1)");
  RadialKernel k;
  k.kind_ = Kind::riesz;
  k.Q_ = Q;
  k.s_ = s;
  k.rule_ = rule;
  return k;
}

double RadialKernel::riesz_value(double d) const { return scale_ * std::pow(d, -Q_ * s_); }

RadialKernel RadialKernel::scaled(double c) const {
  RadialKernel k = *this;
  k.scale_ *= c;
  for (double& v : k.levels_) v *= c;
  return k;
}

double conjugate(double p) { return p / (p - 1.0); }

void validate_riesz_exponents(double p, double s) {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("p must lie in (1, inf)");
  double lo = 1.0 / conjugate(p);
  if (!(s >= lo - 1e-12 && s < 1.0))
    throw std::invalid_argument("riesz exponent s must satisfy 1/p' <= s < 1 (1/p' = " + std::to_string(lo) + ")");
}

double cylinder_self_interaction(const ModelSpace& space, double a) {
  const int N = space.depth();
  switch (space.kind()) {
    case SpaceKind::tree_boundary: {
      // pairs inside an atom split at relative depth j with probability (1-1/b) b^{-j}
      const double b = space.branching();
      const double q = std::pow(space.delta(), -a) / b;
      if (!(q < 1.0)) throw std::invalid_argument("kernel is not integrable on the tree (b^{-1} delta^{-Qs} >= 1)");
      return std::pow(space.delta(), -a * N) * (1.0 - 1.0 / b) / (1.0 - q);
    }
    case SpaceKind::unit_interval: {
      if (!(a < 1.0)) throw std::invalid_argument("kernel is not integrable on the interval (Qs >= 1)");
      const double h = 1.0 / static_cast<double>(space.size());
      return 2.0 * std::pow(h, -a) / ((1.0 - a) * (2.0 - a));
    }
    case SpaceKind::cantor_set: {
      const double three_a = std::pow(3.0, a);
      if (!(three_a < 2.0)) throw std::invalid_argument("kernel is not integrable on the Cantor set (3^{Qs} >= 2)");
      // mean of |x-y|^{-a} with x in the left third, y in the right third, by
      // level-M cell centres (each cell carries symmetric mass, so the error is second order)
      constexpr int M = 8;
      const std::size_t m = std::size_t{1} << M;
      std::vector<double> c(m);
      const double cell = std::pow(3.0, -M);
      for (std::size_t i = 0; i < m; ++i) {
        double v = 0.0, w = 1.0 / 3.0;
        for (int k = M - 1; k >= 0; --k, w /= 3.0)
          if ((i >> k) & 1u) v += 2.0 * w;
        c[i] = v + 0.5 * cell;
      }
      double B = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) B += std::pow(2.0 / 3.0 + (c[j] - c[i]) / 3.0, -a);
      B /= static_cast<double>(m * m);
      const double A0 = B / (2.0 - three_a);
      return std::pow(three_a, N) * A0;
    }
  }
  return 0.0;
}

KernelOperator::KernelOperator(const ModelSpace& space, RadialKernel K) : space_(&space), K_(std::move(K)) {
  const int N = space.depth();
  if (K_.kind() == RadialKernel::Kind::general) {
    if (space.kind() != SpaceKind::tree_boundary)
      throw std::invalid_argument("general level kernels are defined on tree boundaries only");
    if (K_.level_values().size() != static_cast<std::size_t>(N) + 1)
      throw std::invalid_argument("general kernel needs exactly N+1 level values");
    lv_ = K_.level_values();
    diag_ = lv_.back();
    return;
  }
  const double a = K_.Q() * K_.s();
  const double c = K_.riesz_value(1.0);  // the kernel scale
  diag_ = K_.atom_rule() == AtomRule::exclude ? 0.0 : c * cylinder_self_interaction(space, a);
  if (space.kind() == SpaceKind::tree_boundary) {
    lv_.resize(static_cast<std::size_t>(N) + 1);
    for (int l = 0; l < N; ++l) lv_[static_cast<std::size_t>(l)] = K_.riesz_value(space.tree().delta_pow(l));
    lv_[static_cast<std::size_t>(N)] = diag_;
  } else if (space.size() <= kDenseLimit) {
    // built eagerly so that concurrent readers never race on a lazy cache
    dense_ = std::make_shared<std::vector<double>>(build_dense());
  }
}

double KernelOperator::value(Leaf x, Leaf y) const {
  if (x == y) return diag_;
  if (!lv_.empty()) return lv_[static_cast<std::size_t>(space_->tree().lca_level(x, y))];
  return K_.riesz_value(space_->distance(x, y));
}

std::vector<double> KernelOperator::build_dense() const {
  const std::size_t n = space_->size();
  std::vector<double> d(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double v = value(i, j);
      d[i * n + j] = v;
      d[j * n + i] = v;
    }
  return d;
}

std::vector<double> KernelOperator::dense() const {
  if (dense_) return *dense_;
  return build_dense();
}

std::vector<double> KernelOperator::apply_masses(const std::vector<double>& m) const {
  const std::size_t n = space_->size();
  if (m.size() != n) throw std::invalid_argument("input length does not match the leaf count");
  std::vector<double> out(n, 0.0);
  if (!lv_.empty()) {
    // Telescoped level sums: K*m(x) = lv0 S_0 + sum_{l>=1} (lv_l - lv_{l-1}) S_l(x)
    //                                 + (diag - lv_{N-1}) m_x
    const TreeSpace& t = space_->tree();
    const int N = t.depth();
    const std::size_t b = static_cast<std::size_t>(t.branching());
    std::vector<std::vector<double>> S(static_cast<std::size_t>(N) + 1);
    S[static_cast<std::size_t>(N)] = m;
    for (int l = N - 1; l >= 0; --l) {
      const auto& child = S[static_cast<std::size_t>(l) + 1];
      auto& cur = S[static_cast<std::size_t>(l)];
      cur.assign(child.size() / b, 0.0);
      for (std::size_t v = 0; v < cur.size(); ++v)
        for (std::size_t c = 0; c < b; ++c) cur[v] += child[v * b + c];
    }
    std::vector<double> T{lv_[0] * S[0][0]};
    for (int l = 1; l < N; ++l) {
      const auto& cur = S[static_cast<std::size_t>(l)];
      const double dl = lv_[static_cast<std::size_t>(l)] - lv_[static_cast<std::size_t>(l) - 1];
      std::vector<double> next(cur.size());
      for (std::size_t v = 0; v < cur.size(); ++v) next[v] = T[v / b] + dl * cur[v];
      T = std::move(next);
    }
    const double dN = lv_[static_cast<std::size_t>(N)] - lv_[static_cast<std::size_t>(N) - 1];
    for (std::size_t x = 0; x < n; ++x) out[x] = T[x / b] + dN * m[x];
    return out;
  }
  if (dense_) {
    const auto& D = *dense_;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = D.data() + i * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += row[j] * m[j];
      out[i] = acc;
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += value(i, j) * m[j];
    out[i] = acc;
  }
  return out;
}

std::vector<double> KernelOperator::apply(const std::vector<double>& f) const {
  const auto& w = space_->weights();
  if (f.size() != w.size()) throw std::invalid_argument("input length does not match the leaf count");
  std::vector<double> m(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) m[i] = f[i] * w[i];
  return apply_masses(m);
}

std::vector<double> KernelOperator::apply_measure(const std::vector<double>& mu) const { return apply_masses(mu); }

std::vector<double> KernelOperator::apply_naive(const std::vector<double>& f) const {
  const std::size_t n = space_->size();
  if (f.size() != n) throw std::invalid_argument("input length does not match the leaf count");
  const auto& w = space_->weights();
  std::vector<double> out(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    double acc = 0.0;
    for (std::size_t y = 0; y < n; ++y) acc += value(x, y) * f[y] * w[y];
    out[x] = acc;
  }
  return out;
}

double KernelOperator::norm_1() const {
  auto v = apply(std::vector<double>(space_->size(), 1.0));
  return *std::max_element(v.begin(), v.end());
}

double kernel_value(const KernelOperator& op, Leaf x, Leaf y) {
  if (x == y && op.kernel().kind() == RadialKernel::Kind::riesz && op.kernel().atom_rule() == AtomRule::exclude)
    throw std::domain_error("riesz kernel evaluated on the diagonal");
  return op.value(x, y);
}
double kernel_norm_1(const KernelOperator& op) { return op.norm_1(); }
std::vector<double> convolve_naive(const KernelOperator& op, const std::vector<double>& f) { return op.apply_naive(f); }
std::vector<double> convolve_fast(const KernelOperator& op, const std::vector<double>& f) { return op.apply(f); }
std::vector<double> convolve_measure(const KernelOperator& op, const std::vector<double>& mu) {
  for (double v : mu)
    if (v < 0.0) throw std::invalid_argument("convolve_measure: masses must be >= 0");
  return op.apply_measure(mu);
}

double lp_norm(const ModelSpace& space, const std::vector<double>& f, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
  }
  const auto& w = space.weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += w[i] * std::pow(std::abs(f[i]), p);
  return std::pow(acc, 1.0 / p);
}

YoungCheck young_check(const KernelOperator& op, const std::vector<double>& f, double p) {
  if (!(p >= 1.0)) throw std::invalid_argument("young_check: p must be >= 1");
  YoungCheck r;
  r.lhs = lp_norm(op.space(), op.apply(f), p);
  r.rhs = op.norm_1() * lp_norm(op.space(), f, p);
  r.pass = r.lhs <= r.rhs * (1.0 + 1e-12);
  return r;
}

std::vector<double> discretized_riesz(const ModelSpace& space, const std::vector<double>& g, double Q, double s) {
  const std::size_t n = space.size();
  if (g.size() != n) throw std::invalid_argument("input length does not match the leaf count");
  const auto& w = space.weights();
  std::vector<double> pre(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) pre[i + 1] = pre[i] + g[i] * w[i];
  const int jlo = static_cast<int>(std::floor(space.depth() * std::log2(space.delta()) + 1e-12));
  const int jhi = static_cast<int>(std::floor(std::log2(space.diam()))) + 1;
  const double a = Q * s;
  std::vector<double> out(n, 0.0);
  for (Leaf x = 0; x < n; ++x) {
    double acc = 0.0;
    for (int j = jlo; j <= jhi; ++j) {
      LeafRange B = space.ball(x, std::ldexp(1.0, j));
      acc += std::pow(2.0, -a * j) * (pre[B.hi] - pre[B.lo]);
    }
    out[x] = acc;
  }
  return out;
}

}  // namespace potlab
