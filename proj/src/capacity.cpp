#include "potlab/capacity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace potlab {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_set(const ModelSpace& space, const std::vector<Leaf>& E) {
  for (std::size_t i = 0; i < E.size(); ++i) {
    if (E[i] >= space.size()) throw std::invalid_argument("target set: leaf index out of range");
    if (i > 0 && E[i] <= E[i - 1]) throw std::invalid_argument("target set must be sorted and free of duplicates");
  }
}

void check_p(double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("p must lie in (1, inf)");
}

// The conic objective restricted to a target set, with dense kernel rows.
struct Conic {
  const KernelOperator& op;
  double p, pp;
  std::vector<Leaf> E;
  VectorXd w;
  MatrixXd KE;  // |E| x n

  Conic(const KernelOperator& o, double p_, const std::vector<Leaf>& E_) : op(o), p(p_), pp(conjugate(p_)), E(E_) {
    const auto& sp = op.space();
    const std::size_t n = sp.size();
    w = Eigen::Map<const VectorXd>(sp.weights().data(), static_cast<Eigen::Index>(n));
    KE.resize(static_cast<Eigen::Index>(E.size()), static_cast<Eigen::Index>(n));
    for (std::size_t a = 0; a < E.size(); ++a)
      for (std::size_t y = 0; y < n; ++y) KE(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(y)) = op.value(E[a], y);
  }

  struct State {
    VectorXd u;     // K*mu on X
    double Phi = 0;
    double G = 0;
    VectorXd grad;  // (K*f)|_E - 1 with f = u^{p'-1}
  };

  State eval(const VectorXd& mu, bool with_grad = true) const {
    State s;
    s.u = KE.transpose() * mu;
    s.Phi = (w.array() * s.u.array().pow(pp)).sum();
    s.G = s.Phi / pp - mu.sum();
    if (with_grad) {
      VectorXd v = (w.array() * s.u.array().pow(pp - 1.0)).matrix();
      s.grad = KE * v;
      s.grad.array() -= 1.0;
    }
    return s;
  }

  MatrixXd hessian(const VectorXd& u) const {
    VectorXd c = ((pp - 1.0) * w.array() * u.array().pow(pp - 2.0)).sqrt().matrix();
    MatrixXd B = KE * c.asDiagonal();
    MatrixXd H = MatrixXd::Zero(B.rows(), B.rows());
    H.selfadjointView<Eigen::Lower>().rankUpdate(B);
    return H.selfadjointView<Eigen::Lower>();
  }

  // optimal scale t on the ray t*mu
  double ray_scale(const VectorXd& mu) const {
    State s = eval(mu, false);
    return std::pow(mu.sum() / s.Phi, 1.0 / (pp - 1.0));
  }

  void certify(const VectorXd& mu, const State& s, CapacitySolution& out) const {
    const std::size_t n = op.space().size();
    double minKf = std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < s.grad.size(); ++a) minKf = std::min(minKf, s.grad(a) + 1.0);
    out.primal_value = minKf > 0 ? s.Phi / std::pow(minKf, p) : std::numeric_limits<double>::infinity();
    out.dual_value = std::pow(mu.sum(), p) / std::pow(s.Phi, p - 1.0);
    out.relative_gap = std::isfinite(out.primal_value) ? (out.primal_value - out.dual_value) / out.primal_value : 1.0;
    out.f.assign(n, 0.0);
    if (minKf > 0)
      for (std::size_t y = 0; y < n; ++y) out.f[y] = std::pow(s.u(static_cast<Eigen::Index>(y)), pp - 1.0) / minKf;
    out.mu.assign(n, 0.0);
    const double norm = std::pow(s.Phi, 1.0 / pp);
    for (std::size_t a = 0; a < E.size(); ++a) out.mu[E[a]] = mu(static_cast<Eigen::Index>(a)) / norm;
  }
};

CapacitySolution empty_solution(const ModelSpace& space) {
  CapacitySolution s;
  s.f.assign(space.size(), 0.0);
  s.mu.assign(space.size(), 0.0);
  return s;
}

}  // namespace

CapacitySolution capacity_primal(const KernelOperator& op, double p, const std::vector<Leaf>& E,
                                 const CapacityOptions& opt) {
  check_p(p);
  check_set(op.space(), E);
  if (E.empty()) return empty_solution(op.space());
  Conic P(op, p, E);
  const Eigen::Index m = static_cast<Eigen::Index>(E.size());

  VectorXd mu = VectorXd::Ones(m);
  mu *= P.ray_scale(mu);

  // Projected Newton with an epsilon-active set (Bertsekas) and Armijo search along the projection arc.
  CapacitySolution out;
  out.converged = false;
  constexpr double sigma = 1e-4;
  auto st = P.eval(mu);
  int it = 0;
  for (; it < opt.max_iters; ++it) {
    P.certify(mu, st, out);
    if (out.relative_gap <= opt.tol) {
      out.converged = true;
      break;
    }
    VectorXd proj = (mu - st.grad).cwiseMax(0.0);
    double eps = std::min(1e-3 * mu.maxCoeff(), (mu - proj).norm());
    std::vector<Eigen::Index> F, A;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (mu(i) <= eps && st.grad(i) > 0) A.push_back(i);
      else F.push_back(i);
    }
    MatrixXd H = P.hessian(st.u);
    VectorXd d = VectorXd::Zero(m);
    for (auto i : A) d(i) = -st.grad(i) / H(i, i);
    if (!F.empty()) {
      const Eigen::Index nf = static_cast<Eigen::Index>(F.size());
      MatrixXd HF(nf, nf);
      VectorXd gF(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        gF(a) = st.grad(F[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < nf; ++b) HF(a, b) = H(F[static_cast<std::size_t>(a)], F[static_cast<std::size_t>(b)]);
      }
      Eigen::LDLT<MatrixXd> ldlt(HF);
      VectorXd dF = ldlt.solve(-gF);
      if (ldlt.info() != Eigen::Success || !dF.allFinite() || gF.dot(dF) >= 0) {
        for (Eigen::Index a = 0; a < nf; ++a) dF(a) = -gF(a) / HF(a, a);
      }
      for (Eigen::Index a = 0; a < nf; ++a) d(F[static_cast<std::size_t>(a)]) = dF(a);
    }

    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
      VectorXd trial = (mu + alpha * d).cwiseMax(0.0);
      if (trial.sum() <= 0) continue;
      double pred = 0.0;
      for (auto i : F) pred += -alpha * st.grad(i) * d(i);
      for (auto i : A) pred += st.grad(i) * (mu(i) - trial(i));
      auto ts = P.eval(trial);
      if (st.G - ts.G >= sigma * pred) {
        mu = std::move(trial);
        st = std::move(ts);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no further decrease at working precision
  }
  P.certify(mu, st, out);
  if (out.relative_gap <= opt.tol) out.converged = true;
  out.iterations = it;
  out.value = out.primal_value;
  return out;
}

CapacitySolution capacity_dual(const KernelOperator& op, double p, const std::vector<Leaf>& E,
                               const CapacityOptions& opt) {
  check_p(p);
  check_set(op.space(), E);
  if (E.empty()) return empty_solution(op.space());
  Conic P(op, p, E);
  const Eigen::Index m = static_cast<Eigen::Index>(E.size());

  // Accelerated projected gradient on the conic objective; every iterate is
  // pushed radially to its best scale, and momentum restarts on any increase.
  VectorXd mu = VectorXd::Ones(m);
  mu *= P.ray_scale(mu);
  auto smu = P.eval(mu);
  VectorXd y = mu;
  double L = 1.0;
  double t = 1.0;
  CapacitySolution out;
  out.converged = false;
  double best_dual = 0.0;
  int stall = 0;
  int it = 0;
  for (; it < opt.max_iters_dual; ++it) {
    auto sy = P.eval(y);
    VectorXd z;
    Conic::State sz;
    for (int bt = 0; bt < 100; ++bt) {
      z = (y - sy.grad / L).cwiseMax(0.0);
      if (z.sum() <= 0) {
        L *= 2.0;
        continue;
      }
      sz = P.eval(z, false);
      VectorXd dz = z - y;
      if (sz.G <= sy.G + sy.grad.dot(dz) + 0.5 * L * dz.squaredNorm() + 1e-15 * std::abs(sy.G)) break;
      L *= 2.0;
    }
    z *= P.ray_scale(z);
    sz = P.eval(z);
    if (sz.G > smu.G) {
      // restart from the last accepted point
      t = 1.0;
      y = mu;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = z + ((t - 1.0) / tn) * (z - mu);
    mu = std::move(z);
    smu = std::move(sz);
    t = tn;
    L *= 0.9;
    if (it % 10 == 0) {
      P.certify(mu, smu, out);
      if (out.relative_gap <= opt.dual_tol) {
        out.converged = true;
        break;
      }
      if (out.dual_value > best_dual * (1.0 + 1e-13)) {
        best_dual = out.dual_value;
        stall = 0;
      } else if (++stall > 100) {
        break;
      }
    }
  }
  P.certify(mu, smu, out);
  if (out.relative_gap <= opt.dual_tol) out.converged = true;
  out.iterations = it;
  out.value = out.dual_value;
  return out;
}

CapacitySolution capacity_exact_quadratic(const KernelOperator& op, const std::vector<Leaf>& E,
                                          const CapacityOptions& opt) {
  check_set(op.space(), E);
  if (E.empty()) return empty_solution(op.space());
  Conic P(op, 2.0, E);
  const Eigen::Index m = static_cast<Eigen::Index>(E.size());
  MatrixXd G = P.KE * P.w.asDiagonal() * P.KE.transpose();

  // Lawson-Hanson active set for min 1/2 mu'G mu - 1'mu, mu >= 0
  std::vector<char> passive(static_cast<std::size_t>(m), 0);
  VectorXd mu = VectorXd::Zero(m);
  VectorXd neg_grad = VectorXd::Ones(m);
  const double thresh = 1e-12;
  int it = 0;
  for (; it < 3 * m + 10; ++it) {
    Eigen::Index j = -1;
    double best = thresh;
    for (Eigen::Index i = 0; i < m; ++i)
      if (!passive[static_cast<std::size_t>(i)] && neg_grad(i) > best) {
        best = neg_grad(i);
        j = i;
      }
    if (j < 0) break;
    passive[static_cast<std::size_t>(j)] = 1;
    for (int inner = 0; inner < m + 1; ++inner) {
      std::vector<Eigen::Index> Pidx;
      for (Eigen::Index i = 0; i < m; ++i)
        if (passive[static_cast<std::size_t>(i)]) Pidx.push_back(i);
      const Eigen::Index np = static_cast<Eigen::Index>(Pidx.size());
      MatrixXd GP(np, np);
      for (Eigen::Index a = 0; a < np; ++a)
        for (Eigen::Index b = 0; b < np; ++b) GP(a, b) = G(Pidx[static_cast<std::size_t>(a)], Pidx[static_cast<std::size_t>(b)]);
      VectorXd zP = GP.ldlt().solve(VectorXd::Ones(np));
      VectorXd z = VectorXd::Zero(m);
      for (Eigen::Index a = 0; a < np; ++a) z(Pidx[static_cast<std::size_t>(a)]) = zP(a);
      bool positive = true;
      for (auto i : Pidx) positive = positive && z(i) > 0;
      if (positive) {
        mu = z;
        break;
      }
      double alpha = 1.0;
      for (auto i : Pidx)
        if (z(i) <= 0) alpha = std::min(alpha, mu(i) / (mu(i) - z(i)));
      mu += alpha * (z - mu);
      for (auto i : Pidx)
        if (mu(i) <= 1e-300) {
          mu(i) = 0.0;
          passive[static_cast<std::size_t>(i)] = 0;
        }
    }
    neg_grad = VectorXd::Ones(m) - G * mu;
  }
  CapacitySolution out;
  auto st = P.eval(mu);
  P.certify(mu, st, out);
  out.iterations = it;
  out.converged = out.relative_gap <= std::max(opt.tol, 1e-10);
  out.value = out.primal_value;
  return out;
}

double singleton_capacity(const KernelOperator& op, double p, Leaf x0) {
  check_p(p);
  const auto& sp = op.space();
  const double pp = conjugate(p);
  double acc = 0.0;
  for (Leaf y = 0; y < sp.size(); ++y) acc += sp.weights()[y] * std::pow(op.value(x0, y), pp);
  return std::pow(acc, 1.0 - p);
}

std::vector<Leaf> leaves_of(LeafRange r) {
  std::vector<Leaf> v(r.size());
  std::iota(v.begin(), v.end(), r.lo);
  return v;
}

CapacityEvaluator::CapacityEvaluator(const KernelOperator& op, double p, CapacityOptions opt)
    : op_(&op), p_(p), opt_(opt) {
  check_p(p);
}

double CapacityEvaluator::of(LeafRange r) {
  if (r.empty()) return 0.0;
  auto key = std::make_pair(r.lo, r.hi);
  auto it = range_cache_.find(key);
  if (it != range_cache_.end()) return it->second;
  ++solves_;
  double v = capacity_primal(*op_, p_, leaves_of(r), opt_).value;
  range_cache_.emplace(key, v);
  return v;
}

double CapacityEvaluator::of(const std::vector<Leaf>& E) {
  if (E.empty()) return 0.0;
  if (E.back() - E.front() + 1 == E.size()) return of(LeafRange{E.front(), E.back() + 1});
  ++solves_;
  return capacity_primal(*op_, p_, E, opt_).value;
}

double CapacityEvaluator::of_mask(const std::vector<char>& mask) {
  std::vector<Leaf> E;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) E.push_back(i);
  return of(E);
}

RadiusEta eta_tree(CapacityEvaluator& ev, Leaf x, double r) {
  const ModelSpace& sp = ev.space();
  if (!sp.ultrametric()) throw std::invalid_argument("eta_tree needs a tree-boundary space");
  RadiusEta e;
  e.center = x;
  e.r = r;
  e.ball_capacity = ev.of(sp.ball(x, r));
  for (int n = sp.depth(); n >= 0; --n) {
    double half = std::pow(sp.delta(), n - 0.5);
    if (sp.mass(sp.ball(x, half)) >= e.ball_capacity) {
      e.eta = half;
      break;
    }
  }
  e.eta_star = e.eta ? std::max(r, *e.eta) : sp.diam();
  return e;
}

RadiusEta eta_X(CapacityEvaluator& ev, Leaf x, double r) {
  const ModelSpace& sp = ev.space();
  RadiusEta e;
  e.center = x;
  e.r = r;
  e.ball_capacity = ev.of(sp.ball(x, r));
  for (const auto& [d, m] : sp.distance_profile(x))
    if (m >= e.ball_capacity) {
      e.eta = d;
      break;
    }
  e.eta_star = e.eta ? std::max(r, *e.eta) : sp.diam();
  return e;
}

LeafRange enlarged_ball(const ModelSpace& space, const RadiusEta& e, double factor) {
  if (e.sentinel()) return {0, space.size()};
  return space.ball(e.center, factor * e.eta_star);
}

BallProfile ball_capacity_profile(CapacityEvaluator& ev, Leaf x, int n_lo, int n_hi) {
  const ModelSpace& sp = ev.space();
  if (n_lo > n_hi) throw std::invalid_argument("ball profile: empty level range");
  BallProfile bp;
  for (int n = n_lo; n <= n_hi; ++n) {
    double r = sp.ultrametric() && n <= sp.depth() ? sp.tree().delta_pow(n) : std::pow(sp.delta(), n);
    bp.levels.push_back(n);
    bp.radii.push_back(r);
    bp.capacities.push_back(ev.of(sp.ball(x, r)));
  }
  const std::size_t k = bp.levels.size();
  if (k >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < k; ++i) {
      double lx = std::log(bp.radii[i]), ly = std::log(bp.capacities[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    bp.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  }
  bp.log_product_min = std::numeric_limits<double>::infinity();
  bp.log_product_max = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double v = bp.capacities[i] * std::log(1.0 / bp.radii[i]);
    bp.log_product_min = std::min(bp.log_product_min, v);
    bp.log_product_max = std::max(bp.log_product_max, v);
  }
  return bp;
}

}  // namespace potlab
