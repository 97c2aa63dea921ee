#include <cmath>
#include <random>

#include "doctest.h"
#include "potlab/capacity.hpp"

using namespace potlab;

namespace {
struct Fixture {
  ModelSpace sp = ModelSpace::tree_boundary(build_tree(2, 4, 0.5));
  KernelOperator op{sp, RadialKernel::riesz(1.0, 0.75)};
};

// reference values from an independent conic solver (dense 16x16 kernel)
struct Ref {
  double p;
  std::vector<Leaf> E;
  double value;
};
const std::vector<Ref> kRefs = {
    {1.5, {0}, 0.03155332824610838},
    {1.5, {0, 1}, 0.04867400101818474},
    {1.5, {0, 5, 9}, 0.08138524677934},
    {1.5, {3, 4, 5, 6, 7, 8}, 0.11200495690389524},
    {1.5, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}, 0.17950020160760166},
    {2.0, {0}, 0.023188282565433656},
    {2.0, {0, 1}, 0.03317785240036279},
    {2.0, {0, 5, 9}, 0.054105748428645274},
    {2.0, {3, 4, 5, 6, 7, 8}, 0.06899252787412491},
    {2.0, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}, 0.10125580271647376},
    {3.0, {0}, 0.009674383199414851},
    {3.0, {0, 1}, 0.012725752032387152},
    {3.0, {0, 5, 9}, 0.019591751211361818},
    {3.0, {3, 4, 5, 6, 7, 8}, 0.023526759784688968},
    {3.0, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}, 0.03222032237768671},
};

std::vector<Leaf> random_set(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<Leaf> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}
}  // namespace

TEST_CASE("four-leaf singleton matches the closed form") {
  auto sp = ModelSpace::tree_boundary(build_tree(2, 2, 0.5));
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  const double ref = 0.047712060688628044;
  CHECK(singleton_capacity(op, 2.0, 0) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(capacity_primal(op, 2.0, {0}).value == doctest::Approx(ref).epsilon(1e-8));
  CHECK(capacity_dual(op, 2.0, {0}).value == doctest::Approx(ref).epsilon(1e-6));
  CHECK(capacity_exact_quadratic(op, {0}).value == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("primal solver reproduces reference capacities") {
  Fixture fx;
  for (const auto& r : kRefs) {
    CAPTURE(r.p);
    CAPTURE(r.E.size());
    auto sol = capacity_primal(fx.op, r.p, r.E);
    CHECK(sol.converged);
    CHECK(sol.value == doctest::Approx(r.value).epsilon(1e-6));
  }
}

TEST_CASE("dual solver reproduces reference capacities") {
  Fixture fx;
  for (const auto& r : kRefs) {
    CAPTURE(r.p);
    CAPTURE(r.E.size());
    auto sol = capacity_dual(fx.op, r.p, r.E);
    CHECK(sol.value == doctest::Approx(r.value).epsilon(1e-5));
  }
}

TEST_CASE("exact quadratic solve agrees with the p = 2 references") {
  Fixture fx;
  for (const auto& r : kRefs) {
    if (r.p != 2.0) continue;
    CHECK(capacity_exact_quadratic(fx.op, r.E).value == doctest::Approx(r.value).epsilon(1e-9));
  }
  // the whole space at p = 2 is 1 / ||K||_1^2 (K*1 is constant on the tree)
  std::vector<Leaf> all = leaves_of({0, fx.sp.size()});
  double n1 = kernel_norm_1(fx.op);
  CHECK(capacity_primal(fx.op, 2.0, all).value == doctest::Approx(1.0 / (n1 * n1)).epsilon(1e-8));
}

TEST_CASE("primal density is feasible and equilibrium potential is normalized") {
  auto sp = ModelSpace::tree_boundary(build_tree(2, 6, 0.5));
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.7));
  std::mt19937_64 rng(17);
  for (double p : {1.6, 2.0, 3.5}) {
    auto E = random_set(sp.size(), 9, rng);
    auto sol = capacity_primal(op, p, E);
    auto Kf = op.apply(sol.f);
    for (Leaf x : E) CHECK(Kf[x] >= 1.0 - 1e-7);
    CHECK(std::pow(lp_norm(sp, sol.f, p), p) == doctest::Approx(sol.value).epsilon(1e-7));
    // ||K*mu||_{p'} = 1 and mu(E) = C(E)^{1/p}
    double pp = conjugate(p);
    auto Kmu = op.apply_measure(sol.mu);
    CHECK(lp_norm(sp, Kmu, pp) == doctest::Approx(1.0).epsilon(1e-7));
    double tot = 0;
    for (std::size_t i = 0; i < sol.mu.size(); ++i) {
      CHECK(sol.mu[i] >= 0.0);
      if (!std::binary_search(E.begin(), E.end(), i)) CHECK(sol.mu[i] == 0.0);
      tot += sol.mu[i];
    }
    CHECK(tot == doctest::Approx(std::pow(sol.value, 1.0 / p)).epsilon(1e-6));
    CHECK(sol.relative_gap < 1e-7);
  }
}

TEST_CASE("primal and dual agree on random sets of the interval and cantor set") {
  std::mt19937_64 rng(23);
  for (auto sp : {ModelSpace::unit_interval(2, 6), ModelSpace::cantor_set(6)}) {
    KernelOperator op(sp, RadialKernel::riesz(sp.Q(), 0.8));
    for (int t = 0; t < 3; ++t) {
      auto E = random_set(sp.size(), 5 + 3 * t, rng);
      double a = capacity_primal(op, 2.0, E).value;
      double b = capacity_dual(op, 2.0, E).value;
      double c = capacity_exact_quadratic(op, E).value;
      CHECK(a == doctest::Approx(c).epsilon(1e-7));
      CHECK(b == doctest::Approx(c).epsilon(1e-5));
    }
  }
}

TEST_CASE("capacity is monotone, subadditive and scales with the kernel") {
  auto sp = ModelSpace::tree_boundary(build_tree(3, 4, 1.0 / 3.0));
  KernelOperator op(sp, RadialKernel::riesz(sp.Q(), 0.75));
  CapacityEvaluator ev(op, 2.5);
  std::mt19937_64 rng(31);
  for (int t = 0; t < 6; ++t) {
    auto A = random_set(sp.size(), 6, rng);
    auto B = random_set(sp.size(), 7, rng);
    std::vector<Leaf> U;
    std::set_union(A.begin(), A.end(), B.begin(), B.end(), std::back_inserter(U));
    double cA = ev.of(A), cB = ev.of(B), cU = ev.of(U);
    CHECK(cU >= std::max(cA, cB) * (1 - 1e-7));
    CHECK(cU <= (cA + cB) * (1 + 1e-7));
  }
  // C_{cK}(E) = c^{-p} C_K(E)
  KernelOperator op2(sp, RadialKernel::riesz(sp.Q(), 0.75).scaled(2.0));
  std::vector<Leaf> E{0, 10, 40, 41};
  CHECK(capacity_primal(op2, 2.5, E).value ==
        doctest::Approx(std::pow(2.0, -2.5) * capacity_primal(op, 2.5, E).value).epsilon(1e-7));
  CHECK(ev.of(std::vector<Leaf>{}) == 0.0);
}

TEST_CASE("evaluator caches ranges") {
  Fixture fx;
  CapacityEvaluator ev(fx.op, 2.0);
  double a = ev.of(LeafRange{0, 4});
  double b = ev.of(std::vector<Leaf>{0, 1, 2, 3});
  CHECK(a == b);
  CHECK(ev.solves() == 1);
  std::vector<char> mask(16, 0);
  mask[0] = mask[5] = mask[9] = 1;
  CHECK(ev.of_mask(mask) == doctest::Approx(0.054105748428645274).epsilon(1e-6));
}

TEST_CASE("ball capacity profile and eta on a binary tree") {
  auto sp = ModelSpace::tree_boundary(build_tree(2, 8, 0.5));
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  CapacityEvaluator ev(op, 2.0);
  auto bp = ball_capacity_profile(ev, 0, 1, 6);
  for (std::size_t i = 1; i < bp.capacities.size(); ++i) CHECK(bp.capacities[i] < bp.capacities[i - 1]);
  // slope of log C(B(x,r)) against log r approaches Q(1 - sp) = 0.5
  CHECK(bp.slope == doctest::Approx(0.5).epsilon(0.1));

  for (double r : {0.5, 0.125, 1.0 / 64}) {
    auto e = eta_tree(ev, 5, r);
    REQUIRE_FALSE(e.sentinel());
    CHECK(sp.mass(sp.ball(5, *e.eta)) >= e.ball_capacity);
    // the next half step down is too small
    double smaller = *e.eta * 0.5;
    if (smaller > sp.resolution() * 0.5) CHECK(sp.mass(sp.ball(5, smaller)) < e.ball_capacity);
    CHECK(e.eta_star >= r);
    auto ex = eta_X(ev, 5, r);
    CHECK(ex.ball_capacity == e.ball_capacity);
    CHECK(sp.mass(sp.closed_ball(5, *ex.eta)) >= ex.ball_capacity);
    CHECK(enlarged_ball(sp, e).contains(5));
  }
}

TEST_CASE("eta sentinel covers the whole space") {
  // a tiny space where capacity exceeds every ball mass
  auto sp = ModelSpace::tree_boundary(build_tree(2, 2, 0.5));
  KernelOperator op(sp, RadialKernel::general({0.1, 0.1, 0.1}));
  CapacityEvaluator ev(op, 2.0);
  auto e = eta_X(ev, 0, 2.0);
  CHECK(e.sentinel());
  CHECK(e.eta_star == sp.diam());
  CHECK(enlarged_ball(sp, e) == LeafRange{0, 4});
}

TEST_CASE("invalid inputs") {
  Fixture fx;
  CHECK_THROWS(capacity_primal(fx.op, 1.0, {0}));
  CHECK_THROWS(capacity_primal(fx.op, 2.0, {3, 1}));
  CHECK_THROWS(capacity_primal(fx.op, 2.0, {16}));
}
