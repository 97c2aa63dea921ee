#include <cmath>
#include <random>

#include "doctest.h"
#include "potlab/poisson.hpp"

using namespace potlab;

namespace {
ModelSpace make(int kind, int N) {
  if (kind == 0) return ModelSpace::tree_boundary(build_tree(2, N, 0.5));
  if (kind == 1) return ModelSpace::unit_interval(2, N);
  return ModelSpace::cantor_set(N);
}

std::vector<double> signed_random(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> f(n);
  for (auto& v : f) v = U(rng);
  return f;
}
}  // namespace

TEST_CASE("height grid is dyadic and stops at the resolution") {
  auto sp = ModelSpace::unit_interval(2, 6);
  auto h = height_grid(sp);
  REQUIRE(h.size() == 7);
  for (std::size_t m = 0; m < h.size(); ++m) CHECK(h[m] == doctest::Approx(std::ldexp(1.0, -static_cast<int>(m))));
  CHECK(h.back() >= sp.resolution() * (1 - 1e-12));
}

TEST_CASE("constants are reproduced exactly") {
  for (int kind = 0; kind < 3; ++kind) {
    auto sp = make(kind, 6);
    PoissonOperator P(sp);
    auto G = P.field(std::vector<double>(sp.size(), 1.0));
    for (double v : G.values) CHECK(std::abs(v - 1.0) < 1e-12);
  }
}

TEST_CASE("stencil evaluation agrees with direct summation") {
  std::mt19937_64 rng(3);
  for (int kind = 0; kind < 3; ++kind) {
    auto sp = make(kind, 5);
    PoissonOperator P(sp);
    auto f = signed_random(sp.size(), rng);
    auto G = P.field(f);
    for (std::size_t iy = 0; iy < P.rows(); ++iy)
      for (Leaf x = 0; x < sp.size(); ++x) {
        const double naive = P.integral_naive(f, x, P.heights()[iy]);
        CHECK(G.at(x, iy) == doctest::Approx(naive).epsilon(1e-10));
        CHECK(P.integral(f, x, iy) == doctest::Approx(naive).epsilon(1e-10));
      }
  }
}

TEST_CASE("density rows are probability vectors") {
  auto sp = ModelSpace::cantor_set(5);
  PoissonOperator P(sp);
  const auto& w = sp.weights();
  for (std::size_t iy = 0; iy < P.rows(); ++iy) {
    auto D = P.density_matrix(iy);
    for (Leaf x = 0; x < sp.size(); ++x) {
      double s = 0.0;
      for (Leaf z = 0; z < sp.size(); ++z) {
        CHECK(D[x * sp.size() + z] > 0.0);
        s += D[x * sp.size() + z] * w[z];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("linear, positive and bounded by the maximal function") {
  std::mt19937_64 rng(11);
  auto sp = ModelSpace::unit_interval(2, 6);
  PoissonOperator P(sp);
  auto f = signed_random(sp.size(), rng), g = signed_random(sp.size(), rng);
  std::vector<double> h(sp.size()), a(sp.size());
  for (Leaf x = 0; x < sp.size(); ++x) {
    h[x] = 2.0 * f[x] - 3.0 * g[x];
    a[x] = std::abs(f[x]);
  }
  auto Gf = P.field(f), Gg = P.field(g), Gh = P.field(h), Ga = P.field(a);
  auto Mf = P.maximal_function(a);
  for (std::size_t i = 0; i < Gh.values.size(); ++i) {
    CHECK(Gh.values[i] == doctest::Approx(2.0 * Gf.values[i] - 3.0 * Gg.values[i]).epsilon(1e-12));
    CHECK(Ga.values[i] >= 0.0);
    CHECK(Ga.values[i] >= std::abs(Gf.values[i]) - 1e-12);
    CHECK(Ga.values[i] <= Mf[i % sp.size()] + 1e-12);
  }
}

TEST_CASE("exceedance shadow matches a brute-force scan") {
  std::mt19937_64 rng(5);
  for (int kind = 0; kind < 3; ++kind) {
    auto sp = make(kind, 6);
    PoissonOperator P(sp);
    KernelOperator K(sp, RadialKernel::riesz(sp.Q(), 0.75));
    for (unsigned s = 0; s < 5; ++s) {
      auto G = potential_field(P, K, random_cube_function(sp, 3, s));
      const double eps = 0.5 * (G.max() + G.min());
      auto ex = exceedance_sets(sp, G, eps);
      CHECK(ex.E_star == exceedance_star_naive(sp, G, eps));
      for (std::size_t i = 0; i < ex.E.mask.size(); ++i)
        if (ex.E.mask[i]) CHECK(ex.E_prime.mask[i]);
    }
  }
}

TEST_CASE("random cube functions are consistent across depths") {
  auto a = ModelSpace::cantor_set(6), b = ModelSpace::cantor_set(8);
  auto fa = random_cube_function(a, 4, 9), fb = random_cube_function(b, 4, 9);
  for (std::size_t c = 0; c < 16; ++c) CHECK(fa[c * 4] == fb[c * 16]);
  for (double v : fa) CHECK((v >= 0.0 && v < 1.0));
  CHECK_THROWS_AS(random_cube_function(a, 7, 1), std::invalid_argument);
}

TEST_CASE("trees: exchange is exact and Harnack constant is one") {
  auto sp = make(0, 5);
  PoissonOperator P(sp);
  KernelOperator K(sp, RadialKernel::riesz(1.0, 0.75));
  Band b = calibrate_exchange(P, K);
  CHECK(b.lo == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.hi == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(calibrate_harnack(P) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalization calibration dominates the grid ratio") {
  for (int kind = 0; kind < 3; ++kind) {
    auto sp = make(kind, 6);
    PoissonOperator P(sp);
    const double R = calibrate_normalization(P);
    CHECK(R >= normalization_ratio(P) * (1 - 1e-12));
    CHECK(R < 10.0);
  }
}

TEST_CASE("exchange ratios of random inputs sit inside the calibrated band") {
  auto sp = make(2, 6);
  PoissonOperator P(sp);
  KernelOperator K(sp, RadialKernel::riesz(sp.Q(), 0.75));
  Band cal = calibrate_exchange(P, K);
  CHECK(cal.lo < 1.0);
  CHECK(cal.hi > 1.0);
  for (unsigned s = 0; s < 5; ++s) {
    Band r = exchange_ratio(P, K, random_cube_function(sp, 4, s));
    CHECK(r.lo >= cal.lo * (1 - 1e-12));
    CHECK(r.hi <= cal.hi * (1 + 1e-12));
  }
}

TEST_CASE("Harnack lower bound with the calibrated constant") {
  auto sp = make(2, 6);
  PoissonOperator P(sp);
  KernelOperator K(sp, RadialKernel::riesz(sp.Q(), 0.75));
  const double cH = calibrate_harnack(P);
  CHECK(cH > 0.0);
  CHECK(cH < 1.0);
  for (unsigned s = 0; s < 5; ++s) {
    auto G = potential_field(P, K, random_cube_function(sp, 4, s));
    auto h = harnack_check(sp, G, 0.5 * (G.max() + G.min()), cH);
    CHECK(h.points > 0);
    CHECK(h.pass);
  }
  // vacuous when nothing exceeds eps
  auto G = potential_field(P, K, std::vector<double>(sp.size(), 0.0));
  auto h = harnack_check(sp, G, 1.0, cH);
  CHECK(h.points == 0);
  CHECK(h.pass);
}

TEST_CASE("uniform continuity of Lipschitz profiles") {
  auto sp = ModelSpace::unit_interval(2, 8);
  PoissonOperator P(sp);
  auto g = profile_values(sp, Profile::coordinate);
  auto rows = uniform_continuity_probe(P, g, {0.5, 0.1, 0.05});
  REQUIRE(rows.size() == 3);
  double last = 2.0;
  for (const auto& r : rows) {
    REQUIRE(r.delta.has_value());
    CHECK(r.sup_error <= r.eps);
    CHECK(*r.delta <= last);
    last = *r.delta;
  }
  // a jump has no modulus below half its size
  std::vector<double> step(sp.size(), 0.0);
  for (Leaf x = sp.size() / 2; x < sp.size(); ++x) step[x] = 1.0;
  auto srows = uniform_continuity_probe(P, step, {0.1});
  CHECK_FALSE(srows[0].delta.has_value());
}

TEST_CASE("profiles") {
  auto sp = ModelSpace::unit_interval(2, 4);
  auto hat = profile_values(sp, Profile::hat, 2.0);
  CHECK(hat[0] == doctest::Approx(0.0));
  CHECK(hat[8] == doctest::Approx(2.0));
  auto bump = profile_values(sp, Profile::bump);
  CHECK(bump[8] == doctest::Approx(1.0));
  auto tr = ModelSpace::tree_boundary(build_tree(2, 4, 0.5));
  CHECK(profile_values(tr, Profile::coordinate)[4] == doctest::Approx(0.25));
}
