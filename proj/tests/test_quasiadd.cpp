#include <cmath>
#include <numeric>

#include "doctest.h"
#include "potlab/quasiadd.hpp"

using namespace potlab;

TEST_CASE("quasi-additivity constant") {
  // p = p' = 2: (3 * 1 + 2)^1
  CHECK(theoretical_constant_A(1.0, 2.0) == doctest::Approx(5.0));
  CHECK(theoretical_constant_A(2.0, 2.0) == doctest::Approx(14.0));
  // p = 3, p' = 3/2: [(sqrt2 + 1) + sqrt2]^2
  CHECK(theoretical_constant_A(1.0, 3.0) == doctest::Approx(std::pow(2.0 * std::sqrt(2.0) + 1.0, 2.0)));
  auto sp = ModelSpace::tree_boundary(build_tree(2, 8, 0.5));
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  CHECK(theoretical_constant_A(op, 2.0) == doctest::Approx(3.0 * std::pow(op.norm_1(), 2.0) + 2.0));
}

TEST_CASE("generated tree families are separated and quasi-additive") {
  auto sp = ModelSpace::tree_boundary(build_tree(2, 7, 0.5));
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  CapacityEvaluator ev(op, 2.0);
  const double A = theoretical_constant_A(op, 2.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto fam = generate_separated_family(ev, 5, seed);
    REQUIRE(fam.size() >= 1);
    CHECK(verify_separation(fam).pass);
    for (std::size_t j = 0; j < fam.size(); ++j) CHECK(fam.balls[j].within(fam.enlarged_balls[j]));
    for (auto shape : {SetShape::full_ball, SetShape::singleton, SetShape::half_density}) {
      auto sets = family_sets(fam, shape, seed);
      auto rep = quasi_additivity_tree(ev, fam, sets);
      CHECK(rep.pass);
      CHECK(rep.ratio >= 1.0 - 1e-9);
      CHECK(rep.ratio <= A * (1 + 1e-6));
      CHECK(rep.bound == doctest::Approx(A));
    }
  }
}

TEST_CASE("families are reproducible from the seed") {
  auto sp = ModelSpace::tree_boundary(build_tree(2, 7, 0.5));
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  CapacityEvaluator ev(op, 2.0);
  auto a = generate_separated_family(ev, 4, 42), b = generate_separated_family(ev, 4, 42);
  CHECK(a.centers == b.centers);
  CHECK(a.radii == b.radii);
  CHECK(family_sets(a, SetShape::half_density, 1) == family_sets(b, SetShape::half_density, 1));
}

TEST_CASE("a single ball is trivially additive") {
  auto sp = ModelSpace::tree_boundary(build_tree(2, 6, 0.5));
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  CapacityEvaluator ev(op, 2.0);
  auto fam = generate_separated_family(ev, 1, 3);
  REQUIRE(fam.size() == 1);
  auto rep = quasi_additivity_tree(ev, fam, family_sets(fam, SetShape::full_ball, 0));
  CHECK(rep.ratio == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("overlapping members are rejected") {
  auto sp = ModelSpace::tree_boundary(build_tree(2, 6, 0.5));
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  CapacityEvaluator ev(op, 2.0);
  auto fam = generate_separated_family(ev, 1, 3);
  REQUIRE(fam.size() == 1);
  // duplicate the only member
  fam.centers.push_back(fam.centers[0]);
  fam.radii.push_back(fam.radii[0]);
  fam.eta_star.push_back(fam.eta_star[0]);
  fam.enlarged.push_back(fam.enlarged[0]);
  fam.balls.push_back(fam.balls[0]);
  fam.enlarged_balls.push_back(fam.enlarged_balls[0]);
  auto cert = verify_separation(fam);
  CHECK_FALSE(cert.pass);
  REQUIRE(cert.violations.size() == 1);
  CHECK(cert.violations[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK_THROWS_AS(quasi_additivity_tree(ev, fam, family_sets(fam, SetShape::full_ball, 0)), std::invalid_argument);
}

TEST_CASE("asking for too many members yields a short family with a warning") {
  auto sp = ModelSpace::tree_boundary(build_tree(2, 4, 0.5));
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  CapacityEvaluator ev(op, 2.0);
  auto fam = generate_separated_family(ev, 50, 1);
  CHECK(fam.short_family);
  CHECK(fam.size() < 50);
  CHECK_FALSE(fam.warning.empty());
  CHECK(verify_separation(fam).pass);
}

TEST_CASE("invalid family requests") {
  auto sp = ModelSpace::unit_interval(2, 6);
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  CapacityEvaluator ev(op, 2.0);
  CHECK_THROWS_AS(generate_separated_family(ev, 0, 1, {FamilyMode::ahlfors}), std::invalid_argument);
  CHECK_THROWS_AS(generate_separated_family(ev, 3, 1, {FamilyMode::tree}), std::invalid_argument);
  FamilyOptions bad{FamilyMode::ahlfors};
  bad.psi = 0.5;
  CHECK_THROWS_AS(generate_separated_family(ev, 3, 1, bad), std::invalid_argument);
}

TEST_CASE("ahlfors families: refiltering keeps separation and shrinks the family") {
  auto sp = ModelSpace::cantor_set(6);
  KernelOperator op(sp, RadialKernel::riesz(sp.Q(), 0.8));
  CapacityEvaluator ev(op, 2.0);
  FamilyOptions opt{FamilyMode::ahlfors};
  auto fam = generate_separated_family(ev, 6, 2, opt);
  CHECK(verify_separation(fam).pass);
  auto wide = refilter_family(ev, fam, 3.0);
  CHECK(wide.size() <= fam.size());
  CHECK(verify_separation(wide).pass);
  for (std::size_t j = 0; j < wide.size(); ++j) CHECK(wide.enlarged[j] == doctest::Approx(3.0 * wide.eta_star[j]));
  auto rep = quasi_additivity_ahlfors(ev, wide, family_sets(wide, SetShape::full_ball, 0));
  CHECK(rep.lower_ok);
  CHECK(rep.bound == 3.0);
}

TEST_CASE("psi estimate on the Cantor set") {
  auto sp = ModelSpace::cantor_set(6);
  KernelOperator op(sp, RadialKernel::riesz(sp.Q(), 0.8));
  CapacityEvaluator ev(op, 2.0);
  std::vector<std::uint64_t> seeds(20);
  std::iota(seeds.begin(), seeds.end(), 0);
  auto est = estimate_psi(ev, 1.0, seeds);
  CHECK(est.psi >= 1.0);
  CHECK(est.psi <= 8.0);
  CHECK(est.max_ratio.size() <= est.grid.size());
  CHECK(est.families.size() == est.max_ratio.size());
  if (est.stabilized) CHECK(est.warning.empty());
  for (double r : est.max_ratio) CHECK(r >= 1.0 - 1e-9);
  CHECK_THROWS_AS(estimate_psi(ev, 1.0, {1, 2, 3}), std::invalid_argument);
}
