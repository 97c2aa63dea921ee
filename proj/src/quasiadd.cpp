#include "potlab/quasiadd.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace potlab {

double theoretical_constant_A(double norm_1, double p) {
  const double q = conjugate(p);
  const double t = std::pow(2.0, q - 1.0);
  return std::pow((t + 1.0) * std::pow(norm_1, q) + t, 1.0 / (q - 1.0));
}

double theoretical_constant_A(const KernelOperator& op, double p) { return theoretical_constant_A(op.norm_1(), p); }

std::string to_string(FamilyMode m) { return m == FamilyMode::tree ? "tree" : "ahlfors"; }

std::string to_string(SetShape s) {
  switch (s) {
    case SetShape::full_ball: return "full_ball";
    case SetShape::singleton: return "singleton";
    case SetShape::half_density: return "half_density";
  }
  return "?";
}

namespace {

bool misses_all(const LeafRange& B, const std::vector<LeafRange>& kept) {
  for (const auto& k : kept)
    if (k.intersects(B)) return false;
  return true;
}

}  // namespace

SeparatedFamily generate_separated_family(CapacityEvaluator& ev, std::size_t count, std::uint64_t seed,
                                          const FamilyOptions& opt) {
  const ModelSpace& sp = ev.space();
  if (count == 0) throw std::invalid_argument("family count must be >= 1");
  if (opt.mode == FamilyMode::tree && !sp.ultrametric()) throw std::invalid_argument("tree mode needs a tree-boundary space");
  if (opt.M < 1.0 || opt.psi < 1.0) throw std::invalid_argument("M and psi must be >= 1");
  const int hi = opt.level_hi < 0 ? sp.depth() - 1 : opt.level_hi;
  if (opt.level_lo > hi || opt.level_lo < 0) throw std::invalid_argument("empty candidate level range");

  SeparatedFamily fam;
  fam.mode = opt.mode;
  fam.M = opt.M;
  fam.psi = opt.mode == FamilyMode::tree ? 1.0 : opt.psi;
  fam.requested = count;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_x(0, sp.size() - 1);
  std::uniform_int_distribution<int> pick_n(opt.level_lo, hi);
  const std::size_t budget = opt.max_candidates ? opt.max_candidates : 64 * count;

  for (std::size_t c = 0; c < budget && fam.size() < count; ++c) {
    const Leaf x = pick_x(rng);
    const int n = pick_n(rng);
    const double r = std::pow(sp.delta(), n);
    RadiusEta e = opt.mode == FamilyMode::tree ? eta_tree(ev, x, r) : eta_X(ev, x, opt.M * r);
    if (e.sentinel()) {
      ++fam.sentinels;
      continue;
    }
    const double big = fam.psi * e.eta_star;
    LeafRange EB = sp.ball(x, big);
    if (!misses_all(EB, fam.enlarged_balls)) continue;
    fam.centers.push_back(x);
    fam.radii.push_back(r);
    fam.eta_star.push_back(e.eta_star);
    fam.enlarged.push_back(big);
    fam.balls.push_back(sp.ball(x, r));
    fam.enlarged_balls.push_back(EB);
  }
  if (fam.size() < count) {
    fam.short_family = true;
    fam.warning = "family has " + std::to_string(fam.size()) + " of " + std::to_string(count) +
                  " requested members (space exhausted)";
  }
  return fam;
}

SeparatedFamily refilter_family(CapacityEvaluator& ev, const SeparatedFamily& fam, double psi) {
  if (psi < 1.0) throw std::invalid_argument("psi must be >= 1");
  const ModelSpace& sp = ev.space();
  SeparatedFamily out;
  out.mode = fam.mode;
  out.M = fam.M;
  out.psi = psi;
  out.requested = fam.requested;
  out.sentinels = fam.sentinels;
  for (std::size_t j = 0; j < fam.size(); ++j) {
    const double big = psi * fam.eta_star[j];
    LeafRange EB = sp.ball(fam.centers[j], big);
    if (!misses_all(EB, out.enlarged_balls)) continue;
    out.centers.push_back(fam.centers[j]);
    out.radii.push_back(fam.radii[j]);
    out.eta_star.push_back(fam.eta_star[j]);
    out.enlarged.push_back(big);
    out.balls.push_back(fam.balls[j]);
    out.enlarged_balls.push_back(EB);
  }
  out.short_family = out.size() < out.requested;
  return out;
}

SeparationCertificate verify_separation(const SeparatedFamily& fam) {
  SeparationCertificate cert;
  for (std::size_t i = 0; i < fam.size(); ++i)
    for (std::size_t j = i + 1; j < fam.size(); ++j)
      if (fam.enlarged_balls[i].intersects(fam.enlarged_balls[j])) {
        cert.pass = false;
        cert.violations.emplace_back(i, j);
      }
  return cert;
}

std::vector<std::vector<Leaf>> family_sets(const SeparatedFamily& fam, SetShape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<Leaf>> sets;
  for (std::size_t j = 0; j < fam.size(); ++j) {
    const LeafRange B = fam.balls[j];
    std::vector<Leaf> E;
    switch (shape) {
      case SetShape::full_ball: E = leaves_of(B); break;
      case SetShape::singleton: E = {fam.centers[j]}; break;
      case SetShape::half_density: {
        std::bernoulli_distribution coin(0.5);
        for (Leaf x = B.lo; x < B.hi; ++x)
          if (coin(rng)) E.push_back(x);
        if (E.empty()) E.push_back(fam.centers[j]);
        break;
      }
    }
    sets.push_back(std::move(E));
  }
  return sets;
}

namespace {

QuasiReport measure(CapacityEvaluator& ev, const SeparatedFamily& fam, const std::vector<std::vector<Leaf>>& sets) {
  if (!verify_separation(fam).pass) throw std::invalid_argument("family is not separated");
  if (sets.size() != fam.size()) throw std::invalid_argument("one set per family member expected");
  QuasiReport rep;
  rep.mode = fam.mode;
  rep.J = fam.size();
  std::vector<Leaf> all;
  for (std::size_t j = 0; j < sets.size(); ++j) {
    for (Leaf x : sets[j])
      if (!fam.balls[j].contains(x)) throw std::invalid_argument("set leaves its ball");
    rep.sum_cap += ev.of(sets[j]);
    all.insert(all.end(), sets[j].begin(), sets[j].end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  rep.union_cap = ev.of(all);
  rep.ratio = rep.union_cap > 0 ? rep.sum_cap / rep.union_cap : 1.0;
  rep.lower_ok = rep.ratio >= 1.0 - 1e-9;
  return rep;
}

}  // namespace

QuasiReport quasi_additivity_tree(CapacityEvaluator& ev, const SeparatedFamily& fam,
                                  const std::vector<std::vector<Leaf>>& sets) {
  if (fam.mode != FamilyMode::tree) throw std::invalid_argument("tree report needs a tree-mode family");
  QuasiReport rep = measure(ev, fam, sets);
  rep.bound = theoretical_constant_A(ev.op(), ev.p());
  rep.upper_ok = rep.ratio <= rep.bound * (1.0 + 1e-6);
  rep.pass = rep.lower_ok && rep.upper_ok;
  return rep;
}

QuasiReport quasi_additivity_ahlfors(CapacityEvaluator& ev, const SeparatedFamily& fam,
                                     const std::vector<std::vector<Leaf>>& sets) {
  QuasiReport rep = measure(ev, fam, sets);
  rep.bound = fam.psi;
  rep.pass = rep.lower_ok;
  return rep;
}

PsiEstimate estimate_psi(CapacityEvaluator& ev, double M, const std::vector<std::uint64_t>& seeds, std::size_t count,
                         SetShape shape) {
  if (seeds.size() < 10) throw std::invalid_argument("estimate_psi needs at least 10 seeds");
  PsiEstimate est;
  est.grid = {1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0};
  std::vector<SeparatedFamily> fams;
  FamilyOptions opt;
  opt.mode = ev.space().ultrametric() ? FamilyMode::tree : FamilyMode::ahlfors;
  opt.M = M;
  opt.psi = est.grid[0];
  for (auto s : seeds) fams.push_back(generate_separated_family(ev, count, s, opt));
  for (std::size_t g = 0; g < est.grid.size(); ++g) {
    double mx = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < fams.size(); ++i) {
      if (g > 0 && opt.mode == FamilyMode::ahlfors) fams[i] = refilter_family(ev, fams[i], est.grid[g]);
      if (fams[i].size() == 0) continue;
      auto sets = family_sets(fams[i], shape, seeds[i]);
      auto rep = quasi_additivity_ahlfors(ev, fams[i], sets);
      mx = std::max(mx, rep.ratio);
      ++used;
    }
    est.max_ratio.push_back(mx);
    est.families.push_back(used);
    if (g > 0) {
      const double prev = est.max_ratio[g - 1];
      if (std::abs(mx - prev) < 0.05 * prev) {
        est.psi = est.grid[g - 1];
        est.stabilized = true;
        break;
      }
    }
  }
  if (!est.stabilized) {
    est.psi = est.grid.back();
    est.warning = "psi grid exhausted without stabilization";
  }
  return est;
}

}  // namespace potlab
