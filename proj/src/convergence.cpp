#include "potlab/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "potlab/range_table.hpp"

namespace potlab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// per-row range max/min of a field with some points masked out
struct MaskedRows {
  std::vector<RangeMinMax> hi, lo;  // hi answers max, lo answers min
  std::vector<std::vector<std::size_t>> live;  // prefix counts of unmasked points

  MaskedRows(const UpperHalfField& G, const UpperHalfSet* excluded) {
    const std::size_t n = G.n, H = G.heights.size();
    std::vector<double> a(n), b(n);
    for (std::size_t iy = 0; iy < H; ++iy) {
      std::vector<std::size_t> pre(n + 1, 0);
      for (Leaf x = 0; x < n; ++x) {
        const bool out = excluded && excluded->contains(x, iy);
        a[x] = out ? -kInf : G.at(x, iy);
        b[x] = out ? kInf : G.at(x, iy);
        pre[x + 1] = pre[x] + (out ? 0 : 1);
      }
      hi.emplace_back(a.data(), n);
      lo.emplace_back(b.data(), n);
      live.push_back(std::move(pre));
    }
  }
  std::size_t count(std::size_t iy, LeafRange r) const { return live[iy][r.hi] - live[iy][r.lo]; }
  // sup |G - v| over the unmasked part of the range (0 if none)
  double dev(std::size_t iy, LeafRange r, double v) const {
    if (count(iy, r) == 0) return 0.0;
    return std::max(hi[iy].max(r.lo, r.hi) - v, v - lo[iy].min(r.lo, r.hi));
  }
};

int level_index(const std::vector<double>& heights, double y) {
  // largest grid height <= y (heights descending); -1 if none
  for (std::size_t i = 0; i < heights.size(); ++i)
    if (heights[i] <= y * (1 + 1e-12)) return static_cast<int>(i);
  return -1;
}
}  // namespace

std::string to_string(RegionKind k) {
  switch (k) {
    case RegionKind::nontangential: return "nontangential";
    case RegionKind::eta_star: return "eta_star";
    case RegionKind::polynomial: return "polynomial";
    case RegionKind::exponential: return "exponential";
  }
  return "?";
}

RegionKind parse_region_kind(const std::string& s) {
  if (s == "nontangential") return RegionKind::nontangential;
  if (s == "eta_star" || s == "eta-star") return RegionKind::eta_star;
  if (s == "polynomial") return RegionKind::polynomial;
  if (s == "exponential") return RegionKind::exponential;
  throw std::invalid_argument("unknown region kind '" + s + "'");
}

ApproachRegion nontangential_region(Leaf x0) { return {x0, RegionKind::nontangential, 1.0, 1.0, 1.0, 1.0}; }
ApproachRegion eta_star_region(Leaf x0, double psi) {
  if (psi < 1.0) throw std::invalid_argument("psi must be >= 1");
  return {x0, RegionKind::eta_star, 1.0, 1.0, psi, 1.0};
}
ApproachRegion polynomial_region(Leaf x0, double c, double p, double s) {
  if (!(c > 0.0)) throw std::invalid_argument("region constant must be positive");
  return {x0, RegionKind::polynomial, c, p * (s - 1.0 / conjugate(p)), 1.0, 1.0};
}
ApproachRegion exponential_region(Leaf x0, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("region constant must be positive");
  return {x0, RegionKind::exponential, c, 0.0, 1.0, 1.0};
}

double region_radius(const ModelSpace& space, const ApproachRegion& reg, double y, CapacityEvaluator* ev) {
  switch (reg.kind) {
    case RegionKind::nontangential: return y;
    case RegionKind::polynomial: return reg.c * std::pow(y, reg.exponent);
    case RegionKind::exponential: return y < 1.0 ? std::pow(reg.c / std::log(1.0 / y), 1.0 / space.Q()) : kInf;
    case RegionKind::eta_star: {
      if (!ev) throw std::invalid_argument("eta_star region needs a capacity evaluator");
      RadiusEta e = eta_X(*ev, reg.x0, y);
      return e.sentinel() ? kInf : reg.psi * e.eta_star;
    }
  }
  return 0.0;
}

bool region_membership(const ModelSpace& space, const ApproachRegion& reg, Leaf x, double y, CapacityEvaluator* ev) {
  if (!(y > 0.0) || !(y < reg.y0)) return false;
  return space.distance(x, reg.x0) < region_radius(space, reg, y, ev);
}

// ---------------------------------------------------------------------------

std::vector<char> shadow(const ModelSpace& space, const UpperHalfSet& E, const std::vector<double>& heights, double t) {
  std::vector<int> diff(E.n + 1, 0);
  for (std::size_t iy = 0; iy < E.rows; ++iy) {
    if (!(heights[iy] < t)) continue;
    for (Leaf x = 0; x < E.n; ++x)
      if (E.contains(x, iy)) {
        LeafRange B = space.ball(x, heights[iy]);
        diff[B.lo] += 1;
        diff[B.hi] -= 1;
      }
  }
  std::vector<char> out(E.n, 0);
  int run = 0;
  for (Leaf x = 0; x < E.n; ++x) {
    run += diff[x];
    out[x] = run > 0;
  }
  return out;
}

ThinSetReport thinness_decay(CapacityEvaluator& ev, const UpperHalfSet& E, const std::vector<double>& heights,
                             const std::vector<double>& t_grid, double thin_tol) {
  ThinSetReport rep;
  rep.t = t_grid;
  std::sort(rep.t.begin(), rep.t.end(), std::greater<>());
  for (double t : rep.t) {
    auto S = shadow(ev.space(), E, heights, t);
    rep.star_size.push_back(static_cast<std::size_t>(std::count(S.begin(), S.end(), char{1})));
    rep.capacity.push_back(ev.of_mask(S));
  }
  rep.thin = rep.capacity.empty() || rep.capacity.back() < thin_tol;
  return rep;
}

double distance_to_complement(const ModelSpace& space, const std::vector<char>& E, Leaf x) {
  if (!E[x]) return 0.0;
  double d = kInf;
  for (Leaf y = x; y-- > 0;)
    if (!E[y]) {
      d = std::min(d, space.distance(x, y));
      break;
    }
  for (Leaf y = x + 1; y < E.size(); ++y)
    if (!E[y]) {
      d = std::min(d, space.distance(x, y));
      break;
    }
  return d;
}

EnlargedSet enlarged_set(CapacityEvaluator& ev, const std::vector<char>& E, double C) {
  const ModelSpace& sp = ev.space();
  if (E.size() != sp.size()) throw std::invalid_argument("set mask length does not match the leaf count");
  if (C < 1.0) throw std::invalid_argument("enlargement constant must be >= 1");
  const auto members = static_cast<std::size_t>(std::count(E.begin(), E.end(), char{1}));
  if (members == 0) throw std::invalid_argument("enlarged_set: E is empty");
  if (members == sp.size()) throw std::invalid_argument("enlarged_set: E = X has no distance to the complement");
  std::vector<int> diff(sp.size() + 1, 0);
  for (Leaf x = 0; x < sp.size(); ++x) {
    if (!E[x]) continue;
    RadiusEta e = eta_X(ev, x, distance_to_complement(sp, E, x));
    LeafRange B = e.sentinel() ? LeafRange{0, sp.size()} : sp.ball(x, C * e.eta_star);
    diff[B.lo] += 1;
    diff[B.hi] -= 1;
  }
  EnlargedSet out;
  out.mask.assign(sp.size(), 0);
  int run = 0;
  for (Leaf x = 0; x < sp.size(); ++x) {
    run += diff[x];
    out.mask[x] = run > 0;
    if (out.mask[x]) out.mass += sp.weights()[x];
  }
  out.capacity = ev.of_mask(E);
  out.ratio = out.capacity > 0 ? out.mass / out.capacity : kInf;
  return out;
}

UpperHalfField eta_star_field(CapacityEvaluator& ev, const std::vector<double>& heights, double psi) {
  const ModelSpace& sp = ev.space();
  UpperHalfField F;
  F.heights = heights;
  F.n = sp.size();
  F.values.assign(heights.size() * F.n, 0.0);
  for (std::size_t iy = 0; iy < heights.size(); ++iy)
    for (Leaf x = 0; x < F.n; ++x) {
      RadiusEta e = eta_X(ev, x, heights[iy]);
      F.at(x, iy) = psi * e.eta_star;
    }
  return F;
}

ShadowCheck shadow_covering_check(const ModelSpace& space, const UpperHalfSet& E, const UpperHalfField& f, double alpha) {
  const std::size_t n = f.n, H = f.heights.size();
  if (E.n != n || E.rows != H) throw std::invalid_argument("set and region function grids differ");
  ShadowCheck chk;
  for (std::size_t iy = 0; iy < H; ++iy) {
    double mx = 0.0, mn = kInf;
    for (Leaf x = 0; x < n; ++x) {
      mx = std::max(mx, f.at(x, iy));
      mn = std::min(mn, f.at(x, iy));
      if (iy + 1 < H && f.at(x, iy + 1) > f.at(x, iy) * (1 + 1e-12)) chk.monotone = false;
    }
    chk.measured_alpha = std::max(chk.measured_alpha, mx / mn);
  }
  chk.hypothesis_ok = chk.monotone && alpha >= chk.measured_alpha * (1 - 1e-12);
  if (!chk.hypothesis_ok) {
    chk.inclusion = false;
    return chk;
  }

  // left side: x0 whose closed region at some height meets E
  std::vector<char> lhs(n, 0);
  for (std::size_t iy = 0; iy < H; ++iy) {
    std::vector<std::size_t> pre(n + 1, 0);
    for (Leaf x = 0; x < n; ++x) pre[x + 1] = pre[x] + (E.contains(x, iy) ? 1 : 0);
    if (pre[n] == 0) continue;
    for (Leaf x0 = 0; x0 < n; ++x0) {
      LeafRange B = space.closed_ball(x0, f.at(x0, iy));
      if (pre[B.hi] > pre[B.lo]) lhs[x0] = 1;
    }
  }
  // right side: union over x in E* of closed balls of radius alpha f(x, delta_{E*}(x))
  auto star = shadow(space, E, f.heights, kInf);
  std::vector<int> diff(n + 1, 0);
  for (Leaf x = 0; x < n; ++x) {
    if (!star[x]) continue;
    const double d = distance_to_complement(space, star, x);
    const int iy = std::isinf(d) ? 0 : level_index(f.heights, d);
    if (iy < 0) continue;
    LeafRange B = space.closed_ball(x, alpha * f.at(x, static_cast<std::size_t>(iy)));
    diff[B.lo] += 1;
    diff[B.hi] -= 1;
  }
  int run = 0;
  for (Leaf x = 0; x < n; ++x) {
    run += diff[x];
    const bool in_rhs = run > 0;
    chk.lhs += lhs[x];
    chk.rhs += in_rhs;
    if (lhs[x] && !in_rhs) chk.inclusion = false;
  }
  return chk;
}

ExceptionalBound exceptional_capacity_bound(const PoissonOperator& P, CapacityEvaluator& ev,
                                            const std::vector<double>& f, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  for (double v : f)
    if (v < 0.0) throw std::invalid_argument("exceptional_capacity_bound expects f >= 0");
  auto G = P.field(ev.op().apply(f));
  auto ex = exceedance_sets(ev.space(), G, eps);
  ExceptionalBound b;
  b.capacity = ev.of_mask(ex.E_star);
  b.bound = std::pow(lp_norm(ev.space(), f, ev.p()) / eps, ev.p());
  b.ratio = b.bound > 0 ? b.capacity / b.bound : 0.0;
  return b;
}

// ---------------------------------------------------------------------------

std::vector<ModulusRow> modulus_table(const ModelSpace& space, const UpperHalfField& G, const std::vector<double>& v,
                                      const UpperHalfSet* excluded, const std::vector<char>* skip,
                                      const std::vector<double>& eps_grid) {
  const std::size_t n = G.n, H = G.heights.size();
  MaskedRows rows(G, excluded);
  std::vector<double> err;
  for (std::size_t m = 0; m + 1 < H; ++m) {
    const double r = G.heights[m];
    double e = 0.0;
    for (Leaf x0 = 0; x0 < n; ++x0) {
      if (skip && (*skip)[x0]) continue;
      LeafRange B = space.ball(x0, r);
      for (std::size_t iy = m + 1; iy < H; ++iy) e = std::max(e, rows.dev(iy, B, v[x0]));
    }
    err.push_back(e);
  }
  std::vector<ModulusRow> out;
  for (double eps : eps_grid) {
    ModulusRow row;
    row.eps = eps;
    for (std::size_t m = 0; m < err.size(); ++m)
      if (err[m] < eps) {
        row.r = G.heights[m];
        row.sup_error = err[m];
        break;
      }
    if (!row.r && !err.empty()) row.sup_error = err.back();
    out.push_back(row);
  }
  return out;
}

std::vector<double> level_surrogate(const ModelSpace& space, const std::vector<double>& h, int level) {
  const TreeSpace& t = space.tree();
  if (level < 0 || level > t.depth()) throw std::invalid_argument("surrogate level out of range");
  const std::size_t n = space.size(), blk = t.block(level);
  std::vector<double> out(n);
  if (space.ultrametric()) {
    const auto& w = space.weights();
    for (std::size_t c = 0; c < n; c += blk) {
      double s = 0, m = 0;
      for (std::size_t i = c; i < c + blk; ++i) {
        s += h[i] * w[i];
        m += w[i];
      }
      for (std::size_t i = c; i < c + blk; ++i) out[i] = s / m;
    }
    return out;
  }
  const auto& X = space.coords();
  for (std::size_t c = 0; c < n; c += blk) {
    const double t0 = X[c], v0 = h[c];
    const bool last = c + blk >= n;
    const double t1 = last ? t0 : X[c + blk], v1 = last ? v0 : h[c + blk];
    for (std::size_t i = c; i < c + blk; ++i)
      out[i] = last || t1 == t0 ? v0 : v0 + (v1 - v0) * (X[i] - t0) / (t1 - t0);
  }
  return out;
}

SplitResult approximation_split(const PoissonOperator& P, CapacityEvaluator& ev, const std::vector<double>& f,
                                double delta_target, const SplitOptions& opt) {
  const ModelSpace& sp = ev.space();
  const KernelOperator& K = ev.op();
  const std::size_t n = sp.size(), H = P.rows();
  const double p = ev.p();
  if (f.size() != n) throw std::invalid_argument("input length does not match the leaf count");
  if (!(delta_target > 0.0) || !(opt.A > 0.0)) throw std::invalid_argument("delta_target and A must be positive");

  std::vector<double> fp(n), fn(n);
  for (Leaf x = 0; x < n; ++x) {
    fp[x] = std::max(f[x], 0.0);
    fn[x] = std::max(-f[x], 0.0);
  }
  SplitResult res;
  res.E = {n, H, std::vector<char>(n * H, 0)};
  res.F.assign(n, 0);

  std::vector<double> d(n);
  for (int j = 1; j <= opt.max_j; ++j) {
    const double level = std::ldexp(1.0, -j);
    const double tau = level * std::pow(level * delta_target / (2.0 * opt.A), 1.0 / p);
    bool exact = true;
    for (int sgn = 0; sgn < 2; ++sgn) {
      const auto& h = sgn == 0 ? fp : fn;
      int chosen = sp.depth();
      for (int l = 0; l <= sp.depth(); ++l) {
        auto c = level_surrogate(sp, h, l);
        for (Leaf x = 0; x < n; ++x) d[x] = h[x] - std::min(h[x], c[x]);
        if (lp_norm(sp, d, p) <= tau) {
          chosen = l;
          break;
        }
      }
      (sgn == 0 ? res.level_pos : res.level_neg).push_back(chosen);
      if (chosen == sp.depth()) std::fill(d.begin(), d.end(), 0.0);
      if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) continue;
      exact = false;
      auto Kd = K.apply(d);
      auto Gd = P.field(Kd);
      for (std::size_t i = 0; i < n * H; ++i)
        if (Gd.values[i] > level) res.E.mask[i] = 1;
      for (Leaf x = 0; x < n; ++x)
        if (Kd[x] >= level) res.F[x] = 1;
    }
    res.j_last = j;
    if (exact) {
      res.reached_leaf_level = true;
      break;
    }
  }
  res.E_star = shadow(sp, res.E, P.heights(), kInf);
  res.cap_E_star = ev.of_mask(res.E_star);
  res.cap_F = ev.of_mask(res.F);
  res.within_target = res.cap_E_star < delta_target && res.cap_F < delta_target;

  auto Kf = K.apply(f);
  auto G = P.field(Kf);
  res.modulus = modulus_table(sp, G, Kf, &res.E, &res.F, opt.eps_grid);
  return res;
}

// ---------------------------------------------------------------------------

std::vector<double> default_t_grid(const std::vector<double>& heights) {
  std::vector<double> t;
  for (double y : heights) t.push_back(2.0 * y);
  std::sort(t.begin(), t.end(), std::greater<>());
  return t;
}

ConvergenceReport region_experiment(const ModelSpace& space, const UpperHalfField& G, const std::vector<double>& boundary,
                                    const std::vector<ApproachRegion>& regions, const std::vector<double>& t_grid,
                                    double tol, const UpperHalfSet* excluded, const std::vector<char>* F,
                                    CapacityEvaluator* ev) {
  const std::size_t H = G.heights.size();
  ConvergenceReport rep;
  rep.kind = regions.empty() ? RegionKind::nontangential : regions.front().kind;
  rep.t_grid = t_grid;
  std::sort(rep.t_grid.begin(), rep.t_grid.end(), std::greater<>());
  rep.tol = tol;
  const std::size_t T = rep.t_grid.size();
  MaskedRows rows(G, excluded);

  std::vector<double> bad(T, 0.0);
  double sample_mass = 0.0;
  std::size_t converged = 0;
  bool any_off_center = false;
  for (const auto& reg : regions) {
    const Leaf x0 = reg.x0;
    const double b = boundary[x0];
    // per-row contributions
    std::vector<double> rerr(H, 0.0);
    std::vector<std::size_t> rpts(H, 0), roff(H, 0);
    for (std::size_t iy = 0; iy < H; ++iy) {
      const double y = G.heights[iy];
      if (!(y < reg.y0)) continue;
      LeafRange S = space.ball(x0, region_radius(space, reg, y, ev));
      rerr[iy] = rows.dev(iy, S, b);
      rpts[iy] = rows.count(iy, S);
      const bool center_live = !(excluded && excluded->contains(x0, iy));
      roff[iy] = rpts[iy] - (center_live ? 1 : 0);
    }
    for (std::size_t ti = 0; ti < T; ++ti) {
      ErrorRow row;
      row.x0 = x0;
      row.t = rep.t_grid[ti];
      row.excluded = F && (*F)[x0];
      for (std::size_t iy = 0; iy < H; ++iy) {
        if (!(G.heights[iy] < row.t)) continue;
        row.sup_error = std::max(row.sup_error, rerr[iy]);
        row.points += rpts[iy];
        row.off_center += roff[iy];
      }
      if (row.sup_error >= tol) bad[ti] += space.weights()[x0];
      if (ti + 1 == T) {
        if (row.sup_error < tol) ++converged;
        if (row.off_center > 0) any_off_center = true;
      }
      rep.rows.push_back(row);
    }
    sample_mass += space.weights()[x0];
  }
  rep.fraction_converged = regions.empty() ? 1.0 : static_cast<double>(converged) / static_cast<double>(regions.size());
  for (double m : bad) rep.bad_mass.push_back(sample_mass > 0 ? m / sample_mass : 0.0);
  rep.empty_at_resolution = rep.kind != RegionKind::nontangential && !regions.empty() && !any_off_center;
  return rep;
}

ConvergenceReport nontangential_experiment(const PoissonOperator& P, const KernelOperator& K,
                                           const std::vector<double>& f, const std::vector<Leaf>& x0s,
                                           const std::vector<double>& t_grid, double tol, const SplitResult* split) {
  auto Kf = K.apply(f);
  auto G = P.field(Kf);
  std::vector<ApproachRegion> regs;
  for (Leaf x0 : x0s) regs.push_back(nontangential_region(x0));
  return region_experiment(P.space(), G, Kf, regs, t_grid, tol, split ? &split->E : nullptr,
                           split ? &split->F : nullptr);
}

ConvergenceReport tangential_experiment(const PoissonOperator& P, const KernelOperator& K, const std::vector<double>& f,
                                        const std::vector<ApproachRegion>& regions, const std::vector<double>& t_grid,
                                        double tol, const SplitResult* split, CapacityEvaluator* ev) {
  auto Kf = K.apply(f);
  auto G = P.field(Kf);
  return region_experiment(P.space(), G, Kf, regions, t_grid, tol, split ? &split->E : nullptr,
                           split ? &split->F : nullptr, ev);
}

}  // namespace potlab
