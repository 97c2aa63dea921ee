#include "potlab/model_space.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "potlab/numfmt.hpp"

namespace potlab {

std::string to_string(SpaceKind k) {
  switch (k) {
    case SpaceKind::tree_boundary: return "tree-boundary";
    case SpaceKind::unit_interval: return "unit-interval";
    case SpaceKind::cantor_set: return "cantor-set";
  }
  return "?";
}

SpaceKind parse_space_kind(const std::string& s) {
  if (s == "tree-boundary" || s == "tree") return SpaceKind::tree_boundary;
  if (s == "unit-interval" || s == "interval") return SpaceKind::unit_interval;
  if (s == "cantor-set" || s == "cantor") return SpaceKind::cantor_set;
  throw std::invalid_argument("unknown space kind '" + s + "'");
}

ModelSpace::ModelSpace(SpaceKind k, TreeSpace t, double Q, std::vector<double> coords)
    : kind_(k), tree_(std::move(t)), Q_(Q), coords_(std::move(coords)) {
  if (!(Q_ > 0.0) || !std::isfinite(Q_)) throw std::invalid_argument("Q must be a positive number");
  const int N = tree_.depth();
  switch (kind_) {
    case SpaceKind::tree_boundary: resolution_ = tree_.delta_pow(N - 1); break;
    case SpaceKind::unit_interval: resolution_ = 1.0 / static_cast<double>(tree_.size()); break;
    case SpaceKind::cantor_set: resolution_ = 2.0 * std::pow(3.0, -N); break;
  }
}

ModelSpace ModelSpace::tree_boundary(TreeSpace t, std::optional<double> Q) {
  double q = Q ? *Q : std::log(static_cast<double>(t.branching())) / std::log(1.0 / t.delta());
  return ModelSpace(SpaceKind::tree_boundary, std::move(t), q, {});
}

ModelSpace ModelSpace::unit_interval(int b, int N, std::vector<double> weights) {
  TreeSpace t(b, N, 1.0 / b, std::move(weights));
  std::vector<double> c(t.size());
  const double n = static_cast<double>(t.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<double>(i) / n;
  return ModelSpace(SpaceKind::unit_interval, std::move(t), 1.0, std::move(c));
}

ModelSpace ModelSpace::cantor_set(int N, std::vector<double> weights) {
  if (N > 30) throw std::invalid_argument("cantor depth above 30 is not supported");
  TreeSpace t(2, N, 1.0 / 3.0, std::move(weights));
  std::vector<double> c(t.size());
  const double scale = std::pow(3.0, N);
  for (std::size_t i = 0; i < c.size(); ++i) {
    // integer numerator over 3^N keeps the coordinates exact until the final division
    std::uint64_t num = 0;
    for (int k = N - 1; k >= 0; --k) {
      num *= 3;
      if ((i >> k) & 1u) num += 2;
    }
    c[i] = static_cast<double>(num) / scale;
  }
  return ModelSpace(SpaceKind::cantor_set, std::move(t), std::log(2.0) / std::log(3.0), std::move(c));
}

ModelSpace ModelSpace::with_weights(std::vector<double> w) const {
  TreeSpace t(tree_.branching(), tree_.depth(), tree_.delta(), std::move(w));
  return ModelSpace(kind_, std::move(t), Q_, coords_);
}

double ModelSpace::distance(Leaf x, Leaf y) const {
  if (kind_ == SpaceKind::tree_boundary) return tree_.distance(x, y);
  return std::abs(coords_[x] - coords_[y]);
}

namespace {

// first index i in [lo, hi) for which pred(i) is false; pred must be true on a prefix
template <class Pred>
std::size_t first_false(std::size_t lo, std::size_t hi, Pred pred) {
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    if (pred(mid)) lo = mid + 1;
    else hi = mid;
  }
  return lo;
}

}  // namespace

LeafRange ModelSpace::ball(Leaf x, double r) const {
  if (kind_ == SpaceKind::tree_boundary) return tree_.ball(x, r);
  if (!(r > 0.0)) return {x, x};
  std::size_t lo = first_false(0, x, [&](std::size_t i) { return distance(x, i) >= r; });
  std::size_t hi = first_false(x + 1, size(), [&](std::size_t i) { return distance(x, i) < r; });
  return {lo, hi};
}

LeafRange ModelSpace::closed_ball(Leaf x, double r) const {
  if (kind_ == SpaceKind::tree_boundary) return tree_.closed_ball(x, r);
  if (r < 0.0) return {x, x};
  std::size_t lo = first_false(0, x, [&](std::size_t i) { return distance(x, i) > r; });
  std::size_t hi = first_false(x + 1, size(), [&](std::size_t i) { return distance(x, i) <= r; });
  return {lo, hi};
}

double ModelSpace::distance_to_complement(Leaf x, LeafRange r) const {
  // in leaf order the shared prefix (tree) or the gap (line) is monotone,
  // so the nearest outside leaf is one of the two neighbours of the range
  double d = std::numeric_limits<double>::infinity();
  if (r.lo > 0) d = std::min(d, distance(x, r.lo - 1));
  if (r.hi < size()) d = std::min(d, distance(x, r.hi));
  return d;
}

std::vector<std::pair<double, double>> ModelSpace::distance_profile(Leaf x) const {
  std::vector<std::pair<double, double>> out;
  if (kind_ == SpaceKind::tree_boundary) {
    out.emplace_back(0.0, weights()[x]);
    for (int l = depth() - 1; l >= 0; --l) out.emplace_back(tree_.delta_pow(l), mass(tree_.subtree(x, l)));
    return out;
  }
  std::vector<double> d;
  d.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) d.push_back(distance(x, i));
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  out.reserve(d.size());
  for (double v : d) out.emplace_back(v, mass(closed_ball(x, v)));
  return out;
}

// ---- Christ cubes ----

ChristDecomposition christ_decomposition(const ModelSpace& space) {
  ChristDecomposition dec;
  const int N = space.depth();
  const TreeSpace& t = space.tree();
  dec.delta = space.delta();
  dec.levels.resize(static_cast<std::size_t>(N) + 1);
  for (int k = 0; k <= N; ++k) {
    std::size_t blk = t.block(k);
    auto& lv = dec.levels[static_cast<std::size_t>(k)];
    for (std::size_t a = 0; a * blk < space.size(); ++a) {
      ChristCube c;
      c.level = k;
      c.index = a;
      c.range = {a * blk, (a + 1) * blk};
      c.center = c.range.lo + blk / 2;
      lv.push_back(c);
    }
  }

  if (space.kind() == SpaceKind::tree_boundary) {
    dec.C3 = space.delta();
    dec.C4 = 1.0;
  } else {
    double c3 = std::numeric_limits<double>::infinity();
    double c4 = 0.0;
    for (const auto& lv : dec.levels)
      for (const auto& c : lv) {
        double dk = std::pow(dec.delta, c.level);
        c4 = std::max(c4, space.distance(c.range.lo, c.range.hi - 1) / dk);
        double gap = space.distance_to_complement(c.center, c.range);
        if (std::isfinite(gap)) c3 = std::min(c3, gap / dk);
      }
    dec.C3 = c3;
    dec.C4 = c4;
  }
  for (auto& lv : dec.levels)
    for (auto& c : lv) c.inner_radius = dec.C3 * std::pow(dec.delta, c.level);
  return dec;
}

ChristCheck check_christ(const ModelSpace& space, const ChristDecomposition& dec) {
  ChristCheck ok;
  const std::size_t n = space.size();
  for (const auto& lv : dec.levels) {
    std::size_t at = 0;
    for (const auto& c : lv) {
      if (c.range.lo != at || c.range.empty()) ok.covering = false;
      at = c.range.hi;
    }
    if (at != n) ok.covering = false;
  }
  for (std::size_t k = 0; k < dec.levels.size(); ++k)
    for (std::size_t l = k; l < dec.levels.size(); ++l)
      for (const auto& big : dec.levels[k])
        for (const auto& small : dec.levels[l]) {
          bool inside = small.range.within(big.range);
          if (!inside && small.range.intersects(big.range)) ok.nested = false;
        }
  for (std::size_t l = 1; l < dec.levels.size(); ++l)
    for (const auto& small : dec.levels[l])
      for (std::size_t k = 0; k < l; ++k) {
        int parents = 0;
        for (const auto& big : dec.levels[k]) parents += small.range.within(big.range) ? 1 : 0;
        if (parents != 1) ok.unique_parent = false;
      }
  for (const auto& lv : dec.levels)
    for (const auto& c : lv) {
      double dk = std::pow(dec.delta, c.level);
      double diam = c.range.size() > 1 ? space.distance(c.range.lo, c.range.hi - 1) : 0.0;
      if (diam > dec.C4 * dk * (1.0 + 1e-12)) ok.diameter = false;
      if (!space.ball(c.center, c.inner_radius).within(c.range)) ok.inner_ball = false;
      if (!c.range.contains(c.center)) ok.inner_ball = false;
    }
  return ok;
}

double lambda_map(const ModelSpace& space, Leaf x) {
  if (space.kind() == SpaceKind::tree_boundary)
    throw std::invalid_argument("lambda_map: the tree boundary is its own model (identity)");
  return space.coords().at(x);
}

AhlforsConstants ahlfors_constants(const ModelSpace& space) {
  AhlforsConstants a{std::numeric_limits<double>::infinity(), 0.0};
  for (int n = 1; n <= space.depth(); ++n) {
    double r = space.ultrametric() ? space.tree().delta_pow(n) : std::pow(space.delta(), n);
    double rq = std::pow(r, space.Q());
    for (Leaf x = 0; x < space.size(); ++x) {
      double v = space.mass(space.closed_ball(x, r)) / rq;
      a.K1 = std::min(a.K1, v);
      a.K2 = std::max(a.K2, v);
    }
  }
  return a;
}

void write_space(std::ostream& os, const ModelSpace& space) {
  os << to_string(space.kind()) << ' ' << space.branching() << ' ' << space.depth() << ' '
     << fmt_double(space.delta()) << ' ' << fmt_double(space.Q()) << '\n';
  for (double w : space.weights()) os << fmt_double(w) << '\n';
}

ModelSpace read_space(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("space file: missing header");
  std::istringstream hs(line);
  std::string kind, b, N, delta, Q;
  if (!(hs >> kind >> b >> N >> delta >> Q)) throw std::invalid_argument("space file: bad header");
  std::vector<double> w;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    w.push_back(parse_double(line));
  }
  SpaceKind k = parse_space_kind(kind);
  int bi = static_cast<int>(parse_int(b));
  int Ni = static_cast<int>(parse_int(N));
  double di = parse_double(delta);
  double qi = parse_double(Q);
  switch (k) {
    case SpaceKind::tree_boundary: return ModelSpace::tree_boundary(TreeSpace(bi, Ni, di, std::move(w)), qi);
    case SpaceKind::unit_interval: return ModelSpace::unit_interval(bi, Ni, std::move(w));
    case SpaceKind::cantor_set: return ModelSpace::cantor_set(Ni, std::move(w));
  }
  throw std::invalid_argument("space file: unknown kind");
}

}  // namespace potlab
