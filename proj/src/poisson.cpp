#include "potlab/poisson.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "potlab/range_table.hpp"

namespace potlab {

namespace {
constexpr int kMaxK = 400;

std::vector<double> prefix_of(const ModelSpace& sp, const std::vector<double>& f) {
  if (f.size() != sp.size()) throw std::invalid_argument("input length does not match the leaf count");
  const auto& w = sp.weights();
  std::vector<double> pre(f.size() + 1, 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) pre[i + 1] = pre[i] + f[i] * w[i];
  return pre;
}

// mark the union of ranges via a difference array
void paint(std::vector<int>& diff, std::size_t lo, std::size_t hi) {
  diff[lo] += 1;
  diff[hi] -= 1;
}
}  // namespace

std::vector<double> height_grid(const ModelSpace& space, int max_m) {
  if (max_m < 0) throw std::invalid_argument("height grid: max_m must be >= 0");
  std::vector<double> h;
  const double floor = space.resolution() * (1.0 - 1e-12);
  for (int m = 0; m <= max_m; ++m) {
    double y = std::ldexp(space.diam(), -m);
    if (y < floor) break;
    h.push_back(y);
  }
  return h;
}

double UpperHalfField::max() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }
double UpperHalfField::min() const { return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end()); }

std::size_t UpperHalfSet::count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), char{1}));
}

PoissonOperator::PoissonOperator(const ModelSpace& space, std::vector<double> heights)
    : space_(&space), n_(space.size()), heights_(std::move(heights)) {
  if (heights_.empty()) heights_ = height_grid(space);
  for (double y : heights_)
    if (!(y > 0.0) || y > space.diam() * (1 + 1e-12)) throw std::invalid_argument("heights must lie in (0, diam]");
  const std::size_t H = heights_.size();
  offset_.assign(H * n_ + 1, 0);
  tail_.assign(H * n_, 0.0);
  norm_.assign(H * n_, 0.0);
  std::vector<Term> st;
  for (std::size_t iy = 0; iy < H; ++iy)
    for (Leaf x = 0; x < n_; ++x) {
      double tail = 0, C = 0;
      build_stencil(x, heights_[iy], st, tail, C);
      const std::size_t idx = iy * n_ + x;
      offset_[idx] = terms_.size();
      terms_.insert(terms_.end(), st.begin(), st.end());
      tail_[idx] = tail;
      norm_[idx] = C;
    }
  offset_[H * n_] = terms_.size();
}

void PoissonOperator::build_stencil(Leaf x, double y, std::vector<Term>& out, double& tail, double& C) const {
  const ModelSpace& sp = *space_;
  const double Q = sp.Q();
  const double ratio = std::pow(2.0, -(Q + 1.0));
  out.clear();
  double den = 0.0, a = 1.0;
  tail = 0.0;
  for (int k = 0;; ++k) {
    if (k > kMaxK) throw std::runtime_error("poisson stencil did not saturate");
    LeafRange B = sp.ball(x, std::ldexp(y, k));
    den += a * sp.mass(B);
    if (B.size() == n_) {
      // remaining terms all see the whole space
      tail = a * (1.0 + ratio / (1.0 - ratio));
      den += a * ratio / (1.0 - ratio) * sp.total_mass();
      break;
    }
    if (!B.empty()) out.push_back({B.lo, B.hi, a});
    a *= ratio;
  }
  for (auto& t : out) t.c /= den;
  tail /= den;
  C = std::pow(y, Q) / den;
}

double PoissonOperator::normalization_at(Leaf x, double y) const {
  std::vector<Term> st;
  double tail = 0, C = 0;
  build_stencil(x, y, st, tail, C);
  return C;
}

double PoissonOperator::integral(const std::vector<double>& f, Leaf x, std::size_t iy) const {
  auto pre = prefix_of(*space_, f);
  const std::size_t idx = iy * n_ + x;
  double v = tail_[idx] * pre[n_];
  for (std::size_t t = offset_[idx]; t < offset_[idx + 1]; ++t) v += terms_[t].c * (pre[terms_[t].hi] - pre[terms_[t].lo]);
  return v;
}

double PoissonOperator::integral_at(const std::vector<double>& f, Leaf x, double y) const {
  auto pre = prefix_of(*space_, f);
  std::vector<Term> st;
  double tail = 0, C = 0;
  build_stencil(x, y, st, tail, C);
  double v = tail * pre[n_];
  for (const auto& t : st) v += t.c * (pre[t.hi] - pre[t.lo]);
  return v;
}

double PoissonOperator::integral_naive(const std::vector<double>& f, Leaf x, double y) const {
  const ModelSpace& sp = *space_;
  const double Q = sp.Q();
  const auto& w = sp.weights();
  double num = 0.0, den = 0.0;
  for (int k = 0;; ++k) {
    if (k > kMaxK) throw std::runtime_error("poisson sum did not saturate");
    const double r = std::ldexp(y, k);
    const double a = std::pow(2.0, -(Q + 1.0) * k);
    std::size_t inside = 0;
    for (Leaf z = 0; z < sp.size(); ++z)
      if (sp.distance(x, z) < r) {
        num += a * f[z] * w[z];
        den += a * w[z];
        ++inside;
      }
    if (inside == sp.size()) {
      // geometric tail of the remaining terms
      const double t = std::pow(2.0, -(Q + 1.0));
      double F = 0, M = 0;
      for (Leaf z = 0; z < sp.size(); ++z) {
        F += f[z] * w[z];
        M += w[z];
      }
      num += a * t / (1 - t) * F;
      den += a * t / (1 - t) * M;
      break;
    }
  }
  return num / den;
}

UpperHalfField PoissonOperator::field(const std::vector<double>& f) const {
  auto pre = prefix_of(*space_, f);
  UpperHalfField F;
  F.heights = heights_;
  F.n = n_;
  F.values.assign(heights_.size() * n_, 0.0);
  for (std::size_t idx = 0; idx < heights_.size() * n_; ++idx) {
    double v = tail_[idx] * pre[n_];
    for (std::size_t t = offset_[idx]; t < offset_[idx + 1]; ++t)
      v += terms_[t].c * (pre[terms_[t].hi] - pre[terms_[t].lo]);
    F.values[idx] = v;
  }
  return F;
}

double PoissonOperator::density(Leaf x, std::size_t iy, Leaf z) const {
  const std::size_t idx = iy * n_ + x;
  double v = tail_[idx];
  for (std::size_t t = offset_[idx]; t < offset_[idx + 1]; ++t)
    if (terms_[t].lo <= z && z < terms_[t].hi) v += terms_[t].c;
  return v;
}

std::vector<double> PoissonOperator::density_matrix(std::size_t iy) const {
  std::vector<double> D(n_ * n_, 0.0);
  for (Leaf x = 0; x < n_; ++x) {
    const std::size_t idx = iy * n_ + x;
    double* row = D.data() + x * n_;
    for (Leaf z = 0; z < n_; ++z) row[z] = tail_[idx];
    for (std::size_t t = offset_[idx]; t < offset_[idx + 1]; ++t)
      for (std::size_t z = terms_[t].lo; z < terms_[t].hi; ++z) row[z] += terms_[t].c;
  }
  return D;
}

std::vector<double> PoissonOperator::maximal_function(const std::vector<double>& f) const {
  auto F = field(f);
  std::vector<double> out(n_, -std::numeric_limits<double>::infinity());
  for (std::size_t iy = 0; iy < heights_.size(); ++iy)
    for (Leaf x = 0; x < n_; ++x) out[x] = std::max(out[x], F.at(x, iy));
  return out;
}

// ---------------------------------------------------------------------------

Exceedance exceedance_sets(const ModelSpace& space, const UpperHalfField& G, double eps) {
  const std::size_t n = G.n, H = G.heights.size();
  Exceedance ex;
  ex.E = {n, H, std::vector<char>(n * H, 0)};
  ex.E_prime = {n, H, std::vector<char>(n * H, 0)};
  std::vector<int> star(n + 1, 0);
  std::vector<int> rowdiff(n + 1);
  for (std::size_t iy = 0; iy < H; ++iy) {
    std::fill(rowdiff.begin(), rowdiff.end(), 0);
    bool any = false;
    for (Leaf x = 0; x < n; ++x)
      if (G.at(x, iy) > eps) {
        ex.E.mask[iy * n + x] = 1;
        LeafRange B = space.ball(x, G.heights[iy]);
        paint(rowdiff, B.lo, B.hi);
        paint(star, B.lo, B.hi);
        any = true;
      }
    if (!any) continue;
    int run = 0;
    for (Leaf x = 0; x < n; ++x) {
      run += rowdiff[x];
      ex.E_prime.mask[iy * n + x] = run > 0;
    }
  }
  ex.E_star.assign(n, 0);
  int run = 0;
  for (Leaf x = 0; x < n; ++x) {
    run += star[x];
    ex.E_star[x] = run > 0;
  }
  return ex;
}

std::vector<char> exceedance_star_naive(const ModelSpace& space, const UpperHalfField& G, double eps) {
  std::vector<char> out(G.n, 0);
  for (Leaf z = 0; z < G.n; ++z)
    for (std::size_t iy = 0; iy < G.heights.size() && !out[z]; ++iy)
      for (Leaf x = 0; x < G.n; ++x)
        if (G.at(x, iy) > eps && space.distance(x, z) < G.heights[iy]) {
          out[z] = 1;
          break;
        }
  return out;
}

UpperHalfField potential_field(const PoissonOperator& P, const KernelOperator& K, const std::vector<double>& f) {
  return P.field(K.apply(f));
}

double normalization_ratio(const PoissonOperator& P) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t iy = 0; iy < P.rows(); ++iy)
    for (Leaf x = 0; x < P.space().size(); ++x) {
      double c = P.normalization(x, iy);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  return hi / lo;
}

double calibrate_normalization(const PoissonOperator& P) {
  const ModelSpace& sp = P.space();
  const double ymin = P.heights().back(), ymax = sp.diam();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  std::vector<double> bps;
  for (Leaf x = 0; x < sp.size(); ++x) {
    bps.assign({ymin, ymax});
    for (const auto& [d, m] : sp.distance_profile(x)) {
      if (!(d > 0.0)) continue;
      for (int k = 0; k < kMaxK; ++k) {
        double b = std::ldexp(d, -k);
        if (b < ymin) break;
        if (b <= ymax) bps.push_back(b);
      }
    }
    std::sort(bps.begin(), bps.end());
    bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
    double next = P.normalization_at(x, bps[0]);
    for (std::size_t i = 0; i < bps.size(); ++i) {
      const double c = next;
      hi = std::max(hi, c);
      lo = std::min(lo, c);
      if (i + 1 < bps.size()) {
        next = P.normalization_at(x, bps[i + 1]);
        // the infimum over (b_i, b_{i+1}] is approached at b_i from the right
        lo = std::min(lo, next * std::pow(bps[i] / bps[i + 1], sp.Q()));
      }
    }
  }
  return hi / lo;
}

double calibrate_harnack(const PoissonOperator& P) {
  const ModelSpace& sp = P.space();
  const std::size_t n = sp.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t iy = 0; iy < P.rows(); ++iy) {
    auto D = P.density_matrix(iy);
    for (Leaf xt = 0; xt < n; ++xt) {
      LeafRange B = sp.ball(xt, P.heights()[iy]);
      const double* ref = D.data() + xt * n;
      for (Leaf x = B.lo; x < B.hi; ++x) {
        const double* row = D.data() + x * n;
        for (Leaf z = 0; z < n; ++z) best = std::min(best, row[z] / ref[z]);
      }
    }
  }
  return best;
}

Band calibrate_exchange(const PoissonOperator& P, const KernelOperator& K) {
  const ModelSpace& sp = P.space();
  const Eigen::Index n = static_cast<Eigen::Index>(sp.size());
  auto kd = K.dense();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Km(kd.data(), n, n);
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(sp.weights().data(), n);
  Band b{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t iy = 0; iy < P.rows(); ++iy) {
    auto pd = P.density_matrix(iy);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Pm(pd.data(), n, n);
    Eigen::MatrixXd A = Km * w.asDiagonal() * Pm;  // f -> K*(PI f)
    Eigen::MatrixXd B = Pm * w.asDiagonal() * Km;  // f -> PI(K*f)
    Eigen::ArrayXXd r = A.array() / B.array();
    b.lo = std::min(b.lo, r.minCoeff());
    b.hi = std::max(b.hi, r.maxCoeff());
  }
  return b;
}

Band exchange_ratio(const PoissonOperator& P, const KernelOperator& K, const std::vector<double>& f) {
  auto G = P.field(K.apply(f));
  auto Pf = P.field(f);
  const std::size_t n = P.space().size();
  Band b{std::numeric_limits<double>::infinity(), 0.0};
  std::vector<double> g(n);
  for (std::size_t iy = 0; iy < P.rows(); ++iy) {
    std::copy(Pf.row(iy), Pf.row(iy) + n, g.begin());
    auto Kg = K.apply(g);
    for (Leaf x = 0; x < n; ++x) {
      double r = Kg[x] / G.at(x, iy);
      b.lo = std::min(b.lo, r);
      b.hi = std::max(b.hi, r);
    }
  }
  return b;
}

HarnackResult harnack_check(const ModelSpace& space, const UpperHalfField& G, double eps, double c_H) {
  auto ex = exceedance_sets(space, G, eps);
  HarnackResult h;
  h.bound = c_H * eps;
  h.min_value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ex.E_prime.mask.size(); ++i)
    if (ex.E_prime.mask[i]) {
      h.min_value = std::min(h.min_value, G.values[i]);
      ++h.points;
    }
  h.pass = h.points == 0 || h.min_value >= h.bound;
  return h;
}

std::vector<ContinuityRow> uniform_continuity_probe(const PoissonOperator& P, const std::vector<double>& g,
                                                    const std::vector<double>& eps_grid) {
  const ModelSpace& sp = P.space();
  const std::size_t n = sp.size(), H = P.rows();
  auto V = P.field(g);
  std::vector<RangeMinMax> tabs;
  tabs.reserve(H);
  for (std::size_t iy = 0; iy < H; ++iy) tabs.emplace_back(V.row(iy), n);
  // err[m]: sup error over the box of size heights[m]; rows with y < heights[m]
  std::vector<double> err;
  for (std::size_t m = 0; m + 1 < H; ++m) {
    const double d = P.heights()[m];
    double e = 0.0;
    for (Leaf x0 = 0; x0 < n; ++x0) {
      LeafRange B = sp.ball(x0, d);
      for (std::size_t iy = 0; iy < H; ++iy) {
        if (!(P.heights()[iy] < d)) continue;
        e = std::max(e, tabs[iy].max(B.lo, B.hi) - g[x0]);
        e = std::max(e, g[x0] - tabs[iy].min(B.lo, B.hi));
      }
    }
    err.push_back(e);
  }
  std::vector<ContinuityRow> out;
  for (double eps : eps_grid) {
    ContinuityRow row;
    row.eps = eps;
    for (std::size_t m = 0; m < err.size(); ++m)
      if (err[m] <= eps) {
        row.delta = P.heights()[m];
        row.sup_error = err[m];
        break;
      }
    if (!row.delta && !err.empty()) row.sup_error = err.back();
    out.push_back(row);
  }
  return out;
}

std::vector<double> profile_values(const ModelSpace& space, Profile prof, double lipschitz_scale) {
  const std::size_t n = space.size();
  std::vector<double> out(n);
  for (Leaf x = 0; x < n; ++x) {
    const double t = space.ultrametric() ? static_cast<double>(x) / static_cast<double>(n) : space.coords()[x];
    double v = 0.0;
    switch (prof) {
      case Profile::coordinate: v = t; break;
      case Profile::hat: v = 1.0 - std::abs(2.0 * t - 1.0); break;
      case Profile::bump: v = 16.0 * t * t * (1.0 - t) * (1.0 - t); break;
    }
    out[x] = lipschitz_scale * v;
  }
  return out;
}

std::vector<double> random_cube_function(const ModelSpace& space, int level, std::uint64_t seed) {
  if (level < 0 || level > space.depth()) throw std::invalid_argument("cube level out of range");
  const std::size_t blk = space.tree().block(level), cubes = space.size() / blk;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> f(space.size());
  for (std::size_t c = 0; c < cubes; ++c) {
    const double v = U(rng);
    std::fill(f.begin() + static_cast<std::ptrdiff_t>(c * blk), f.begin() + static_cast<std::ptrdiff_t>((c + 1) * blk), v);
  }
  return f;
}

}  // namespace potlab
