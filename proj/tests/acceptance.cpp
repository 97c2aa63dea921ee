// Acceptance run: one PASS/FAIL line per criterion, informational lines prefixed "info".
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "potlab/convergence.hpp"
#include "potlab/numfmt.hpp"
#include "potlab/quasiadd.hpp"
#include "runner.hpp"

using namespace potlab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what) {
  std::printf("%s criterion %2d: %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}
void info(const std::string& what) {
  std::printf("info %s\n", what.c_str());
  std::fflush(stdout);
}
std::string g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}
double seconds(Clock::time_point a) { return std::chrono::duration<double>(Clock::now() - a).count(); }

ModelSpace cantor(int N) { return ModelSpace::cantor_set(N); }
ModelSpace tree(int N) { return ModelSpace::tree_boundary(build_tree(2, N, 0.5)); }
ModelSpace interval(int N) { return ModelSpace::unit_interval(2, N); }

std::vector<double> random_signed(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> f(n);
  for (auto& v : f) v = U(rng);
  return f;
}

// ---------------------------------------------------------------------------

void fast_convolution() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> S(0.5, 0.9), W(0.2, 1.0);
  std::vector<std::pair<int, int>> shapes;
  for (int N = 4; N <= 10; ++N) shapes.emplace_back(2, N);
  for (int N = 4; N <= 8; ++N) shapes.emplace_back(3, N);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    auto [b, N] = shapes[static_cast<std::size_t>(i) % shapes.size()];
    const double delta = 1.0 / b;
    std::vector<double> w;
    if (i % 3 == 1) {
      w.resize(static_cast<std::size_t>(std::pow(b, N)));
      for (auto& v : w) v = W(rng);
    }
    auto sp = ModelSpace::tree_boundary(build_tree(b, N, delta, w.empty() ? MassProfile::uniform : MassProfile::custom, w));
    RadialKernel k = RadialKernel::riesz(sp.Q(), S(rng));
    if (i % 4 == 3) {
      std::vector<double> lv(static_cast<std::size_t>(N) + 1);
      for (auto& v : lv) v = W(rng) * 5.0;
      k = RadialKernel::general(lv);
    }
    KernelOperator op(sp, k);
    auto f = random_signed(sp.size(), rng);
    auto a = convolve_fast(op, f), ref = convolve_naive(op, f);
    double num = 0, den = 0;
    for (std::size_t x = 0; x < a.size(); ++x) {
      num = std::max(num, std::abs(a[x] - ref[x]));
      den = std::max(den, std::abs(ref[x]));
    }
    worst = std::max(worst, num / den);
  }
  // timing at depth 10, binary
  auto sp = tree(10);
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  auto f = random_signed(sp.size(), rng);
  auto time_of = [&](const std::function<std::vector<double>()>& fn, int reps) {
    double best = 1e300;
    volatile double sink = 0;
    for (int r = 0; r < reps; ++r) {
      auto t0 = Clock::now();
      auto v = fn();
      best = std::min(best, seconds(t0));
      sink = sink + v[0];
    }
    return best;
  };
  const double tf = time_of([&] { return convolve_fast(op, f); }, 50);
  const double tn = time_of([&] { return convolve_naive(op, f); }, 5);
  const bool ok = worst <= 1e-10 && tf <= tn / 20.0;
  report(1, ok,
         "fast vs naive max rel err " + g(worst) + " (<= 1e-10, 100 inputs, b=2 N=4..10, b=3 N=4..8); depth-10 time fast " +
             g(tf * 1e6) + " us vs naive " + g(tn * 1e6) + " us, ratio 1/" + g(tn / tf) + " (need >= 20)");
}

void singleton_closed_form() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int kind = i % 4;
    const int N = 3 + static_cast<int>(rng() % 4);
    ModelSpace sp = kind == 0   ? tree(N)
                    : kind == 1 ? ModelSpace::tree_boundary(build_tree(3, std::min(N, 5), 1.0 / 3))
                    : kind == 2 ? interval(N)
                                : cantor(N);
    const double p = 1.2 + 2.8 * U(rng);
    const double lo = 1.0 / conjugate(p);
    // integrable range: s < 1 for trees and the interval; 3^{Qs} < 2 holds for every s < 1 on the Cantor set
    const double s = lo + (0.98 - lo) * U(rng);
    KernelOperator op(sp, RadialKernel::riesz(sp.Q(), s));
    const Leaf x0 = static_cast<Leaf>(rng() % sp.size());
    const double v = capacity_primal(op, p, {x0}).value;
    const double cf = singleton_capacity(op, p, x0);
    worst = std::max(worst, std::abs(v - cf) / cf);
  }
  report(2, worst <= 1e-6, "singleton capacity vs closed form, 20 random (space, kernel, p): max rel err " + g(worst) +
                               " (<= 1e-6)");
}

void strong_duality() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  int count = 0;
  auto t0 = Clock::now();
  for (double p : {1.5, 2.0, 3.0}) {
    for (int i = 0; i < 50; ++i) {
      const int kind = i % 3;
      const int N = 5 + static_cast<int>(rng() % 4);  // 5..8
      ModelSpace sp = kind == 0 ? tree(N) : kind == 1 ? interval(N) : cantor(N);
      KernelOperator op(sp, RadialKernel::riesz(sp.Q(), 0.75));
      const std::size_t n = sp.size();
      const std::size_t k = 1 + rng() % std::min<std::size_t>(n / 4, 24);
      std::vector<Leaf> all(n);
      std::iota(all.begin(), all.end(), Leaf{0});
      std::vector<Leaf> E;
      std::sample(all.begin(), all.end(), std::back_inserter(E), static_cast<std::ptrdiff_t>(k), rng);
      const double a = capacity_primal(op, p, E).value, b = capacity_dual(op, p, E).value;
      worst = std::max(worst, std::abs(a - b) / std::max(a, b));
      ++count;
    }
  }
  report(3, worst <= 1e-3, "primal vs dual on " + std::to_string(count) +
                               " random target sets (depth 5..8, p in {1.5,2,3}): max rel diff " + g(worst) +
                               " (<= 1e-3), " + g(seconds(t0)) + " s");
}

void tree_quasi_additivity() {
  auto t0 = Clock::now();
  auto sp = tree(8);
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  const double p = 2.0;
  const double A = theoretical_constant_A(op, p);
  CapacityEvaluator ev(op, p);
  bool all = true;
  double lo = 1e300, hi = 0.0;
  std::size_t reports = 0, short_fams = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto fam = generate_separated_family(ev, 6, seed);
    if (!verify_separation(fam).pass) all = false;
    short_fams += fam.short_family;
    for (auto shape : {SetShape::full_ball, SetShape::singleton, SetShape::half_density}) {
      auto rep = quasi_additivity_tree(ev, fam, family_sets(fam, shape, seed));
      all = all && rep.ratio >= 1.0 - 1e-9 && rep.ratio <= A * (1 + 1e-6);
      lo = std::min(lo, rep.ratio);
      hi = std::max(hi, rep.ratio);
      ++reports;
    }
  }
  const double t = seconds(t0);
  report(4, all && t <= 300.0,
         "tree quasi-additivity, 100 seeds depth 8, " + std::to_string(reports) + " reports: ratio in [" + g(lo) + ", " +
             g(hi) + "], A = " + g(A) + " (||K||_1 = " + g(op.norm_1()) + "), " + g(t) + " s (<= 300)");
  if (short_fams) info("criterion 4: " + std::to_string(short_fams) + " families shorter than requested");
}

void ball_asymptotics() {
  // s > 1/p': binary tree, depth 10, p = 2, s = 0.75
  auto sp = tree(10);
  KernelOperator op(sp, RadialKernel::riesz(1.0, 0.75));
  CapacityEvaluator ev(op, 2.0);
  auto bp = ball_capacity_profile(ev, 0, 2, 8);
  const double expected = 1.0 * 2.0 * (0.75 - 0.5);
  const double dev = std::abs(bp.slope - expected) / expected;
  // s = 1/p': binary tree, depth 10, p = 3, s = 2/3
  KernelOperator op3(sp, RadialKernel::riesz(1.0, 2.0 / 3.0));
  CapacityEvaluator ev3(op3, 3.0);
  auto crit = ball_capacity_profile(ev3, 0, 2, 8);
  report(5, dev <= 0.1 && crit.log_product_factor() <= 2.0,
         "ball capacities, n = 2..8 on the depth-10 binary tree: slope " + g(bp.slope) + " vs " + g(expected) +
             " (rel dev " + g(dev) + " <= 0.1); critical p = 3, s = 2/3: C log(1/r) factor " +
             g(crit.log_product_factor()) + " (<= 2)");
  KernelOperator op2(sp, RadialKernel::riesz(1.0, 0.5));
  CapacityEvaluator ev2(op2, 2.0);
  auto c2 = ball_capacity_profile(ev2, 0, 2, 8);
  info("criterion 5: critical p = 2, s = 1/2 on the same tree: C log(1/r) factor " + g(c2.log_product_factor()));
}

void poisson_normalization() {
  bool ok = true;
  std::string detail;
  for (int kind = 0; kind < 3; ++kind) {
    auto sp6 = kind == 0 ? tree(6) : kind == 1 ? interval(6) : cantor(6);
    auto sp8 = kind == 0 ? tree(8) : kind == 1 ? interval(8) : cantor(8);
    PoissonOperator P6(sp6), P8(sp8);
    double err = 0.0;
    for (const auto* P : {&P6, &P8}) {
      auto one = P->field(std::vector<double>(P->space().size(), 1.0));
      for (double v : one.values) err = std::max(err, std::abs(v - 1.0));
    }
    const double R6 = calibrate_normalization(P6), R8 = calibrate_normalization(P8);
    const double g6 = normalization_ratio(P6), g8 = normalization_ratio(P8);
    const double drift = std::abs(R8 - R6) / R6;
    const bool k_ok = err <= 1e-12 && g6 <= R6 * (1 + 1e-12) && g8 <= R6 * (1 + 1e-12) && drift <= 0.1;
    ok = ok && k_ok;
    const char* names[] = {"tree", "interval", "cantor"};
    detail += std::string(detail.empty() ? "" : "; ") + names[kind] + ": |PI(1)-1| " + g(err) + ", grid ratio " + g(g6) +
              "/" + g(g8) + " <= R*6 " + g(R6) + ", R*8 " + g(R8) + " (drift " + g(drift) + ")";
  }
  report(6, ok, "Poisson normalization, depths 6 and 8: " + detail);
}

void exchange_band() {
  auto sp6 = cantor(6), sp8 = cantor(8);
  KernelOperator K6(sp6, RadialKernel::riesz(sp6.Q(), 0.75)), K8(sp8, RadialKernel::riesz(sp8.Q(), 0.75));
  PoissonOperator P6(sp6), P8(sp8);
  Band cal = calibrate_exchange(P6, K6);
  const double lo_ok = cal.lo * 0.9, hi_ok = cal.hi * 1.1;
  double lo = 1e300, hi = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Band r = exchange_ratio(P8, K8, random_cube_function(sp8, 4, s));
    lo = std::min(lo, r.lo);
    hi = std::max(hi, r.hi);
  }
  report(7, lo >= lo_ok && hi <= hi_ok,
         "exchange ratio on the Cantor set, 20 random f >= 0 at depth 8: [" + g(lo) + ", " + g(hi) +
             "] inside depth-6 band [" + g(cal.lo) + ", " + g(cal.hi) + "] +-10% = [" + g(lo_ok) + ", " + g(hi_ok) + "]");
  auto t6 = tree(6), t8 = tree(8);
  KernelOperator T6(t6, RadialKernel::riesz(1.0, 0.75)), T8(t8, RadialKernel::riesz(1.0, 0.75));
  PoissonOperator Q6(t6), Q8(t8);
  Band tb = calibrate_exchange(Q6, T6);
  double tl = 1e300, th = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Band r = exchange_ratio(Q8, T8, random_cube_function(t8, 4, s));
    tl = std::min(tl, r.lo);
    th = std::max(th, r.hi);
  }
  info("criterion 7: binary tree band [" + g(tb.lo) + ", " + g(tb.hi) + "], depth-8 samples [" + g(tl) + ", " + g(th) +
       "] (PI and K commute on trees)");
}

void harnack() {
  auto sp6 = cantor(6), sp8 = cantor(8);
  KernelOperator K8(sp8, RadialKernel::riesz(sp8.Q(), 0.75));
  PoissonOperator P6(sp6), P8(sp8);
  const double cH = calibrate_harnack(P6);
  bool all = true;
  double worst = 1e300;
  std::size_t empty = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto G = potential_field(P8, K8, random_cube_function(sp8, 4, 1000 + s));
    std::mt19937_64 rng(s);
    const double q = std::uniform_real_distribution<double>(0.5, 0.95)(rng);
    std::vector<double> v = G.values;
    std::sort(v.begin(), v.end());
    const double eps = v[static_cast<std::size_t>(q * static_cast<double>(v.size()))];
    auto h = harnack_check(sp8, G, eps, cH);
    all = all && h.pass;
    if (h.points) worst = std::min(worst, h.min_value / eps);
    else ++empty;
  }
  report(8, all && empty == 0,
         "Harnack on the Cantor set, 50 (f, eps) pairs at depth 8: min over E' of PI(K*f)/eps = " + g(worst) +
             " >= c_H = " + g(cH) + " (depth-6 calibration)");
}

void exceptional_set_stability() {
  auto batch = [](const ModelSpace& sp) {
    KernelOperator K(sp, RadialKernel::riesz(sp.Q(), 0.75));
    PoissonOperator P(sp);
    CapacityEvaluator ev(K, 2.0);
    double m = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      auto f = random_cube_function(sp, 4, s);
      auto Kf = K.apply(f);
      const double top = *std::max_element(Kf.begin(), Kf.end());
      for (double th : {0.5, 0.7, 0.9}) m = std::max(m, exceptional_capacity_bound(P, ev, f, th * top).ratio);
    }
    return m;
  };
  bool ok = true;
  std::string detail;
  for (int kind = 0; kind < 2; ++kind) {
    const double m6 = batch(kind == 0 ? tree(6) : cantor(6)), m8 = batch(kind == 0 ? tree(8) : cantor(8));
    const double drift = std::abs(m8 - m6) / m6;
    ok = ok && std::isfinite(m6) && m6 > 0 && drift <= 0.1;
    detail += std::string(detail.empty() ? "" : "; ") + (kind == 0 ? "tree" : "cantor") + " max " + g(m6) + " -> " +
              g(m8) + " (drift " + g(drift) + ")";
  }
  report(9, ok, "C(E*(f,eps)) (eps/||f||_p)^p batch max, depths 6 -> 8, 20 f x 3 eps: " + detail + " (<= 0.1)");
}

void convergence() {
  auto sp = interval(10);
  KernelOperator K(sp, RadialKernel::riesz(1.0, 0.8));
  PoissonOperator P(sp);
  CapacityEvaluator ev(K, 2.0);
  auto f = profile_values(sp, Profile::hat);
  auto split = approximation_split(P, ev, f, 0.05);
  std::vector<Leaf> all(sp.size()), x0s;
  std::iota(all.begin(), all.end(), Leaf{0});
  std::mt19937_64 rng(404);
  std::sample(all.begin(), all.end(), std::back_inserter(x0s), 64, rng);
  std::vector<ApproachRegion> regs;
  for (Leaf x : x0s) regs.push_back(polynomial_region(x, 0.125, 2.0, 0.8));
  auto t = default_t_grid(P.heights());
  auto nt = nontangential_experiment(P, K, f, x0s, t, 0.02, &split);
  auto tg = tangential_experiment(P, K, f, regs, t, 0.05, &split);
  const bool ok = nt.fraction_converged >= 0.95 && tg.fraction_converged >= 0.90 && !tg.empty_at_resolution &&
                  split.cap_E_star < 0.05 && split.cap_F < 0.05;
  report(10, ok,
         "hat profile, unit interval depth 10, s = 0.8, p = 2, 64 x0: non-tangential " + g(nt.fraction_converged) +
             " below 0.02 (>= 0.95); polynomial region (c = 0.125) " + g(tg.fraction_converged) +
             " below 0.05 (>= 0.90); C(E*) = " + g(split.cap_E_star) + ", C(F) = " + g(split.cap_F) + " (< 0.05)");
  // a discontinuous input at depth 8 for comparison
  auto sp8 = interval(8);
  KernelOperator K8(sp8, RadialKernel::riesz(1.0, 0.8));
  PoissonOperator P8(sp8);
  CapacityEvaluator ev8(K8, 2.0);
  auto s8 = approximation_split(P8, ev8, random_cube_function(sp8, 4, 7), 0.05);
  info("criterion 10: random step input at depth 8: C(E*) = " + g(s8.cap_E_star) + ", C(F) = " + g(s8.cap_F) +
       ", j_last = " + std::to_string(s8.j_last));
}

std::map<std::string, std::string> read_csvs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") {
      std::ifstream is(e.path(), std::ios::binary);
      std::ostringstream ss;
      ss << is.rdbuf();
      out[e.path().filename().string()] = ss.str();
    }
  return out;
}

void determinism() {
  const fs::path base = fs::temp_directory_path() / ("potlab_accept_" + std::to_string(::getpid()));
  fs::remove_all(base);
  fs::create_directories(base);
  const fs::path cfg = base / "suite.ini";
  {
    std::ofstream os(cfg);
    os << "seed = 12345\n[space]\nkind = cantor\nN = 6\n[kernel]\np = 2\ns = 0.75\n"
          "[converge]\ntol_nontangential = 0.05\ntol_tangential = 0.1\n";
  }
  std::ostringstream log;
  std::map<std::string, std::string> runs[2];
  bool pass_flags = true;
  for (int k = 0; k < 2; ++k) {
    cli::RunOptions opt;
    opt.config = cfg;
    opt.out = base / ("run" + std::to_string(k));
    opt.threads = k == 0 ? 1 : 4;
    auto res = cli::run("full-suite", opt, log);
    pass_flags = pass_flags && res.all_pass();
    runs[k] = read_csvs(*opt.out);
  }
  std::size_t differing = 0;
  for (const auto& [name, body] : runs[0])
    if (!runs[1].count(name) || runs[1][name] != body) ++differing;
  const bool ok = !runs[0].empty() && runs[0].size() == runs[1].size() && differing == 0;
  report(11, ok, "full-suite twice with seed 12345 (1 and 4 threads): " + std::to_string(runs[0].size()) +
                     " CSVs, " + std::to_string(differing) + " differ");
  info(std::string("criterion 11: full-suite pass flags ") + (pass_flags ? "all true" : "not all true"));
  fs::remove_all(base);
}

}  // namespace

int main() {
  auto t0 = Clock::now();
  const std::vector<std::function<void()>> steps{fast_convolution, singleton_closed_form, strong_duality,
                                                 tree_quasi_additivity, ball_asymptotics, poisson_normalization,
                                                 exchange_band, harnack, exceptional_set_stability, convergence, determinism};
  for (const auto& s : steps) {
    try {
      s();
    } catch (const std::exception& e) {
      std::printf("FAIL exception: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d failure(s), %.1f s\n", failures, seconds(t0));
  return failures == 0 ? 0 : 1;
}
