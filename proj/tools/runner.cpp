#include "runner.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "json.hpp"
#include "potlab/convergence.hpp"
#include "potlab/numfmt.hpp"
#include "potlab/quasiadd.hpp"
#include "potlab/version.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace potlab::cli {

bool RunResult::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"space-info", "capacity", "ball-profile", "quasiadd",
                                          "poisson",    "exchange", "converge",     "full-suite"};
  return s;
}

namespace {

// ---------------------------------------------------------------- config

std::string trim(std::string s) {
  auto sp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && sp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && sp(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

class Reader {
 public:
  explicit Reader(pt::ptree tree) : tree_(std::move(tree)) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    std::string t = trim(*v);
    if (t.empty()) return std::nullopt;
    return t;
  }

  double real(const std::string& key, double def) {
    auto v = raw(key);
    if (!v) return def;
    try {
      double x = parse_double(*v);
      if (!std::isfinite(x)) throw std::invalid_argument("");
      return x;
    } catch (const std::invalid_argument&) {
      throw ConfigError(key, "expected a finite number, got '" + *v + "'");
    }
  }
  std::optional<double> real_opt(const std::string& key) {
    if (!tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'))) {
      used_.insert(key);
      return std::nullopt;
    }
    auto v = raw(key);
    if (!v) return std::nullopt;
    return real(key, 0.0);
  }
  long long integer(const std::string& key, long long def, long long lo, long long hi) {
    auto v = raw(key);
    if (!v) return def;
    long long x = 0;
    try {
      x = parse_int(*v);
    } catch (const std::invalid_argument&) {
      throw ConfigError(key, "expected an integer, got '" + *v + "'");
    }
    if (x < lo || x > hi)
      throw ConfigError(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + *v);
    return x;
  }
  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    auto v = raw(key);
    if (!v) return def;
    std::uint64_t x = 0;
    auto res = std::from_chars(v->data(), v->data() + v->size(), x);
    if (res.ec != std::errc() || res.ptr != v->data() + v->size())
      throw ConfigError(key, "expected an unsigned 64-bit integer, got '" + *v + "'");
    return x;
  }
  std::string word(const std::string& key, const std::string& def, const std::vector<std::string>& allowed) {
    auto v = raw(key);
    std::string x = v ? *v : def;
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), x) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : "|") + a;
      throw ConfigError(key, "expected one of " + list + ", got '" + x + "'");
    }
    return x;
  }
  bool flag(const std::string& key, bool def) {
    auto v = raw(key);
    if (!v) return def;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError(key, "expected a boolean, got '" + *v + "'");
  }
  std::vector<double> reals(const std::string& key, std::vector<double> def) {
    auto v = raw(key);
    if (!v) return def;
    std::vector<double> out;
    for (const auto& t : split(*v, ',')) {
      try {
        out.push_back(parse_double(t));
      } catch (const std::invalid_argument&) {
        throw ConfigError(key, "expected a comma separated list of numbers");
      }
    }
    return out;
  }

  void reject_unknown() const {
    for (const auto& [name, node] : tree_) {
      if (node.empty()) {
        if (!used_.count(name)) throw ConfigError(name, "unknown key");
        continue;
      }
      for (const auto& [k, _] : node)
        if (!used_.count(name + "." + k)) throw ConfigError(name + "." + k, "unknown key");
    }
  }

  // canonical "section.key=value" lines, sorted
  std::string canonical() const {
    std::vector<std::string> lines;
    for (const auto& [name, node] : tree_) {
      if (node.empty()) {
        lines.push_back(name + "=" + trim(node.data()));
        continue;
      }
      for (const auto& [k, v] : node) lines.push_back(name + "." + k + "=" + trim(v.data()));
    }
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
  }

 private:
  pt::ptree tree_;
  std::set<std::string> used_;
};

void require(bool ok, const std::string& key, const std::string& msg) {
  if (!ok) throw ConfigError(key, msg);
}

struct SpaceCfg {
  SpaceKind kind = SpaceKind::tree_boundary;
  int b = 2;
  int N = 6;
  double delta = 0.5;
  std::optional<double> Q;
  std::string mass_profile = "uniform";
};

struct KernelCfg {
  bool general = false;
  double p = 2.0;
  double s = 0.75;
  AtomRule rule = AtomRule::cylinder_average;
  std::vector<double> levels;
};

struct Target {
  std::string id, spec;
  enum Kind { singleton, ball, closed_ball, leaves } kind = singleton;
  Leaf center = 0;
  double radius = 0.0;
  std::vector<Leaf> set;
};

struct Config {
  std::uint64_t seed = 1;
  fs::path out = "potlab_out";
  SpaceCfg space;
  KernelCfg kernel;
  struct {
    double objective = 1e-8, feasibility = 1e-9, duality_gap = 1e-3, closed_form = 1e-6;
  } tol;
  struct {
    std::vector<Target> targets;
    std::string solver = "both";
  } capacity;
  struct {
    long long center = 0;
    int n_lo = 2, n_hi = -1;
    double slope_tol = 0.1, log_factor = 2.0;
  } ball;
  struct {
    FamilyMode mode = FamilyMode::tree;
    int seeds = 20;
    int count = 6;
    std::vector<SetShape> shapes{SetShape::full_ball, SetShape::singleton, SetShape::half_density};
    double M = 1.0;
    std::optional<double> psi;  // empty: estimate
    int level_lo = 2;
  } quasi;
  struct {
    int max_m = 20;
    std::string input = "random";
    int cube_level = 4;
    int calibration_depth = 6;
    double stability = 0.1;
    std::vector<double> continuity_eps{0.2, 0.1, 0.05};
  } poisson;
  struct {
    int samples = 20;
    int harnack_samples = 50;
    int cube_level = 4;
    int calibration_depth = 6;
    double band_slack = 0.1;
    double eps_lo = 0.5, eps_hi = 0.95;
  } exchange;
  struct {
    std::string profile = "hat";
    double lipschitz_scale = 1.0;
    int samples = 64;
    RegionKind region = RegionKind::polynomial;
    double c = 0.125;
    double psi = 1.0;
    double tol_nontangential = 0.02, tol_tangential = 0.05;
    double fraction_nontangential = 0.95, fraction_tangential = 0.90;
    double delta_target = 0.05;
    double split_A = 1.0;
  } converge;
  bool charts = true;
  std::string canonical;
};

Profile parse_profile(const std::string& s) {
  if (s == "coordinate") return Profile::coordinate;
  if (s == "hat") return Profile::hat;
  return Profile::bump;
}

SetShape parse_shape(const std::string& key, const std::string& s) {
  if (s == "full_ball") return SetShape::full_ball;
  if (s == "singleton") return SetShape::singleton;
  if (s == "half_density") return SetShape::half_density;
  throw ConfigError(key, "unknown set shape '" + s + "'");
}

Target parse_target(const std::string& spec, std::size_t idx) {
  const std::string key = "capacity.targets";
  Target t;
  t.id = "t" + std::to_string(idx);
  t.spec = spec;
  auto parts = split(spec, ':');
  try {
    if (parts.size() == 2 && parts[0] == "singleton") {
      t.kind = Target::singleton;
      t.center = static_cast<Leaf>(parse_int(parts[1]));
    } else if (parts.size() == 3 && (parts[0] == "ball" || parts[0] == "closed_ball")) {
      t.kind = parts[0] == "ball" ? Target::ball : Target::closed_ball;
      t.center = static_cast<Leaf>(parse_int(parts[1]));
      t.radius = parse_double(parts[2]);
      require(t.radius > 0.0, key, "ball radius must be positive in '" + spec + "'");
    } else if (parts.size() == 2 && parts[0] == "leaves") {
      t.kind = Target::leaves;
      for (const auto& v : split(parts[1], ',')) {
        long long x = parse_int(v);
        require(x >= 0, key, "negative leaf index in '" + spec + "'");
        t.set.push_back(static_cast<Leaf>(x));
      }
      std::sort(t.set.begin(), t.set.end());
      t.set.erase(std::unique(t.set.begin(), t.set.end()), t.set.end());
      require(!t.set.empty(), key, "empty leaf list in '" + spec + "'");
    } else {
      throw ConfigError(key, "cannot parse target '" + spec + "'");
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError(key, "cannot parse target '" + spec + "'");
  }
  return t;
}

Config parse_config(const RunOptions& opt) {
  pt::ptree tree;
  try {
    pt::read_ini(opt.config.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", std::string("cannot read config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& ov : opt.overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(ov, "override must look like KEY=VALUE");
    std::string k = trim(ov.substr(0, eq));
    if (k.find('.') == std::string::npos && k != "seed" && k != "out") k = "tolerances." + k;
    tree.put(pt::ptree::path_type(k, '.'), trim(ov.substr(eq + 1)));
  }
  if (opt.seed) tree.put("seed", std::to_string(*opt.seed));
  if (opt.out) tree.put("out", opt.out->string());

  Reader r(tree);
  Config c;
  c.seed = r.u64("seed", 1);
  if (auto o = r.raw("out")) c.out = *o;

  auto& S = c.space;
  const std::string kind = r.word("space.kind", "tree", {"tree", "interval", "cantor"});
  S.kind = kind == "tree" ? SpaceKind::tree_boundary : kind == "interval" ? SpaceKind::unit_interval : SpaceKind::cantor_set;
  S.b = static_cast<int>(r.integer("space.b", 2, 2, 64));
  S.N = static_cast<int>(r.integer("space.N", 6, 1, 30));
  S.delta = r.real("space.delta", S.kind == SpaceKind::tree_boundary ? 0.5 : S.kind == SpaceKind::cantor_set ? 1.0 / 3 : 1.0 / S.b);
  S.Q = r.real_opt("space.Q");
  S.mass_profile = r.raw("space.mass_profile").value_or("uniform");
  require(S.delta > 0.0 && S.delta < 1.0, "space.delta", "delta must lie in (0,1)");
  require(std::pow(static_cast<double>(S.b), S.N) <= 65536.0, "space.N", "more than 65536 leaves is out of scope for the runner");
  if (S.kind == SpaceKind::cantor_set) {
    require(S.b == 2, "space.b", "the Cantor model has b = 2");
    require(std::abs(S.delta - 1.0 / 3) < 1e-12, "space.delta", "the Cantor model has delta = 1/3");
  }
  if (S.kind == SpaceKind::unit_interval)
    require(std::abs(S.delta - 1.0 / S.b) < 1e-12, "space.delta", "the interval model has delta = 1/b");
  if (S.Q) {
    require(S.kind == SpaceKind::tree_boundary, "space.Q", "Q is fixed by the model for interval and Cantor kinds");
    require(*S.Q > 0.0, "space.Q", "Q must be positive");
  }
  require(S.mass_profile == "uniform" || S.mass_profile.rfind("self_similar:", 0) == 0 ||
              S.mass_profile.rfind("file:", 0) == 0,
          "space.mass_profile", "expected uniform, self_similar:q0,...,q{b-1} or file:PATH");

  auto& K = c.kernel;
  K.general = r.word("kernel.kind", "riesz", {"riesz", "general"}) == "general";
  K.p = r.real("kernel.p", 2.0);
  require(K.p > 1.0, "kernel.p", "p must lie in (1, inf)");
  K.s = r.real("kernel.s", 0.75);
  K.rule = r.word("kernel.atom_rule", "cylinder_average", {"cylinder_average", "exclude"}) == "exclude"
               ? AtomRule::exclude
               : AtomRule::cylinder_average;
  K.levels = r.reals("kernel.levels", {});
  if (K.general) {
    require(S.kind == SpaceKind::tree_boundary, "kernel.kind", "general level kernels need a tree space");
    require(K.levels.size() == static_cast<std::size_t>(S.N) + 1, "kernel.levels", "expected N+1 level values");
    for (double v : K.levels) require(v >= 0.0, "kernel.levels", "level values must be >= 0");
  } else {
    require(K.levels.empty(), "kernel.levels", "levels are only used by the general kind");
    try {
      validate_riesz_exponents(K.p, K.s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("kernel.s", e.what());
    }
  }

  c.tol.objective = r.real("tolerances.objective", c.tol.objective);
  c.tol.feasibility = r.real("tolerances.feasibility", c.tol.feasibility);
  c.tol.duality_gap = r.real("tolerances.duality_gap", c.tol.duality_gap);
  c.tol.closed_form = r.real("tolerances.closed_form", c.tol.closed_form);
  for (auto [k, v] : {std::pair{"tolerances.objective", c.tol.objective}, {"tolerances.feasibility", c.tol.feasibility},
                      {"tolerances.duality_gap", c.tol.duality_gap}, {"tolerances.closed_form", c.tol.closed_form}})
    require(v > 0.0 && v < 1.0, k, "tolerance must lie in (0,1)");

  auto tspec = r.raw("capacity.targets").value_or("singleton:0 | ball:0:0.25 | leaves:0,1");
  std::size_t idx = 0;
  for (const auto& t : split(tspec, '|'))
    if (!t.empty()) c.capacity.targets.push_back(parse_target(t, idx++));
  c.capacity.solver = r.word("capacity.solver", "both", {"primal", "dual", "exact", "both"});
  if (c.capacity.solver == "exact") require(K.p == 2.0, "capacity.solver", "the exact solver needs p = 2");

  c.ball.center = r.integer("ball_profile.center", 0, 0, 1LL << 40);
  c.ball.n_lo = static_cast<int>(r.integer("ball_profile.n_lo", 2, 0, S.N));
  c.ball.n_hi = static_cast<int>(r.integer("ball_profile.n_hi", S.N, c.ball.n_lo + 1, S.N));
  c.ball.slope_tol = r.real("ball_profile.slope_tol", 0.1);
  c.ball.log_factor = r.real("ball_profile.log_factor", 2.0);

  auto& Qa = c.quasi;
  const std::string mode = r.word("quasiadd.mode", S.kind == SpaceKind::tree_boundary ? "tree" : "ahlfors", {"tree", "ahlfors"});
  Qa.mode = mode == "tree" ? FamilyMode::tree : FamilyMode::ahlfors;
  require(Qa.mode == FamilyMode::ahlfors || S.kind == SpaceKind::tree_boundary, "quasiadd.mode",
          "tree mode needs a tree space");
  Qa.seeds = static_cast<int>(r.integer("quasiadd.seeds", 20, 1, 100000));
  Qa.count = static_cast<int>(r.integer("quasiadd.count", 6, 1, 1000));
  if (auto sh = r.raw("quasiadd.shapes")) {
    Qa.shapes.clear();
    for (const auto& s : split(*sh, ',')) Qa.shapes.push_back(parse_shape("quasiadd.shapes", s));
    require(!Qa.shapes.empty(), "quasiadd.shapes", "at least one shape is needed");
  }
  Qa.M = r.real("quasiadd.M", 1.0);
  require(Qa.M >= 1.0, "quasiadd.M", "M must be >= 1");
  if (auto ps = r.raw("quasiadd.psi"); ps && *ps != "auto") {
    Qa.psi = r.real("quasiadd.psi", 1.0);
    require(*Qa.psi >= 1.0, "quasiadd.psi", "psi must be >= 1");
  }
  Qa.level_lo = static_cast<int>(r.integer("quasiadd.level_lo", std::min(2, S.N - 1), 0, S.N - 1));
  if (Qa.mode == FamilyMode::ahlfors && !Qa.psi)
    require(Qa.seeds >= 10, "quasiadd.seeds", "estimating psi needs at least 10 seeds");

  auto& Po = c.poisson;
  Po.max_m = static_cast<int>(r.integer("poisson.max_m", 20, 1, 60));
  Po.input = r.word("poisson.input", "random", {"random", "coordinate", "hat", "bump"});
  Po.cube_level = static_cast<int>(r.integer("poisson.cube_level", std::min(4, S.N), 0, S.N));
  Po.calibration_depth = static_cast<int>(r.integer("poisson.calibration_depth", std::min(6, S.N), 1, S.N));
  Po.stability = r.real("poisson.stability", 0.1);
  Po.continuity_eps = r.reals("poisson.continuity_eps", Po.continuity_eps);

  auto& Ex = c.exchange;
  Ex.samples = static_cast<int>(r.integer("exchange.samples", 20, 1, 100000));
  Ex.harnack_samples = static_cast<int>(r.integer("exchange.harnack_samples", 50, 0, 100000));
  Ex.cube_level = static_cast<int>(r.integer("exchange.cube_level", std::min(4, S.N), 0, S.N));
  Ex.calibration_depth = static_cast<int>(r.integer("exchange.calibration_depth", std::min(6, S.N), 1, S.N));
  require(std::pow(static_cast<double>(S.b), Ex.calibration_depth) <= 1024.0, "exchange.calibration_depth",
          "calibration space above 1024 leaves");
  Ex.band_slack = r.real("exchange.band_slack", 0.1);
  Ex.eps_lo = r.real("exchange.eps_quantile_lo", 0.5);
  Ex.eps_hi = r.real("exchange.eps_quantile_hi", 0.95);
  require(0.0 <= Ex.eps_lo && Ex.eps_lo <= Ex.eps_hi && Ex.eps_hi < 1.0, "exchange.eps_quantile_hi",
          "need 0 <= eps_quantile_lo <= eps_quantile_hi < 1");

  auto& Cv = c.converge;
  Cv.profile = r.word("converge.profile", "hat", {"coordinate", "hat", "bump"});
  Cv.lipschitz_scale = r.real("converge.lipschitz_scale", 1.0);
  Cv.samples = static_cast<int>(r.integer("converge.samples", 64, 1, 1 << 20));
  try {
    Cv.region = parse_region_kind(r.word("converge.region", "polynomial", {}));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("converge.region", e.what());
  }
  require(Cv.region != RegionKind::nontangential, "converge.region", "the tangential experiment needs a tangential region");
  Cv.c = r.real("converge.c", 0.125);
  require(Cv.c > 0.0, "converge.c", "region constant must be positive");
  Cv.psi = r.real("converge.psi", 1.0);
  require(Cv.psi >= 1.0, "converge.psi", "psi must be >= 1");
  Cv.tol_nontangential = r.real("converge.tol_nontangential", 0.02);
  Cv.tol_tangential = r.real("converge.tol_tangential", 0.05);
  Cv.fraction_nontangential = r.real("converge.fraction_nontangential", 0.95);
  Cv.fraction_tangential = r.real("converge.fraction_tangential", 0.90);
  Cv.delta_target = r.real("converge.delta_target", 0.05);
  Cv.split_A = r.real("converge.split_A", 1.0);
  require(Cv.delta_target > 0.0, "converge.delta_target", "must be positive");
  require(Cv.split_A > 0.0, "converge.split_A", "must be positive");
  if (Cv.region == RegionKind::polynomial && !K.general)
    require(K.s > 1.0 / conjugate(K.p), "converge.region", "polynomial regions need s > 1/p'");

  c.charts = r.flag("output.charts", true);
  r.reject_unknown();
  c.canonical = r.canonical();
  return c;
}

// ---------------------------------------------------------------- helpers

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream, std::uint32_t i) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream, i};
  std::uint32_t v[2];
  sq.generate(v, v + 2);
  return (static_cast<std::uint64_t>(v[0]) << 32) | v[1];
}

enum Stream : std::uint32_t { kQuasi = 1, kExchange = 2, kHarnack = 3, kPoisson = 4, kConverge = 5 };

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t T = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (T <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < T; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lk(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

using Cell = std::variant<double, long long, std::string>;

class Table {
 public:
  explicit Table(std::vector<std::string> cols) : cols_(std::move(cols)) {}
  void row(std::vector<Cell> cells) {
    if (cells.size() != cols_.size()) throw std::logic_error("csv row width mismatch");
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      if (auto d = std::get_if<double>(&cells[i])) line += fmt_double(*d);
      else if (auto n = std::get_if<long long>(&cells[i])) line += std::to_string(*n);
      else line += std::get<std::string>(cells[i]);
    }
    lines_.push_back(std::move(line));
  }
  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < cols_.size(); ++i) out += (i ? "," : "") + cols_[i];
    out += '\n';
    for (const auto& l : lines_) out += l + '\n';
    return out;
  }

 private:
  std::vector<std::string> cols_;
  std::vector<std::string> lines_;
};

Cell I(std::size_t v) { return static_cast<long long>(v); }
Cell B(bool v) { return std::string(v ? "true" : "false"); }
Cell S(std::string v) { return v; }

class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) {}
  ~Output() {
    if (!committed_) cleanup();
  }
  void write(const std::string& name, const std::string& content) {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_ = true;
    }
    fs::path p = dir_ / name;
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << content;
    os.close();
    if (!os) throw std::runtime_error("write failed for " + p.string());
    if (std::find(files_.begin(), files_.end(), p) == files_.end()) {
      files_.push_back(p);
      hashes_.emplace_back(name, sha256_hex(content));
    }
  }
  void commit() { committed_ = true; }
  const std::vector<fs::path>& files() const { return files_; }
  const std::vector<std::pair<std::string, std::string>>& hashes() const { return hashes_; }

 private:
  void cleanup() noexcept {
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    if (created_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }
  fs::path dir_;
  std::vector<fs::path> files_;
  std::vector<std::pair<std::string, std::string>> hashes_;
  bool created_ = false;
  bool committed_ = false;
};

std::vector<double> mass_weights(const SpaceCfg& S, int N) {
  const std::string& mp = S.mass_profile;
  if (mp == "uniform") return {};
  if (mp.rfind("self_similar:", 0) == 0) {
    std::vector<double> q;
    for (const auto& t : split(mp.substr(13), ',')) {
      try {
        q.push_back(parse_double(t));
      } catch (const std::invalid_argument&) {
        throw ConfigError("space.mass_profile", "bad self_similar value '" + t + "'");
      }
    }
    require(q.size() == static_cast<std::size_t>(S.b), "space.mass_profile", "self_similar needs b child fractions");
    double sum = 0.0;
    for (double v : q) {
      require(v > 0.0, "space.mass_profile", "child fractions must be positive");
      sum += v;
    }
    require(std::abs(sum - 1.0) < 1e-9, "space.mass_profile", "child fractions must sum to 1");
    TreeSpace shape(S.b, N, S.delta);
    std::vector<double> w(shape.size());
    for (Leaf x = 0; x < w.size(); ++x) {
      double v = 1.0;
      for (int d : shape.path(x)) v *= q[static_cast<std::size_t>(d)];
      w[x] = v;
    }
    return w;
  }
  // file:PATH
  std::ifstream is(mp.substr(5));
  require(static_cast<bool>(is), "space.mass_profile", "cannot open " + mp.substr(5));
  try {
    ModelSpace f = read_space(is);
    require(f.depth() == N && f.branching() == S.b, "space.mass_profile", "weight file has a different tree shape");
    return f.weights();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("space.mass_profile", e.what());
  }
}

ModelSpace build_space(const SpaceCfg& S, int N) {
  auto w = mass_weights(S, N);
  try {
    switch (S.kind) {
      case SpaceKind::tree_boundary:
        return ModelSpace::tree_boundary(
            build_tree(S.b, N, S.delta, w.empty() ? MassProfile::uniform : MassProfile::custom, w), S.Q);
      case SpaceKind::unit_interval: return ModelSpace::unit_interval(S.b, N, w);
      case SpaceKind::cantor_set: return ModelSpace::cantor_set(N, w);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("space", e.what());
  }
  throw ConfigError("space.kind", "unknown kind");
}

RadialKernel build_kernel(const KernelCfg& K, const ModelSpace& sp) {
  if (K.general) return RadialKernel::general(K.levels);
  return RadialKernel::riesz(sp.Q(), K.s, K.rule);
}

std::string kind_name(SpaceKind k) {
  return k == SpaceKind::tree_boundary ? "tree" : k == SpaceKind::unit_interval ? "interval" : "cantor";
}

// ---------------------------------------------------------------- context

struct Ctx {
  const Config& cfg;
  const ModelSpace& space;
  const KernelOperator& K;
  Output& out;
  std::ostream& log;
  RunResult& res;
  int threads;

  CapacityOptions cap_opts() const {
    CapacityOptions o;
    o.tol = cfg.tol.objective;
    o.feas_slack = cfg.tol.feasibility;
    return o;
  }
  void check(Check c) {
    log << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << fmt_double(c.value)
        << " threshold=" << fmt_double(c.threshold) << (c.note.empty() ? "" : " (" + c.note + ")") << '\n';
    res.checks.push_back(std::move(c));
  }
  std::string s_cell() const { return cfg.kernel.general ? "" : fmt_double(cfg.kernel.s); }
};

// ---------------------------------------------------------------- subcommands

void cmd_space_info(Ctx& c) {
  const auto& sp = c.space;
  auto ah = ahlfors_constants(sp);
  Table t({"quantity", "value"});
  t.row({S("kind"), S(kind_name(sp.kind()))});
  t.row({S("b"), I(static_cast<std::size_t>(sp.branching()))});
  t.row({S("N"), I(static_cast<std::size_t>(sp.depth()))});
  t.row({S("delta"), sp.delta()});
  t.row({S("leaves"), I(sp.size())});
  t.row({S("Q"), sp.Q()});
  t.row({S("K1"), ah.K1});
  t.row({S("K2"), ah.K2});
  t.row({S("total_mass"), sp.total_mass()});
  t.row({S("kernel_norm_1"), c.K.norm_1()});
  c.out.write("space_info.csv", t.str());
  std::ostringstream ss;
  write_space(ss, sp);
  c.out.write("space.txt", ss.str());
  c.log << "leaves " << sp.size() << "\nQ " << fmt_double(sp.Q()) << "\nK1 " << fmt_double(ah.K1) << "\nK2 "
        << fmt_double(ah.K2) << '\n';
}

std::vector<Leaf> resolve_target(const Ctx& c, const Target& t) {
  const std::size_t n = c.space.size();
  auto in_range = [&](Leaf x) {
    if (x >= n) throw ConfigError("capacity.targets", "leaf index out of range in '" + t.spec + "'");
  };
  switch (t.kind) {
    case Target::singleton: in_range(t.center); return {t.center};
    case Target::ball: in_range(t.center); return leaves_of(c.space.ball(t.center, t.radius));
    case Target::closed_ball: in_range(t.center); return leaves_of(c.space.closed_ball(t.center, t.radius));
    case Target::leaves:
      for (Leaf x : t.set) in_range(x);
      return t.set;
  }
  return {};
}

void cmd_capacity(Ctx& c) {
  const double p = c.cfg.kernel.p;
  Table t({"set_id", "p", "s", "value", "gap", "iterations", "converged"});
  Table tg({"set_id", "spec", "size"});
  const auto opts = c.cap_opts();
  const std::string solver = c.cfg.capacity.solver;
  const auto& targets = c.cfg.capacity.targets;
  std::vector<std::vector<Leaf>> sets;
  for (const auto& tgt : targets) sets.push_back(resolve_target(c, tgt));
  struct Out {
    std::optional<CapacitySolution> primal, dual, exact;
  };
  std::vector<Out> res(targets.size());
  parallel_for(targets.size(), c.threads, [&](std::size_t i) {
    if (solver == "primal" || solver == "both") res[i].primal = capacity_primal(c.K, p, sets[i], opts);
    if (solver == "dual" || solver == "both") res[i].dual = capacity_dual(c.K, p, sets[i], opts);
    if (solver == "exact") res[i].exact = capacity_exact_quadratic(c.K, sets[i], opts);
  });
  double worst_closed = 0.0, worst_dual = 0.0;
  bool any_singleton = false, any_pair = false;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& tgt = targets[i];
    tg.row({S(tgt.id), S(tgt.spec), I(sets[i].size())});
    auto emit = [&](const std::string& suffix, const CapacitySolution& s) {
      t.row({S(tgt.id + suffix), p, S(c.s_cell()), s.value, s.relative_gap, I(static_cast<std::size_t>(s.iterations)),
             B(s.converged)});
      if (sets[i].size() == 1) {
        const double cf = singleton_capacity(c.K, p, sets[i][0]);
        worst_closed = std::max(worst_closed, std::abs(s.value - cf) / cf);
        any_singleton = true;
      }
    };
    const bool both = solver == "both";
    if (res[i].primal) emit(both ? ".primal" : "", *res[i].primal);
    if (res[i].dual) emit(both ? ".dual" : "", *res[i].dual);
    if (res[i].exact) emit("", *res[i].exact);
    if (res[i].primal && res[i].dual) {
      any_pair = true;
      const double a = res[i].primal->value, b = res[i].dual->value;
      worst_dual = std::max(worst_dual, std::abs(a - b) / std::max(a, b));
    }
  }
  c.out.write("capacity.csv", t.str());
  c.out.write("capacity_targets.csv", tg.str());
  if (any_singleton)
    c.check({"capacity.singleton_closed_form", worst_closed, c.cfg.tol.closed_form, worst_closed <= c.cfg.tol.closed_form,
             "max relative error"});
  if (any_pair)
    c.check({"capacity.primal_dual_agreement", worst_dual, c.cfg.tol.duality_gap, worst_dual <= c.cfg.tol.duality_gap,
             "max relative difference"});
}

void cmd_ball_profile(Ctx& c) {
  const auto& B_ = c.cfg.ball;
  if (static_cast<std::size_t>(B_.center) >= c.space.size())
    throw ConfigError("ball_profile.center", "leaf index out of range");
  CapacityEvaluator ev(c.K, c.cfg.kernel.p, c.cap_opts());
  auto prof = ball_capacity_profile(ev, static_cast<Leaf>(B_.center), B_.n_lo, B_.n_hi);
  Table t({"n", "radius", "capacity", "log_product"});
  for (std::size_t i = 0; i < prof.levels.size(); ++i)
    t.row({I(static_cast<std::size_t>(prof.levels[i])), prof.radii[i], prof.capacities[i],
           prof.capacities[i] * std::log(1.0 / prof.radii[i])});
  c.out.write("ball_profile.csv", t.str());
  Table s({"quantity", "value"});
  s.row({S("slope"), prof.slope});
  s.row({S("log_product_factor"), prof.log_product_factor()});
  const double p = c.cfg.kernel.p;
  if (!c.cfg.kernel.general) {
    const double crit = 1.0 / conjugate(p);
    const double expected = c.space.Q() * p * (c.cfg.kernel.s - crit);
    s.row({S("expected_slope"), expected});
    if (std::abs(c.cfg.kernel.s - crit) < 1e-12) {
      c.check({"ball_profile.critical_log_factor", prof.log_product_factor(), B_.log_factor,
               prof.log_product_factor() <= B_.log_factor, "max/min of C log(1/r)"});
    } else {
      const double rel = std::abs(prof.slope - expected) / expected;
      c.check({"ball_profile.slope", prof.slope, expected, rel <= B_.slope_tol,
               "relative deviation " + fmt_double(rel)});
    }
  }
  c.out.write("ball_profile_summary.csv", s.str());
  if (c.cfg.charts) {
    Series ser{"C(B(x, r))", prof.radii, prof.capacities};
    c.out.write("ball_profile.svg", line_chart({"ball capacity profile", "radius", "capacity", true, true}, {ser}));
  }
}

void cmd_quasiadd(Ctx& c) {
  const auto& Qc = c.cfg.quasi;
  const double p = c.cfg.kernel.p;
  const std::size_t n_seeds = static_cast<std::size_t>(Qc.seeds);
  std::vector<std::uint64_t> seeds(n_seeds);
  for (std::size_t i = 0; i < n_seeds; ++i) seeds[i] = derive_seed(c.cfg.seed, kQuasi, static_cast<std::uint32_t>(i));

  FamilyOptions fo;
  fo.mode = Qc.mode;
  fo.M = Qc.M;
  fo.level_lo = Qc.level_lo;
  if (Qc.mode == FamilyMode::ahlfors) {
    if (Qc.psi) {
      fo.psi = *Qc.psi;
    } else {
      CapacityEvaluator ev(c.K, p, c.cap_opts());
      auto est = estimate_psi(ev, Qc.M, seeds, static_cast<std::size_t>(Qc.count));
      Table t({"psi", "max_ratio", "families"});
      for (std::size_t i = 0; i < est.max_ratio.size(); ++i)
        t.row({est.grid[i], est.max_ratio[i], I(est.families[i])});
      c.out.write("psi_estimate.csv", t.str());
      if (!est.warning.empty()) c.log << "note: " << est.warning << '\n';
      fo.psi = est.psi;
      c.log << "psi estimate " << fmt_double(est.psi) << (est.stabilized ? "" : " (not stabilized)") << '\n';
    }
  }

  struct Item {
    std::vector<QuasiReport> reps;
    std::size_t short_families = 0;
  };
  std::vector<Item> items(n_seeds);
  parallel_for(n_seeds, c.threads, [&](std::size_t i) {
    CapacityEvaluator ev(c.K, p, c.cap_opts());
    auto fam = generate_separated_family(ev, static_cast<std::size_t>(Qc.count), seeds[i], fo);
    if (fam.short_family) items[i].short_families = 1;
    for (auto shape : Qc.shapes) {
      auto sets = family_sets(fam, shape, seeds[i]);
      items[i].reps.push_back(Qc.mode == FamilyMode::tree ? quasi_additivity_tree(ev, fam, sets)
                                                          : quasi_additivity_ahlfors(ev, fam, sets));
    }
  });

  Table t({"experiment_id", "mode", "J", "p", "s", "sum_cap", "union_cap", "ratio", "bound_A_or_psi", "pass"});
  bool all = true;
  double max_ratio = 0.0, min_ratio = std::numeric_limits<double>::infinity();
  std::size_t shorts = 0;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    shorts += items[i].short_families;
    for (std::size_t k = 0; k < items[i].reps.size(); ++k) {
      const auto& r = items[i].reps[k];
      t.row({S("s" + std::to_string(i) + "_" + to_string(Qc.shapes[k])), S(to_string(r.mode)), I(r.J), p,
             S(c.s_cell()), r.sum_cap, r.union_cap, r.ratio, r.bound, B(r.pass)});
      all = all && r.pass;
      max_ratio = std::max(max_ratio, r.ratio);
      min_ratio = std::min(min_ratio, r.ratio);
    }
  }
  c.out.write("quasiadd.csv", t.str());
  if (shorts) c.log << "note: " << shorts << " of " << n_seeds << " families came out short\n";
  if (Qc.mode == FamilyMode::tree) {
    const double A = theoretical_constant_A(c.K, p);
    c.check({"quasiadd.tree_bounds", max_ratio, A, all, "min ratio " + fmt_double(min_ratio)});
  } else {
    c.check({"quasiadd.lower_bound", min_ratio, 1.0, all, "max ratio " + fmt_double(max_ratio) + ", psi " + fmt_double(fo.psi)});
  }
}

std::vector<double> input_function(const ModelSpace& sp, const std::string& input, int cube_level, std::uint64_t seed) {
  if (input == "random") return random_cube_function(sp, std::min(cube_level, sp.depth()), seed);
  return profile_values(sp, parse_profile(input));
}

void cmd_poisson(Ctx& c) {
  const auto& Pc = c.cfg.poisson;
  const auto& sp = c.space;
  PoissonOperator P(sp, height_grid(sp, Pc.max_m));
  auto f = input_function(sp, Pc.input, Pc.cube_level, derive_seed(c.cfg.seed, kPoisson, 0));
  auto G = potential_field(P, c.K, f);
  Table fld({"leaf_index", "y", "value"});
  for (std::size_t iy = 0; iy < P.rows(); ++iy)
    for (Leaf x = 0; x < sp.size(); ++x) fld.row({I(x), P.heights()[iy], G.at(x, iy)});
  c.out.write("field.csv", fld.str());

  auto one = P.field(std::vector<double>(sp.size(), 1.0));
  double one_err = 0.0, cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
  for (double v : one.values) one_err = std::max(one_err, std::abs(v - 1.0));
  for (std::size_t iy = 0; iy < P.rows(); ++iy)
    for (Leaf x = 0; x < sp.size(); ++x) {
      cmin = std::min(cmin, P.normalization(x, iy));
      cmax = std::max(cmax, P.normalization(x, iy));
    }
  const int cal_depth = Pc.calibration_depth;
  ModelSpace cal_sp = cal_depth == sp.depth() ? sp : build_space(c.cfg.space, cal_depth);
  PoissonOperator Pcal(cal_sp, height_grid(cal_sp, Pc.max_m));
  const double R_cal = calibrate_normalization(Pcal);
  const double R_here = cal_depth == sp.depth() ? R_cal : calibrate_normalization(P);
  const double grid_ratio = cmax / cmin;

  Table rt({"quantity", "min", "max", "depth"});
  const auto N = I(static_cast<std::size_t>(sp.depth()));
  rt.row({S("pi_one"), one.min(), one.max(), N});
  rt.row({S("normalization_C"), cmin, cmax, N});
  rt.row({S("normalization_ratio_grid"), grid_ratio, grid_ratio, N});
  rt.row({S("normalization_bound_calibrated"), R_cal, R_cal, I(static_cast<std::size_t>(cal_depth))});
  rt.row({S("normalization_bound_calibrated"), R_here, R_here, N});
  rt.row({S("potential_field"), G.min(), G.max(), N});
  c.out.write("ratios.csv", rt.str());

  auto g = profile_values(sp, Profile::hat);
  auto cont = uniform_continuity_probe(P, g, Pc.continuity_eps);
  Table ct({"eps", "delta", "sup_error"});
  for (const auto& r : cont) ct.row({r.eps, r.delta ? Cell(*r.delta) : Cell(S("none")), r.sup_error});
  c.out.write("continuity.csv", ct.str());

  c.check({"poisson.pi_one", one_err, 1e-12, one_err <= 1e-12, "max |PI(1) - 1|"});
  c.check({"poisson.normalization_ratio", grid_ratio, R_cal, grid_ratio <= R_cal * (1 + 1e-12),
           "grid max/min of C against the calibrated bound"});
  const double drift = std::abs(R_here - R_cal) / R_cal;
  c.check({"poisson.calibration_stability", drift, Pc.stability, drift <= Pc.stability,
           "R* at depth " + std::to_string(sp.depth()) + " vs depth " + std::to_string(cal_depth)});
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const std::size_t k = std::min(v.size() - 1, static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size()))));
  return v[k];
}

void cmd_exchange(Ctx& c) {
  const auto& Ec = c.cfg.exchange;
  const auto& sp = c.space;
  const int cal_depth = Ec.calibration_depth;
  ModelSpace cal_sp = cal_depth == sp.depth() ? sp : build_space(c.cfg.space, cal_depth);
  KernelOperator Kcal(cal_sp, build_kernel(c.cfg.kernel, cal_sp));
  PoissonOperator Pcal(cal_sp);
  const Band band = calibrate_exchange(Pcal, Kcal);
  const double cH = calibrate_harnack(Pcal);
  PoissonOperator P(sp);

  const std::size_t ns = static_cast<std::size_t>(Ec.samples), nh = static_cast<std::size_t>(Ec.harnack_samples);
  std::vector<Band> ratios(ns);
  parallel_for(ns, c.threads, [&](std::size_t i) {
    auto f = random_cube_function(sp, std::min(Ec.cube_level, sp.depth()),
                                  derive_seed(c.cfg.seed, kExchange, static_cast<std::uint32_t>(i)));
    ratios[i] = exchange_ratio(P, c.K, f);
  });
  struct H {
    double eps = 0.0;
    HarnackResult r;
  };
  std::vector<H> harn(nh);
  parallel_for(nh, c.threads, [&](std::size_t i) {
    const std::uint64_t sd = derive_seed(c.cfg.seed, kHarnack, static_cast<std::uint32_t>(i));
    auto f = random_cube_function(sp, std::min(Ec.cube_level, sp.depth()), sd);
    auto G = potential_field(P, c.K, f);
    std::mt19937_64 rng(sd);
    const double q = std::uniform_real_distribution<double>(Ec.eps_lo, Ec.eps_hi)(rng);
    harn[i].eps = quantile(G.values, q);
    harn[i].r = harnack_check(sp, G, harn[i].eps, cH);
  });

  Table t({"quantity", "min", "max", "depth"});
  t.row({S("exchange_band_calibrated"), band.lo, band.hi, I(static_cast<std::size_t>(cal_depth))});
  t.row({S("harnack_constant_calibrated"), cH, cH, I(static_cast<std::size_t>(cal_depth))});
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 0; i < ns; ++i) {
    t.row({S("exchange_sample_" + std::to_string(i)), ratios[i].lo, ratios[i].hi,
           I(static_cast<std::size_t>(sp.depth()))});
    lo = std::min(lo, ratios[i].lo);
    hi = std::max(hi, ratios[i].hi);
  }
  c.out.write("exchange.csv", t.str());
  Table h({"sample_id", "eps", "min_value", "bound", "points", "pass"});
  bool hall = true;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nh; ++i) {
    const auto& r = harn[i].r;
    h.row({S("h" + std::to_string(i)), harn[i].eps, r.min_value, r.bound, I(r.points), B(r.pass)});
    hall = hall && r.pass;
    if (r.points) worst = std::min(worst, r.min_value / harn[i].eps);
  }
  c.out.write("harnack.csv", h.str());
  const double blo = band.lo * (1 - Ec.band_slack), bhi = band.hi * (1 + Ec.band_slack);
  c.check({"exchange.band", hi, bhi, lo >= blo && hi <= bhi,
           "measured [" + fmt_double(lo) + ", " + fmt_double(hi) + "] vs [" + fmt_double(blo) + ", " + fmt_double(bhi) + "]"});
  if (nh) c.check({"exchange.harnack", worst, cH, hall, "min over samples of min_{E'} PI(K*f) / eps"});
}

std::vector<Leaf> sample_leaves(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<Leaf> all(n);
  for (Leaf x = 0; x < n; ++x) all[x] = x;
  if (k >= n) return all;
  std::mt19937_64 rng(seed);
  std::vector<Leaf> out;
  std::sample(all.begin(), all.end(), std::back_inserter(out), static_cast<std::ptrdiff_t>(k), rng);
  return out;
}

void cmd_converge(Ctx& c) {
  const auto& Cc = c.cfg.converge;
  const auto& sp = c.space;
  PoissonOperator P(sp);
  CapacityEvaluator ev(c.K, c.cfg.kernel.p, c.cap_opts());
  auto f = profile_values(sp, parse_profile(Cc.profile), Cc.lipschitz_scale);
  SplitOptions so;
  so.A = Cc.split_A;
  auto split = approximation_split(P, ev, f, Cc.delta_target, so);
  auto t_grid = default_t_grid(P.heights());
  auto x0s = sample_leaves(sp.size(), static_cast<std::size_t>(Cc.samples), derive_seed(c.cfg.seed, kConverge, 0));

  std::vector<ApproachRegion> regs;
  for (Leaf x : x0s) {
    switch (Cc.region) {
      case RegionKind::polynomial: regs.push_back(polynomial_region(x, Cc.c, c.cfg.kernel.p, c.cfg.kernel.s)); break;
      case RegionKind::exponential: regs.push_back(exponential_region(x, Cc.c)); break;
      case RegionKind::eta_star: regs.push_back(eta_star_region(x, Cc.psi)); break;
      case RegionKind::nontangential: regs.push_back(nontangential_region(x)); break;
    }
  }
  auto nt = nontangential_experiment(P, c.K, f, x0s, t_grid, Cc.tol_nontangential, &split);
  auto tg = tangential_experiment(P, c.K, f, regs, t_grid, Cc.tol_tangential, &split, &ev);
  auto thin = thinness_decay(ev, split.E, P.heights(), t_grid);

  Table e({"x0_leaf", "region_kind", "t", "sup_error", "in_region_points", "excluded"});
  for (const auto* rep : {&nt, &tg})
    for (const auto& r : rep->rows)
      e.row({I(r.x0), S(to_string(rep->kind)), r.t, r.sup_error, I(r.points), B(r.excluded)});
  c.out.write("converge_experiment.csv", e.str());
  Table s({"experiment_id", "fraction_converged", "bad_set_mass", "thin_verdict"});
  const std::string verdict = thin.thin ? "thin" : "not_thin";
  s.row({S("nontangential"), nt.fraction_converged, nt.bad_mass.back(), S(verdict)});
  s.row({S("tangential_" + to_string(tg.kind)), tg.fraction_converged, tg.bad_mass.back(),
         S(tg.empty_at_resolution ? "empty_at_resolution" : verdict)});
  c.out.write("converge_summary.csv", s.str());
  Table sp_t({"quantity", "value"});
  sp_t.row({S("cap_E_star"), split.cap_E_star});
  sp_t.row({S("cap_F"), split.cap_F});
  sp_t.row({S("delta_target"), Cc.delta_target});
  sp_t.row({S("j_last"), I(static_cast<std::size_t>(split.j_last))});
  sp_t.row({S("reached_leaf_level"), B(split.reached_leaf_level)});
  for (const auto& m : split.modulus)
    sp_t.row({S("modulus_r_at_eps_" + fmt_double(m.eps)), m.r ? Cell(*m.r) : Cell(S("none"))});
  c.out.write("converge_split.csv", sp_t.str());
  Table th({"t", "capacity", "star_size"});
  for (std::size_t i = 0; i < thin.t.size(); ++i) th.row({thin.t[i], thin.capacity[i], I(thin.star_size[i])});
  c.out.write("converge_thinness.csv", th.str());

  if (c.cfg.charts) {
    std::vector<Series> ser;
    for (const auto* rep : {&nt, &tg}) {
      Series sr{to_string(rep->kind) + " max", rep->t_grid, std::vector<double>(rep->t_grid.size(), 0.0)};
      const std::size_t T = rep->t_grid.size();
      for (std::size_t i = 0; i < rep->rows.size(); ++i) sr.y[i % T] = std::max(sr.y[i % T], rep->rows[i].sup_error);
      ser.push_back(std::move(sr));
    }
    c.out.write("converge_error.svg", line_chart({"sup error vs t", "t", "sup error", true, true}, ser));
  }

  c.check({"converge.nontangential_fraction", nt.fraction_converged, Cc.fraction_nontangential,
           nt.fraction_converged >= Cc.fraction_nontangential, "tol " + fmt_double(Cc.tol_nontangential)});
  const bool tg_ok = tg.fraction_converged >= Cc.fraction_tangential && !tg.empty_at_resolution;
  c.check({"converge.tangential_fraction", tg.fraction_converged, Cc.fraction_tangential, tg_ok,
           tg.empty_at_resolution ? "region empty at this resolution" : "tol " + fmt_double(Cc.tol_tangential)});
  const double cap = std::max(split.cap_E_star, split.cap_F);
  c.check({"converge.excluded_capacity", cap, Cc.delta_target, split.within_target, "max of C(E*), C(F)"});
}

void dispatch(const std::string& sub, Ctx& c) {
  if (sub == "space-info") cmd_space_info(c);
  else if (sub == "capacity") cmd_capacity(c);
  else if (sub == "ball-profile") cmd_ball_profile(c);
  else if (sub == "quasiadd") cmd_quasiadd(c);
  else if (sub == "poisson") cmd_poisson(c);
  else if (sub == "exchange") cmd_exchange(c);
  else if (sub == "converge") cmd_converge(c);
  else if (sub == "full-suite") {
    for (const auto& s : subcommands())
      if (s != "full-suite") {
        c.log << "== " << s << '\n';
        dispatch(s, c);
      }
    Table t({"check", "value", "threshold", "pass"});
    for (const auto& ch : c.res.checks) t.row({S(ch.name), ch.value, ch.threshold, B(ch.pass)});
    c.out.write("suite.csv", t.str());
  } else {
    throw ConfigError("subcommand", "unknown subcommand '" + sub + "'");
  }
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunResult run(const std::string& subcommand, const RunOptions& opt, std::ostream& log) {
  if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end())
    throw ConfigError("subcommand", "unknown subcommand '" + subcommand + "'");
  if (opt.threads < 1) throw ConfigError("threads", "threads must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  Config cfg = parse_config(opt);
  ModelSpace space = build_space(cfg.space, cfg.space.N);
  std::unique_ptr<KernelOperator> K;
  try {
    K = std::make_unique<KernelOperator>(space, build_kernel(cfg.kernel, space));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("kernel", e.what());
  }

  RunResult res;
  Output out(cfg.out);
  Ctx ctx{cfg, space, *K, out, log, res, opt.threads};
  dispatch(subcommand, ctx);

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::ordered_json m;
  m["subcommand"] = subcommand;
  m["config_sha256"] = sha256_hex(cfg.canonical);
  m["seed"] = cfg.seed;
  m["versions"] = {{"potlab", potlab::version()},
                   {"compiler", __VERSION__},
                   {"eigen", eigen_version()},
                   {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) +
                                 "." + std::to_string(BOOST_VERSION % 100)},
                   {"openssl", OpenSSL_version(OPENSSL_VERSION)}};
  m["threads"] = opt.threads;
  m["wall_time_s"] = wall;
  m["timestamp"] = utc_timestamp();
  auto& outs = m["outputs"] = nlohmann::ordered_json::array();
  for (const auto& [name, hash] : out.hashes()) outs.push_back({{"file", name}, {"sha256", hash}});
  auto& checks = m["checks"] = nlohmann::ordered_json::array();
  for (const auto& ch : res.checks)
    checks.push_back({{"name", ch.name}, {"value", ch.value}, {"threshold", ch.threshold}, {"pass", ch.pass}});
  out.write("manifest.json", m.dump(2) + "\n");
  out.commit();
  res.files = out.files();
  return res;
}

int main_entry(const std::string& subcommand, const RunOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    auto res = run(subcommand, opt, out);
    const bool ok = res.all_pass();
    out << (ok ? "all checks passed" : "some checks failed") << " (" << res.checks.size() << " checks, "
        << res.files.size() << " files)\n";
    return ok ? 0 : 1;
  } catch (const ConfigError& e) {
    err << nlohmann::json{{"error", "invalid_config"}, {"key", e.key()}, {"message", e.what()}}.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << nlohmann::json{{"error", "runtime"}, {"message", e.what()}}.dump() << '\n';
    return 3;
  }
}

}  // namespace potlab::cli
