#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "potlab/convergence.hpp"
#include "potlab/quasiadd.hpp"
#include "potlab/version.hpp"

namespace py = pybind11;
using namespace potlab;

namespace {

ModelSpace make_space(const std::string& kind, int N, int b, std::optional<double> delta,
                      std::vector<double> weights) {
  switch (parse_space_kind(kind)) {
    case SpaceKind::tree_boundary:
      return ModelSpace::tree_boundary(build_tree(b, N, delta.value_or(0.5),
                                                  weights.empty() ? MassProfile::uniform : MassProfile::custom,
                                                  std::move(weights)));
    case SpaceKind::unit_interval:
      return ModelSpace::unit_interval(b, N, std::move(weights));
    case SpaceKind::cantor_set:
      return ModelSpace::cantor_set(N, std::move(weights));
  }
  throw std::invalid_argument("unknown space kind");
}

// field as (heights, rows of values)
py::tuple field_tuple(const UpperHalfField& G) {
  std::vector<std::vector<double>> rows(G.heights.size());
  for (std::size_t iy = 0; iy < rows.size(); ++iy) rows[iy].assign(G.row(iy), G.row(iy) + G.n);
  return py::make_tuple(G.heights, rows);
}

py::dict solution_dict(const CapacitySolution& s) {
  py::dict d;
  d["value"] = s.value;
  d["gap"] = s.relative_gap;
  d["iterations"] = s.iterations;
  d["converged"] = s.converged;
  d["f"] = s.f;
  d["mu"] = s.mu;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.attr("__version__") = version();

  py::class_<ModelSpace>(m, "Space")
      .def(py::init(&make_space), py::arg("kind") = "tree", py::arg("N") = 6, py::arg("b") = 2,
           py::arg("delta") = py::none(), py::arg("weights") = std::vector<double>{})
      .def_property_readonly("kind", [](const ModelSpace& s) { return to_string(s.kind()); })
      .def_property_readonly("Q", &ModelSpace::Q)
      .def_property_readonly("depth", &ModelSpace::depth)
      .def_property_readonly("branching", &ModelSpace::branching)
      .def_property_readonly("delta", &ModelSpace::delta)
      .def_property_readonly("weights", &ModelSpace::weights)
      .def("__len__", &ModelSpace::size)
      .def("distance", &ModelSpace::distance)
      .def("ball", [](const ModelSpace& s, Leaf x, double r) {
        auto b = s.ball(x, r);
        return py::make_tuple(b.lo, b.hi);
      })
      .def("ahlfors_constants", [](const ModelSpace& s) {
        auto a = ahlfors_constants(s);
        return py::make_tuple(a.K1, a.K2);
      })
      .def("__repr__", [](const ModelSpace& s) {
        return "Space(kind=" + to_string(s.kind()) + ", N=" + std::to_string(s.depth()) +
               ", leaves=" + std::to_string(s.size()) + ")";
      });

  py::class_<KernelOperator>(m, "Kernel")
      .def(py::init([](const ModelSpace& sp, double s) { return KernelOperator(sp, RadialKernel::riesz(sp.Q(), s)); }),
           py::arg("space"), py::arg("s"), py::keep_alive<1, 2>())
      .def_static(
          "from_levels",
          [](const ModelSpace& sp, std::vector<double> lv) { return KernelOperator(sp, RadialKernel::general(std::move(lv))); },
          py::arg("space"), py::arg("levels"), py::keep_alive<0, 1>())
      .def("value", &KernelOperator::value)
      .def("apply", &KernelOperator::apply, py::arg("f"))
      .def("apply_naive", &KernelOperator::apply_naive, py::arg("f"))
      .def("norm_1", &KernelOperator::norm_1)
      .def_property_readonly("diagonal", &KernelOperator::diagonal);

  m.def("lp_norm", &lp_norm, py::arg("space"), py::arg("f"), py::arg("p"));

  m.def(
      "capacity",
      [](const KernelOperator& op, double p, const std::vector<Leaf>& E, const std::string& solver) {
        if (solver == "primal") return solution_dict(capacity_primal(op, p, E));
        if (solver == "dual") return solution_dict(capacity_dual(op, p, E));
        if (solver == "exact") return solution_dict(capacity_exact_quadratic(op, E));
        throw std::invalid_argument("solver must be primal, dual or exact");
      },
      py::arg("kernel"), py::arg("p"), py::arg("E"), py::arg("solver") = "primal");
  m.def("singleton_capacity", &singleton_capacity, py::arg("kernel"), py::arg("p"), py::arg("x"));
  m.def(
      "ball_profile",
      [](const KernelOperator& op, double p, Leaf x, int n_lo, int n_hi) {
        CapacityEvaluator ev(op, p);
        auto bp = ball_capacity_profile(ev, x, n_lo, n_hi);
        py::dict d;
        d["radii"] = bp.radii;
        d["capacities"] = bp.capacities;
        d["slope"] = bp.slope;
        d["log_factor"] = bp.log_product_factor();
        return d;
      },
      py::arg("kernel"), py::arg("p"), py::arg("x"), py::arg("n_lo"), py::arg("n_hi"));

  m.def(
      "quasi_additivity",
      [](const KernelOperator& op, double p, std::size_t count, std::uint64_t seed, const std::string& shape) {
        CapacityEvaluator ev(op, p);
        auto fam = generate_separated_family(ev, count, seed);
        SetShape sh = shape == "singleton"      ? SetShape::singleton
                      : shape == "half_density" ? SetShape::half_density
                      : shape == "full_ball"    ? SetShape::full_ball
                                                : throw std::invalid_argument("unknown shape");
        auto r = quasi_additivity_tree(ev, fam, family_sets(fam, sh, seed));
        py::dict d;
        d["members"] = r.J;
        d["sum_cap"] = r.sum_cap;
        d["union_cap"] = r.union_cap;
        d["ratio"] = r.ratio;
        d["bound"] = r.bound;
        d["pass"] = r.pass;
        return d;
      },
      py::arg("kernel"), py::arg("p"), py::arg("count") = 6, py::arg("seed") = 0, py::arg("shape") = "full_ball");

  py::class_<PoissonOperator>(m, "Poisson")
      .def(py::init<const ModelSpace&>(), py::arg("space"), py::keep_alive<1, 2>())
      .def_property_readonly("heights", &PoissonOperator::heights)
      .def("integral", &PoissonOperator::integral_at, py::arg("f"), py::arg("x"), py::arg("y"))
      .def("field", [](const PoissonOperator& P, const std::vector<double>& f) { return field_tuple(P.field(f)); })
      .def("potential_field",
           [](const PoissonOperator& P, const KernelOperator& K, const std::vector<double>& f) {
             return field_tuple(potential_field(P, K, f));
           })
      .def("normalization_ratio", [](const PoissonOperator& P) { return normalization_ratio(P); })
      .def("calibrate_normalization", [](const PoissonOperator& P) { return calibrate_normalization(P); })
      .def("calibrate_harnack", [](const PoissonOperator& P) { return calibrate_harnack(P); })
      .def("exchange_band", [](const PoissonOperator& P, const KernelOperator& K) {
        auto b = calibrate_exchange(P, K);
        return py::make_tuple(b.lo, b.hi);
      });

  m.def("random_cube_function", &random_cube_function, py::arg("space"), py::arg("level"), py::arg("seed"));
  m.def(
      "profile",
      [](const ModelSpace& sp, const std::string& name) {
        Profile pr = name == "coordinate" ? Profile::coordinate
                     : name == "hat"      ? Profile::hat
                     : name == "bump"     ? Profile::bump
                                          : throw std::invalid_argument("unknown profile");
        return profile_values(sp, pr);
      },
      py::arg("space"), py::arg("name"));

  m.def(
      "approximation_split",
      [](const PoissonOperator& P, const KernelOperator& K, double p, const std::vector<double>& f, double target) {
        CapacityEvaluator ev(K, p);
        auto s = approximation_split(P, ev, f, target);
        py::dict d;
        d["cap_E_star"] = s.cap_E_star;
        d["cap_F"] = s.cap_F;
        d["j_last"] = s.j_last;
        d["within_target"] = s.within_target;
        return d;
      },
      py::arg("poisson"), py::arg("kernel"), py::arg("p"), py::arg("f"), py::arg("target"));
  m.def(
      "nontangential_fraction",
      [](const PoissonOperator& P, const KernelOperator& K, const std::vector<double>& f, const std::vector<Leaf>& x0s,
         double tol) {
        return nontangential_experiment(P, K, f, x0s, default_t_grid(P.heights()), tol).fraction_converged;
      },
      py::arg("poisson"), py::arg("kernel"), py::arg("f"), py::arg("x0s"), py::arg("tol"));
}
