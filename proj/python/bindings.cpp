#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>

#include "sepdiff/commands.hpp"
#include "sepdiff/diffusion.hpp"
#include "sepdiff/error.hpp"
#include "sepdiff/generator.hpp"
#include "sepdiff/kernel.hpp"
#include "sepdiff/montecarlo.hpp"
#include "sepdiff/sobolev.hpp"
#include "sepdiff/statespace.hpp"

namespace py = pybind11;
using namespace sepdiff;

namespace {

JumpKernel make_kernel(int dimension, const std::vector<std::pair<Site, double>>& entries) {
  std::vector<JumpEntry> out;
  for (const auto& [z, p] : entries) out.push_back({z, p});
  JumpKernel k(dimension, std::move(out));
  validate(k);
  return k;
}

SolverOptions solver_options(const std::string& method, double tol) {
  SolverOptions o;
  o.tol = tol;
  if (method == "dense") o.choice = SolverChoice::Dense;
  else if (method == "iterative") o.choice = SolverChoice::Iterative;
  else if (method != "auto") throw py::value_error("method must be auto, dense or iterative");
  return o;
}

py::dict direction_dict(const DirectionReport& r) {
  py::dict d;
  d["direction"] = r.direction;
  d["free_term"] = r.free_term;
  d["pairing"] = r.pairing;
  d["correction"] = r.correction;
  d["value"] = r.value;
  d["alternate_value"] = r.alternate_value;
  d["sign"] = r.sign;
  d["residual"] = r.residual;
  d["method"] = std::string(to_string(r.method));
  return d;
}

}  // namespace

PYBIND11_MODULE(_sepdiff, m) {
  m.doc() = "Tagged particle diffusion in exclusion processes on the torus";
  m.attr("__version__") = SEPDIFF_VERSION;

  static py::exception<Error> error_type(m, "SepdiffError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = error_type;
      py::object inst = err(e.what());
      inst.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  py::class_<JumpKernel>(m, "JumpKernel")
      .def(py::init(&make_kernel), py::arg("dimension"), py::arg("entries"),
           "entries: list of (z, p) pairs; validated on construction")
      .def_static("symmetric_nearest_neighbor", &JumpKernel::symmetric_nearest_neighbor, py::arg("dimension"))
      .def_property_readonly("dimension", &JumpKernel::dimension)
      .def_property_readonly("range", &JumpKernel::range)
      .def_property_readonly("entries",
                             [](const JumpKernel& k) {
                               std::vector<std::pair<Site, double>> out;
                               for (const auto& e : k.entries()) out.emplace_back(e.z, e.p);
                               return out;
                             })
      .def("mean", &JumpKernel::mean)
      .def("second_moment", [](const JumpKernel& k, std::vector<double> a) { return k.second_moment(a); })
      .def("classify", [](const JumpKernel& k) { return std::string(to_string(classify(k).kind)); });

  py::class_<TorusGeometry>(m, "TorusGeometry")
      .def(py::init<int, int>(), py::arg("dimension"), py::arg("half_width"))
      .def_property_readonly("dimension", &TorusGeometry::dimension)
      .def_property_readonly("half_width", &TorusGeometry::half_width)
      .def_property_readonly("site_count", &TorusGeometry::site_count);

  py::class_<StateSpace>(m, "StateSpace")
      .def(py::init<TorusGeometry, int, int, std::uint64_t>(), py::arg("geometry"), py::arg("total_particles"),
           py::arg("kernel_range"), py::arg("size_cap") = kDefaultStateCap)
      .def_property_readonly("size", &StateSpace::size)
      .def_property_readonly("density", &StateSpace::density)
      .def_property_readonly("total_particles", &StateSpace::total_particles)
      .def("occupied_sites", [](const StateSpace& s, std::uint64_t i) {
        std::vector<Site> out;
        for (int e : s.unrank(i).occupied()) out.push_back(s.geometry().env_site(e));
        return out;
      });

  py::class_<SparseOperator>(m, "SparseOperator")
      .def_property_readonly("size", &SparseOperator::size)
      .def_property_readonly("nonzeros", &SparseOperator::nonzeros)
      .def("to_dense", &SparseOperator::to_dense)
      .def("apply", [](const SparseOperator& op, std::vector<double> x) {
        if (x.size() != op.size()) throw py::value_error("vector length does not match operator size");
        return op.apply(x);
      });

  m.def("full_generator", [](const StateSpace& s, const JumpKernel& k) { return full_generator(s, k); });
  m.def("environment_generator", [](const StateSpace& s, const JumpKernel& k) { return assemble_environment(s, k); });
  m.def("tagged_generator", [](const StateSpace& s, const JumpKernel& k) { return assemble_tagged(s, k); });
  m.def("adjoint", &adjoint);
  m.def("symmetric_part", &symmetric_part);
  m.def("antisymmetric_part", &antisymmetric_part);

  m.def(
      "spectral_gap",
      [](const SparseOperator& l, const std::string& method, double tol) {
        return spectral_gap(l, solver_options(method, tol));
      },
      py::arg("generator"), py::arg("method") = "auto", py::arg("tol") = 1e-10);
  m.def(
      "sector_constant",
      [](const SparseOperator& l, const std::string& method, double tol) {
        return sector_constant(l, solver_options(method, tol)).constant;
      },
      py::arg("generator"), py::arg("method") = "auto", py::arg("tol") = 1e-10);
  m.def(
      "hminus1_norm",
      [](const SparseOperator& l, std::vector<double> f, const std::string& method, double tol) {
        return hminus1_norm(l, f, solver_options(method, tol));
      },
      py::arg("generator"), py::arg("f"), py::arg("method") = "auto", py::arg("tol") = 1e-10);
  m.def(
      "solve",
      [](const SparseOperator& l, std::vector<double> b, const std::string& method, double tol) {
        return solve_general(l, b, solver_options(method, tol)).solution;
      },
      py::arg("generator"), py::arg("b"), py::arg("method") = "auto", py::arg("tol") = 1e-10,
      "Mean-zero solution u of (-L) u = b for mean-zero b");

  m.def(
      "compute_D",
      [](const StateSpace& s, const JumpKernel& k, std::vector<double> a, int sign, const std::string& method) {
        DiffusionOptions o;
        o.correction_sign = sign;
        o.solver = solver_options(method, 1e-10);
        return direction_dict(compute_D(s, k, a, o).directions.front());
      },
      py::arg("space"), py::arg("kernel"), py::arg("direction"), py::arg("sign") = kDefaultCorrectionSign,
      py::arg("method") = "auto");
  m.def(
      "compute_D_matrix",
      [](const StateSpace& s, const JumpKernel& k, int sign, const std::string& method) {
        DiffusionOptions o;
        o.correction_sign = sign;
        o.solver = solver_options(method, 1e-10);
        return compute_D_matrix(s, k, o).matrix;
      },
      py::arg("space"), py::arg("kernel"), py::arg("sign") = kDefaultCorrectionSign, py::arg("method") = "auto");

  m.def(
      "estimate_diffusion",
      [](const StateSpace& s, const JumpKernel& k, double horizon, std::size_t replicas, std::uint64_t seed,
         int threads) {
        MCOptions o;
        o.horizon = horizon;
        o.replicas = replicas;
        o.seed = seed;
        o.threads = threads;
        MCEstimate e;
        {
          py::gil_scoped_release release;
          e = estimate_diffusion(s, k, o);
        }
        py::dict d;
        d["expected_drift"] = e.expected_drift;
        d["drift"] = e.first.drift;
        d["covariance"] = e.first.covariance;
        d["covariance_se"] = e.first.covariance_se;
        d["covariance_2t"] = e.second.covariance;
        d["covariance_se_2t"] = e.second.covariance_se;
        d["positions"] = e.positions_t;
        return d;
      },
      py::arg("space"), py::arg("kernel"), py::arg("horizon") = 100.0, py::arg("replicas") = 10000,
      py::arg("seed") = 1, py::arg("threads") = 1);

  m.def("replica_seed", &replica_seed, py::arg("master"), py::arg("replica"));

  m.def(
      "run_command",
      [](const std::string& command, const std::string& config, const std::string& out, int threads) {
        CommandContext ctx;
        ctx.out_dir = out;
        ctx.threads = threads;
        return run_command(command, config, ctx, std::cerr);
      },
      py::arg("command"), py::arg("config"), py::arg("out") = ".", py::arg("threads") = 1,
      "Runs a CLI subcommand and returns its exit code");
}
