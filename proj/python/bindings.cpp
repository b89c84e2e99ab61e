#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dualgrad/analysis.hpp"
#include "dualgrad/experiment.hpp"
#include "dualgrad/problems.hpp"
#include "dualgrad/solver.hpp"

namespace py = pybind11;
using namespace dualgrad;

namespace {

struct RunResult {
  Vector x;
  Vector lambda;
  std::int64_t n_stop = 0;
  std::string termination;
  double gamma = 0.0;
  std::vector<double> residuals;
  std::vector<double> dual_values;
  std::vector<Vector> iterates;
};

RunResult convert(const RunRecord& r) {
  RunResult out{r.final_iterate.x, r.final_iterate.lambda, r.stop_index, std::string(to_string(r.termination)),
                r.gamma, {}, {}, {}};
  for (const auto& t : r.trace) {
    out.residuals.push_back(t.residual_norm);
    out.dual_values.push_back(t.dual_value);
  }
  for (const auto& it : r.iterates) out.iterates.push_back(it.x);
  return out;
}

SolveOptions options(double gamma, std::optional<std::int64_t> n_max, std::optional<double> delta, double tau,
                     std::int64_t n_cap, std::int64_t record_every, double alpha) {
  SolveOptions o;
  o.gamma = gamma;
  if (delta)
    o.stop = StoppingRule::discrepancy(tau, *delta, n_cap);
  else if (n_max)
    o.stop = StoppingRule::a_priori(*n_max);
  else
    throw std::invalid_argument("give n_max for a fixed count or delta for the discrepancy principle");
  o.record_every = record_every;
  o.alpha = alpha;
  return o;
}

ErrorMeasure measure(const std::string& name) {
  auto m = parse_error_measure(name);
  if (!m) throw std::invalid_argument("unknown error measure " + name);
  return *m;
}

}  // namespace

PYBIND11_MODULE(_dualgrad, m) {
  m.doc() = "Dual gradient methods for linear ill-posed problems";

  py::class_<LinearOperator>(m, "LinearOperator")
      .def_static("dense", py::overload_cast<Matrix>(&LinearOperator::dense), py::arg("matrix"))
      .def_static("dense_weighted", py::overload_cast<Matrix, Vector>(&LinearOperator::dense), py::arg("matrix"),
                  py::arg("weights"))
      .def_static("diagonal", &LinearOperator::diagonal, py::arg("d"))
      .def_static("identity", &LinearOperator::identity, py::arg("n"))
      .def("apply", &LinearOperator::apply)
      .def("apply_adjoint", &LinearOperator::apply_adjoint)
      .def("to_dense", &LinearOperator::to_dense)
      .def_property_readonly("domain_dim", &LinearOperator::domain_dim)
      .def_property_readonly("range_dim", &LinearOperator::range_dim)
      .def_property_readonly("domain_weights", &LinearOperator::domain_weights);

  py::class_<ConstraintSet>(m, "ConstraintSet")
      .def_static("whole_space", &ConstraintSet::whole_space)
      .def_static("nonneg_orthant", &ConstraintSet::nonneg_orthant)
      .def_static("box", &ConstraintSet::box, py::arg("lo"), py::arg("hi"))
      .def_static("simplex", &ConstraintSet::simplex, py::arg("mass") = 1.0, py::arg("weights") = Vector())
      .def("project", &ConstraintSet::project)
      .def("contains", &ConstraintSet::contains, py::arg("x"), py::arg("tol") = 1e-12);

  py::class_<Penalty, std::shared_ptr<Penalty>>(m, "Penalty")
      .def("evaluate", &Penalty::evaluate)
      .def("conjugate_grad", &Penalty::conjugate_grad)
      .def("conjugate_value", &Penalty::conjugate_value)
      .def("bregman", &Penalty::bregman, py::arg("xbar"), py::arg("x"), py::arg("xi"))
      .def_property_readonly("sigma", &Penalty::sigma)
      .def_property_readonly("kind", [](const Penalty& p) { return std::string(to_string(p.kind())); });

  m.def("quadratic", &make_quadratic, py::arg("weights") = Vector());
  m.def("projected_quadratic", &make_projected_quadratic, py::arg("constraint"), py::arg("weights") = Vector());
  m.def("entropy_simplex", &make_entropy_simplex, py::arg("weights"));
  m.def("elastic_net", &make_elastic_net, py::arg("alpha"), py::arg("beta"), py::arg("weights") = Vector());

  py::class_<ProblemInstance>(m, "Problem")
      .def_readonly("name", &ProblemInstance::name)
      .def_readonly("op", &ProblemInstance::op)
      .def_readonly("x_true", &ProblemInstance::x_true)
      .def_readonly("y_exact", &ProblemInstance::y_exact)
      .def_readonly("xi_true", &ProblemInstance::xi_true)
      .def_readonly("penalty", &ProblemInstance::penalty);

  m.def("list_problems", &list_problems);
  m.def("make_problem", py::overload_cast<std::string_view, Index, std::uint64_t>(&make_problem), py::arg("name"),
        py::arg("n") = 200, py::arg("seed") = 0);
  m.def(
      "add_noise", [](const Vector& y, double delta, std::uint64_t seed) { return add_noise(y, delta, seed).ydelta; },
      py::arg("y"), py::arg("delta"), py::arg("seed"));
  m.def(
      "estimate_norm", [](const LinearOperator& op) { return estimate_norm(op).value; }, py::arg("op"));

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("x", &RunResult::x)
      .def_readonly("lam", &RunResult::lambda)
      .def_readonly("n_stop", &RunResult::n_stop)
      .def_readonly("termination", &RunResult::termination)
      .def_readonly("gamma", &RunResult::gamma)
      .def_readonly("residuals", &RunResult::residuals)
      .def_readonly("dual_values", &RunResult::dual_values)
      .def_readonly("iterates", &RunResult::iterates);

  auto bind_solver = [&m](const char* name, auto solver) {
    m.def(
        name,
        [solver](const LinearOperator& op, const Vector& y, const Penalty& p, double gamma,
                 std::optional<std::int64_t> n_max, std::optional<double> delta, double tau, std::int64_t n_cap,
                 std::int64_t record_every, double alpha) {
          return convert(solver(op, y, p, options(gamma, n_max, delta, tau, n_cap, record_every, alpha)));
        },
        py::arg("op"), py::arg("y"), py::arg("penalty"), py::arg("gamma"), py::arg("n_max") = py::none(),
        py::arg("delta") = py::none(), py::arg("tau") = 1.5, py::arg("n_cap") = 1'000'000,
        py::arg("record_every") = 0, py::arg("alpha") = 3.0);
  };
  bind_solver("dual_gradient_solve", &dual_gradient_solve);
  bind_solver("primal_form_solve", &primal_form_solve);
  bind_solver("accelerated_solve", &accelerated_solve);
  m.def(
      "entropic_landweber_solve",
      [](const LinearOperator& op, const Vector& y, double gamma, std::optional<std::int64_t> n_max,
         std::optional<double> delta, double tau, std::int64_t n_cap, std::int64_t record_every) {
        return convert(entropic_landweber_solve(op, y, options(gamma, n_max, delta, tau, n_cap, record_every, 3.0)));
      },
      py::arg("op"), py::arg("y"), py::arg("gamma"), py::arg("n_max") = py::none(), py::arg("delta") = py::none(),
      py::arg("tau") = 3.0, py::arg("n_cap") = 1'000'000, py::arg("record_every") = 0);

  m.def("dual_objective", &dual_objective, py::arg("penalty"), py::arg("op"), py::arg("lam"), py::arg("y"));
  m.def(
      "error_measure",
      [](const std::string& name, const Penalty& p, const Vector& x, const Vector& xref, const Vector& xi_ref) {
        return error_measure(measure(name), p, x, xref, xi_ref);
      },
      py::arg("measure"), py::arg("penalty"), py::arg("x"), py::arg("xref"), py::arg("xi_ref") = Vector());
  m.def(
      "eta",
      [](std::int64_t n, double gamma, double coeff, const LinearOperator& op, const Vector& y, const Penalty& p,
         const Vector& x_dagger) {
        const EtaResult r = eta_oracle(n, gamma, coeff, op, y, p, x_dagger);
        return py::make_tuple(r.value, r.upper);
      },
      py::arg("n"), py::arg("gamma"), py::arg("coeff"), py::arg("op"), py::arg("y"), py::arg("penalty"),
      py::arg("x_dagger"));
  m.def(
      "fit_rate",
      [](const std::vector<double>& deltas, const std::vector<double>& errors) {
        const RateFit f = fit_loglog(deltas, errors);
        return py::make_tuple(f.slope, f.intercept, f.r_squared);
      },
      py::arg("deltas"), py::arg("errors"));

  m.def(
      "validate_config", [](const std::string& text) { return validate_config(Json::parse(text, nullptr, true, true)); },
      py::arg("config_json"));
  m.def(
      "rate_study",
      [](const std::string& text, const std::string& out_dir, int jobs) {
        const StudyResult s = run_rate_study(parse_config(Json::parse(text, nullptr, true, true)), out_dir, jobs);
        py::dict fits;
        for (const auto& f : s.fits) {
          if (!f.fit) continue;
          const RateFit& r = f.fit->chosen();
          fits[py::str(std::string(to_string(f.measure)))] = py::make_tuple(r.slope, r.r_squared);
        }
        return fits;
      },
      py::arg("config_json"), py::arg("out_dir") = "", py::arg("jobs") = 1);
}
