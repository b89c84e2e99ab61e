#include <doctest.h>

#include <cmath>

#include "dualgrad/analysis.hpp"
#include "dualgrad/problems.hpp"
#include "dualgrad/random.hpp"
#include "dualgrad/solver.hpp"

using namespace dualgrad;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<RatePoint> power_law(double c, double p, int count) {
  std::vector<RatePoint> pts;
  for (int i = 0; i < count; ++i) {
    const double d = std::pow(10.0, -1.0 - 0.5 * i);
    pts.push_back({d, c * std::pow(d, p), 0, ErrorMeasure::norm});
  }
  return pts;
}

}  // namespace

TEST_CASE("construct_source_solution") {
  const auto op = LinearOperator::diagonal(vec({2, 1, 0.5}));
  const Vector lam = vec({1, -1, 2});
  CHECK(construct_source_solution(op, *make_quadratic(), lam) == vec({2, -1, 1}));
  const auto nn = make_projected_quadratic(ConstraintSet::nonneg_orthant());
  CHECK(construct_source_solution(op, *nn, lam) == vec({2, 0, 1}));
  const auto ent = make_entropy_simplex(Vector::Ones(3));
  const Vector x = construct_source_solution(op, *ent, lam);
  const Vector xi = op.apply_adjoint(lam);
  CHECK(fenchel_young_residual(*ent, x, xi) <= 1e-8);
  const Vector gap = (1.0 + x.array().log()).matrix() - xi;
  CHECK(gap.maxCoeff() - gap.minCoeff() <= 1e-14);
}

TEST_CASE("fractional normal powers") {
  const auto op = LinearOperator::diagonal(vec({3, 1}));
  CHECK((apply_normal_power(op, 1.0, vec({1, 1})) - vec({3, 1})).norm() <= 1e-14);
  CHECK((apply_normal_power(op, 0.5, vec({1, 1})) - vec({std::sqrt(3.0), 1})).norm() <= 1e-14);
  Rng rng(2);
  const Vector a = rng.uniform_vector(12, 0.01, 2.0);
  const auto d = LinearOperator::diagonal(a);
  const Vector omega = rng.normal_vector(12);
  for (double nu : {0.25, 0.5, 0.9}) {
    const Vector expected = (a.array().pow(nu) * omega.array()).matrix();
    CHECK((apply_normal_power(d, nu, omega) - expected).norm() <= 1e-13);
  }
  const auto w = ConstraintSet::nonneg_orthant();
  CHECK(construct_projected_power_solution(op, 1.0, vec({1, -1}), w) == vec({3, 0}));
  CHECK_THROWS(apply_normal_power(op, 0.0, vec({1, 1})));
  CHECK_THROWS(apply_normal_power(op, 1.5, vec({1, 1})));

  // weighted geometry: applying the nu = 1 power twice gives A*A
  const auto f = build_fredholm([](double s, double t) { return std::exp(-5 * (s - t) * (s - t)); }, 30,
                                Quadrature::trapezoid);
  const Vector z = rng.normal_vector(30);
  const Vector twice = apply_normal_power(f, 1.0, apply_normal_power(f, 1.0, z));
  const Vector direct = f.apply_adjoint(f.apply(z));
  CHECK((twice - direct).norm() <= 1e-10 * direct.norm());
}

TEST_CASE("error measures") {
  const auto q = make_quadratic();
  const Vector x = vec({1, 2, 3});
  CHECK(error_measure(ErrorMeasure::norm, *q, x, x) == 0.0);
  CHECK(error_measure(ErrorMeasure::bregman, *q, vec({1, 0}), vec({0, 0}), vec({0, 0})) == 0.5);
  CHECK(error_measure(ErrorMeasure::norm_sq_half, *q, vec({1, 2}), vec({0, 0})) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(error_measure(ErrorMeasure::l1, *q, vec({1, -2}), vec({0, 0})) == 3.0);
  const auto e = make_entropy_simplex(Vector::Ones(2));
  const double kl = error_measure(ErrorMeasure::kl, *e, vec({0.5, 0.5}), vec({0.25, 0.75}));
  CHECK(kl == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-14));
  CHECK(error_measure(ErrorMeasure::kl, *e, vec({0.5, 0.5}), vec({0.0, 1.0})) == kInfinity);
  CHECK_THROWS(error_measure(ErrorMeasure::bregman, *q, x, x));
  CHECK(parse_error_measure("kl") == ErrorMeasure::kl);
  CHECK_FALSE(parse_error_measure("lp"));
}

TEST_CASE("eta oracle: bounds, monotonicity and agreement of the two solvers") {
  const ProblemInstance inst = make_problem("diag_synthetic", 30, 0);
  const double gamma = 1.0;
  const double upper = inst.penalty->evaluate(inst.x_true) + inst.penalty->conjugate_value(Vector::Zero(30));
  double previous = kInfinity;
  for (std::int64_t n : {0, 1, 3, 10, 30, 100, 1000, 10000}) {
    const EtaResult r = eta_oracle(n, gamma, 1.0 / 3.0, inst.op, inst.y_exact, *inst.penalty, inst.x_true);
    CHECK(r.exact);
    CHECK(r.value >= 0.0);
    CHECK(r.value <= upper);
    CHECK(r.value <= previous);
    previous = r.value;
  }
  const auto generic = make_projected_quadratic(ConstraintSet::whole_space());
  for (std::int64_t n : {5, 50, 500}) {
    const EtaResult a = eta_oracle(n, gamma, 0.5, inst.op, inst.y_exact, *inst.penalty, inst.x_true);
    const EtaResult b = eta_oracle(n, gamma, 0.5, inst.op, inst.y_exact, *generic, inst.x_true);
    CHECK(b.converged);
    CHECK_FALSE(b.exact);
    CHECK(b.value <= a.value + 1e-12);
    CHECK(b.upper >= a.value - 1e-12);
    CHECK(std::abs(a.value - b.value) <= 1e-8);
  }
}

TEST_CASE("eta oracle on the entropy penalty is certified by the duality gap") {
  const ProblemInstance inst = make_problem("density_recovery", 40, 1);
  const double upper = inst.penalty->evaluate(inst.x_true) + inst.penalty->conjugate_value(Vector::Zero(40));
  double previous = kInfinity;
  for (std::int64_t n : {1, 10, 100, 1000}) {
    const EtaResult r = eta_oracle(n, 1.0, 1.0 / 3.0, inst.op, inst.y_exact, *inst.penalty, inst.x_true);
    CHECK(r.converged);
    CHECK(r.gap <= 1e-9);
    CHECK(r.value >= 0.0);
    CHECK(r.value <= upper + 1e-12);
    CHECK(r.value <= previous + 1e-9);
    previous = r.value;
  }
}

TEST_CASE("eta decay under the dual source condition") {
  const ProblemInstance inst = make_problem("diag_synthetic", 50, 0);
  const double L = lipschitz_constant(penalty_operator_norm(inst.op, *inst.penalty), inst.penalty->sigma());
  const QuadraticEta eta(inst.op, inst.x_true);
  std::vector<double> n1, values;
  for (int k = 0; k <= 12; ++k) {
    const double n = std::round(10.0 * std::pow(1000.0, k / 12.0));
    n1.push_back(n + 1);
    values.push_back(eta(1.0 / 3.0 / L * (n + 1)));
  }
  CHECK(fit_loglog(n1, values).slope <= -0.9);
}

TEST_CASE("fit_rate examples") {
  const RateFit a = fit_rate(power_law(1.0, 0.5, 6));
  CHECK(std::abs(a.slope - 0.5) < 1e-12);
  CHECK(a.r_squared == doctest::Approx(1.0));
  const RateFit b = fit_rate(power_law(3.0, 1.0, 5));
  CHECK(std::abs(b.slope - 1.0) < 1e-12);
  CHECK(b.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  for (double p : {0.25, 0.7, 1.3}) CHECK(std::abs(fit_rate(power_law(0.2, p, 7)).slope - p) < 1e-12);

  Rng rng(11);
  std::vector<RatePoint> jitter = power_law(1.0, 0.5, 9);
  for (auto& pt : jitter) pt.error *= 1.0 + 0.05 * (2.0 * rng.uniform() - 1.0);
  const RateFit j = fit_rate(jitter);
  CHECK(j.slope >= 0.45);
  CHECK(j.slope <= 0.55);
}

TEST_CASE("fit_rate exclusions and errors") {
  std::vector<RatePoint> pts = power_law(1.0, 0.5, 5);
  pts[2].error = 0.0;
  const RateFit f = fit_rate(pts);
  CHECK(f.points_used == 4);
  CHECK(f.points_excluded == 1);
  CHECK(f.warnings.size() == 1);
  CHECK(std::abs(f.slope - 0.5) < 1e-12);
  CHECK_THROWS(fit_rate(power_law(1.0, 0.5, 2)));
}

TEST_CASE("trimmed fit drops the largest delta only when R^2 improves") {
  std::vector<RatePoint> clean = power_law(1.0, 0.5, 5);
  const TrimmedRateFit t0 = fit_rate_trimmed(clean);
  CHECK_FALSE(t0.used_trimmed);
  REQUIRE(t0.without_largest);
  std::vector<RatePoint> bent = clean;
  bent[0].error *= 8.0;  // pre-asymptotic outlier at the largest delta
  for (std::size_t i = 1; i < bent.size(); ++i) bent[i].error *= 1.0 + 0.01 * static_cast<double>(i % 2);
  const TrimmedRateFit t1 = fit_rate_trimmed(bent);
  CHECK(t1.used_trimmed);
  CHECK(t1.chosen().points_used == 4);
  CHECK(std::abs(t1.chosen().slope - 0.5) < 0.02);
  CHECK_FALSE(fit_rate_trimmed(power_law(1.0, 0.5, 3)).without_largest);
}

TEST_CASE("variational source condition margins") {
  const ProblemInstance inst = make_problem("gravity_fredholm", 60, 2);
  const auto& lam = std::get<DualElementSource>(inst.source).lambda_dagger;
  const VscReport zero = variational_sc_margin(inst.op, *inst.penalty, inst.x_true, lam.norm(), 1.0,
                                               VscMeasure::bregman, 1, 1, inst.xi_true);
  CHECK(std::abs(zero.min_slack) <= 1e-12);
  const VscReport full = variational_sc_margin(inst.op, *inst.penalty, inst.x_true, lam.norm(), 1.0,
                                               VscMeasure::bregman, 500, 3, inst.xi_true);
  CHECK(full.samples == 500);
  CHECK(full.min_slack >= -1e-8);

  // projected case nu = 1: c_nu ||omega|| ||Ax - y||
  const ProblemInstance dec = make_problem("deconv_nonneg", 60, 3);
  const auto& lam2 = std::get<DualElementSource>(dec.source).lambda_dagger;
  const VscReport proj = variational_sc_margin(dec.op, *dec.penalty, dec.x_true,
                                               projected_source_constant(1.0) * lam2.norm(), 1.0,
                                               VscMeasure::quarter_norm_sq, 500, 4, dec.xi_true);
  CHECK(proj.min_slack >= -1e-8);

  const ProblemInstance den = make_problem("density_recovery", 60, 4);
  const auto& lam3 = std::get<EntropicSource>(den.source).lambda_dagger;
  const VscReport ent = variational_sc_margin(den.op, *den.penalty, den.x_true, lam3.norm(), 1.0,
                                              VscMeasure::half_l1_sq, 500, 5, den.xi_true);
  CHECK(ent.min_slack >= -1e-8);
}

TEST_CASE("projected source constant") {
  CHECK(projected_source_constant(1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(projected_source_constant(0.5) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK_THROWS(projected_source_constant(0.0));
}

TEST_CASE("KL-L1 bound") {
  Rng rng(12);
  for (Index n : {2, 5, 40}) {
    const Vector w = rng.uniform_vector(n, 0.5, 1.5) / static_cast<double>(n);
    CHECK(kl_l1_bound_check(w, 1000, 7, true).max_violation <= 1e-10);
    CHECK(kl_l1_bound_check(w, 1000, 8, false).max_violation <= 1e-10);
  }
}
