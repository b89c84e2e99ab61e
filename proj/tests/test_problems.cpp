#include <doctest.h>

#include <cmath>

#include "dualgrad/penalty.hpp"
#include "dualgrad/problems.hpp"
#include "dualgrad/random.hpp"

using namespace dualgrad;

TEST_CASE("add_noise contract") {
  Rng rng(1);
  const Vector y = rng.normal_vector(50);
  const NoisyData z = add_noise(y, 0.0, 3);
  CHECK(z.ydelta == y);
  for (double delta : {1e-8, 1e-3, 0.7}) {
    const NoisyData d = add_noise(y, delta, 5);
    CHECK(std::abs((d.ydelta - y).norm() - delta) <= 1e-14 * std::max(delta, y.norm()));
    CHECK(std::abs((d.ydelta - y).norm() / delta - 1.0) <= 1e-14 * std::max(1.0, y.norm() / delta));
  }
  CHECK(add_noise(y, 0.1, 9).ydelta == add_noise(y, 0.1, 9).ydelta);
  const Vector e1 = add_noise(y, 0.1, 9).ydelta - y;
  const Vector e2 = add_noise(y, 0.1, 10).ydelta - y;
  CHECK(std::abs(e1.dot(e2)) < 0.9 * 0.01);
  CHECK_THROWS_AS(add_noise(y, -1e-3, 1), std::invalid_argument);
}

TEST_CASE("diag_synthetic singular values") {
  const ProblemInstance p = make_problem("diag_synthetic", 10, 0);
  const Matrix a = p.op.to_dense();
  for (Index k = 0; k < 10; ++k) CHECK(a(k, k) == 1.0 / static_cast<double>(k + 1));
  CHECK((a - Matrix(a.diagonal().asDiagonal())).norm() == 0.0);
}

TEST_CASE("deconv_nonneg ground truth") {
  const ProblemInstance p = make_problem("deconv_nonneg", 100, 4);
  CHECK((p.x_true.array() >= 0.0).all());
  CHECK((p.x_true.array() == 0.0).any());
  const Vector recert = ConstraintSet::nonneg_orthant().project(p.op.apply_adjoint(
      std::get<DualElementSource>(p.source).lambda_dagger));
  CHECK(recert == p.x_true);
}

TEST_CASE("density_recovery ground truth") {
  const ProblemInstance p = make_problem("density_recovery", 100, 5);
  const Vector& w = p.op.domain_weights();
  CHECK(std::abs(w.dot(p.x_true) - 1.0) <= 1e-12);
  CHECK((p.x_true.array() > 0.0).all());
}

TEST_CASE("every shipped problem: exact data, source certificate, adjoints, determinism") {
  for (const auto& name : list_problems()) {
    CAPTURE(name);
    const ProblemInstance p = make_problem(name, 64, 7);
    CHECK((p.op.apply(p.x_true) - p.y_exact).norm() <= 1e-13);
    CHECK(p.xi_true == p.op.apply_adjoint(
                           std::visit([](const auto& s) -> Vector {
                             if constexpr (requires { s.lambda_dagger; }) return s.lambda_dagger;
                             return Vector();
                           }, p.source)));
    CHECK(fenchel_young_residual(*p.penalty, p.x_true, p.xi_true) <= 1e-8);
    CHECK(p.penalty->evaluate(p.x_true) < kInfinity);

    const double norm = estimate_norm(p.op).value;
    Rng rng(8);
    for (int k = 0; k < 200; ++k) {
      const Vector u = rng.normal_vector(p.op.domain_dim());
      const Vector v = rng.normal_vector(p.op.range_dim());
      CHECK(std::abs(p.op.apply(u).dot(v) - p.op.domain_inner(u, p.op.apply_adjoint(v))) <=
            1e-10 * p.op.domain_norm(u) * v.norm() * norm);
    }

    const ProblemInstance q = make_problem(name, 64, 7);
    CHECK(q.x_true == p.x_true);
    CHECK(q.y_exact == p.y_exact);
    CHECK(q.op.to_dense() == p.op.to_dense());
    const ProblemInstance r = make_problem(name, 64, 8);
    CHECK(r.x_true != p.x_true);
    CHECK_FALSE(describe_problem(name).empty());
  }
}

TEST_CASE("problem construction errors") {
  CHECK_THROWS_AS(make_problem("gravity_fredholm", 7, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_problem("tomography", 32, 0), std::invalid_argument);
  CHECK_THROWS_AS(describe_problem("tomography"), std::invalid_argument);
}

TEST_CASE("lambda profiles have unit norm") {
  for (auto prof : {LambdaProfile::smooth, LambdaProfile::white, LambdaProfile::power_decay}) {
    const Vector l = make_lambda(40, prof, 0.75, 3);
    CHECK(l.norm() == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(mix_seed(1, 2, 3) == mix_seed(1, 2, 3));
  CHECK(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
}
