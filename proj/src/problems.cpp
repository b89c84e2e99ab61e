#include "dualgrad/problems.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>

#include "dualgrad/random.hpp"

namespace dualgrad {

namespace {

struct Entry {
  const char* name;
  const char* description;
};

constexpr Entry kProblems[] = {
    {"deconv_nonneg", "Gaussian blur with zero padding, nonnegative x = P_C(A* lambda), projected quadratic penalty"},
    {"density_recovery", "Gaussian smoothing on [0,1], density x = softmax(A* lambda), entropy penalty on the simplex"},
    {"diag_synthetic", "diagonal operator with singular values 1/k, x = A* lambda, quadratic penalty"},
    {"gravity_fredholm", "1-D gravity surveying kernel d (d^2 + (s-t)^2)^{-3/2}, x = A* lambda, quadratic penalty"},
};

constexpr double kGravityDepth = 0.25;
constexpr double kBlurWidth = 0.03;
constexpr double kSmoothingWidth = 0.05;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

LinearOperator normalized(const LinearOperator& op) {
  const NormEstimate est = estimate_norm(op, 1e-13, 100000, 0);
  if (!(est.value > 0.0)) throw std::runtime_error("problem operator has zero norm");
  return op.scaled(1.0 / est.value);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t i, std::uint64_t j) {
  return splitmix(splitmix(splitmix(base) ^ i) ^ (j * 0xD1B54A32D192ED03ull));
}

NoisyData add_noise(const Vector& y, double delta, std::uint64_t seed) {
  if (!(delta >= 0.0)) throw std::invalid_argument("add_noise: delta must be nonnegative");
  NoisyData out{y, delta, seed};
  if (delta == 0.0) return out;
  Rng rng(seed);
  Vector e = rng.normal_vector(y.size());
  e *= delta / e.norm();
  out.ydelta = y + e;
  return out;
}

Vector make_lambda(Index m, LambdaProfile profile, double decay, std::uint64_t seed) {
  Rng rng(seed);
  Vector v(m);
  switch (profile) {
    case LambdaProfile::smooth: {
      v.setZero();
      for (int k = 1; k <= 5; ++k) {
        const double c = rng.normal() / k;
        for (Index i = 0; i < m; ++i)
          v[i] += c * std::cos(std::numbers::pi * k * (static_cast<double>(i) + 0.5) / static_cast<double>(m));
      }
      break;
    }
    case LambdaProfile::white:
      v = rng.normal_vector(m);
      break;
    case LambdaProfile::power_decay:
      for (Index i = 0; i < m; ++i)
        v[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * std::pow(static_cast<double>(i + 1), -decay);
      break;
  }
  return v / v.norm();
}

ProblemOptions default_problem_options(std::string_view name, Index n, std::uint64_t seed) {
  ProblemOptions o;
  o.name = std::string(name);
  o.n = n;
  o.seed = seed;
  if (name == "diag_synthetic") {
    o.profile = LambdaProfile::power_decay;
    o.decay = 0.75;
  } else {
    o.profile = LambdaProfile::white;
  }
  return o;
}

ProblemInstance make_problem(std::string_view name, Index n, std::uint64_t seed) {
  return make_problem(default_problem_options(name, n, seed));
}

ProblemInstance make_problem(const ProblemOptions& o) {
  if (o.n < 8) throw std::invalid_argument("make_problem: n must be at least 8");
  const Index n = o.n;
  std::optional<LinearOperator> op;
  PenaltyKind kind = PenaltyKind::quadratic;
  PenaltyPtr penalty;

  if (o.name == "gravity_fredholm") {
    const double d = kGravityDepth;
    op = normalized(build_fredholm(
        [d](double s, double t) { return d / std::pow(d * d + (s - t) * (s - t), 1.5); }, n, Quadrature::midpoint));
    kind = PenaltyKind::quadratic;
    penalty = make_quadratic(op->domain_weights());
  } else if (o.name == "deconv_nonneg") {
    const double h = 1.0 / static_cast<double>(n);
    Index half = static_cast<Index>(std::ceil(4.0 * kBlurWidth / h));
    half = std::min(half, (n - 1) / 2);
    Vector psf(2 * half + 1);
    for (Index k = 0; k < psf.size(); ++k) {
      const double t = static_cast<double>(k - half) * h;
      psf[k] = std::exp(-t * t / (2.0 * kBlurWidth * kBlurWidth));
    }
    op = normalized(build_convolution(psf, n, ConvolutionMode::zero_pad, half));
    kind = PenaltyKind::projected_quadratic;
    penalty = make_projected_quadratic(ConstraintSet::nonneg_orthant());
  } else if (o.name == "density_recovery") {
    const double s2 = 2.0 * kSmoothingWidth * kSmoothingWidth;
    const LinearOperator raw = build_fredholm(
        [s2](double s, double t) { return std::exp(-(s - t) * (s - t) / s2); }, n, Quadrature::midpoint);
    op = raw.scaled(1.0 / l1_to_l2_norm(raw));
    kind = PenaltyKind::entropy_simplex;
    penalty = make_entropy_simplex(op->domain_weights());
  } else if (o.name == "diag_synthetic") {
    Vector d(n);
    for (Index k = 0; k < n; ++k) d[k] = 1.0 / static_cast<double>(k + 1);
    op = LinearOperator::diagonal(d);
    kind = PenaltyKind::quadratic;
    penalty = make_quadratic();
  } else {
    throw std::invalid_argument("unknown problem '" + o.name + "'");
  }

  const Vector lambda = make_lambda(op->range_dim(), o.profile, o.decay, o.seed);
  ProblemInstance inst{o.name, "", *op, Vector(), Vector(), Vector(), DualElementSource{}, kind, penalty};
  inst.xi_true = inst.op.apply_adjoint(lambda);
  inst.x_true = construct_source_solution(inst.op, *inst.penalty, lambda);
  inst.y_exact = inst.op.apply(inst.x_true);
  if (inst.penalty_kind == PenaltyKind::entropy_simplex)
    inst.source = EntropicSource{lambda};
  else
    inst.source = DualElementSource{lambda};
  inst.label = o.name + " n=" + std::to_string(n) + " seed=" + std::to_string(o.seed);
  return inst;
}

std::vector<std::string> list_problems() {
  std::vector<std::string> out;
  for (const auto& e : kProblems) out.emplace_back(e.name);
  return out;
}

std::string describe_problem(std::string_view name) {
  for (const auto& e : kProblems)
    if (name == e.name) return e.description;
  throw std::invalid_argument("unknown problem '" + std::string(name) + "'");
}

}  // namespace dualgrad
