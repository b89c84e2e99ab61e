#include "dualgrad/solver.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dualgrad {

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::discrepancy_met: return "discrepancy_met";
    case Termination::a_priori_reached: return "a_priori_reached";
    case Termination::cap_hit: return "cap_hit";
  }
  return "unknown";
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::plain: return "plain";
    case Method::primal_form: return "primal_form";
    case Method::accelerated: return "accelerated";
    case Method::entropic_landweber: return "entropic_landweber";
  }
  return "unknown";
}

StoppingRule StoppingRule::a_priori(std::int64_t n_max) {
  if (n_max < 0) throw std::invalid_argument("a-priori stopping rule: n_max must be >= 0");
  StoppingRule r;
  r.kind = Kind::a_priori;
  r.n_max = n_max;
  return r;
}

StoppingRule StoppingRule::discrepancy(double tau, double delta, std::int64_t n_cap) {
  if (!(tau > 1.0)) throw std::invalid_argument("discrepancy rule: tau > 1 required");
  if (!(delta >= 0.0)) throw std::invalid_argument("discrepancy rule: delta >= 0 required");
  if (n_cap < 0) throw std::invalid_argument("discrepancy rule: n_cap must be >= 0");
  StoppingRule r;
  r.kind = Kind::discrepancy;
  r.tau = tau;
  r.delta = delta;
  r.n_cap = n_cap;
  return r;
}

bool discrepancy_met(double residual_norm, double tau, double delta) {
  if (!(tau > 1.0)) throw std::invalid_argument("discrepancy_met: tau > 1 required");
  if (!(delta >= 0.0)) throw std::invalid_argument("discrepancy_met: delta >= 0 required");
  return residual_norm <= tau * delta;
}

std::int64_t a_priori_iterations(double delta, double q, double scale, AprioriMode mode) {
  if (!(delta > 0.0)) throw std::invalid_argument("a_priori_iterations: delta must be positive");
  if (!(scale > 0.0)) throw std::invalid_argument("a_priori_iterations: scale must be positive");
  double exponent = -0.5;
  if (mode == AprioriMode::standard) {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("a_priori_iterations: q must lie in (0, 1]");
    exponent = q - 2.0;
  }
  double v = scale * std::pow(delta, exponent);
  const double nearest = std::round(v);
  if (std::abs(v - nearest) <= 1e-12 * std::max(1.0, v)) v = nearest;
  constexpr double kMax = 1e18;
  if (!(v < kMax)) return static_cast<std::int64_t>(kMax);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(v)));
}

double dual_objective(const Penalty& p, const LinearOperator& op, const Vector& lambda, const Vector& ydelta) {
  if (lambda.size() != op.range_dim() || ydelta.size() != op.range_dim())
    throw std::invalid_argument("dual_objective: dimension mismatch");
  return p.conjugate_value(op.apply_adjoint(lambda)) - lambda.dot(ydelta);
}

double penalty_operator_norm(const LinearOperator& op, const Penalty& p, std::uint64_t seed) {
  if (p.kind() == PenaltyKind::entropy_simplex) return l1_to_l2_norm(op);
  return kNormSafetyFactor * estimate_norm(op, 1e-10, 10000, seed).value;
}

double discrepancy_margin(PenaltyKind kind, double tau) {
  double margin = std::min(1.0 - 1.0 / tau, 1.0 - 1.0 / (tau * tau));
  if (kind == PenaltyKind::entropy_simplex) margin = std::min(margin, 1.0 - 2.0 / tau);
  return margin;
}

double default_step_size(double lipschitz, PenaltyKind kind, const StoppingRule& stop) {
  if (!(lipschitz > 0.0)) throw std::invalid_argument("default_step_size: Lipschitz constant must be positive");
  if (stop.kind == StoppingRule::Kind::a_priori) return 1.0 / lipschitz;
  const double tau = stop.tau;
  const double preferred = 0.5 * (1.0 - 1.0 / (tau * tau));
  const double margin = discrepancy_margin(kind, tau);
  if (margin > 0.0 && preferred >= margin) return 0.5 * margin / lipschitz;
  return preferred / lipschitz;
}

std::optional<std::string> proven_region_violation(Method method, PenaltyKind kind, double gamma,
                                                   double lipschitz, const StoppingRule& stop, double alpha) {
  if (!(gamma > 0.0)) return "gamma must be positive";
  if (method == Method::entropic_landweber) return std::nullopt;
  const double lg = lipschitz * gamma;
  if (method == Method::accelerated) {
    if (alpha < 2.0) return "accelerated method requires alpha >= 2";
    if (lg > 1.0) return "accelerated method requires gamma <= 1/L";
    if (stop.kind == StoppingRule::Kind::discrepancy)
      return "accelerated method with the discrepancy principle has no convergence guarantee";
    return std::nullopt;
  }
  if (stop.kind == StoppingRule::Kind::a_priori) {
    if (lg > 1.0) return "a-priori stopping requires gamma <= 1/L";
    return std::nullopt;
  }
  const double margin = discrepancy_margin(kind, stop.tau);
  if (!(lg < margin)) {
    return "discrepancy principle requires L*gamma < " + std::to_string(margin) + " for tau = " +
           std::to_string(stop.tau) + " (got " + std::to_string(lg) + ")";
  }
  return std::nullopt;
}

namespace {

void check_problem(const LinearOperator& op, const Vector& ydelta, const SolveOptions& options) {
  if (ydelta.size() != op.range_dim()) throw std::invalid_argument("solve: data dimension mismatch");
  require_finite(ydelta, "solve: data");
  if (!(options.gamma > 0.0) || !std::isfinite(options.gamma))
    throw std::invalid_argument("solve: gamma must be positive and finite");
  if (options.record_every < 0) throw std::invalid_argument("solve: record_every must be >= 0");
  const StoppingRule& s = options.stop;
  if (s.kind == StoppingRule::Kind::discrepancy && !(s.tau > 1.0))
    throw std::invalid_argument("solve: discrepancy rule needs tau > 1");
  if (options.lambda0.size() != 0 && options.lambda0.size() != op.range_dim())
    throw std::invalid_argument("solve: lambda0 dimension mismatch");
}

void check_pairing(const LinearOperator& op, const Penalty& p) {
  const Vector& pw = p.weights();
  if (pw.size() == 0) {
    if (op.weighted()) throw std::invalid_argument("solve: weighted operator needs a penalty with the same weights");
    return;
  }
  if (pw.size() != op.domain_dim()) throw std::invalid_argument("solve: penalty dimension mismatch");
  if ((pw - op.domain_weights()).cwiseAbs().maxCoeff() > 1e-14 * pw.cwiseAbs().maxCoeff())
    throw std::invalid_argument("solve: penalty pairing weights differ from operator domain weights");
}

Vector initial_lambda(const LinearOperator& op, const SolveOptions& options) {
  return options.lambda0.size() ? options.lambda0 : Vector::Zero(op.range_dim());
}

std::optional<Termination> should_stop(const StoppingRule& s, std::int64_t n, double residual) {
  if (s.kind == StoppingRule::Kind::a_priori) {
    if (n >= s.n_max) return Termination::a_priori_reached;
    return std::nullopt;
  }
  if (residual <= s.tau * s.delta) return Termination::discrepancy_met;
  if (n >= s.n_cap) return Termination::cap_hit;
  return std::nullopt;
}

void check_finite_state(const DualIterate& it, const char* who) {
  if (!it.x.allFinite() || !std::isfinite(it.residual_norm) || !it.lambda.allFinite())
    throw std::runtime_error(std::string(who) + ": non-finite iterate at n = " + std::to_string(it.n));
}

bool should_record(const SolveOptions& o, std::int64_t n) { return o.record_every > 0 && n % o.record_every == 0; }

class Recorder {
 public:
  Recorder(Method method, const SolveOptions& options) {
    rec_.method = method;
    rec_.gamma = options.gamma;
    rec_.options = options;
  }

  // Returns true when the run is finished.
  bool observe(DualIterate&& it) {
    rec_.trace.push_back({it.n, it.residual_norm, it.dual_value});
    if (should_record(rec_.options, it.n)) rec_.iterates.push_back(it);
    if (const auto t = should_stop(rec_.options.stop, it.n, it.residual_norm)) {
      rec_.stop_index = it.n;
      rec_.termination = *t;
      rec_.final_iterate = std::move(it);
      return true;
    }
    return false;
  }

  void extrapolated(DualIterate&& it) {
    if (should_record(rec_.options, it.n)) rec_.extrapolated.push_back(std::move(it));
  }

  RunRecord take() { return std::move(rec_); }

 private:
  RunRecord rec_;
};

DualIterate evaluate_dual(const LinearOperator& op, const Vector& ydelta, const Penalty& p, std::int64_t n,
                          Vector lambda, Vector xi, Vector& residual) {
  DualIterate it;
  it.n = n;
  it.x = p.conjugate_grad(xi);
  residual = op.apply(it.x) - ydelta;
  it.residual_norm = residual.norm();
  it.dual_value = p.conjugate_value(xi) - lambda.dot(ydelta);
  it.lambda = std::move(lambda);
  it.xi = std::move(xi);
  return it;
}

}  // namespace

RunRecord dual_gradient_solve(const LinearOperator& op, const Vector& ydelta, const Penalty& p,
                              const SolveOptions& options) {
  check_problem(op, ydelta, options);
  check_pairing(op, p);
  Recorder recorder(Method::plain, options);
  Vector lambda = initial_lambda(op, options);
  Vector residual;
  for (std::int64_t n = 0;; ++n) {
    DualIterate it = evaluate_dual(op, ydelta, p, n, lambda, op.apply_adjoint(lambda), residual);
    check_finite_state(it, "dual_gradient_solve");
    if (recorder.observe(std::move(it))) break;
    lambda -= options.gamma * residual;
  }
  return recorder.take();
}

RunRecord primal_form_solve(const LinearOperator& op, const Vector& ydelta, const Penalty& p,
                            const SolveOptions& options) {
  check_problem(op, ydelta, options);
  check_pairing(op, p);
  Recorder recorder(Method::primal_form, options);
  Vector lambda = initial_lambda(op, options);
  Vector xi = op.apply_adjoint(lambda);
  Vector residual;
  for (std::int64_t n = 0;; ++n) {
    DualIterate it = evaluate_dual(op, ydelta, p, n, lambda, xi, residual);
    check_finite_state(it, "primal_form_solve");
    if (recorder.observe(std::move(it))) break;
    xi -= options.gamma * op.apply_adjoint(residual);
    lambda -= options.gamma * residual;
  }
  return recorder.take();
}

RunRecord accelerated_solve(const LinearOperator& op, const Vector& ydelta, const Penalty& p,
                            const SolveOptions& options) {
  check_problem(op, ydelta, options);
  check_pairing(op, p);
  if (!(options.alpha >= 2.0)) throw std::invalid_argument("accelerated_solve: alpha >= 2 required");
  Recorder recorder(Method::accelerated, options);

  Vector lambda = initial_lambda(op, options);
  Vector lambda_prev = lambda;
  Vector residual;
  {
    DualIterate it = evaluate_dual(op, ydelta, p, 0, lambda, op.apply_adjoint(lambda), residual);
    check_finite_state(it, "accelerated_solve");
    if (recorder.observe(std::move(it))) return recorder.take();
  }
  for (std::int64_t n = 0;; ++n) {
    const double weight = extrapolation_weight(n, options.alpha);
    Vector hat_lambda = lambda + weight * (lambda - lambda_prev);
    DualIterate hat = evaluate_dual(op, ydelta, p, n, hat_lambda, op.apply_adjoint(hat_lambda), residual);
    check_finite_state(hat, "accelerated_solve");

    lambda_prev = std::move(lambda);
    lambda = hat.lambda - options.gamma * residual;
    recorder.extrapolated(std::move(hat));

    DualIterate it = evaluate_dual(op, ydelta, p, n + 1, lambda, op.apply_adjoint(lambda), residual);
    check_finite_state(it, "accelerated_solve");
    if (recorder.observe(std::move(it))) break;
  }
  return recorder.take();
}

RunRecord entropic_landweber_solve(const LinearOperator& op, const Vector& ydelta, const SolveOptions& options) {
  check_problem(op, ydelta, options);
  Recorder recorder(Method::entropic_landweber, options);
  const Vector& w = op.domain_weights();
  Vector x = Vector::Constant(op.domain_dim(), 1.0 / w.sum());
  for (std::int64_t n = 0;; ++n) {
    const Vector residual = op.apply(x) - ydelta;
    DualIterate it;
    it.n = n;
    it.x = x;
    it.residual_norm = residual.norm();
    it.dual_value = std::numeric_limits<double>::quiet_NaN();
    check_finite_state(it, "entropic_landweber_solve");
    if (recorder.observe(std::move(it))) break;

    Vector exponent = -options.gamma * op.apply_adjoint(residual);
    if (!exponent.allFinite())
      throw std::runtime_error("entropic_landweber_solve: non-finite exponent at n = " + std::to_string(n));
    exponent.array() -= exponent.maxCoeff();
    x.array() *= exponent.array().exp();
    x /= w.dot(x);
  }
  return recorder.take();
}

}  // namespace dualgrad
