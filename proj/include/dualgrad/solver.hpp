#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dualgrad/linop.hpp"
#include "dualgrad/penalty.hpp"

namespace dualgrad {

/// State of the iteration at index n. For the dual methods x = grad R*(xi)
/// with xi = A* lambda. The entropic Landweber baseline has no dual
/// variable: lambda and xi are empty and dual_value is NaN.
struct DualIterate {
  std::int64_t n = 0;
  Vector lambda;
  Vector xi;
  Vector x;
  double residual_norm = 0.0;
  double dual_value = 0.0;
};

/// Scalars recorded at every iteration.
struct TracePoint {
  std::int64_t n = 0;
  double residual_norm = 0.0;
  double dual_value = 0.0;
};

enum class Termination { discrepancy_met, a_priori_reached, cap_hit };
std::string_view to_string(Termination t);

struct StoppingRule {
  enum class Kind { a_priori, discrepancy };

  Kind kind = Kind::a_priori;
  std::int64_t n_max = 0;          // a_priori: stop at this index
  double tau = 1.5;                // discrepancy
  double delta = 0.0;              // discrepancy
  std::int64_t n_cap = 1'000'000;  // discrepancy: give up at this index

  static StoppingRule a_priori(std::int64_t n_max);
  static StoppingRule discrepancy(double tau, double delta, std::int64_t n_cap = 1'000'000);
};

enum class Method { plain, primal_form, accelerated, entropic_landweber };
std::string_view to_string(Method m);

struct SolveOptions {
  double gamma = 0.0;
  StoppingRule stop;
  /// Vector iterates are kept every `record_every` steps (0: final only).
  /// Scalars are always kept for every step.
  std::int64_t record_every = 0;
  /// Nesterov extrapolation parameter, alpha >= 2.
  double alpha = 3.0;
  /// Initial dual variable; empty means lambda_0 = 0.
  Vector lambda0;
};

struct RunRecord {
  Method method = Method::plain;
  std::vector<TracePoint> trace;
  std::vector<DualIterate> iterates;
  /// Accelerated runs only: (hat lambda_n, hat x_n) at recorded steps.
  std::vector<DualIterate> extrapolated;
  DualIterate final_iterate;
  std::int64_t stop_index = 0;
  Termination termination = Termination::a_priori_reached;
  double gamma = 0.0;
  SolveOptions options;
};

/// x_n = grad R*(A* lambda_n), lambda_{n+1} = lambda_n - gamma (A x_n - y).
RunRecord dual_gradient_solve(const LinearOperator& op, const Vector& ydelta, const Penalty& p,
                              const SolveOptions& options);

/// Same iteration carried in xi_n = A* lambda_n: xi_{n+1} = xi_n - gamma A*(A x_n - y).
/// lambda is tracked alongside only to report the dual objective.
RunRecord primal_form_solve(const LinearOperator& op, const Vector& ydelta, const Penalty& p,
                            const SolveOptions& options);

/// Nesterov-accelerated dual gradient with lambda_{-1} = lambda_0 = 0:
///   hat lambda_n = lambda_n + (n - 1) / (n + alpha) (lambda_n - lambda_{n-1})
///   hat x_n      = grad R*(A* hat lambda_n)
///   lambda_{n+1} = hat lambda_n - gamma (A hat x_n - y)
///   x_{n+1}      = grad R*(A* lambda_{n+1})
RunRecord accelerated_solve(const LinearOperator& op, const Vector& ydelta, const Penalty& p,
                            const SolveOptions& options);

/// (n - 1) / (n + alpha), equal to (t_n - 1) / t_{n+1}.
inline double extrapolation_weight(std::int64_t n, double alpha) {
  return (static_cast<double>(n) - 1.0) / (static_cast<double>(n) + alpha);
}
/// t_n = (n + alpha - 1) / alpha.
inline double nesterov_t(std::int64_t n, double alpha) { return (static_cast<double>(n) + alpha - 1.0) / alpha; }

/// Multiplicative baseline x_{n+1} ∝ x_n exp(gamma A*(y - A x_n)) on the
/// simplex weighted by the operator's domain weights, from the uniform density.
RunRecord entropic_landweber_solve(const LinearOperator& op, const Vector& ydelta, const SolveOptions& options);

bool discrepancy_met(double residual_norm, double tau, double delta);

enum class AprioriMode { standard, accelerated };

/// ceil(scale * delta^(q - 2)) in standard mode, ceil(scale * delta^(-1/2)) in
/// accelerated mode; never below 1. Values within 1e-12 relative of an integer
/// count as that integer.
std::int64_t a_priori_iterations(double delta, double q, double scale,
                                 AprioriMode mode = AprioriMode::standard);

/// d_y(lambda) = R*(A* lambda) - <lambda, y>.
double dual_objective(const Penalty& p, const LinearOperator& op, const Vector& lambda, const Vector& ydelta);

/// L = ||A||^2 / (2 sigma).
inline double lipschitz_constant(double op_norm, double sigma) { return op_norm * op_norm / (2.0 * sigma); }

/// Operator norm in the geometry of the penalty: exact weighted-L1 norm for
/// the entropy penalty, power-method estimate inflated by kNormSafetyFactor otherwise.
double penalty_operator_norm(const LinearOperator& op, const Penalty& p, std::uint64_t seed = 0);

/// Largest L*gamma that keeps every discrepancy-principle hypothesis strict
/// for this tau: 1 - 1/tau and 1 - 1/tau^2, plus 1 - 2/tau for the entropy penalty.
double discrepancy_margin(PenaltyKind kind, double tau);

/// 1/L for a-priori runs; 0.5 (1 - 1/tau^2) / L for discrepancy runs, reduced
/// to half the strict margin when that is smaller.
double default_step_size(double lipschitz, PenaltyKind kind, const StoppingRule& stop);

/// Empty when (gamma, tau, alpha) satisfy the convergence hypotheses for
/// `method`; otherwise a description of the violated condition.
std::optional<std::string> proven_region_violation(Method method, PenaltyKind kind, double gamma,
                                                   double lipschitz, const StoppingRule& stop, double alpha);

}  // namespace dualgrad
