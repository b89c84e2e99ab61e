#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dualgrad/linop.hpp"
#include "dualgrad/penalty.hpp"

namespace dualgrad {

// ---------------------------------------------------------------------------
// Source conditions

/// A* lambda_dagger in dR(x_dagger).
struct DualElementSource {
  Vector lambda_dagger;
};
/// x_dagger = P_C((A*A)^{nu/2} omega), 0 < nu <= 1.
struct ProjectedPowerSource {
  double nu = 1.0;
  Vector omega;
};
/// 1 + log x_dagger = A* lambda_dagger up to the normalizing constant.
struct EntropicSource {
  Vector lambda_dagger;
};
using SourceSpec = std::variant<DualElementSource, ProjectedPowerSource, EntropicSource>;

std::string_view source_kind(const SourceSpec& s);

/// x_dagger = grad R*(A* lambda_dagger), so that A* lambda_dagger is a subgradient at x_dagger.
Vector construct_source_solution(const LinearOperator& op, const Penalty& p, const Vector& lambda_dagger);

/// (A*A)^{nu/2} omega through a dense SVD in the weighted geometry.
Vector apply_normal_power(const LinearOperator& op, double nu, const Vector& omega);

/// x_dagger = P_C((A*A)^{nu/2} omega).
Vector construct_projected_power_solution(const LinearOperator& op, double nu, const Vector& omega,
                                          const ConstraintSet& c);

// ---------------------------------------------------------------------------
// Error measures

enum class ErrorMeasure { norm, norm_sq_half, bregman, l1, kl };

std::string_view to_string(ErrorMeasure m);
std::optional<ErrorMeasure> parse_error_measure(std::string_view name);

/// Distance of x from xref. Norms use the penalty's pairing weights.
/// bregman: D^{xi_ref}(x, xref); kl: sum_i w_i (x log(x / xref) - x + xref).
double error_measure(ErrorMeasure measure, const Penalty& p, const Vector& x, const Vector& xref,
                     const Vector& xi_ref = Vector());

// ---------------------------------------------------------------------------
// eta_n = sup_x { R(x_dagger) - R(x) - coeff * gamma * (n + 1) * ||A x - y||^2 }

struct EtaResult {
  double value = 0.0;  // certified lower bound (exact when `exact`)
  double upper = 0.0;  // upper bound from the dual side
  double gap = 0.0;
  int inner_iterations = 0;
  bool exact = false;
  bool converged = false;
};

/// Quadratic penalties are solved exactly through an SVD. All other
/// penalties use accelerated ascent on the Fenchel dual
///   sup_lambda { -R*(A* lambda) + <lambda, y> - ||lambda||^2 / (4 mu) },
/// whose primal partner grad R*(A* lambda) certifies the gap.
EtaResult eta_oracle(std::int64_t n, double gamma, double coeff, const LinearOperator& op, const Vector& y,
                     const Penalty& p, const Vector& x_dagger, double tolerance = 1e-9,
                     int max_inner = 500000);

/// Reusable spectral data for many exact eta evaluations on one quadratic problem.
class QuadraticEta {
 public:
  QuadraticEta(const LinearOperator& op, const Vector& x_dagger);
  double operator()(double mu) const;

 private:
  Vector coeff_sq_;   // squared coefficients of x_dagger along right singular vectors
  Vector sing_sq_;    // squared singular values (zero-padded)
};

// ---------------------------------------------------------------------------
// Rate regression

struct RatePoint {
  double delta = 0.0;
  double error = 0.0;
  std::int64_t n_stop = 0;
  ErrorMeasure measure = ErrorMeasure::norm;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int points_used = 0;
  int points_excluded = 0;
  std::vector<std::string> warnings;
};

/// Least squares line through (log delta, log error); nonpositive errors are
/// excluded with a warning. Needs at least three usable points.
RateFit fit_rate(const std::vector<RatePoint>& points);

/// Least squares line through (log x, log y) for positive pairs.
RateFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

struct TrimmedRateFit {
  RateFit full;
  std::optional<RateFit> without_largest;
  bool used_trimmed = false;
  const RateFit& chosen() const { return used_trimmed ? *without_largest : full; }
};

/// Fits all points and, when at least four remain, the points without the
/// largest delta; the trimmed fit is chosen if it raises R^2 by more than 0.05.
TrimmedRateFit fit_rate_trimmed(const std::vector<RatePoint>& points);

// ---------------------------------------------------------------------------
// Variational source condition E(x) <= R(x) - R(x_dagger) + M ||A x - y||^q

enum class VscMeasure { bregman, quarter_norm_sq, half_l1_sq };

struct VscReport {
  double min_slack = kInfinity;
  int samples = 0;
};

/// Samples x in dom(R) as grad R*(xi_dagger + s eta) for random eta at scales
/// s spanning several decades, plus x = x_dagger itself, and reports the
/// smallest slack of the inequality. Without `xi_dagger` the samples are
/// centred at x_dagger; `xi_dagger` is required for bregman.
VscReport variational_sc_margin(const LinearOperator& op, const Penalty& p, const Vector& x_dagger, double M,
                                double q, VscMeasure measure, int samples, std::uint64_t seed,
                                const Vector& xi_dagger = Vector());

/// c_nu = 2^{-2nu/(1+nu)} (1+nu) (1-nu)^{(1-nu)/(1+nu)} of the projected
/// source inequality (1/4)||x - x_dagger||^2 <= R(x) - R(x_dagger) + c_nu ||omega||^{2/(1+nu)} ||Ax - y||^{2nu/(1+nu)}.
double projected_source_constant(double nu);

struct KlL1Report {
  double max_violation = -kInfinity;  // max of lhs - rhs
  int samples = 0;
};

/// ||x - xt||_1^2 <= (4/3 ||x||_1 + 2/3 ||xt||_1) D(xt, x) on sampled
/// nonnegative vectors (weighted by `weights`).
KlL1Report kl_l1_bound_check(const Vector& weights, int samples, std::uint64_t seed, bool unit_mass = true);

}  // namespace dualgrad
