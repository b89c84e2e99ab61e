#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <string_view>

#include "dualgrad/linop.hpp"

namespace dualgrad {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Closed convex set C with its metric projection.
///
/// Projections are taken in the weighted norm ||v||^2 = sum_i w_i v_i^2. For
/// the separable sets the weights do not change the projection; for the
/// simplex {x >= 0, sum_i w_i x_i = m} they do.
class ConstraintSet {
 public:
  enum class Kind { whole_space, nonneg_orthant, box, simplex };

  static ConstraintSet whole_space();
  static ConstraintSet nonneg_orthant();
  static ConstraintSet box(double lo, double hi);
  /// Weighted simplex; empty weights mean unit weights of the projected size.
  static ConstraintSet simplex(double total_mass = 1.0, Vector weights = Vector());

  Kind kind() const { return kind_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double total_mass() const { return mass_; }
  const Vector& weights() const { return weights_; }

  Vector project(const Vector& v) const;
  bool contains(const Vector& x, double tol = 1e-12) const;

 private:
  Kind kind_ = Kind::whole_space;
  double lo_ = 0.0;
  double hi_ = 0.0;
  double mass_ = 1.0;
  Vector weights_;
};

/// Sort-based projection onto {x >= 0, sum_i w_i x_i = mass} (unit w if empty).
Vector project_simplex(const Vector& v, double mass, const Vector& weights = Vector());

enum class PenaltyKind { quadratic, projected_quadratic, elastic_net, entropy_simplex };

std::string_view to_string(PenaltyKind kind);

/// Strongly convex penalty R with modulus sigma.
///
/// Vectors in X* are identified with coefficient vectors through the
/// weighted pairing <xi, x> = sum_i w_i xi_i x_i, so conjugate_grad(xi) is
/// argmin_x { R(x) - <xi, x> } in that pairing.
class Penalty {
 public:
  virtual ~Penalty() = default;

  virtual PenaltyKind kind() const = 0;
  double sigma() const { return sigma_; }

  /// R(x), +infinity outside dom(R).
  virtual double evaluate(const Vector& x) const = 0;
  /// grad R*(xi).
  virtual Vector conjugate_grad(const Vector& xi) const = 0;
  /// R*(xi).
  virtual double conjugate_value(const Vector& xi) const = 0;
  /// D^xi(xbar, x) = R(xbar) - R(x) - <xi, xbar - x> for xi in dR(x).
  virtual double bregman(const Vector& xbar, const Vector& x, const Vector& xi) const;

  /// Norm on X in which sigma is the modulus of convexity.
  virtual double norm(const Vector& x) const;
  /// The corresponding dual norm on X*.
  virtual double dual_norm(const Vector& xi) const;

  double pairing(const Vector& xi, const Vector& x) const;
  /// Pairing weights; empty means Euclidean.
  const Vector& weights() const { return weights_; }

 protected:
  Penalty(double sigma, Vector weights);
  void check_dim(const Vector& v) const;
  double weighted_sq_norm(const Vector& v) const;

  double sigma_;
  Vector weights_;
};

using PenaltyPtr = std::shared_ptr<const Penalty>;

/// R(x) = ||x||^2 / 2; sigma = 1/2 and grad R* is the identity.
PenaltyPtr make_quadratic(Vector weights = Vector());
/// R(x) = ||x||^2 / 2 + indicator of C; grad R* = P_C.
PenaltyPtr make_projected_quadratic(ConstraintSet c, Vector weights = Vector());
/// Negative Boltzmann-Shannon entropy restricted to the weighted unit simplex.
/// sigma = 1/2 with respect to the weighted L1 norm.
PenaltyPtr make_entropy_simplex(Vector weights);
/// R(x) = beta ||x||_1 + (alpha / 2) ||x||^2; sigma = alpha / 2.
PenaltyPtr make_elastic_net(double alpha, double beta, Vector weights = Vector());

double bregman(const Penalty& p, const Vector& xbar, const Vector& x, const Vector& xi);

/// |R(x) + R*(xi) - <xi, x>| relative to max(1, |R(x)| + |R*(xi)| + |<xi, x>|).
double fenchel_young_residual(const Penalty& p, const Vector& x, const Vector& xi);

struct ConvexityReport {
  double min_ratio = kInfinity;  // min of D / (sigma ||xbar - x||^2) over samples
  int samples = 0;
  int violations = 0;            // D < sigma ||xbar - x||^2 - 1e-8
};

/// Samples xi, sets x = grad R*(xi) and draws xbar in dom(R) to test
/// D^xi(xbar, x) >= sigma ||xbar - x||^2.
ConvexityReport strong_convexity_check(const Penalty& p, Index dim, int samples, std::uint64_t seed);

}  // namespace dualgrad
