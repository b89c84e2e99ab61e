#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>

namespace dualgrad {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Throws std::invalid_argument naming `what` if any entry is NaN or infinite.
void require_finite(const Vector& v, const std::string& what);

/// Bounded linear map A : X -> Y between finite-dimensional spaces.
///
/// Y always carries the Euclidean inner product. X carries
/// <u, v>_X = sum_i w_i u_i v_i for positive quadrature weights w (all ones
/// when the operator is unweighted), so the adjoint satisfies
/// <A u, v>_Y = <u, A* v>_X, i.e. A* = W^{-1} M^T for a dense matrix M.
///
/// Operators are immutable; copies share their storage.
class LinearOperator {
 public:
  using Map = std::function<Vector(const Vector&)>;

  static LinearOperator dense(Matrix m);
  static LinearOperator dense(Matrix m, Vector domain_weights);
  static LinearOperator identity(Index n);
  static LinearOperator diagonal(const Vector& d);
  /// Matrix-free operator. `adjoint` must already be the weighted adjoint.
  static LinearOperator matrix_free(Index domain_dim, Index range_dim, Map forward, Map adjoint,
                                    Vector domain_weights = Vector());

  Index domain_dim() const { return domain_dim_; }
  Index range_dim() const { return range_dim_; }

  Vector apply(const Vector& x) const;
  Vector apply_adjoint(const Vector& v) const;

  bool weighted() const { return weighted_; }
  const Vector& domain_weights() const { return weights_; }

  double domain_inner(const Vector& u, const Vector& v) const;
  double domain_norm(const Vector& u) const { return std::sqrt(domain_inner(u, u)); }

  /// Dense matrix backing the operator, or nullptr for matrix-free operators.
  const Matrix* matrix() const { return matrix_.get(); }
  /// Materializes M column by column (allocates for matrix-free operators).
  Matrix to_dense() const;
  /// Returns the operator c*A sharing nothing with *this.
  LinearOperator scaled(double c) const;

 private:
  LinearOperator() = default;

  Index domain_dim_ = 0;
  Index range_dim_ = 0;
  std::shared_ptr<const Matrix> matrix_;
  Map forward_;
  Map adjoint_;
  Vector weights_;
  Vector inv_weights_;
  bool weighted_ = false;
};

struct NormEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Largest singular value of A (w.r.t. the weighted domain norm) by power
/// iteration on A*A from a seeded random start. Converges from below.
NormEstimate estimate_norm(const LinearOperator& op, double tol = 1e-10, int max_iter = 10000,
                           std::uint64_t seed = 0);

/// Exact norm of A from the weighted L1 space to Y: max_j ||A e_j|| / w_j.
double l1_to_l2_norm(const LinearOperator& op);

/// Inflation applied to power-method estimates before they enter step sizes.
inline constexpr double kNormSafetyFactor = 1.05;

enum class Quadrature { midpoint, trapezoid };

/// Collocated discretization of x -> int_0^1 k(s, t) x(t) dt on n nodes.
LinearOperator build_fredholm(const std::function<double(double, double)>& kernel, Index n,
                              Quadrature quadrature);

/// Quadrature nodes and weights used by build_fredholm.
void quadrature_rule(Index n, Quadrature quadrature, Vector& nodes, Vector& weights);

enum class ConvolutionMode { zero_pad };

/// (A x)_i = sum_k psf_k x_{i - k + origin}, entries outside [0, n) read as zero.
LinearOperator build_convolution(const Vector& psf, Index n,
                                 ConvolutionMode mode = ConvolutionMode::zero_pad,
                                 Index origin = 0);

}  // namespace dualgrad
