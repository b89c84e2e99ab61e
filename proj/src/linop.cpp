#include "dualgrad/linop.hpp"

#include <stdexcept>

#include "dualgrad/random.hpp"

namespace dualgrad {

void require_finite(const Vector& v, const std::string& what) {
  if (!v.allFinite()) throw std::invalid_argument(what + ": non-finite entry");
}

namespace {

void check_weights(const Vector& w, Index n) {
  if (w.size() != n) throw std::invalid_argument("domain weights: size mismatch");
  if (!w.allFinite() || (w.array() <= 0.0).any())
    throw std::invalid_argument("domain weights: must be finite and strictly positive");
}

}  // namespace

LinearOperator LinearOperator::dense(Matrix m) {
  if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("dense operator: empty matrix");
  if (!m.allFinite()) throw std::invalid_argument("dense operator: non-finite entry");
  LinearOperator op;
  op.domain_dim_ = m.cols();
  op.range_dim_ = m.rows();
  op.weights_ = Vector::Ones(m.cols());
  op.inv_weights_ = op.weights_;
  op.matrix_ = std::make_shared<const Matrix>(std::move(m));
  return op;
}

LinearOperator LinearOperator::dense(Matrix m, Vector domain_weights) {
  LinearOperator op = dense(std::move(m));
  check_weights(domain_weights, op.domain_dim_);
  op.inv_weights_ = domain_weights.cwiseInverse();
  op.weights_ = std::move(domain_weights);
  op.weighted_ = true;
  return op;
}

LinearOperator LinearOperator::identity(Index n) { return dense(Matrix::Identity(n, n)); }

LinearOperator LinearOperator::diagonal(const Vector& d) { return dense(d.asDiagonal().toDenseMatrix()); }

LinearOperator LinearOperator::matrix_free(Index domain_dim, Index range_dim, Map forward, Map adjoint,
                                           Vector domain_weights) {
  if (domain_dim <= 0 || range_dim <= 0) throw std::invalid_argument("matrix-free operator: bad dimensions");
  if (!forward || !adjoint) throw std::invalid_argument("matrix-free operator: missing map");
  LinearOperator op;
  op.domain_dim_ = domain_dim;
  op.range_dim_ = range_dim;
  op.forward_ = std::move(forward);
  op.adjoint_ = std::move(adjoint);
  if (domain_weights.size() == 0) {
    op.weights_ = Vector::Ones(domain_dim);
  } else {
    check_weights(domain_weights, domain_dim);
    op.weights_ = std::move(domain_weights);
    op.weighted_ = true;
  }
  op.inv_weights_ = op.weights_.cwiseInverse();
  return op;
}

Vector LinearOperator::apply(const Vector& x) const {
  if (x.size() != domain_dim_) throw std::invalid_argument("apply: dimension mismatch");
  if (matrix_) return (*matrix_) * x;
  Vector out = forward_(x);
  if (out.size() != range_dim_) throw std::logic_error("apply: forward map returned wrong size");
  return out;
}

Vector LinearOperator::apply_adjoint(const Vector& v) const {
  if (v.size() != range_dim_) throw std::invalid_argument("apply_adjoint: dimension mismatch");
  if (matrix_) {
    Vector out = matrix_->transpose() * v;
    if (weighted_) out.array() *= inv_weights_.array();
    return out;
  }
  Vector out = adjoint_(v);
  if (out.size() != domain_dim_) throw std::logic_error("apply_adjoint: adjoint map returned wrong size");
  return out;
}

double LinearOperator::domain_inner(const Vector& u, const Vector& v) const {
  if (!weighted_) return u.dot(v);
  return (weights_.array() * u.array() * v.array()).sum();
}

Matrix LinearOperator::to_dense() const {
  if (matrix_) return *matrix_;
  Matrix m(range_dim_, domain_dim_);
  Vector e = Vector::Zero(domain_dim_);
  for (Index j = 0; j < domain_dim_; ++j) {
    e[j] = 1.0;
    m.col(j) = apply(e);
    e[j] = 0.0;
  }
  return m;
}

LinearOperator LinearOperator::scaled(double c) const {
  if (matrix_) {
    return weighted_ ? dense(c * (*matrix_), weights_) : dense(c * (*matrix_));
  }
  auto fwd = forward_;
  auto adj = adjoint_;
  return matrix_free(
      domain_dim_, range_dim_, [fwd, c](const Vector& x) -> Vector { return c * fwd(x); },
      [adj, c](const Vector& v) -> Vector { return c * adj(v); }, weighted_ ? weights_ : Vector());
}

NormEstimate estimate_norm(const LinearOperator& op, double tol, int max_iter, std::uint64_t seed) {
  if (!(tol > 0.0)) throw std::invalid_argument("estimate_norm: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("estimate_norm: max_iter must be >= 1");

  Rng rng(seed);
  Vector v = rng.normal_vector(op.domain_dim());
  v /= op.domain_norm(v);

  NormEstimate est;
  double previous = -1.0;
  for (int it = 1; it <= max_iter; ++it) {
    const Vector av = op.apply(v);
    // Rayleigh quotient of A*A at a unit vector.
    const double rayleigh = av.squaredNorm();
    est.iterations = it;
    if (rayleigh == 0.0) {
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    est.value = std::sqrt(rayleigh);
    if (previous > 0.0 && std::abs(rayleigh - previous) < tol * rayleigh) {
      est.converged = true;
      return est;
    }
    previous = rayleigh;
    Vector w = op.apply_adjoint(av);
    const double wn = op.domain_norm(w);
    if (wn == 0.0) {
      est.converged = true;
      return est;
    }
    v = w / wn;
  }
  return est;
}

double l1_to_l2_norm(const LinearOperator& op) {
  const Matrix m = op.to_dense();
  const Vector& w = op.domain_weights();
  double best = 0.0;
  for (Index j = 0; j < m.cols(); ++j) best = std::max(best, m.col(j).norm() / w[j]);
  return best;
}

void quadrature_rule(Index n, Quadrature quadrature, Vector& nodes, Vector& weights) {
  if (n < 2) throw std::invalid_argument("quadrature_rule: n must be >= 2");
  nodes.resize(n);
  weights.resize(n);
  switch (quadrature) {
    case Quadrature::midpoint:
      for (Index i = 0; i < n; ++i) nodes[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      weights.setConstant(1.0 / static_cast<double>(n));
      break;
    case Quadrature::trapezoid: {
      const double h = 1.0 / static_cast<double>(n - 1);
      for (Index i = 0; i < n; ++i) nodes[i] = static_cast<double>(i) * h;
      weights.setConstant(h);
      weights[0] = weights[n - 1] = 0.5 * h;
      break;
    }
  }
}

LinearOperator build_fredholm(const std::function<double(double, double)>& kernel, Index n,
                              Quadrature quadrature) {
  Vector nodes;
  Vector weights;
  quadrature_rule(n, quadrature, nodes, weights);
  Matrix m(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double k = kernel(nodes[i], nodes[j]);
      if (!std::isfinite(k)) throw std::invalid_argument("build_fredholm: kernel is not finite on [0,1]^2");
      m(i, j) = k * weights[j];
    }
  }
  return LinearOperator::dense(std::move(m), std::move(weights));
}

LinearOperator build_convolution(const Vector& psf, Index n, ConvolutionMode mode, Index origin) {
  (void)mode;  // zero padding is the only boundary treatment
  if (psf.size() == 0) throw std::invalid_argument("build_convolution: empty psf");
  if (psf.size() > n) throw std::invalid_argument("build_convolution: psf longer than signal");
  require_finite(psf, "build_convolution psf");
  Matrix m = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < psf.size(); ++k) {
      const Index j = i - k + origin;
      if (j >= 0 && j < n) m(i, j) += psf[k];
    }
  }
  return LinearOperator::dense(std::move(m));
}

}  // namespace dualgrad
