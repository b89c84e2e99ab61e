#include "dualgrad/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/SVD>

#include "dualgrad/random.hpp"
#include "dualgrad/solver.hpp"

namespace dualgrad {

namespace {

constexpr Index kMaxSvdDim = 2000;

double weighted_sum(const Vector& w, const Vector& v) { return w.size() ? w.dot(v) : v.sum(); }

double weighted_l2(const Vector& w, const Vector& v) {
  return std::sqrt(w.size() ? (w.array() * v.array().square()).sum() : v.squaredNorm());
}

// B = M W^{-1/2} maps Euclidean coordinates z = W^{1/2} x to Y, so that
// A*A = W^{-1/2} B^T B W^{1/2}.
Matrix euclidean_matrix(const LinearOperator& op) {
  if (op.domain_dim() > kMaxSvdDim || op.range_dim() > kMaxSvdDim)
    throw std::runtime_error("dense SVD requested for dimension above 2000; use a smaller n");
  Matrix b = op.to_dense();
  if (op.weighted()) b = b * op.domain_weights().cwiseSqrt().cwiseInverse().asDiagonal();
  return b;
}

struct RightSpectrum {
  Matrix v;        // full right singular basis, domain_dim x domain_dim
  Vector sing_sq;  // squared singular values padded with zeros to domain_dim
};

RightSpectrum right_spectrum(const LinearOperator& op) {
  const Matrix b = euclidean_matrix(op);
  Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw std::runtime_error("SVD failed; use a smaller n");
  RightSpectrum out;
  out.v = svd.matrixV();
  out.sing_sq = Vector::Zero(op.domain_dim());
  const Vector& s = svd.singularValues();
  for (Index i = 0; i < s.size(); ++i) out.sing_sq[i] = s[i] * s[i];
  return out;
}

}  // namespace

std::string_view source_kind(const SourceSpec& s) {
  switch (s.index()) {
    case 0: return "dual_element";
    case 1: return "projected_power";
    default: return "entropic";
  }
}

Vector construct_source_solution(const LinearOperator& op, const Penalty& p, const Vector& lambda_dagger) {
  return p.conjugate_grad(op.apply_adjoint(lambda_dagger));
}

Vector apply_normal_power(const LinearOperator& op, double nu, const Vector& omega) {
  if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("apply_normal_power: nu must lie in (0, 1]");
  if (omega.size() != op.domain_dim()) throw std::invalid_argument("apply_normal_power: dimension mismatch");
  const RightSpectrum spec = right_spectrum(op);
  const Vector sqrt_w = op.domain_weights().cwiseSqrt();
  const Vector z = sqrt_w.cwiseProduct(omega);
  Vector coeff = spec.v.transpose() * z;
  for (Index i = 0; i < coeff.size(); ++i) coeff[i] *= std::pow(spec.sing_sq[i], 0.5 * nu);
  return (spec.v * coeff).cwiseQuotient(sqrt_w);
}

Vector construct_projected_power_solution(const LinearOperator& op, double nu, const Vector& omega,
                                          const ConstraintSet& c) {
  return c.project(apply_normal_power(op, nu, omega));
}

// ---------------------------------------------------------------------------

std::string_view to_string(ErrorMeasure m) {
  switch (m) {
    case ErrorMeasure::norm: return "norm";
    case ErrorMeasure::norm_sq_half: return "norm_sq_half";
    case ErrorMeasure::bregman: return "bregman";
    case ErrorMeasure::l1: return "l1";
    case ErrorMeasure::kl: return "kl";
  }
  return "unknown";
}

std::optional<ErrorMeasure> parse_error_measure(std::string_view name) {
  for (auto m : {ErrorMeasure::norm, ErrorMeasure::norm_sq_half, ErrorMeasure::bregman, ErrorMeasure::l1,
                 ErrorMeasure::kl})
    if (to_string(m) == name) return m;
  return std::nullopt;
}

double error_measure(ErrorMeasure measure, const Penalty& p, const Vector& x, const Vector& xref,
                     const Vector& xi_ref) {
  if (x.size() != xref.size()) throw std::invalid_argument("error_measure: dimension mismatch");
  const Vector& w = p.weights();
  switch (measure) {
    case ErrorMeasure::norm:
      return weighted_l2(w, x - xref);
    case ErrorMeasure::norm_sq_half: {
      const double d = weighted_l2(w, x - xref);
      return 0.5 * d * d;
    }
    case ErrorMeasure::l1:
      return weighted_sum(w, (x - xref).cwiseAbs());
    case ErrorMeasure::bregman:
      if (xi_ref.size() != x.size()) throw std::invalid_argument("error_measure: bregman needs xi_ref");
      return p.bregman(x, xref, xi_ref);
    case ErrorMeasure::kl: {
      double sum = 0.0;
      for (Index i = 0; i < x.size(); ++i) {
        const double wi = w.size() ? w[i] : 1.0;
        if (x[i] < 0.0 || xref[i] < 0.0) return kInfinity;
        if (x[i] == 0.0) {
          sum += wi * xref[i];
        } else {
          if (xref[i] == 0.0) return kInfinity;
          sum += wi * (x[i] * std::log(x[i] / xref[i]) - x[i] + xref[i]);
        }
      }
      return sum;
    }
  }
  return kInfinity;
}

// ---------------------------------------------------------------------------

QuadraticEta::QuadraticEta(const LinearOperator& op, const Vector& x_dagger) {
  if (x_dagger.size() != op.domain_dim()) throw std::invalid_argument("QuadraticEta: dimension mismatch");
  const RightSpectrum spec = right_spectrum(op);
  const Vector z = op.domain_weights().cwiseSqrt().cwiseProduct(x_dagger);
  coeff_sq_ = (spec.v.transpose() * z).array().square().matrix();
  sing_sq_ = spec.sing_sq;
}

double QuadraticEta::operator()(double mu) const {
  // Per right singular direction the supremum is a^2 / (2 (1 + 2 mu s^2)).
  return (coeff_sq_.array() / (2.0 * (1.0 + 2.0 * mu * sing_sq_.array()))).sum();
}

EtaResult eta_oracle(std::int64_t n, double gamma, double coeff, const LinearOperator& op, const Vector& y,
                     const Penalty& p, const Vector& x_dagger, double tolerance, int max_inner) {
  if (n < 0 || !(gamma > 0.0) || !(coeff > 0.0)) throw std::invalid_argument("eta_oracle: bad parameters");
  if (y.size() != op.range_dim() || x_dagger.size() != op.domain_dim())
    throw std::invalid_argument("eta_oracle: dimension mismatch");
  const double mu = coeff * gamma * static_cast<double>(n + 1);
  const double r_dagger = p.evaluate(x_dagger);
  if (r_dagger == kInfinity) throw std::invalid_argument("eta_oracle: x_dagger outside dom(R)");

  EtaResult out;
  const bool exact_data = (op.apply(x_dagger) - y).norm() <= 1e-12 * std::max(1.0, y.norm());
  if (p.kind() == PenaltyKind::quadratic && exact_data) {
    out.value = out.upper = QuadraticEta(op, x_dagger)(mu);
    out.exact = out.converged = true;
    return out;
  }

  // Accelerated ascent on the strongly concave dual.
  const double op_norm = penalty_operator_norm(op, p);
  const double smooth = lipschitz_constant(op_norm, p.sigma()) + 1.0 / (2.0 * mu);
  const double concavity = 1.0 / (2.0 * mu);
  const double kappa = smooth / concavity;
  const double momentum = (std::sqrt(kappa) - 1.0) / (std::sqrt(kappa) + 1.0);
  const double step = 1.0 / smooth;

  auto dual_value = [&](const Vector& lam, const Vector& xi) {
    return -p.conjugate_value(xi) + lam.dot(y) - lam.squaredNorm() / (4.0 * mu);
  };

  Vector lambda = Vector::Zero(op.range_dim());
  Vector previous = lambda;
  double last_dual = -kInfinity;
  double best_primal = kInfinity;
  double best_dual = -kInfinity;
  for (int it = 1; it <= max_inner; ++it) {
    Vector probe = lambda + momentum * (lambda - previous);
    const Vector x = p.conjugate_grad(op.apply_adjoint(probe));
    const Vector grad = y - op.apply(x) - probe / (2.0 * mu);
    previous = lambda;
    lambda = probe + step * grad;
    out.inner_iterations = it;

    if (it % 10 == 0 || it == max_inner) {
      const Vector xi = op.apply_adjoint(lambda);
      const Vector xc = p.conjugate_grad(xi);
      const double d = dual_value(lambda, xi);
      const double primal = p.evaluate(xc) + mu * (op.apply(xc) - y).squaredNorm();
      best_primal = std::min(best_primal, primal);
      best_dual = std::max(best_dual, d);
      if (d < last_dual) previous = lambda;  // restart momentum
      last_dual = d;
      if (best_primal - best_dual <= tolerance) {
        out.converged = true;
        break;
      }
    }
  }
  out.value = std::max(0.0, r_dagger - best_primal);
  out.upper = r_dagger - best_dual;
  out.gap = best_primal - best_dual;
  return out;
}

// ---------------------------------------------------------------------------

RateFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_loglog: size mismatch");
  RateFit fit;
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(y[i]) || !std::isfinite(x[i])) {
      ++fit.points_excluded;
      fit.warnings.push_back("excluded nonpositive or non-finite point at x = " + std::to_string(x[i]));
      continue;
    }
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const std::size_t m = lx.size();
  if (m < 3) throw std::invalid_argument("rate fit needs at least three positive points");
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("rate fit needs at least two distinct abscissae");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  fit.points_used = static_cast<int>(m);
  return fit;
}

RateFit fit_rate(const std::vector<RatePoint>& points) {
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(points.size());
  y.reserve(points.size());
  for (const auto& p : points) {
    x.push_back(p.delta);
    y.push_back(p.error);
  }
  return fit_loglog(x, y);
}

TrimmedRateFit fit_rate_trimmed(const std::vector<RatePoint>& points) {
  TrimmedRateFit out;
  out.full = fit_rate(points);
  std::vector<RatePoint> usable;
  for (const auto& p : points)
    if (p.delta > 0.0 && p.error > 0.0 && std::isfinite(p.error)) usable.push_back(p);
  if (usable.empty()) return out;
  const double largest =
      std::max_element(usable.begin(), usable.end(), [](auto& a, auto& b) { return a.delta < b.delta; })->delta;
  std::vector<RatePoint> rest;
  for (const auto& p : usable)
    if (p.delta != largest) rest.push_back(p);
  if (rest.size() >= 3 && usable.size() >= 4) {
    out.without_largest = fit_rate(rest);
    out.used_trimmed = out.without_largest->r_squared > out.full.r_squared + 0.05;
  }
  return out;
}

// ---------------------------------------------------------------------------

double projected_source_constant(double nu) {
  if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("projected_source_constant: nu must lie in (0, 1]");
  return std::pow(2.0, -2.0 * nu / (1.0 + nu)) * (1.0 + nu) * std::pow(1.0 - nu, (1.0 - nu) / (1.0 + nu));
}

VscReport variational_sc_margin(const LinearOperator& op, const Penalty& p, const Vector& x_dagger, double M,
                                double q, VscMeasure measure, int samples, std::uint64_t seed,
                                const Vector& xi_dagger) {
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("variational_sc_margin: q must lie in (0, 1]");
  if (measure == VscMeasure::bregman && xi_dagger.size() != x_dagger.size())
    throw std::invalid_argument("variational_sc_margin: bregman measure needs xi_dagger");
  const Vector y = op.apply(x_dagger);
  const double r_dagger = p.evaluate(x_dagger);
  const Vector& w = p.weights();

  auto slack_at = [&](const Vector& x) {
    double e = 0.0;
    switch (measure) {
      case VscMeasure::bregman:
        e = p.bregman(x, x_dagger, xi_dagger);
        break;
      case VscMeasure::quarter_norm_sq: {
        const double d = weighted_l2(w, x - x_dagger);
        e = 0.25 * d * d;
        break;
      }
      case VscMeasure::half_l1_sq: {
        const double d = weighted_sum(w, (x - x_dagger).cwiseAbs());
        e = 0.5 * d * d;
        break;
      }
    }
    const double res = (op.apply(x) - y).norm();
    return p.evaluate(x) - r_dagger + M * (res > 0.0 ? std::pow(res, q) : 0.0) - e;
  };

  const Vector base = xi_dagger.size() ? xi_dagger : x_dagger;
  Rng rng(seed);
  VscReport report;
  report.min_slack = slack_at(x_dagger);
  report.samples = 1;
  for (int s = 1; s < samples; ++s) {
    const double scale = std::pow(10.0, rng.uniform(-4.0, 1.0));
    const Vector x = p.conjugate_grad(base + scale * rng.normal_vector(base.size()));
    report.min_slack = std::min(report.min_slack, slack_at(x));
    ++report.samples;
  }
  return report;
}

KlL1Report kl_l1_bound_check(const Vector& weights, int samples, std::uint64_t seed, bool unit_mass) {
  if (weights.size() == 0 || (weights.array() <= 0.0).any())
    throw std::invalid_argument("kl_l1_bound_check: positive weights required");
  const Index n = weights.size();
  Rng rng(seed);
  KlL1Report report;
  for (int s = 0; s < samples; ++s) {
    // x must be bounded away from zero; xt may have zeros.
    Vector x = (0.5 * rng.normal_vector(n)).array().exp().matrix();
    Vector xt;
    if (s % 3 == 0) {
      // Near-coincident pairs, where the bound is tightest.
      const double eps = std::pow(10.0, rng.uniform(-4.0, -1.0));
      xt = x.cwiseProduct((eps * rng.normal_vector(n)).array().exp().matrix());
    } else {
      xt = (0.8 * rng.normal_vector(n)).array().exp().matrix();
      for (Index i = 0; i < n; ++i)
        if (rng.uniform() < 0.15) xt[i] = 0.0;
    }
    if (unit_mass) {
      x /= weights.dot(x);
      if (weights.dot(xt) > 0.0) xt /= weights.dot(xt);
    } else {
      x *= rng.uniform(0.2, 3.0);
      xt *= rng.uniform(0.2, 3.0);
    }
    double kl = 0.0;
    for (Index i = 0; i < n; ++i) {
      kl += weights[i] * ((xt[i] > 0.0 ? xt[i] * std::log(xt[i] / x[i]) : 0.0) - xt[i] + x[i]);
    }
    const double l1 = weights.dot((x - xt).cwiseAbs());
    const double rhs = (4.0 / 3.0 * weights.dot(x) + 2.0 / 3.0 * weights.dot(xt)) * kl;
    report.max_violation = std::max(report.max_violation, l1 * l1 - rhs);
    ++report.samples;
  }
  return report;
}

}  // namespace dualgrad
