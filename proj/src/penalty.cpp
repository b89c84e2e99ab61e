#include "dualgrad/penalty.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "dualgrad/random.hpp"

namespace dualgrad {

// ---------------------------------------------------------------------------
// Constraint sets

ConstraintSet ConstraintSet::whole_space() { return ConstraintSet(); }

ConstraintSet ConstraintSet::nonneg_orthant() {
  ConstraintSet c;
  c.kind_ = Kind::nonneg_orthant;
  return c;
}

ConstraintSet ConstraintSet::box(double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("box constraint: require lo <= hi");
  ConstraintSet c;
  c.kind_ = Kind::box;
  c.lo_ = lo;
  c.hi_ = hi;
  return c;
}

ConstraintSet ConstraintSet::simplex(double total_mass, Vector weights) {
  if (!(total_mass > 0.0)) throw std::invalid_argument("simplex constraint: total mass must be positive");
  if (weights.size() > 0 && (weights.array() <= 0.0).any())
    throw std::invalid_argument("simplex constraint: weights must be positive");
  ConstraintSet c;
  c.kind_ = Kind::simplex;
  c.mass_ = total_mass;
  c.weights_ = std::move(weights);
  return c;
}

Vector ConstraintSet::project(const Vector& v) const {
  switch (kind_) {
    case Kind::whole_space:
      return v;
    case Kind::nonneg_orthant:
      return v.cwiseMax(0.0);
    case Kind::box:
      return v.cwiseMax(lo_).cwiseMin(hi_);
    case Kind::simplex:
      return project_simplex(v, mass_, weights_);
  }
  return v;
}

bool ConstraintSet::contains(const Vector& x, double tol) const {
  switch (kind_) {
    case Kind::whole_space:
      return true;
    case Kind::nonneg_orthant:
      return (x.array() >= -tol).all();
    case Kind::box:
      return (x.array() >= lo_ - tol).all() && (x.array() <= hi_ + tol).all();
    case Kind::simplex: {
      if ((x.array() < -tol).any()) return false;
      const double mass = weights_.size() ? weights_.dot(x) : x.sum();
      return std::abs(mass - mass_) <= tol * std::max(1.0, mass_);
    }
  }
  return false;
}

Vector project_simplex(const Vector& v, double mass, const Vector& weights) {
  const Index n = v.size();
  const bool weighted = weights.size() > 0;
  if (weighted && weights.size() != n) throw std::invalid_argument("project_simplex: weight size mismatch");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return v[a] > v[b]; });

  // theta solves sum_i w_i max(v_i - theta, 0) = mass; the active prefix is
  // the longest one whose smallest entry still exceeds its threshold.
  double sum_w = 0.0;
  double sum_wv = 0.0;
  double theta = 0.0;
  for (Index k = 0; k < n; ++k) {
    const Index i = order[static_cast<std::size_t>(k)];
    const double w = weighted ? weights[i] : 1.0;
    sum_w += w;
    sum_wv += w * v[i];
    const double candidate = (sum_wv - mass) / sum_w;
    if (v[i] > candidate) theta = candidate;
    else break;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

// ---------------------------------------------------------------------------
// Penalty base

std::string_view to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::quadratic: return "quadratic";
    case PenaltyKind::projected_quadratic: return "projected_quadratic";
    case PenaltyKind::elastic_net: return "elastic_net";
    case PenaltyKind::entropy_simplex: return "entropy_simplex";
  }
  return "unknown";
}

Penalty::Penalty(double sigma, Vector weights) : sigma_(sigma), weights_(std::move(weights)) {
  if (weights_.size() > 0 && (!weights_.allFinite() || (weights_.array() <= 0.0).any()))
    throw std::invalid_argument("penalty: pairing weights must be finite and positive");
}

void Penalty::check_dim(const Vector& v) const {
  if (weights_.size() > 0 && v.size() != weights_.size())
    throw std::invalid_argument("penalty: dimension mismatch with pairing weights");
}

double Penalty::pairing(const Vector& xi, const Vector& x) const {
  if (xi.size() != x.size()) throw std::invalid_argument("pairing: dimension mismatch");
  check_dim(x);
  if (weights_.size() == 0) return xi.dot(x);
  return (weights_.array() * xi.array() * x.array()).sum();
}

double Penalty::weighted_sq_norm(const Vector& v) const {
  if (weights_.size() == 0) return v.squaredNorm();
  return (weights_.array() * v.array().square()).sum();
}

double Penalty::norm(const Vector& x) const { return std::sqrt(weighted_sq_norm(x)); }

double Penalty::dual_norm(const Vector& xi) const { return std::sqrt(weighted_sq_norm(xi)); }

double Penalty::bregman(const Vector& xbar, const Vector& x, const Vector& xi) const {
  const double rbar = evaluate(xbar);
  if (rbar == kInfinity) return kInfinity;
  return rbar - evaluate(x) - pairing(xi, xbar - x);
}

double bregman(const Penalty& p, const Vector& xbar, const Vector& x, const Vector& xi) {
  return p.bregman(xbar, x, xi);
}

double fenchel_young_residual(const Penalty& p, const Vector& x, const Vector& xi) {
  const double r = p.evaluate(x);
  if (r == kInfinity) return kInfinity;
  const double rs = p.conjugate_value(xi);
  const double pair = p.pairing(xi, x);
  const double scale = std::max(1.0, std::abs(r) + std::abs(rs) + std::abs(pair));
  return std::abs(r + rs - pair) / scale;
}

// ---------------------------------------------------------------------------
// Concrete penalties

namespace {

class QuadraticPenalty final : public Penalty {
 public:
  explicit QuadraticPenalty(Vector w) : Penalty(0.5, std::move(w)) {}

  PenaltyKind kind() const override { return PenaltyKind::quadratic; }

  double evaluate(const Vector& x) const override {
    check_dim(x);
    return 0.5 * weighted_sq_norm(x);
  }
  Vector conjugate_grad(const Vector& xi) const override {
    check_dim(xi);
    return xi;
  }
  double conjugate_value(const Vector& xi) const override {
    check_dim(xi);
    return 0.5 * weighted_sq_norm(xi);
  }
  double bregman(const Vector& xbar, const Vector& x, const Vector& xi) const override {
    // 1/2 ||xbar - x||^2 + <x - xi, xbar - x>; the second term vanishes when xi = x.
    const Vector d = xbar - x;
    return 0.5 * weighted_sq_norm(d) + pairing(x - xi, d);
  }
};

class ProjectedQuadraticPenalty final : public Penalty {
 public:
  ProjectedQuadraticPenalty(ConstraintSet c, Vector w) : Penalty(0.5, std::move(w)), set_(std::move(c)) {
    if (set_.kind() == ConstraintSet::Kind::simplex && set_.weights().size() != weights_.size())
      throw std::invalid_argument("projected quadratic: simplex weights must match pairing weights");
    if (set_.kind() == ConstraintSet::Kind::simplex && weights_.size() > 0 &&
        (set_.weights() - weights_).cwiseAbs().maxCoeff() > 0.0)
      throw std::invalid_argument("projected quadratic: simplex weights must match pairing weights");
  }

  PenaltyKind kind() const override { return PenaltyKind::projected_quadratic; }
  const ConstraintSet& constraint() const { return set_; }

  double evaluate(const Vector& x) const override {
    check_dim(x);
    if (!set_.contains(x, 1e-12)) return kInfinity;
    return 0.5 * weighted_sq_norm(x);
  }
  Vector conjugate_grad(const Vector& xi) const override {
    check_dim(xi);
    return set_.project(xi);
  }
  double conjugate_value(const Vector& xi) const override {
    const Vector p = conjugate_grad(xi);
    return pairing(xi, p) - 0.5 * weighted_sq_norm(p);
  }
  double bregman(const Vector& xbar, const Vector& x, const Vector& xi) const override {
    check_dim(xbar);
    if (!set_.contains(xbar, 1e-12)) return kInfinity;
    const Vector d = xbar - x;
    return 0.5 * weighted_sq_norm(d) + pairing(x - xi, d);
  }

 private:
  ConstraintSet set_;
};

class ElasticNetPenalty final : public Penalty {
 public:
  ElasticNetPenalty(double alpha, double beta, Vector w)
      : Penalty(0.5 * alpha, std::move(w)), alpha_(alpha), beta_(beta) {}

  PenaltyKind kind() const override { return PenaltyKind::elastic_net; }

  double evaluate(const Vector& x) const override {
    check_dim(x);
    const Vector ax = x.cwiseAbs();
    const double l1 = weights_.size() ? weights_.dot(ax) : ax.sum();
    return beta_ * l1 + 0.5 * alpha_ * weighted_sq_norm(x);
  }
  Vector conjugate_grad(const Vector& xi) const override {
    check_dim(xi);
    Vector out(xi.size());
    for (Index i = 0; i < xi.size(); ++i) {
      const double shrunk = std::max(std::abs(xi[i]) - beta_, 0.0);
      out[i] = std::copysign(shrunk, xi[i]) / alpha_;
      if (shrunk == 0.0) out[i] = 0.0;
    }
    return out;
  }
  double conjugate_value(const Vector& xi) const override {
    check_dim(xi);
    const Vector shrunk = (xi.cwiseAbs().array() - beta_).cwiseMax(0.0).matrix();
    return weighted_sq_norm(shrunk) / (2.0 * alpha_);
  }
  double bregman(const Vector& xbar, const Vector& x, const Vector& xi) const override {
    check_dim(xbar);
    const Vector d = xbar - x;
    // beta (|xbar| - |x|) - (xi - alpha x) d is nonnegative per entry for xi in dR(x).
    const Vector l1_part = beta_ * (xbar.cwiseAbs() - x.cwiseAbs()) - (xi - alpha_ * x).cwiseProduct(d);
    const double linear = weights_.size() ? weights_.dot(l1_part) : l1_part.sum();
    return linear + 0.5 * alpha_ * weighted_sq_norm(d);
  }

 private:
  double alpha_;
  double beta_;
};

class EntropySimplexPenalty final : public Penalty {
 public:
  explicit EntropySimplexPenalty(Vector w) : Penalty(0.5, std::move(w)) {
    if (weights_.size() == 0) throw std::invalid_argument("entropy penalty: weights required");
  }

  PenaltyKind kind() const override { return PenaltyKind::entropy_simplex; }

  double evaluate(const Vector& x) const override {
    check_dim(x);
    if ((x.array() < 0.0).any()) return kInfinity;
    if (std::abs(weights_.dot(x) - 1.0) > kMassTolerance) return kInfinity;
    double sum = 0.0;
    for (Index i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) sum += weights_[i] * x[i] * std::log(x[i]);
    return sum;
  }
  Vector conjugate_grad(const Vector& xi) const override {
    check_dim(xi);
    const double shift = xi.maxCoeff();
    Vector e = (xi.array() - shift).exp().matrix();
    e /= weights_.dot(e);
    return e;
  }
  double conjugate_value(const Vector& xi) const override {
    check_dim(xi);
    const double shift = xi.maxCoeff();
    return shift + std::log(weights_.dot((xi.array() - shift).exp().matrix()));
  }
  double bregman(const Vector& xbar, const Vector& x, const Vector& xi) const override {
    check_dim(xbar);
    if ((xbar.array() < 0.0).any() || std::abs(weights_.dot(xbar) - 1.0) > kMassTolerance) return kInfinity;
    // Kullback-Leibler part plus <1 + log x - xi, xbar - x>, which is zero
    // when xi = 1 + log x + const on the simplex.
    double kl = 0.0;
    double correction = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
      const double w = weights_[i];
      if (x[i] <= 0.0) {
        if (xbar[i] > 0.0) return kInfinity;
        continue;
      }
      if (xbar[i] > 0.0) kl += w * (xbar[i] * std::log(xbar[i] / x[i]) - xbar[i] + x[i]);
      else kl += w * x[i];
      correction += w * (1.0 + std::log(x[i]) - xi[i]) * (xbar[i] - x[i]);
    }
    return kl + correction;
  }
  double norm(const Vector& x) const override { return weights_.dot(x.cwiseAbs()); }
  double dual_norm(const Vector& xi) const override { return xi.cwiseAbs().maxCoeff(); }

 private:
  static constexpr double kMassTolerance = 1e-9;
};

}  // namespace

PenaltyPtr make_quadratic(Vector weights) { return std::make_shared<QuadraticPenalty>(std::move(weights)); }

PenaltyPtr make_projected_quadratic(ConstraintSet c, Vector weights) {
  return std::make_shared<ProjectedQuadraticPenalty>(std::move(c), std::move(weights));
}

PenaltyPtr make_entropy_simplex(Vector weights) {
  return std::make_shared<EntropySimplexPenalty>(std::move(weights));
}

PenaltyPtr make_elastic_net(double alpha, double beta, Vector weights) {
  if (!(alpha > 0.0)) throw std::invalid_argument("elastic net: alpha must be positive");
  if (!(beta >= 0.0)) throw std::invalid_argument("elastic net: beta must be nonnegative");
  return std::make_shared<ElasticNetPenalty>(alpha, beta, std::move(weights));
}

// ---------------------------------------------------------------------------

namespace {

// A point of dom(R) that is generally not a conjugate-map image.
Vector sample_domain_point(const Penalty& p, Index dim, Rng& rng) {
  switch (p.kind()) {
    case PenaltyKind::quadratic:
    case PenaltyKind::elastic_net:
      return rng.normal_vector(dim);
    case PenaltyKind::projected_quadratic:
      return p.conjugate_grad(2.0 * rng.normal_vector(dim));
    case PenaltyKind::entropy_simplex: {
      Vector x = rng.uniform_vector(dim, 0.0, 1.0);
      // Some exact zeros: they lie in dom(R) but not in dom(dR).
      for (Index i = 0; i < dim; ++i)
        if (rng.uniform() < 0.2) x[i] = 0.0;
      if (x.sum() == 0.0) x[0] = 1.0;
      return x / p.weights().dot(x);
    }
  }
  return rng.normal_vector(dim);
}

}  // namespace

ConvexityReport strong_convexity_check(const Penalty& p, Index dim, int samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("strong_convexity_check: samples must be >= 1");
  if (p.weights().size() > 0) dim = p.weights().size();
  Rng rng(seed);
  ConvexityReport report;
  for (int s = 0; s < samples; ++s) {
    const Vector xi = std::exp(rng.uniform(-2.0, 1.5)) * rng.normal_vector(dim);
    const Vector x = p.conjugate_grad(xi);
    const Vector xbar = sample_domain_point(p, dim, rng);
    const double dist = p.norm(xbar - x);
    const double lower = p.sigma() * dist * dist;
    const double breg = p.bregman(xbar, x, xi);
    ++report.samples;
    if (breg < lower - 1e-8) ++report.violations;
    if (lower > 0.0) report.min_ratio = std::min(report.min_ratio, breg / lower);
  }
  return report;
}

}  // namespace dualgrad
