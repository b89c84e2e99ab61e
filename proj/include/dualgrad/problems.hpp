#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dualgrad/analysis.hpp"
#include "dualgrad/linop.hpp"
#include "dualgrad/penalty.hpp"

namespace dualgrad {

struct ProblemInstance {
  std::string name;
  std::string label;
  LinearOperator op;
  Vector x_true;
  Vector y_exact;
  /// A* lambda_dagger, a subgradient of R at x_true for every shipped problem.
  Vector xi_true;
  SourceSpec source;
  PenaltyKind penalty_kind = PenaltyKind::quadratic;
  PenaltyPtr penalty;
};

struct NoisyData {
  Vector ydelta;
  double delta = 0.0;
  std::uint64_t seed = 0;
};

/// y + delta * e / ||e|| for a seeded standard normal e, so ||ydelta - y|| = delta.
NoisyData add_noise(const Vector& y, double delta, std::uint64_t seed);

/// Shape of the seeded lambda_dagger.
enum class LambdaProfile {
  smooth,       // a few low-frequency cosines
  white,        // iid normal entries
  power_decay,  // entries k^{-decay} with seeded signs
};

struct ProblemOptions {
  std::string name;
  Index n = 200;
  std::uint64_t seed = 0;
  LambdaProfile profile = LambdaProfile::white;
  double decay = 0.75;
};

/// Defaults for `name` with the given size and seed.
ProblemOptions default_problem_options(std::string_view name, Index n, std::uint64_t seed);

ProblemInstance make_problem(const ProblemOptions& options);
ProblemInstance make_problem(std::string_view name, Index n, std::uint64_t seed);

std::vector<std::string> list_problems();
std::string describe_problem(std::string_view name);

/// Seeded lambda_dagger of unit norm.
Vector make_lambda(Index m, LambdaProfile profile, double decay, std::uint64_t seed);

/// Deterministic seed for a (base, i, j) grid cell.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t i, std::uint64_t j);

}  // namespace dualgrad
