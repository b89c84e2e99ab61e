#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualgrad/analysis.hpp"
#include "dualgrad/problems.hpp"
#include "dualgrad/solver.hpp"

namespace dualgrad {

using Json = nlohmann::json;

/// Validation failure carrying the offending field path, e.g. "stopping.tau".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct PenaltyConfig {
  PenaltyKind kind = PenaltyKind::quadratic;
  std::string constraint = "whole_space";  // projected_quadratic: whole_space, nonneg, box
  double lo = 0.0;
  double hi = 1.0;
  double alpha = 1.0;  // elastic_net
  double beta = 0.0;   // elastic_net
};

struct StoppingConfig {
  StoppingRule::Kind mode = StoppingRule::Kind::discrepancy;
  double tau = 1.5;
  double q = 1.0;
  double scale = 1.0;
  std::int64_t n_cap = 1'000'000;
  std::optional<std::int64_t> n_max;  // a_priori: fixed count instead of the delta rule
  AprioriMode apriori_mode = AprioriMode::standard;
};

struct ExperimentConfig {
  ProblemOptions problem;
  std::optional<PenaltyConfig> penalty;  // empty: the problem's own penalty
  Method method = Method::plain;
  double alpha = 3.0;
  StoppingConfig stopping;
  std::optional<double> gamma;  // empty: automatic
  std::vector<double> deltas;
  int seeds_per_delta = 1;
  std::uint64_t noise_seed = 1;
  std::vector<ErrorMeasure> measures;
  std::string output_dir = "out";
  std::int64_t record_every = 0;
  bool allow_unproven_region = false;

  /// Canonical tree (defaults filled in, output_dir removed) and its FNV-1a hash.
  Json canonical;
  std::string hash;
};

/// Parses and validates a config tree; throws ConfigError with the field path.
ExperimentConfig parse_config(const Json& tree);
ExperimentConfig load_config(const std::string& path);
/// All validation problems of a tree, empty when valid.
std::vector<std::string> validate_config(const Json& tree);

/// Re-derives `canonical` and `hash` after fields were changed in code.
void refresh_hash(ExperimentConfig& config);

std::string fnv1a_hex(const std::string& text);

/// Problem, penalty and step size shared by every run of a config.
struct PreparedExperiment {
  ProblemInstance problem;
  PenaltyPtr penalty;
  double op_norm = 0.0;
  double lipschitz = 0.0;
  double gamma = 0.0;
  /// Reason the configuration lies outside the proven region (empty if inside).
  std::string unproven;
};

PreparedExperiment prepare(const ExperimentConfig& config);

StoppingRule stopping_rule(const ExperimentConfig& config, double delta);

struct CellResult {
  double delta = 0.0;
  int seed_index = 0;
  std::uint64_t noise_seed = 0;
  std::int64_t n_stop = 0;
  Termination termination = Termination::a_priori_reached;
  double residual = 0.0;
  std::vector<double> errors;  // parallel to config.measures
  bool simplex_ok = true;      // entropy runs: every recorded iterate on the simplex
  bool nonneg_ok = true;       // projected runs: every recorded iterate >= 0
  double wall_seconds = 0.0;
  RunRecord record;
};

/// One solve for (delta, seed_index).
CellResult run_cell(const ExperimentConfig& config, const PreparedExperiment& prep, double delta, int seed_index,
                    bool keep_record);

struct SingleResult {
  CellResult cell;
};

/// Solves at deltas[0] with seed index 0 and writes trace, summary and solution CSVs.
SingleResult run_single(const ExperimentConfig& config, const std::string& out_dir);

struct MedianRow {
  double delta = 0.0;
  ErrorMeasure measure = ErrorMeasure::norm;
  double median_error = 0.0;
  double median_n_stop = 0.0;
  int runs_used = 0;
  int runs_capped = 0;
};

struct MeasureFit {
  ErrorMeasure measure = ErrorMeasure::norm;
  std::optional<TrimmedRateFit> fit;
  std::string error;  // set when fitting was impossible
};

struct StudyResult {
  std::vector<CellResult> cells;  // ordered by (delta index, seed)
  std::vector<MedianRow> medians;
  std::vector<MeasureFit> fits;
  std::vector<std::string> warnings;
  int invocations = 0;
};

/// Runs every (delta, seed) cell, fits median errors per measure. Writes
/// output files when `out_dir` is non-empty.
StudyResult run_rate_study(const ExperimentConfig& config, const std::string& out_dir, int jobs = 1);

struct ComparisonRow {
  double delta = 0.0;
  int seed_index = 0;
  CellResult a;
  CellResult b;
  double ratio = 0.0;  // n_a / n_b
};

struct ComparisonResult {
  std::vector<ComparisonRow> rows;
  std::vector<ErrorMeasure> measures;
};

/// Pairs two configs that agree on everything except method, step size and
/// stopping details; throws ConfigError otherwise.
ComparisonResult run_comparison(const ExperimentConfig& a, const ExperimentConfig& b, const std::string& out_dir,
                                int jobs = 1);

/// %.16e with "nan"/"inf" spelled portably.
std::string format_real(double v);

}  // namespace dualgrad
