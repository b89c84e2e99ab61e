#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "dualgrad/experiment.hpp"

using namespace dualgrad;
namespace fs = std::filesystem;

namespace {

Json diag_tree() {
  return Json::parse(R"({
    "problem": {"name": "diag_synthetic", "n": 60, "seed": 0},
    "method": "plain",
    "stopping": {"mode": "discrepancy", "tau": 1.5},
    "deltas": [1e-2, 3e-3, 1e-3, 3e-4],
    "seeds_per_delta": 3
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::current_path() / "experiment_out" / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("valid configs parse with defaults filled in") {
  const ExperimentConfig c = parse_config(diag_tree());
  CHECK(c.problem.profile == LambdaProfile::power_decay);
  CHECK(c.measures.size() == 2);
  CHECK(c.hash.size() == 16);
  CHECK(c.canonical.at("gamma") == "auto");
  CHECK_FALSE(c.canonical.contains("output_dir"));
  CHECK(validate_config(diag_tree()).empty());

  Json other = diag_tree();
  other["output_dir"] = "elsewhere";
  CHECK(parse_config(other).hash == c.hash);
  other["stopping"]["tau"] = 1.6;
  CHECK(parse_config(other).hash != c.hash);

  const ExperimentConfig e = parse_config(Json::parse(
      R"({"problem": {"name": "density_recovery", "n": 40}, "deltas": [1e-2]})"));
  CHECK(e.stopping.tau == 3.0);
  CHECK(e.measures.size() == 3);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("invalid configs report the field path") {
  auto expect = [](Json tree, const std::string& needle) {
    const auto errs = validate_config(tree);
    CAPTURE(needle);
    REQUIRE_FALSE(errs.empty());
    bool found = false;
    for (const auto& e : errs) found = found || e.find(needle) != std::string::npos;
    CHECK(found);
  };
  Json t = diag_tree();
  t["stopping"]["tau"] = 1.0;
  expect(t, "stopping.tau: tau must be > 1");
  t = diag_tree();
  t["deltas"] = {1e-3, 1e-2};
  expect(t, "deltas must be strictly decreasing");
  t = diag_tree();
  t["deltas"] = {-1.0};
  expect(t, "deltas[0]");
  t = diag_tree();
  t["problem"]["name"] = "tomography";
  expect(t, "problem.name");
  t = diag_tree();
  t["colour"] = "red";
  expect(t, "colour");
  t = diag_tree();
  t["gamma"] = -1.0;
  expect(t, "gamma");
  t = diag_tree();
  t["method"] = "entropic_landweber";
  expect(t, "method");
  t = diag_tree();
  t["gamma"] = 10.0;
  expect(t, "gamma");
  t = diag_tree();
  t["measures"] = {"lp"};
  expect(t, "measures");
  CHECK_THROWS_AS(parse_config(t), ConfigError);
}

TEST_CASE("unproven region needs explicit permission") {
  Json t = diag_tree();
  t["method"] = "accelerated";
  REQUIRE(validate_config(t).size() == 1);
  CHECK_THROWS_AS(prepare(parse_config(t)), ConfigError);
  t["allow_unproven_region"] = true;
  CHECK(validate_config(t).empty());
  CHECK_FALSE(prepare(parse_config(t)).unproven.empty());
}

TEST_CASE("run_single writes a trace with nonincreasing residual") {
  Json t = diag_tree();
  t["deltas"] = {1e-3};
  t["record_every"] = 5;
  const ExperimentConfig c = parse_config(t);
  const fs::path dir = scratch("single");
  const SingleResult r = run_single(c, dir.string());
  CHECK(r.cell.termination == Termination::discrepancy_met);
  CHECK(r.cell.residual <= 1.5 * 1e-3);
  const auto& tr = r.cell.record.trace;
  for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i].residual_norm <= tr[i - 1].residual_norm + 1e-12);
  for (const char* f : {"trace.csv", "summary.csv", "solution.csv", "iterates.csv", "run.log"})
    CHECK(fs::exists(dir / f));
  const auto tl = lines(dir / "trace.csv");
  CHECK(tl[0] == "# dualgrad config_hash=" + c.hash +
                     " units: n in iterations; residual = ||A x_n - y_delta||; dual_value = d(lambda_n)");
  CHECK(tl[1] == "n,residual,dual_value");
  CHECK(tl.size() == tr.size() + 2);
  const std::regex number(R"(-?\d\.\d{16}e[+-]\d{2,3})");
  std::stringstream row(tl[2]);
  std::string field;
  std::getline(row, field, ',');
  CHECK(field == "0");
  while (std::getline(row, field, ',')) CHECK(std::regex_match(field, number));
  CHECK(slurp(dir / "trace.csv").find("wall") == std::string::npos);
  CHECK(slurp(dir / "run.log").find("wall_s=") != std::string::npos);
}

TEST_CASE("zero noise with zero iterations returns the initial iterate") {
  Json t = diag_tree();
  t["deltas"] = {0.0};
  t["stopping"] = {{"mode", "a_priori"}, {"n_max", 0}};
  const SingleResult r = run_single(parse_config(t), "");
  CHECK(r.cell.n_stop == 0);
  CHECK(r.cell.record.final_iterate.x.isZero(0.0));
}

TEST_CASE("rate study runs seeds times deltas solves and is byte-reproducible") {
  const ExperimentConfig c = parse_config(diag_tree());
  const fs::path a = scratch("study_a");
  const fs::path b = scratch("study_b");
  const StudyResult ra = run_rate_study(c, a.string(), 1);
  const StudyResult rb = run_rate_study(c, b.string(), 2);
  CHECK(ra.invocations == 12);
  CHECK(ra.cells.size() == 12);
  int solve_lines = 0;
  for (const auto& l : lines(a / "run.log")) solve_lines += l.rfind("solve ", 0) == 0;
  CHECK(solve_lines == 12);
  for (const char* f : {"points.csv", "medians.csv", "fit.csv", "rate_norm.dat", "rate_bregman.dat", "plot.gp"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
    CHECK_FALSE(slurp(a / f).empty());
  }
  for (std::size_t i = 0; i < ra.cells.size(); ++i) CHECK(ra.cells[i].errors == rb.cells[i].errors);
  CHECK(ra.medians.size() == 8);
  REQUIRE(ra.fits.size() == 2);
  CHECK(ra.fits[0].fit);

  Json t = diag_tree();
  t["deltas"] = {1e-2, 1e-3, 1e-4};
  CHECK_THROWS_AS(run_rate_study(parse_config(t), "", 1), ConfigError);
}

TEST_CASE("comparison of identical methods has ratio one") {
  Json t = diag_tree();
  t["seeds_per_delta"] = 1;
  const ExperimentConfig a = parse_config(t);
  t["method"] = "primal_form";
  const ExperimentConfig b = parse_config(t);
  const ComparisonResult r = run_comparison(a, b, scratch("cmp").string(), 2);
  REQUIRE(r.rows.size() == 4);
  for (const auto& row : r.rows) {
    CHECK(row.ratio == 1.0);
    CHECK(row.a.n_stop == row.b.n_stop);
  }
  t["problem"]["seed"] = 1;
  CHECK_THROWS_AS(run_comparison(a, parse_config(t), "", 1), ConfigError);
}

TEST_CASE("entropic dual gradient against entropic Landweber") {
  Json t = Json::parse(R"({
    "problem": {"name": "density_recovery", "n": 60, "seed": 0},
    "method": "plain",
    "stopping": {"mode": "discrepancy", "tau": 3},
    "deltas": [1e-2, 1e-3],
    "record_every": 1
  })");
  const ExperimentConfig a = parse_config(t);
  t["method"] = "entropic_landweber";
  const ExperimentConfig b = parse_config(t);
  const fs::path dir = scratch("entropic");
  const ComparisonResult r = run_comparison(a, b, dir.string(), 1);
  for (const auto& row : r.rows) {
    CHECK(row.a.simplex_ok);
    CHECK(row.b.simplex_ok);
    CHECK(row.a.errors.size() == 3);
    CHECK(row.a.termination == Termination::discrepancy_met);
  }
  const auto header = lines(dir / "comparison.csv")[1];
  CHECK(header.find("kl_a") != std::string::npos);
}

TEST_CASE("format_real") {
  CHECK(format_real(0.1) == "1.0000000000000001e-01");
  CHECK(format_real(-2.0) == "-2.0000000000000000e+00");
  CHECK(format_real(std::nan("")) == "nan");
  CHECK(format_real(kInfinity) == "inf");
  CHECK(format_real(-kInfinity) == "-inf");
  CHECK(std::stod(format_real(1.0 / 3.0)) == 1.0 / 3.0);
}
