#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dualgrad/experiment.hpp"

using namespace dualgrad;

namespace {

struct Common {
  std::vector<std::string> configs;
  std::string out;
  int jobs = 1;
  std::int64_t record_every = -1;
  bool allow_unproven = false;
};

ExperimentConfig load(const std::string& path, const Common& c) {
  ExperimentConfig cfg = load_config(path);
  if (c.record_every >= 0) cfg.record_every = c.record_every;
  if (c.allow_unproven) cfg.allow_unproven_region = true;
  refresh_hash(cfg);
  return cfg;
}

std::string out_dir(const ExperimentConfig& cfg, const Common& c) { return c.out.empty() ? cfg.output_dir : c.out; }

int cmd_solve(const Common& c) {
  const ExperimentConfig cfg = load(c.configs.front(), c);
  const SingleResult r = run_single(cfg, out_dir(cfg, c));
  std::printf("config_hash %s\nn_stop %lld\ntermination %s\nresidual %s\n", cfg.hash.c_str(),
              static_cast<long long>(r.cell.n_stop), std::string(to_string(r.cell.termination)).c_str(),
              format_real(r.cell.residual).c_str());
  for (std::size_t i = 0; i < cfg.measures.size(); ++i)
    std::printf("error_%s %s\n", std::string(to_string(cfg.measures[i])).c_str(), format_real(r.cell.errors[i]).c_str());
  return 0;
}

int cmd_rate_study(const Common& c) {
  const ExperimentConfig cfg = load(c.configs.front(), c);
  const StudyResult r = run_rate_study(cfg, out_dir(cfg, c), c.jobs);
  std::printf("config_hash %s\ninvocations %d\n", cfg.hash.c_str(), r.invocations);
  for (const auto& f : r.fits) {
    if (!f.fit) {
      std::printf("%s fit failed: %s\n", std::string(to_string(f.measure)).c_str(), f.error.c_str());
      continue;
    }
    const RateFit& ch = f.fit->chosen();
    std::printf("%s slope %.4f r2 %.4f (%s)\n", std::string(to_string(f.measure)).c_str(), ch.slope, ch.r_squared,
                f.fit->used_trimmed ? "trimmed" : "full");
  }
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return 0;
}

int cmd_compare(const Common& c) {
  if (c.configs.size() != 2) throw CLI::ValidationError("--config", "compare needs exactly two --config files");
  const ExperimentConfig a = load(c.configs[0], c);
  const ExperimentConfig b = load(c.configs[1], c);
  const ComparisonResult r = run_comparison(a, b, out_dir(a, c), c.jobs);
  std::printf("delta seed n_a n_b ratio\n");
  for (const auto& row : r.rows)
    std::printf("%.3e %d %lld %lld %.4f\n", row.delta, row.seed_index, static_cast<long long>(row.a.n_stop),
                static_cast<long long>(row.b.n_stop), row.ratio);
  return 0;
}

int cmd_validate(const Common& c) {
  int bad = 0;
  for (const auto& path : c.configs) {
    std::ifstream in(path);
    if (!in) {
      std::printf("%s: cannot open\n", path.c_str());
      ++bad;
      continue;
    }
    Json tree;
    try {
      tree = Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error& e) {
      std::printf("%s: parse error: %s\n", path.c_str(), e.what());
      ++bad;
      continue;
    }
    const auto errors = validate_config(tree);
    if (errors.empty()) {
      std::printf("%s: ok (config_hash %s)\n", path.c_str(), parse_config(tree).hash.c_str());
    } else {
      ++bad;
      for (const auto& e : errors) std::printf("%s: %s\n", path.c_str(), e.c_str());
    }
  }
  return bad ? 2 : 0;
}

int cmd_list() {
  for (const auto& name : list_problems()) std::printf("%-18s %s\n", name.c_str(), describe_problem(name).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual gradient regularization experiments"};
  app.require_subcommand(1);
  Common common;

  auto add_config = [&](CLI::App* sub, bool many) {
    auto* opt = sub->add_option("--config", common.configs, many ? "Config files (JSON)" : "Config file (JSON)")
                    ->required()
                    ->check(CLI::ExistingFile);
    if (!many) opt->expected(1);
  };
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "Output directory (default: output_dir from the config)");
    sub->add_option("--jobs", common.jobs, "Concurrent solves")->check(CLI::PositiveNumber);
    sub->add_option("--record-every", common.record_every, "Keep vector iterates every m steps")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--allow-unproven-region", common.allow_unproven,
                  "Permit tau/gamma outside the convergence hypotheses; outputs are marked experimental");
  };

  auto* solve = app.add_subcommand("solve", "Single solve at the first delta");
  add_config(solve, false);
  add_run_flags(solve);
  auto* study = app.add_subcommand("rate-study", "Solve over the delta grid and fit log-log rates");
  add_config(study, false);
  add_run_flags(study);
  auto* compare = app.add_subcommand("compare", "Iterations to stop for two methods on the same data");
  add_config(compare, true);
  add_run_flags(compare);
  auto* validate = app.add_subcommand("validate-config", "Check config files without solving");
  add_config(validate, true);
  auto* list = app.add_subcommand("list-problems", "Show the built-in test problems");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(common);
    if (study->parsed()) return cmd_rate_study(common);
    if (compare->parsed()) return cmd_compare(common);
    if (validate->parsed()) return cmd_validate(common);
    if (list->parsed()) return cmd_list();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
