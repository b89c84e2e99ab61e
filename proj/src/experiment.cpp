#include "dualgrad/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace dualgrad {

namespace {

// ---------------------------------------------------------------------------
// Config parsing

class Parser {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& message) { errors.push_back(path + ": " + message); }

  void check_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) fail(join(path, it.key()), "unknown field");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  std::optional<double> number(const Json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const Json& v = obj.at(key);
    if (!v.is_number()) {
      fail(join(path, key), "expected a number");
      return std::nullopt;
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
      fail(join(path, key), "must be finite");
      return std::nullopt;
    }
    return d;
  }

  std::optional<std::int64_t> integer(const Json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const Json& v = obj.at(key);
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15) return static_cast<std::int64_t>(d);
    }
    fail(join(path, key), "expected an integer");
    return std::nullopt;
  }

  std::optional<std::string> string(const Json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const Json& v = obj.at(key);
    if (!v.is_string()) {
      fail(join(path, key), "expected a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<bool> boolean(const Json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return std::nullopt;
    const Json& v = obj.at(key);
    if (!v.is_boolean()) {
      fail(join(path, key), "expected true or false");
      return std::nullopt;
    }
    return v.get<bool>();
  }

  const Json* object(const Json& obj, const std::string& path, const char* key, bool required) {
    if (!obj.contains(key)) {
      if (required) fail(join(path, key), "required field missing");
      return nullptr;
    }
    const Json& v = obj.at(key);
    if (!v.is_object()) {
      fail(join(path, key), "expected an object");
      return nullptr;
    }
    return &v;
  }
};

std::optional<PenaltyKind> parse_penalty_kind(const std::string& s) {
  for (auto k : {PenaltyKind::quadratic, PenaltyKind::projected_quadratic, PenaltyKind::elastic_net,
                 PenaltyKind::entropy_simplex})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<Method> parse_method(const std::string& s) {
  for (auto m : {Method::plain, Method::primal_form, Method::accelerated, Method::entropic_landweber})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::optional<LambdaProfile> parse_profile(const std::string& s) {
  if (s == "smooth") return LambdaProfile::smooth;
  if (s == "white") return LambdaProfile::white;
  if (s == "power_decay") return LambdaProfile::power_decay;
  return std::nullopt;
}

const char* profile_name(LambdaProfile p) {
  switch (p) {
    case LambdaProfile::smooth: return "smooth";
    case LambdaProfile::white: return "white";
    case LambdaProfile::power_decay: return "power_decay";
  }
  return "white";
}

PenaltyKind natural_penalty(const std::string& problem) {
  if (problem == "deconv_nonneg") return PenaltyKind::projected_quadratic;
  if (problem == "density_recovery") return PenaltyKind::entropy_simplex;
  return PenaltyKind::quadratic;
}

Json canonical_tree(const ExperimentConfig& c) {
  Json t;
  t["problem"] = {{"name", c.problem.name},
                  {"n", c.problem.n},
                  {"seed", c.problem.seed},
                  {"lambda_profile", profile_name(c.problem.profile)},
                  {"decay", c.problem.decay}};
  if (c.penalty) {
    Json p = {{"kind", std::string(to_string(c.penalty->kind))}};
    if (c.penalty->kind == PenaltyKind::projected_quadratic) {
      p["constraint"] = c.penalty->constraint;
      if (c.penalty->constraint == "box") {
        p["lo"] = c.penalty->lo;
        p["hi"] = c.penalty->hi;
      }
    }
    if (c.penalty->kind == PenaltyKind::elastic_net) {
      p["alpha"] = c.penalty->alpha;
      p["beta"] = c.penalty->beta;
    }
    t["penalty"] = p;
  }
  t["method"] = std::string(to_string(c.method));
  t["alpha"] = c.alpha;
  Json s;
  s["mode"] = c.stopping.mode == StoppingRule::Kind::discrepancy ? "discrepancy" : "a_priori";
  s["tau"] = c.stopping.tau;
  s["q"] = c.stopping.q;
  s["scale"] = c.stopping.scale;
  s["n_cap"] = c.stopping.n_cap;
  if (c.stopping.n_max) s["n_max"] = *c.stopping.n_max;
  s["apriori_mode"] = c.stopping.apriori_mode == AprioriMode::standard ? "standard" : "accelerated";
  t["stopping"] = s;
  if (c.gamma)
    t["gamma"] = *c.gamma;
  else
    t["gamma"] = "auto";
  t["deltas"] = c.deltas;
  t["seeds_per_delta"] = c.seeds_per_delta;
  t["noise_seed"] = c.noise_seed;
  Json m = Json::array();
  for (auto e : c.measures) m.push_back(std::string(to_string(e)));
  t["measures"] = m;
  t["record_every"] = c.record_every;
  t["allow_unproven_region"] = c.allow_unproven_region;
  return t;
}

ExperimentConfig parse_into(const Json& tree, Parser& ps) {
  ExperimentConfig c;
  if (!tree.is_object()) {
    ps.fail("(root)", "expected an object");
    return c;
  }
  ps.check_keys(tree, "", {"problem", "penalty", "method", "alpha", "stopping", "gamma", "deltas",
                           "seeds_per_delta", "noise_seed", "measures", "output_dir", "record_every",
                           "allow_unproven_region"});

  // problem
  std::string problem_name;
  if (const Json* pj = ps.object(tree, "", "problem", true)) {
    ps.check_keys(*pj, "problem", {"name", "n", "seed", "lambda_profile", "decay"});
    auto name = ps.string(*pj, "problem", "name");
    if (!name) {
      if (!pj->contains("name")) ps.fail("problem.name", "required field missing");
    } else {
      const auto names = list_problems();
      if (std::find(names.begin(), names.end(), *name) == names.end())
        ps.fail("problem.name", "unknown problem '" + *name + "'");
      else
        problem_name = *name;
    }
    const auto n = ps.integer(*pj, "problem", "n").value_or(200);
    if (n < 8) ps.fail("problem.n", "must be at least 8");
    const auto seed = ps.integer(*pj, "problem", "seed").value_or(0);
    if (seed < 0) ps.fail("problem.seed", "must be nonnegative");
    c.problem = default_problem_options(problem_name, n, static_cast<std::uint64_t>(std::max<std::int64_t>(seed, 0)));
    if (auto prof = ps.string(*pj, "problem", "lambda_profile")) {
      if (auto p = parse_profile(*prof))
        c.problem.profile = *p;
      else
        ps.fail("problem.lambda_profile", "expected smooth, white or power_decay");
    }
    if (auto d = ps.number(*pj, "problem", "decay")) {
      if (!(*d > 0.0)) ps.fail("problem.decay", "must be positive");
      c.problem.decay = *d;
    }
  }

  // penalty
  PenaltyKind kind = natural_penalty(problem_name);
  if (const Json* pj = ps.object(tree, "", "penalty", false)) {
    ps.check_keys(*pj, "penalty", {"kind", "constraint", "lo", "hi", "alpha", "beta"});
    PenaltyConfig pc;
    if (auto k = ps.string(*pj, "penalty", "kind")) {
      if (auto pk = parse_penalty_kind(*k))
        pc.kind = *pk;
      else
        ps.fail("penalty.kind", "expected quadratic, projected_quadratic, elastic_net or entropy_simplex");
    } else if (!pj->contains("kind")) {
      ps.fail("penalty.kind", "required field missing");
    }
    if (auto s = ps.string(*pj, "penalty", "constraint")) {
      if (*s != "whole_space" && *s != "nonneg" && *s != "box")
        ps.fail("penalty.constraint", "expected whole_space, nonneg or box");
      pc.constraint = *s;
    } else if (pc.kind == PenaltyKind::projected_quadratic) {
      pc.constraint = "nonneg";
    }
    pc.lo = ps.number(*pj, "penalty", "lo").value_or(0.0);
    pc.hi = ps.number(*pj, "penalty", "hi").value_or(1.0);
    if (pc.constraint == "box" && !(pc.lo < pc.hi)) ps.fail("penalty.hi", "box needs lo < hi");
    pc.alpha = ps.number(*pj, "penalty", "alpha").value_or(1.0);
    pc.beta = ps.number(*pj, "penalty", "beta").value_or(0.0);
    if (!(pc.alpha > 0.0)) ps.fail("penalty.alpha", "must be positive");
    if (!(pc.beta >= 0.0)) ps.fail("penalty.beta", "must be nonnegative");
    kind = pc.kind;
    c.penalty = pc;
  }

  // method
  if (auto m = ps.string(tree, "", "method")) {
    if (auto pm = parse_method(*m))
      c.method = *pm;
    else
      ps.fail("method", "expected plain, primal_form, accelerated or entropic_landweber");
  }
  if (c.method == Method::entropic_landweber && kind != PenaltyKind::entropy_simplex)
    ps.fail("method", "entropic_landweber needs the entropy_simplex penalty");
  if (auto a = ps.number(tree, "", "alpha")) {
    if (!(*a >= 2.0)) ps.fail("alpha", "must be at least 2");
    c.alpha = *a;
  }

  // stopping
  c.stopping.tau = kind == PenaltyKind::entropy_simplex ? 3.0 : 1.5;
  c.stopping.apriori_mode = c.method == Method::accelerated ? AprioriMode::accelerated : AprioriMode::standard;
  if (const Json* sj = ps.object(tree, "", "stopping", false)) {
    ps.check_keys(*sj, "stopping", {"mode", "tau", "q", "scale", "n_cap", "n_max", "apriori_mode"});
    if (auto mode = ps.string(*sj, "stopping", "mode")) {
      if (*mode == "discrepancy")
        c.stopping.mode = StoppingRule::Kind::discrepancy;
      else if (*mode == "a_priori")
        c.stopping.mode = StoppingRule::Kind::a_priori;
      else
        ps.fail("stopping.mode", "expected discrepancy or a_priori");
    }
    if (auto t = ps.number(*sj, "stopping", "tau")) {
      if (!(*t > 1.0)) ps.fail("stopping.tau", "tau must be > 1");
      c.stopping.tau = *t;
    }
    if (auto q = ps.number(*sj, "stopping", "q")) {
      if (!(*q > 0.0 && *q <= 1.0)) ps.fail("stopping.q", "must lie in (0, 1]");
      c.stopping.q = *q;
    }
    if (auto s = ps.number(*sj, "stopping", "scale")) {
      if (!(*s > 0.0)) ps.fail("stopping.scale", "must be positive");
      c.stopping.scale = *s;
    }
    if (auto cap = ps.integer(*sj, "stopping", "n_cap")) {
      if (*cap < 1) ps.fail("stopping.n_cap", "must be at least 1");
      c.stopping.n_cap = *cap;
    }
    if (auto nm = ps.integer(*sj, "stopping", "n_max")) {
      if (*nm < 0) ps.fail("stopping.n_max", "must be nonnegative");
      c.stopping.n_max = *nm;
    }
    if (auto am = ps.string(*sj, "stopping", "apriori_mode")) {
      if (*am == "standard")
        c.stopping.apriori_mode = AprioriMode::standard;
      else if (*am == "accelerated")
        c.stopping.apriori_mode = AprioriMode::accelerated;
      else
        ps.fail("stopping.apriori_mode", "expected standard or accelerated");
    }
  }

  // gamma
  if (tree.contains("gamma")) {
    const Json& g = tree.at("gamma");
    if (g.is_string() && g.get<std::string>() == "auto") {
    } else if (g.is_number() && std::isfinite(g.get<double>()) && g.get<double>() > 0.0) {
      c.gamma = g.get<double>();
    } else {
      ps.fail("gamma", "expected \"auto\" or a positive number");
    }
  }

  // deltas
  if (!tree.contains("deltas")) {
    ps.fail("deltas", "required field missing");
  } else if (!tree.at("deltas").is_array() || tree.at("deltas").empty()) {
    ps.fail("deltas", "expected a nonempty array");
  } else {
    const Json& ds = tree.at("deltas");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::string path = "deltas[" + std::to_string(i) + "]";
      if (!ds[i].is_number() || !std::isfinite(ds[i].get<double>())) {
        ps.fail(path, "expected a finite number");
        continue;
      }
      const double d = ds[i].get<double>();
      if (d < 0.0) ps.fail(path, "must be nonnegative");
      if (!c.deltas.empty() && !(d < c.deltas.back())) ps.fail(path, "deltas must be strictly decreasing");
      c.deltas.push_back(d);
    }
  }

  if (auto s = ps.integer(tree, "", "seeds_per_delta")) {
    if (*s < 1) ps.fail("seeds_per_delta", "must be at least 1");
    c.seeds_per_delta = static_cast<int>(std::clamp<std::int64_t>(*s, 1, 1'000'000));
  }
  if (auto s = ps.integer(tree, "", "noise_seed")) {
    if (*s < 0) ps.fail("noise_seed", "must be nonnegative");
    c.noise_seed = static_cast<std::uint64_t>(std::max<std::int64_t>(*s, 0));
  }

  // measures
  if (tree.contains("measures")) {
    const Json& ms = tree.at("measures");
    if (!ms.is_array() || ms.empty()) {
      ps.fail("measures", "expected a nonempty array");
    } else {
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const std::string path = "measures[" + std::to_string(i) + "]";
        if (!ms[i].is_string()) {
          ps.fail(path, "expected a string");
          continue;
        }
        if (auto m = parse_error_measure(ms[i].get<std::string>()))
          c.measures.push_back(*m);
        else
          ps.fail(path, "expected norm, norm_sq_half, bregman, l1 or kl");
      }
    }
  } else if (kind == PenaltyKind::entropy_simplex) {
    c.measures = {ErrorMeasure::l1, ErrorMeasure::kl, ErrorMeasure::bregman};
  } else {
    c.measures = {ErrorMeasure::norm, ErrorMeasure::bregman};
  }

  if (auto o = ps.string(tree, "", "output_dir")) c.output_dir = *o;
  if (auto r = ps.integer(tree, "", "record_every")) {
    if (*r < 0) ps.fail("record_every", "must be nonnegative");
    c.record_every = std::max<std::int64_t>(*r, 0);
  }
  if (auto b = ps.boolean(tree, "", "allow_unproven_region")) c.allow_unproven_region = *b;

  if (c.stopping.mode == StoppingRule::Kind::a_priori && !c.stopping.n_max)
    for (std::size_t i = 0; i < c.deltas.size(); ++i)
      if (c.deltas[i] == 0.0) ps.fail("deltas[" + std::to_string(i) + "]", "a_priori rule without n_max needs delta > 0");
  return c;
}

// ---------------------------------------------------------------------------
// CSV output

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

class Csv {
 public:
  Csv(const std::filesystem::path& path, const std::string& hash, const std::string& units,
      const std::vector<std::string>& columns)
      : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << "# dualgrad config_hash=" << hash << " units: " << units << "\n";
    row(columns);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_field(fields[i]);
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

std::string fmt_int(std::int64_t v) { return std::to_string(v); }

class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void line(const std::string& s) {
    std::lock_guard<std::mutex> lock(mu_);
    out_ << s << "\n";
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

std::string wall(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", seconds);
  return buf;
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

bool on_simplex(const Vector& x, const Vector& w) {
  return (x.array() >= 0.0).all() && std::abs(w.dot(x) - 1.0) <= 1e-12;
}

void check_iterate(CellResult& cell, const Vector& x, const PreparedExperiment& prep) {
  if (prep.penalty->kind() == PenaltyKind::entropy_simplex)
    cell.simplex_ok = cell.simplex_ok && on_simplex(x, prep.penalty->weights());
  if (prep.penalty->kind() == PenaltyKind::projected_quadratic)
    cell.nonneg_ok = cell.nonneg_ok && (x.array() >= 0.0).all();
}

std::string experimental_tag(const PreparedExperiment& prep) {
  return prep.unproven.empty() ? "proven" : "experimental";
}

}  // namespace

// ---------------------------------------------------------------------------

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

void refresh_hash(ExperimentConfig& config) {
  config.canonical = canonical_tree(config);
  config.hash = fnv1a_hex(config.canonical.dump());
}

std::vector<std::string> validate_config(const Json& tree) {
  Parser ps;
  ExperimentConfig c = parse_into(tree, ps);
  if (ps.errors.empty()) {
    try {
      prepare(c);
    } catch (const ConfigError& e) {
      ps.errors.push_back(e.what());
    }
  }
  return ps.errors;
}

ExperimentConfig parse_config(const Json& tree) {
  Parser ps;
  ExperimentConfig c = parse_into(tree, ps);
  if (!ps.errors.empty()) {
    const std::string& first = ps.errors.front();
    const auto colon = first.find(": ");
    throw ConfigError(first.substr(0, colon), first.substr(colon + 2));
  }
  refresh_hash(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("(file)", "cannot open " + path);
  Json tree;
  try {
    tree = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError("(file)", std::string("parse error: ") + e.what());
  }
  return parse_config(tree);
}

StoppingRule stopping_rule(const ExperimentConfig& config, double delta) {
  const StoppingConfig& s = config.stopping;
  if (s.mode == StoppingRule::Kind::discrepancy) return StoppingRule::discrepancy(s.tau, delta, s.n_cap);
  std::int64_t n = s.n_max ? *s.n_max : a_priori_iterations(delta, s.q, s.scale, s.apriori_mode);
  StoppingRule rule = StoppingRule::a_priori(std::min(n, s.n_cap));
  rule.n_cap = s.n_cap;
  return rule;
}

PreparedExperiment prepare(const ExperimentConfig& config) {
  PreparedExperiment prep{make_problem(config.problem), nullptr, 0.0, 0.0, 0.0, {}};
  ProblemInstance& inst = prep.problem;
  prep.penalty = inst.penalty;
  if (config.penalty && config.penalty->kind != inst.penalty_kind) {
    const PenaltyConfig& pc = *config.penalty;
    Vector w = inst.op.domain_weights();
    switch (pc.kind) {
      case PenaltyKind::quadratic:
        prep.penalty = make_quadratic(inst.op.weighted() ? w : Vector());
        break;
      case PenaltyKind::projected_quadratic: {
        ConstraintSet c = pc.constraint == "nonneg" ? ConstraintSet::nonneg_orthant()
                          : pc.constraint == "box"  ? ConstraintSet::box(pc.lo, pc.hi)
                                                    : ConstraintSet::whole_space();
        prep.penalty = make_projected_quadratic(c, inst.op.weighted() ? w : Vector());
        break;
      }
      case PenaltyKind::elastic_net:
        prep.penalty = make_elastic_net(pc.alpha, pc.beta, inst.op.weighted() ? w : Vector());
        break;
      case PenaltyKind::entropy_simplex:
        if (config.method == Method::entropic_landweber && !inst.op.weighted())
          throw ConfigError("method", "entropic_landweber needs a weighted problem operator");
        prep.penalty = make_entropy_simplex(w);
        break;
    }
    inst.penalty = prep.penalty;
    inst.penalty_kind = pc.kind;
    inst.x_true = prep.penalty->conjugate_grad(inst.xi_true);
    inst.y_exact = inst.op.apply(inst.x_true);
  } else if (config.penalty && config.penalty->kind == PenaltyKind::elastic_net) {
    // same kind, possibly different parameters
    prep.penalty = make_elastic_net(config.penalty->alpha, config.penalty->beta,
                                    inst.op.weighted() ? inst.op.domain_weights() : Vector());
    inst.penalty = prep.penalty;
    inst.x_true = prep.penalty->conjugate_grad(inst.xi_true);
    inst.y_exact = inst.op.apply(inst.x_true);
  }
  prep.op_norm = penalty_operator_norm(inst.op, *prep.penalty);
  prep.lipschitz = lipschitz_constant(prep.op_norm, prep.penalty->sigma());
  const StoppingRule rule = stopping_rule(config, config.deltas.empty() ? 0.0 : config.deltas.front());
  prep.gamma = config.gamma ? *config.gamma : default_step_size(prep.lipschitz, inst.penalty_kind, rule);
  if (auto v = proven_region_violation(config.method, inst.penalty_kind, prep.gamma, prep.lipschitz, rule,
                                       config.alpha)) {
    prep.unproven = *v;
    if (!config.allow_unproven_region)
      throw ConfigError(config.gamma ? "gamma" : "stopping",
                        *v + " (pass --allow-unproven-region to run anyway)");
  }
  return prep;
}

CellResult run_cell(const ExperimentConfig& config, const PreparedExperiment& prep, double delta, int seed_index,
                    bool keep_record) {
  const ProblemInstance& inst = prep.problem;
  CellResult cell;
  cell.delta = delta;
  cell.seed_index = seed_index;
  cell.noise_seed = mix_seed(config.noise_seed, std::bit_cast<std::uint64_t>(delta),
                             static_cast<std::uint64_t>(seed_index));
  const NoisyData data = add_noise(inst.y_exact, delta, cell.noise_seed);

  SolveOptions options;
  options.gamma = prep.gamma;
  options.stop = stopping_rule(config, delta);
  options.record_every = config.record_every;
  options.alpha = config.alpha;

  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  switch (config.method) {
    case Method::plain: rec = dual_gradient_solve(inst.op, data.ydelta, *prep.penalty, options); break;
    case Method::primal_form: rec = primal_form_solve(inst.op, data.ydelta, *prep.penalty, options); break;
    case Method::accelerated: rec = accelerated_solve(inst.op, data.ydelta, *prep.penalty, options); break;
    case Method::entropic_landweber: rec = entropic_landweber_solve(inst.op, data.ydelta, options); break;
  }
  cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  cell.n_stop = rec.stop_index;
  cell.termination = rec.termination;
  cell.residual = rec.final_iterate.residual_norm;
  for (const auto& it : rec.iterates) check_iterate(cell, it.x, prep);
  check_iterate(cell, rec.final_iterate.x, prep);
  for (ErrorMeasure m : config.measures)
    cell.errors.push_back(error_measure(m, *prep.penalty, rec.final_iterate.x, inst.x_true, inst.xi_true));
  if (keep_record) cell.record = std::move(rec);
  return cell;
}

SingleResult run_single(const ExperimentConfig& config, const std::string& out_dir) {
  const PreparedExperiment prep = prepare(config);
  SingleResult result{run_cell(config, prep, config.deltas.front(), 0, true)};
  if (out_dir.empty()) return result;

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const CellResult& cell = result.cell;
  const RunRecord& rec = cell.record;

  {
    Csv trace(dir / "trace.csv", config.hash, "n in iterations; residual = ||A x_n - y_delta||; dual_value = d(lambda_n)",
              {"n", "residual", "dual_value"});
    for (const auto& tp : rec.trace) trace.row({fmt_int(tp.n), format_real(tp.residual_norm), format_real(tp.dual_value)});
  }
  {
    std::vector<std::string> cols = {"problem", "method", "penalty", "delta", "noise_seed", "n_stop", "termination",
                                     "residual", "gamma", "lipschitz", "tau", "region"};
    for (auto m : config.measures) cols.push_back("error_" + std::string(to_string(m)));
    Csv summary(dir / "summary.csv", config.hash,
                "delta and residual in data-space norm; gamma in step units; errors in the named measure", cols);
    std::vector<std::string> row = {config.problem.name,
                                    std::string(to_string(config.method)),
                                    std::string(to_string(prep.penalty->kind())),
                                    format_real(cell.delta),
                                    std::to_string(cell.noise_seed),
                                    fmt_int(cell.n_stop),
                                    std::string(to_string(cell.termination)),
                                    format_real(cell.residual),
                                    format_real(prep.gamma),
                                    format_real(prep.lipschitz),
                                    format_real(config.stopping.tau),
                                    experimental_tag(prep)};
    for (double e : cell.errors) row.push_back(format_real(e));
    summary.row(row);
  }
  {
    Csv sol(dir / "solution.csv", config.hash, "index; x and x_true in solution units", {"index", "x", "x_true"});
    for (Index i = 0; i < rec.final_iterate.x.size(); ++i)
      sol.row({fmt_int(i), format_real(rec.final_iterate.x[i]), format_real(prep.problem.x_true[i])});
  }
  if (config.record_every > 0) {
    Csv its(dir / "iterates.csv", config.hash, "n in iterations; x in solution units", {"n", "index", "x"});
    for (const auto& it : rec.iterates)
      for (Index i = 0; i < it.x.size(); ++i) its.row({fmt_int(it.n), fmt_int(i), format_real(it.x[i])});
  }
  RunLog log(dir / "run.log");
  log.line("config_hash " + config.hash);
  if (!prep.unproven.empty()) log.line("experimental: " + prep.unproven);
  log.line("solve delta=" + format_real(cell.delta) + " seed_index=0 n_stop=" + fmt_int(cell.n_stop) +
           " termination=" + std::string(to_string(cell.termination)) + " wall_s=" + wall(cell.wall_seconds));
  return result;
}

StudyResult run_rate_study(const ExperimentConfig& config, const std::string& out_dir, int jobs) {
  if (config.deltas.size() < 4) throw ConfigError("deltas", "a rate study needs at least four deltas");
  for (std::size_t i = 0; i < config.deltas.size(); ++i)
    if (!(config.deltas[i] > 0.0))
      throw ConfigError("deltas[" + std::to_string(i) + "]", "a rate study needs delta > 0");
  const PreparedExperiment prep = prepare(config);

  const int nd = static_cast<int>(config.deltas.size());
  const int ns = config.seeds_per_delta;
  StudyResult study;
  study.cells.resize(static_cast<std::size_t>(nd) * ns);
  parallel_for(nd * ns, jobs, [&](int k) {
    study.cells[k] = run_cell(config, prep, config.deltas[k / ns], k % ns, false);
  });
  study.invocations = nd * ns;

  for (const auto& c : study.cells)
    if (c.termination == Termination::cap_hit)
      study.warnings.push_back("cap_hit at delta=" + format_real(c.delta) + " seed_index=" +
                               std::to_string(c.seed_index) + " excluded from fit");

  for (std::size_t mi = 0; mi < config.measures.size(); ++mi) {
    std::vector<RatePoint> pts;
    for (int d = 0; d < nd; ++d) {
      MedianRow row;
      row.delta = config.deltas[d];
      row.measure = config.measures[mi];
      std::vector<double> errs;
      std::vector<double> ns_used;
      for (int s = 0; s < ns; ++s) {
        const CellResult& c = study.cells[d * ns + s];
        if (c.termination == Termination::cap_hit) {
          ++row.runs_capped;
          continue;
        }
        errs.push_back(c.errors[mi]);
        ns_used.push_back(static_cast<double>(c.n_stop));
      }
      row.runs_used = static_cast<int>(errs.size());
      row.median_error = errs.empty() ? std::nan("") : median(errs);
      row.median_n_stop = ns_used.empty() ? std::nan("") : median(ns_used);
      study.medians.push_back(row);
      if (!errs.empty()) pts.push_back({row.delta, row.median_error, static_cast<std::int64_t>(row.median_n_stop), row.measure});
    }
    MeasureFit mf;
    mf.measure = config.measures[mi];
    try {
      mf.fit = fit_rate_trimmed(pts);
      for (const auto& w : mf.fit->full.warnings) study.warnings.push_back(std::string(to_string(mf.measure)) + ": " + w);
    } catch (const std::exception& e) {
      mf.error = e.what();
      study.warnings.push_back(std::string(to_string(mf.measure)) + ": " + e.what());
    }
    study.fits.push_back(mf);
  }

  if (out_dir.empty()) return study;
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  {
    Csv points(dir / "points.csv", config.hash,
               "delta and residual in data-space norm; error in the named measure; n_stop in iterations",
               {"delta", "seed_index", "noise_seed", "measure", "error", "n_stop", "termination", "residual", "gamma",
                "in_fit", "region"});
    for (const auto& c : study.cells)
      for (std::size_t mi = 0; mi < config.measures.size(); ++mi)
        points.row({format_real(c.delta), std::to_string(c.seed_index), std::to_string(c.noise_seed),
                    std::string(to_string(config.measures[mi])), format_real(c.errors[mi]), fmt_int(c.n_stop),
                    std::string(to_string(c.termination)), format_real(c.residual), format_real(prep.gamma),
                    c.termination == Termination::cap_hit ? "0" : "1", experimental_tag(prep)});
  }
  {
    Csv med(dir / "medians.csv", config.hash, "delta in data-space norm; median error in the named measure",
            {"delta", "measure", "median_error", "median_n_stop", "runs_used", "runs_capped"});
    for (const auto& r : study.medians)
      med.row({format_real(r.delta), std::string(to_string(r.measure)), format_real(r.median_error),
               format_real(r.median_n_stop), std::to_string(r.runs_used), std::to_string(r.runs_capped)});
  }
  {
    Csv fit(dir / "fit.csv", config.hash, "slope of log(error) against log(delta); dimensionless",
            {"measure", "slope", "intercept", "r_squared", "points_used", "points_excluded", "chosen", "full_slope",
             "full_r_squared", "trimmed_slope", "trimmed_r_squared", "status"});
    for (const auto& mf : study.fits) {
      if (!mf.fit) {
        fit.row({std::string(to_string(mf.measure)), "nan", "nan", "nan", "0", "0", "none", "nan", "nan", "nan", "nan",
                 mf.error});
        continue;
      }
      const RateFit& ch = mf.fit->chosen();
      const bool has_trim = mf.fit->without_largest.has_value();
      fit.row({std::string(to_string(mf.measure)), format_real(ch.slope), format_real(ch.intercept),
               format_real(ch.r_squared), std::to_string(ch.points_used), std::to_string(ch.points_excluded),
               mf.fit->used_trimmed ? "trimmed" : "full", format_real(mf.fit->full.slope),
               format_real(mf.fit->full.r_squared), has_trim ? format_real(mf.fit->without_largest->slope) : "nan",
               has_trim ? format_real(mf.fit->without_largest->r_squared) : "nan", "ok"});
    }
  }
  std::ostringstream gp;
  gp << "# gnuplot script; config_hash=" << config.hash << "\n"
     << "set logscale xy\nset xlabel 'delta'\nset ylabel 'median error'\nset key left top\n";
  bool first = true;
  for (std::size_t mi = 0; mi < config.measures.size(); ++mi) {
    const std::string name(to_string(config.measures[mi]));
    std::ofstream dat(dir / ("rate_" + name + ".dat"), std::ios::binary);
    dat << "# config_hash=" << config.hash << " columns: delta median_" << name << "\n";
    for (const auto& r : study.medians)
      if (r.measure == config.measures[mi] && r.runs_used > 0)
        dat << format_real(r.delta) << " " << format_real(r.median_error) << "\n";
    gp << (first ? "plot " : ", \\\n     ") << "'rate_" << name << ".dat' using 1:2 with linespoints title '" << name
       << "'";
    first = false;
  }
  gp << "\n";
  std::ofstream(dir / "plot.gp", std::ios::binary) << gp.str();

  RunLog log(dir / "run.log");
  log.line("config_hash " + config.hash);
  if (!prep.unproven.empty()) log.line("experimental: " + prep.unproven);
  for (const auto& c : study.cells)
    log.line("solve delta=" + format_real(c.delta) + " seed_index=" + std::to_string(c.seed_index) +
             " n_stop=" + fmt_int(c.n_stop) + " termination=" + std::string(to_string(c.termination)) +
             " wall_s=" + wall(c.wall_seconds));
  for (const auto& w : study.warnings) log.line("warning: " + w);
  return study;
}

ComparisonResult run_comparison(const ExperimentConfig& a, const ExperimentConfig& b, const std::string& out_dir,
                                int jobs) {
  for (const char* key : {"problem", "penalty", "deltas", "seeds_per_delta", "noise_seed", "measures"}) {
    const bool ha = a.canonical.contains(key);
    const bool hb = b.canonical.contains(key);
    if (ha != hb || (ha && a.canonical.at(key) != b.canonical.at(key)))
      throw ConfigError(key, "compared configs must describe the same problem and data");
  }
  const PreparedExperiment pa = prepare(a);
  const PreparedExperiment pb = prepare(b);
  const int nd = static_cast<int>(a.deltas.size());
  const int ns = a.seeds_per_delta;
  ComparisonResult result;
  result.measures = a.measures;
  result.rows.resize(static_cast<std::size_t>(nd) * ns);
  parallel_for(2 * nd * ns, jobs, [&](int k) {
    const int cell = k / 2;
    ComparisonRow& row = result.rows[cell];
    const double delta = a.deltas[cell / ns];
    if (k % 2 == 0)
      row.a = run_cell(a, pa, delta, cell % ns, false);
    else
      row.b = run_cell(b, pb, delta, cell % ns, false);
  });
  for (auto& row : result.rows) {
    row.delta = row.a.delta;
    row.seed_index = row.a.seed_index;
    row.ratio = row.b.n_stop > 0 ? static_cast<double>(row.a.n_stop) / static_cast<double>(row.b.n_stop)
                                 : (row.a.n_stop == 0 ? 1.0 : std::nan(""));
  }
  if (out_dir.empty()) return result;

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const std::string hash = fnv1a_hex(a.hash + b.hash);
  std::vector<std::string> cols = {"delta", "seed_index", "method_a", "method_b", "n_a", "n_b", "ratio",
                                   "termination_a", "termination_b"};
  for (auto m : result.measures) {
    cols.push_back("error_" + std::string(to_string(m)) + "_a");
    cols.push_back("error_" + std::string(to_string(m)) + "_b");
  }
  cols.push_back("simplex_a");
  cols.push_back("simplex_b");
  {
    Csv csv(dir / "comparison.csv", hash + " (a=" + a.hash + " b=" + b.hash + ")",
            "delta in data-space norm; n in iterations; ratio = n_a / n_b; errors in the named measure", cols);
    for (const auto& r : result.rows) {
      std::vector<std::string> f = {format_real(r.delta),
                                    std::to_string(r.seed_index),
                                    std::string(to_string(a.method)),
                                    std::string(to_string(b.method)),
                                    fmt_int(r.a.n_stop),
                                    fmt_int(r.b.n_stop),
                                    format_real(r.ratio),
                                    std::string(to_string(r.a.termination)),
                                    std::string(to_string(r.b.termination))};
      for (std::size_t mi = 0; mi < result.measures.size(); ++mi) {
        f.push_back(format_real(r.a.errors[mi]));
        f.push_back(format_real(r.b.errors[mi]));
      }
      f.push_back(r.a.simplex_ok ? "1" : "0");
      f.push_back(r.b.simplex_ok ? "1" : "0");
      csv.row(f);
    }
  }
  RunLog log(dir / "run.log");
  log.line("config_hash a=" + a.hash + " b=" + b.hash);
  if (!pa.unproven.empty()) log.line("experimental (a): " + pa.unproven);
  if (!pb.unproven.empty()) log.line("experimental (b): " + pb.unproven);
  for (const auto& r : result.rows) {
    log.line("solve a delta=" + format_real(r.delta) + " seed_index=" + std::to_string(r.seed_index) +
             " n_stop=" + fmt_int(r.a.n_stop) + " wall_s=" + wall(r.a.wall_seconds));
    log.line("solve b delta=" + format_real(r.delta) + " seed_index=" + std::to_string(r.seed_index) +
             " n_stop=" + fmt_int(r.b.n_stop) + " wall_s=" + wall(r.b.wall_seconds));
  }
  return result;
}

}  // namespace dualgrad
