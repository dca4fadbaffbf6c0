#pragma once

// Experiment configuration: YAML file format, strict parsing with
// line-anchored diagnostics, and lossless emission.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "pearl/pearl.hpp"

namespace pearl::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProblemSpec {
  std::string kind = "quad-minimax";  // quad-minimax | nplayer | robot | sine | scalar | file
  std::size_t d = 10;
  std::size_t m = 100;
  std::size_t n = 5;
  std::uint64_t seed = 7;
  SpectrumBounds bounds;
  std::string noise = "finite_sum";  // finite_sum | gaussian
  std::size_t batch = 1;
  double sigma = 0.0;
  double mu = 1.0;    // sine
  double ell = 4.0;   // sine
  double coef_a = 1.0, coef_b = 1.0, coef_c = 1.0;  // scalar: a/2 u^2 + b uv - c/2 v^2
  double noise_variance = RobotControlGame::kNoiseVariance;  // robot
  std::string path;  // file

  friend bool operator==(const ProblemSpec&, const ProblemSpec&) = default;
};

struct GridSpec {
  double lo = 1e-6;
  double hi = 1e-1;
  std::size_t points = 6;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct RunSpec {
  std::vector<std::size_t> taus{5};
  std::string schedule = "theoretical";
  double gamma = 0.0;
  double total_iterations = 0.0;
  std::size_t rounds = 100;
  std::string mode = "deterministic";
  std::uint64_t seed = 7;
  std::size_t replicates = 5;
  std::size_t workers = 1;
  std::string x0 = "ones";  // ones | zeros | values
  std::vector<double> x0_values;
  double divergence_threshold = kDefaultDivergenceThreshold;
  bool record_timing = false;
  GridSpec tune{1e-6, 1e-1, 6};
  GridSpec heatmap{1e-3, 1.0, 20};

  friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

struct VerifySpec {
  std::vector<std::string> suites{"assumptions", "theorem1", "theorem2", "lemmas"};
  std::size_t samples = 1000;
  double radius = 10.0;
  std::size_t mc_seeds = 1000;
  std::size_t chains = 10000;
  std::size_t player = 0;
  std::vector<std::size_t> t_grid{256, 512, 1024, 2048, 4096};

  friend bool operator==(const VerifySpec&, const VerifySpec&) = default;
};

struct ExperimentConfig {
  ProblemSpec problem;
  RunSpec run;
  VerifySpec verify;
  std::string output_dir = "out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Robot preset: five robots on a line, Gaussian gradient noise of variance
// 100, taus {1, 2, 4, 5, 8, 20} and the robot step-size variant.
inline ExperimentConfig robot_preset() {
  ExperimentConfig c;
  c.problem.kind = "robot";
  c.problem.noise = "gaussian";
  c.problem.noise_variance = RobotControlGame::kNoiseVariance;
  c.problem.n = RobotControlGame::kRobots;
  c.problem.d = 1;
  c.run.taus = {1, 2, 4, 5, 8, 20};
  c.run.schedule = "theoretical-robot";
  c.run.mode = "stochastic";
  c.run.replicates = 5;
  c.output_dir = "out/robot";
  return c;
}

namespace detail {

inline std::string where(const YAML::Mark& m) {
  if (m.is_null()) return "";
  return "line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + ": ";
}

inline std::string yaml_double(double v) {
  if (std::isnan(v)) return ".nan";
  if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
  return format_double(v);
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) throw ConfigError(where(node.Mark()) + "'" + key + "' must be a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where(node.Mark()) + "invalid value '" + node.Scalar() + "' for '" + key + "'");
  }
}

// Unsigned values reject a leading minus sign, which yaml-cpp would wrap.
template <>
inline std::size_t scalar<std::size_t>(const YAML::Node& node, const std::string& key) {
  if (node.IsScalar() && !node.Scalar().empty() && node.Scalar().front() == '-') {
    throw ConfigError(where(node.Mark()) + "'" + key + "' must be nonnegative");
  }
  if (!node.IsScalar()) throw ConfigError(where(node.Mark()) + "'" + key + "' must be a scalar");
  try {
    return node.as<std::size_t>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where(node.Mark()) + "invalid value '" + node.Scalar() + "' for '" + key + "'");
  }
}

template <typename T>
std::vector<T> sequence(const YAML::Node& node, const std::string& key) {
  if (node.IsScalar()) return {scalar<T>(node, key)};
  if (!node.IsSequence()) throw ConfigError(where(node.Mark()) + "'" + key + "' must be a list");
  std::vector<T> out;
  for (const auto& item : node) out.push_back(scalar<T>(item, key));
  return out;
}

inline void require_map(const YAML::Node& node, const std::string& section) {
  if (!node.IsMap()) throw ConfigError(where(node.Mark()) + "section '" + section + "' must be a mapping");
}

inline void reject_unknown(const YAML::Node& node, const std::string& section,
                           const std::set<std::string>& known) {
  for (const auto& kv : node) {
    const auto key = kv.first.Scalar();
    if (!known.count(key)) {
      throw ConfigError(where(kv.first.Mark()) + "unknown key '" + key + "' in section '" +
                        section + "'");
    }
  }
}

inline void read_grid(const YAML::Node& node, const std::string& name, GridSpec& g) {
  require_map(node, name);
  reject_unknown(node, name, {"lo", "hi", "points"});
  if (node["lo"]) g.lo = scalar<double>(node["lo"], name + ".lo");
  if (node["hi"]) g.hi = scalar<double>(node["hi"], name + ".hi");
  if (node["points"]) g.points = scalar<std::size_t>(node["points"], name + ".points");
}

inline void read_problem(const YAML::Node& node, ProblemSpec& p) {
  require_map(node, "problem");
  reject_unknown(node, "problem",
                 {"kind", "d", "M", "n", "seed", "bounds", "noise", "batch", "sigma", "mu", "ell",
                  "a", "b", "c", "noise_variance", "path"});
  if (node["kind"]) p.kind = scalar<std::string>(node["kind"], "kind");
  if (node["d"]) p.d = scalar<std::size_t>(node["d"], "d");
  if (node["M"]) p.m = scalar<std::size_t>(node["M"], "M");
  if (node["n"]) p.n = scalar<std::size_t>(node["n"], "n");
  if (node["seed"]) p.seed = scalar<std::uint64_t>(node["seed"], "seed");
  if (const auto b = node["bounds"]) {
    require_map(b, "problem.bounds");
    reject_unknown(b, "problem.bounds", {"mu_a", "l_a", "mu_c", "l_c", "l_b"});
    if (b["mu_a"]) p.bounds.mu_a = scalar<double>(b["mu_a"], "mu_a");
    if (b["l_a"]) p.bounds.l_a = scalar<double>(b["l_a"], "l_a");
    if (b["mu_c"]) p.bounds.mu_c = scalar<double>(b["mu_c"], "mu_c");
    if (b["l_c"]) p.bounds.l_c = scalar<double>(b["l_c"], "l_c");
    if (b["l_b"]) p.bounds.l_b = scalar<double>(b["l_b"], "l_b");
  }
  if (node["noise"]) p.noise = scalar<std::string>(node["noise"], "noise");
  if (node["batch"]) p.batch = scalar<std::size_t>(node["batch"], "batch");
  if (node["sigma"]) p.sigma = scalar<double>(node["sigma"], "sigma");
  if (node["mu"]) p.mu = scalar<double>(node["mu"], "mu");
  if (node["ell"]) p.ell = scalar<double>(node["ell"], "ell");
  if (node["a"]) p.coef_a = scalar<double>(node["a"], "a");
  if (node["b"]) p.coef_b = scalar<double>(node["b"], "b");
  if (node["c"]) p.coef_c = scalar<double>(node["c"], "c");
  if (node["noise_variance"]) p.noise_variance = scalar<double>(node["noise_variance"], "noise_variance");
  if (node["path"]) p.path = scalar<std::string>(node["path"], "path");
}

inline void read_run(const YAML::Node& node, RunSpec& r) {
  require_map(node, "run");
  reject_unknown(node, "run",
                 {"tau", "schedule", "gamma", "total_iterations", "rounds", "mode", "seed",
                  "replicates", "workers", "x0", "divergence_threshold", "record_timing", "tune",
                  "heatmap"});
  if (node["tau"]) r.taus = sequence<std::size_t>(node["tau"], "tau");
  if (node["schedule"]) r.schedule = scalar<std::string>(node["schedule"], "schedule");
  if (node["gamma"]) r.gamma = scalar<double>(node["gamma"], "gamma");
  if (node["total_iterations"]) r.total_iterations = scalar<double>(node["total_iterations"], "total_iterations");
  if (node["rounds"]) r.rounds = scalar<std::size_t>(node["rounds"], "rounds");
  if (node["mode"]) r.mode = scalar<std::string>(node["mode"], "mode");
  if (node["seed"]) r.seed = scalar<std::uint64_t>(node["seed"], "seed");
  if (node["replicates"]) r.replicates = scalar<std::size_t>(node["replicates"], "replicates");
  if (node["workers"]) r.workers = scalar<std::size_t>(node["workers"], "workers");
  if (const auto x0 = node["x0"]) {
    if (x0.IsSequence()) {
      r.x0 = "values";
      r.x0_values = sequence<double>(x0, "x0");
    } else {
      r.x0 = scalar<std::string>(x0, "x0");
      r.x0_values.clear();
      if (r.x0 != "ones" && r.x0 != "zeros") {
        throw ConfigError(where(x0.Mark()) + "x0 must be 'ones', 'zeros' or a list of numbers");
      }
    }
  }
  if (node["divergence_threshold"]) {
    r.divergence_threshold = scalar<double>(node["divergence_threshold"], "divergence_threshold");
  }
  if (node["record_timing"]) r.record_timing = scalar<bool>(node["record_timing"], "record_timing");
  if (node["tune"]) read_grid(node["tune"], "run.tune", r.tune);
  if (node["heatmap"]) read_grid(node["heatmap"], "run.heatmap", r.heatmap);
}

inline void read_verify(const YAML::Node& node, VerifySpec& v) {
  require_map(node, "verify");
  reject_unknown(node, "verify",
                 {"suites", "samples", "radius", "mc_seeds", "chains", "player", "t_grid"});
  if (node["suites"]) v.suites = sequence<std::string>(node["suites"], "suites");
  if (node["samples"]) v.samples = scalar<std::size_t>(node["samples"], "samples");
  if (node["radius"]) v.radius = scalar<double>(node["radius"], "radius");
  if (node["mc_seeds"]) v.mc_seeds = scalar<std::size_t>(node["mc_seeds"], "mc_seeds");
  if (node["chains"]) v.chains = scalar<std::size_t>(node["chains"], "chains");
  if (node["player"]) v.player = scalar<std::size_t>(node["player"], "player");
  if (node["t_grid"]) v.t_grid = sequence<std::size_t>(node["t_grid"], "t_grid");
}

}  // namespace detail

// Parses YAML text; missing keys keep their defaults.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(detail::where(e.mark) + e.msg);
  }
  if (root.IsNull()) return base;
  detail::require_map(root, "<root>");
  detail::reject_unknown(root, "<root>", {"problem", "run", "verify", "output"});
  try {
    if (root["problem"]) detail::read_problem(root["problem"], base.problem);
    if (root["run"]) detail::read_run(root["run"], base.run);
    if (root["verify"]) detail::read_verify(root["verify"], base.verify);
    if (const auto out = root["output"]) {
      detail::require_map(out, "output");
      detail::reject_unknown(out, "output", {"dir"});
      if (out["dir"]) base.output_dir = detail::scalar<std::string>(out["dir"], "dir");
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(detail::where(e.mark) + e.msg);
  }
  return base;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_config(text, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline std::string emit_config(const ExperimentConfig& c) {
  using detail::yaml_double;
  YAML::Emitter e;
  auto grid = [&](const char* name, const GridSpec& g) {
    e << YAML::Key << name << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "lo" << YAML::Value << yaml_double(g.lo);
    e << YAML::Key << "hi" << YAML::Value << yaml_double(g.hi);
    e << YAML::Key << "points" << YAML::Value << g.points;
    e << YAML::EndMap;
  };
  e << YAML::BeginMap;
  const auto& p = c.problem;
  e << YAML::Key << "problem" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "kind" << YAML::Value << p.kind;
  e << YAML::Key << "d" << YAML::Value << p.d;
  e << YAML::Key << "M" << YAML::Value << p.m;
  e << YAML::Key << "n" << YAML::Value << p.n;
  e << YAML::Key << "seed" << YAML::Value << p.seed;
  e << YAML::Key << "bounds" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "mu_a" << YAML::Value << yaml_double(p.bounds.mu_a);
  e << YAML::Key << "l_a" << YAML::Value << yaml_double(p.bounds.l_a);
  e << YAML::Key << "mu_c" << YAML::Value << yaml_double(p.bounds.mu_c);
  e << YAML::Key << "l_c" << YAML::Value << yaml_double(p.bounds.l_c);
  e << YAML::Key << "l_b" << YAML::Value << yaml_double(p.bounds.l_b);
  e << YAML::EndMap;
  e << YAML::Key << "noise" << YAML::Value << p.noise;
  e << YAML::Key << "batch" << YAML::Value << p.batch;
  e << YAML::Key << "sigma" << YAML::Value << yaml_double(p.sigma);
  e << YAML::Key << "mu" << YAML::Value << yaml_double(p.mu);
  e << YAML::Key << "ell" << YAML::Value << yaml_double(p.ell);
  e << YAML::Key << "a" << YAML::Value << yaml_double(p.coef_a);
  e << YAML::Key << "b" << YAML::Value << yaml_double(p.coef_b);
  e << YAML::Key << "c" << YAML::Value << yaml_double(p.coef_c);
  e << YAML::Key << "noise_variance" << YAML::Value << yaml_double(p.noise_variance);
  e << YAML::Key << "path" << YAML::Value << YAML::DoubleQuoted << p.path;
  e << YAML::EndMap;

  const auto& r = c.run;
  e << YAML::Key << "run" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "tau" << YAML::Value << YAML::Flow << r.taus;
  e << YAML::Key << "schedule" << YAML::Value << r.schedule;
  e << YAML::Key << "gamma" << YAML::Value << yaml_double(r.gamma);
  e << YAML::Key << "total_iterations" << YAML::Value << yaml_double(r.total_iterations);
  e << YAML::Key << "rounds" << YAML::Value << r.rounds;
  e << YAML::Key << "mode" << YAML::Value << r.mode;
  e << YAML::Key << "seed" << YAML::Value << r.seed;
  e << YAML::Key << "replicates" << YAML::Value << r.replicates;
  e << YAML::Key << "workers" << YAML::Value << r.workers;
  if (r.x0 == "values") {
    e << YAML::Key << "x0" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double v : r.x0_values) e << yaml_double(v);
    e << YAML::EndSeq;
  } else {
    e << YAML::Key << "x0" << YAML::Value << r.x0;
  }
  e << YAML::Key << "divergence_threshold" << YAML::Value << yaml_double(r.divergence_threshold);
  e << YAML::Key << "record_timing" << YAML::Value << r.record_timing;
  grid("tune", r.tune);
  grid("heatmap", r.heatmap);
  e << YAML::EndMap;

  const auto& v = c.verify;
  e << YAML::Key << "verify" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "suites" << YAML::Value << YAML::Flow << v.suites;
  e << YAML::Key << "samples" << YAML::Value << v.samples;
  e << YAML::Key << "radius" << YAML::Value << yaml_double(v.radius);
  e << YAML::Key << "mc_seeds" << YAML::Value << v.mc_seeds;
  e << YAML::Key << "chains" << YAML::Value << v.chains;
  e << YAML::Key << "player" << YAML::Value << v.player;
  e << YAML::Key << "t_grid" << YAML::Value << YAML::Flow << v.t_grid;
  e << YAML::EndMap;

  e << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "dir" << YAML::Value << YAML::DoubleQuoted << c.output_dir;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

// PEARL_SEED replaces both the generation seed and the stream seed.
inline void apply_seed_env(ExperimentConfig& c) {
  const char* env = std::getenv("PEARL_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0' || env[0] == '-') {
    throw ConfigError(std::string("PEARL_SEED must be a nonnegative integer, got '") + env + "'");
  }
  c.problem.seed = v;
  c.run.seed = v;
}

// Semantic checks that do not need the problem instance.
inline void validate(const ExperimentConfig& c) {
  static const std::set<std::string> kinds{"quad-minimax", "nplayer", "robot", "sine", "scalar", "file"};
  if (!kinds.count(c.problem.kind)) throw ConfigError("unknown problem kind '" + c.problem.kind + "'");
  if (c.problem.noise != "finite_sum" && c.problem.noise != "gaussian") {
    throw ConfigError("noise must be 'finite_sum' or 'gaussian', got '" + c.problem.noise + "'");
  }
  if (c.problem.kind == "file" && c.problem.path.empty()) {
    throw ConfigError("problem kind 'file' needs problem.path");
  }
  if (c.problem.batch == 0) throw ConfigError("batch size must be >= 1");
  if (c.run.taus.empty()) throw ConfigError("need at least one tau");
  for (std::size_t t : c.run.taus) {
    if (t == 0) throw ConfigError("synchronization interval tau must be >= 1");
  }
  if (c.run.rounds == 0) throw ConfigError("number of rounds must be >= 1");
  if (c.run.workers == 0) throw ConfigError("workers must be >= 1");
  try {
    schedule_kind_from_string(c.run.schedule);
    mode_from_string(c.run.mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.run.schedule == "constant" && !(c.run.gamma > 0.0)) {
    throw ConfigError("constant schedule needs gamma > 0");
  }
}

inline std::unique_ptr<GameProblem> build_problem(const ProblemSpec& p) {
  const OracleNoise noise = p.noise == "gaussian" ? OracleNoise::gaussian(p.sigma)
                                                  : OracleNoise::finite_sum(p.batch);
  if (p.kind == "quad-minimax") return generate_quadratic_minimax(p.d, p.m, p.bounds, p.seed, noise);
  if (p.kind == "nplayer") return generate_nplayer_quadratic(p.n, p.d, p.m, p.bounds, p.seed, noise);
  if (p.kind == "robot") return std::make_unique<RobotControlGame>(p.noise_variance);
  if (p.kind == "sine") return std::make_unique<SineNonCocoerciveGame>(p.mu, p.ell, p.sigma);
  if (p.kind == "scalar") return scalar_minimax_game(p.coef_a, p.coef_b, p.coef_c, p.sigma);
  if (p.kind == "file") {
    try {
      return problem_from_json(json::parse(read_file(p.path)));
    } catch (const json::exception& e) {
      throw ConfigError(p.path + ": " + e.what());
    }
  }
  throw ConfigError("unknown problem kind '" + p.kind + "'");
}

inline JointAction build_x0(const RunSpec& r, const BlockLayout& layout) {
  if (r.x0 == "ones") return JointAction::constant(layout, 1.0);
  if (r.x0 == "zeros") return JointAction::constant(layout, 0.0);
  if (r.x0_values.size() != layout.total()) {
    throw ConfigError("x0 has " + std::to_string(r.x0_values.size()) +
                      " entries but the joint action has dimension " +
                      std::to_string(layout.total()));
  }
  return JointAction(layout, Eigen::Map<const Vector>(r.x0_values.data(),
                                                      static_cast<Eigen::Index>(r.x0_values.size())));
}

}  // namespace pearl::cli
