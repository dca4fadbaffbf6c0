#pragma once

// Subcommands of the pearl command-line tool. run_cli is the whole program;
// main() only forwards to it so tests can drive it in-process.

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"

namespace pearl::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;

// Flag values; an option only overrides the config when it was given.
struct Flags {
  std::string config_path;
  std::string kind;
  std::size_t d = 0, m = 0, n = 0, batch = 0;
  std::uint64_t seed = 0, problem_seed = 0;
  std::string noise;
  double sigma = 0.0, mu = 0.0, ell = 0.0;
  std::string problem_file;
  std::vector<std::size_t> taus;
  std::string schedule;
  double gamma = 0.0, total_iterations = 0.0;
  std::size_t rounds = 0, replicates = 0, workers = 0;
  std::string mode;
  std::string out;
  bool record_timing = false;
  std::vector<double> grid;  // lo hi points
  std::string x0;
  std::vector<std::string> suites;
  std::size_t samples = 0, mc_seeds = 0, chains = 0;
  bool strict = false;
  std::string replay;
  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

inline void add_common_flags(CLI::App* sub, Flags& f, bool grid_flags) {
  auto& o = f.opts;
  o["config"] = sub->add_option("--config", f.config_path, "YAML experiment config");
  o["problem"] = sub->add_option("--problem", f.kind,
                                 "quad-minimax | nplayer | robot | sine | scalar | file");
  o["problem-file"] = sub->add_option("--problem-file", f.problem_file, "serialized problem (JSON)");
  o["d"] = sub->add_option("--d", f.d, "per-player dimension");
  o["M"] = sub->add_option("--M", f.m, "finite-sum size");
  o["n"] = sub->add_option("--n", f.n, "players (nplayer)");
  o["batch"] = sub->add_option("--batch", f.batch, "finite-sum mini-batch size");
  o["noise"] = sub->add_option("--noise", f.noise, "finite_sum | gaussian");
  o["sigma"] = sub->add_option("--sigma", f.sigma, "Gaussian noise standard deviation");
  o["mu"] = sub->add_option("--mu", f.mu, "sine game mu");
  o["ell"] = sub->add_option("--ell", f.ell, "sine game ell");
  o["seed"] = sub->add_option("--seed", f.seed, "seed for generation and gradient streams");
  o["problem-seed"] = sub->add_option("--problem-seed", f.problem_seed, "generation seed only");
  o["tau"] = sub->add_option("--tau", f.taus, "synchronization interval(s), comma separated")
                 ->delimiter(',');
  o["schedule"] = sub->add_option("--schedule", f.schedule,
                                  "constant | theoretical | theoretical-robot | corollary | decreasing");
  o["gamma"] = sub->add_option("--gamma", f.gamma, "step-size for the constant schedule");
  o["total-iterations"] = sub->add_option("--total-iterations", f.total_iterations,
                                          "T for the corollary schedule (default tau * rounds)");
  o["rounds"] = sub->add_option("--rounds", f.rounds, "communication rounds R");
  o["mode"] = sub->add_option("--mode", f.mode, "deterministic | stochastic");
  o["replicates"] = sub->add_option("--replicates", f.replicates, "replicates in stochastic mode");
  o["workers"] = sub->add_option("--workers", f.workers, "worker threads");
  o["x0"] = sub->add_option("--x0", f.x0, "ones | zeros");
  o["out"] = sub->add_option("--out", f.out, "output directory");
  o["record-timing"] = sub->add_flag("--record-timing", f.record_timing,
                                     "fill elapsed_ms (makes CSVs run-dependent)");
  if (grid_flags) {
    o["grid"] = sub->add_option("--grid", f.grid, "gamma grid: lo hi points")->expected(3);
  }
}

inline void apply_flags(const Flags& f, ExperimentConfig& c, const std::string& command) {
  auto& p = c.problem;
  auto& r = c.run;
  if (f.given("problem")) p.kind = f.kind;
  if (f.given("problem-file")) {
    p.kind = "file";
    p.path = f.problem_file;
  }
  if (f.given("d")) p.d = f.d;
  if (f.given("M")) p.m = f.m;
  if (f.given("n")) p.n = f.n;
  if (f.given("batch")) p.batch = f.batch;
  if (f.given("noise")) p.noise = f.noise;
  if (f.given("sigma")) p.sigma = f.sigma;
  if (f.given("mu")) p.mu = f.mu;
  if (f.given("ell")) p.ell = f.ell;
  if (f.given("seed")) {
    p.seed = f.seed;
    r.seed = f.seed;
  }
  if (f.given("problem-seed")) p.seed = f.problem_seed;
  if (f.given("tau")) r.taus = f.taus;
  if (f.given("schedule")) r.schedule = f.schedule;
  if (f.given("gamma")) {
    r.gamma = f.gamma;
    if (!f.given("schedule")) r.schedule = "constant";
  }
  if (f.given("total-iterations")) r.total_iterations = f.total_iterations;
  if (f.given("rounds")) r.rounds = f.rounds;
  if (f.given("mode")) r.mode = f.mode;
  if (f.given("replicates")) r.replicates = f.replicates;
  if (f.given("workers")) r.workers = f.workers;
  if (f.given("x0")) {
    r.x0 = f.x0;
    r.x0_values.clear();
    if (r.x0 != "ones" && r.x0 != "zeros") throw ConfigError("--x0 must be 'ones' or 'zeros'");
  }
  if (f.given("out")) c.output_dir = f.out;
  if (f.given("record-timing")) r.record_timing = f.record_timing;
  if (f.given("grid")) {
    GridSpec g{f.grid.at(0), f.grid.at(1), static_cast<std::size_t>(f.grid.at(2))};
    if (f.grid.at(2) < 1.0 || f.grid.at(2) != std::floor(f.grid.at(2))) {
      throw ConfigError("--grid points must be a positive integer");
    }
    (command == "heatmap" ? r.heatmap : r.tune) = g;
  }
  if (f.given("suites")) c.verify.suites = f.suites;
  if (f.given("samples")) c.verify.samples = f.samples;
  if (f.given("mc-seeds")) c.verify.mc_seeds = f.mc_seeds;
  if (f.given("chains")) c.verify.chains = f.chains;
}

// Everything a subcommand needs once the config is resolved.
struct Context {
  ExperimentConfig config;
  std::unique_ptr<GameProblem> problem;
  JointAction x0;
  ReferenceEquilibrium reference;
  std::optional<ProblemParameters> params;
  std::string params_error;
  std::string hash;
  fs::path out;

  const ProblemParameters& need_params() const {
    if (!params) throw ConfigError("problem parameters unavailable: " + params_error);
    return *params;
  }

  ExperimentSettings settings() const {
    const auto& r = config.run;
    ExperimentSettings s;
    s.rounds = r.rounds;
    s.schedule.kind = schedule_kind_from_string(r.schedule);
    s.schedule.gamma = r.gamma;
    s.schedule.total_iterations = r.total_iterations;
    s.mode = mode_from_string(r.mode);
    s.seed = r.seed;
    s.replicates = r.replicates;
    s.workers = r.workers;
    s.divergence_threshold = r.divergence_threshold;
    s.record_timing = r.record_timing;
    s.params = params;
    s.reference = reference.point;
    return s;
  }
};

inline Context make_context(ExperimentConfig config) {
  validate(config);
  Context ctx;
  ctx.problem = build_problem(config.problem);
  ctx.x0 = build_x0(config.run, ctx.problem->layout());
  ctx.reference = reference_equilibrium(*ctx.problem);
  ParameterOptions po;
  po.sigma.seed = config.run.seed;
  try {
    ctx.params = compute_parameters(*ctx.problem, po);
  } catch (const PreconditionError& e) {
    ctx.params_error = e.what();
  }
  ctx.hash = problem_hash(*ctx.problem);
  ctx.out = config.output_dir;
  ctx.config = std::move(config);
  return ctx;
}

inline json base_metadata(const Context& ctx, const std::string& command) {
  json m{{"tool", "pearl"},
         {"command", command},
         {"problem_kind", ctx.problem->kind()},
         {"problem_hash", ctx.hash},
         {"seed", ctx.config.run.seed},
         {"problem_seed", ctx.config.problem.seed},
         {"reference", {{"source", ctx.reference.source},
                        {"residual_norm", ctx.reference.residual_norm}}},
         {"x0", vector_to_json(ctx.x0.values)}};
  m["config"] = emit_config(ctx.config);
  m["parameters"] = ctx.params ? to_json(*ctx.params) : json(nullptr);
  if (!ctx.params) m["parameters_error"] = ctx.params_error;
  return m;
}

inline void write_common(const Context& ctx) {
  write_file_atomic(ctx.out / "config.yaml", emit_config(ctx.config));
  write_file_atomic(ctx.out / "problem.json", ctx.problem->to_json().dump(1) + "\n");
}

inline json run_entry(const ReplicatedRun& run) {
  return json{{"tau", run.tau},
              {"gamma", run.gamma},
              {"schedule", run.schedule.to_json()},
              {"status", to_string(run.mean.status)},
              {"final_rel_error", format_double(run.mean.final_rel_error())},
              {"final_rel_error_std", format_double(run.mean.final_record().rel_error_std)},
              {"replicates", run.replicates.size()},
              {"communication", to_json(run.mean.comms)}};
}

inline int cmd_run(Context& ctx, std::ostream& out) {
  const auto& r = ctx.config.run;
  if (r.taus.size() != 1) throw ConfigError("run takes a single tau; use sweep-tau for a list");
  const auto s = ctx.settings();
  const auto run = sweep_tau(*ctx.problem, ctx.x0, r.taus, s).front();
  write_common(ctx);
  write_file_atomic(ctx.out / "trajectory.csv", trajectory_csv(run.mean));
  json meta = base_metadata(ctx, "run");
  meta["runs"] = json::array({run_entry(run)});
  write_file_atomic(ctx.out / "metadata.json", meta.dump(2) + "\n");
  json summary = trajectory_summary(run.mean);
  summary["results"] = json::array({{{"tau", run.tau},
                                     {"gamma", run.gamma},
                                     {"final_rel_error", format_double(run.mean.final_rel_error())},
                                     {"status", to_string(run.mean.status)}}});
  write_file_atomic(ctx.out / "summary.json", summary.dump(2) + "\n");
  out << "tau=" << run.tau << " gamma=" << format_double(run.gamma)
      << " status=" << to_string(run.mean.status)
      << " final_rel_error=" << format_double(run.mean.final_rel_error()) << "\n"
      << "wrote " << (ctx.out / "trajectory.csv").string() << "\n";
  return kExitOk;
}

inline int cmd_sweep(Context& ctx, std::ostream& out, const std::string& command) {
  const auto s = ctx.settings();
  const auto runs = sweep_tau(*ctx.problem, ctx.x0, ctx.config.run.taus, s);
  write_common(ctx);
  json meta = base_metadata(ctx, command);
  json summary{{"command", command}, {"results", json::array()}};
  if (command == "robot") {
    summary["equilibrium_residual"] = ctx.reference.residual_norm;
    summary["equilibrium"] = vector_to_json(ctx.reference.point);
  }
  meta["runs"] = json::array();
  for (const auto& run : runs) {
    const auto name = "trajectory_tau" + std::to_string(run.tau) + ".csv";
    write_file_atomic(ctx.out / name, trajectory_csv(run.mean));
    meta["runs"].push_back(run_entry(run));
    summary["results"].push_back({{"tau", run.tau},
                                  {"gamma", run.gamma},
                                  {"final_rel_error", format_double(run.mean.final_rel_error())},
                                  {"final_rel_error_std",
                                   format_double(run.mean.final_record().rel_error_std)},
                                  {"status", to_string(run.mean.status)},
                                  {"csv", name}});
    out << "tau=" << run.tau << " gamma=" << format_double(run.gamma)
        << " status=" << to_string(run.mean.status)
        << " final_rel_error=" << format_double(run.mean.final_rel_error()) << "\n";
  }
  write_file_atomic(ctx.out / "metadata.json", meta.dump(2) + "\n");
  write_file_atomic(ctx.out / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

inline std::vector<double> grid_of(const GridSpec& g) {
  try {
    return log_uniform_grid(g.lo, g.hi, g.points);
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("gamma grid: ") + e.what());
  }
}

inline int cmd_tune(Context& ctx, std::ostream& out) {
  const auto s = ctx.settings();
  const auto grid = grid_of(ctx.config.run.tune);
  write_common(ctx);
  json meta = base_metadata(ctx, "tune-gamma");
  json summary{{"command", "tune-gamma"}, {"results", json::array()}, {"best", json::array()}};
  meta["grid"] = grid;
  for (std::size_t tau : ctx.config.run.taus) {
    const auto res = tune_gamma(*ctx.problem, ctx.x0, tau, grid, s);
    std::string csv = "gamma,final_rel_error,diverged\n";
    for (const auto& e : res.evaluations) {
      csv += format_double(e.gamma) + "," + format_double(e.final_rel_error) + "," +
             (e.diverged ? "1" : "0") + "\n";
      summary["results"].push_back({{"tau", tau},
                                    {"gamma", e.gamma},
                                    {"final_rel_error", format_double(e.final_rel_error)},
                                    {"diverged", e.diverged}});
    }
    write_file_atomic(ctx.out / ("tune_tau" + std::to_string(tau) + ".csv"), csv);
    if (res.all_diverged) {
      summary["best"].push_back({{"tau", tau}, {"all_diverged", true}});
      out << "tau=" << tau << " all step-sizes diverged\n";
      continue;
    }
    write_file_atomic(ctx.out / ("trajectory_tau" + std::to_string(tau) + ".csv"),
                      trajectory_csv(res.best->mean));
    summary["best"].push_back({{"tau", tau},
                               {"gamma", res.best_gamma},
                               {"final_rel_error", format_double(res.best->mean.final_rel_error())}});
    out << "tau=" << tau << " best_gamma=" << format_double(res.best_gamma)
        << " final_rel_error=" << format_double(res.best->mean.final_rel_error()) << "\n";
  }
  write_file_atomic(ctx.out / "metadata.json", meta.dump(2) + "\n");
  write_file_atomic(ctx.out / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

inline int cmd_heatmap(Context& ctx, std::ostream& out) {
  const auto s = ctx.settings();
  const auto grid = grid_of(ctx.config.run.heatmap);
  const auto h = heatmap_grid(*ctx.problem, ctx.x0, grid, ctx.config.run.taus, s);
  write_common(ctx);
  write_file_atomic(ctx.out / "heatmap.csv", heatmap_csv(h));
  json meta = base_metadata(ctx, "heatmap");
  meta["grid"] = grid;
  json summary{{"command", "heatmap"}, {"results", json::array()}, {"argmin", json::array()}};
  for (std::size_t g = 0; g < h.gammas.size(); ++g) {
    for (std::size_t t = 0; t < h.taus.size(); ++t) {
      summary["results"].push_back({{"tau", h.taus[t]},
                                    {"gamma", h.gammas[g]},
                                    {"log10_final_rel_error", format_double(h.log10_error[g][t])}});
    }
  }
  for (std::size_t t = 0; t < h.taus.size(); ++t) {
    const double best = h.argmin_gamma(t);
    summary["argmin"].push_back({{"tau", h.taus[t]},
                                 {"gamma", best},
                                 {"gamma_times_tau", best * static_cast<double>(h.taus[t])}});
    out << "tau=" << h.taus[t] << " argmin_gamma=" << format_double(best) << "\n";
  }
  write_file_atomic(ctx.out / "metadata.json", meta.dump(2) + "\n");
  write_file_atomic(ctx.out / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

inline int cmd_verify(Context& ctx, std::ostream& out, bool strict) {
  const auto& v = ctx.config.verify;
  const auto& r = ctx.config.run;
  std::vector<BoundReport> reports;
  const auto& params = ctx.need_params();
  const Vector& ref = ctx.reference.point;
  auto gamma_for = [&](std::size_t tau) {
    return r.schedule == "constant" ? r.gamma : theoretical_gamma(params, tau);
  };
  for (const auto& suite : v.suites) {
    if (suite == "assumptions") {
      for (auto& rep : check_assumptions(*ctx.problem, params, v.samples, v.radius, r.seed)) {
        reports.push_back(std::move(rep));
      }
      if (auto* sine = dynamic_cast<const SineNonCocoerciveGame*>(ctx.problem.get())) {
        reports.push_back(check_sine_witness(*sine, 10));
      }
    } else if (suite == "theorem1") {
      for (std::size_t tau : r.taus) {
        RunConfig cfg;
        cfg.tau = tau;
        cfg.rounds = r.rounds;
        cfg.schedule = StepSizeSchedule::constant(gamma_for(tau), tau);
        cfg.divergence_threshold = r.divergence_threshold;
        const auto traj = run_pearl_sgd(*ctx.problem, ctx.x0, cfg, ref);
        reports.push_back(check_theorem1_bound(traj, params, gamma_for(tau), tau));
      }
    } else if (suite == "theorem2") {
      for (std::size_t tau : r.taus) {
        reports.push_back(check_theorem2_neighborhood(*ctx.problem, ctx.x0, params, gamma_for(tau),
                                                      tau, r.rounds, {v.mc_seeds, r.seed, r.workers},
                                                      ref));
      }
    } else if (suite == "lemmas") {
      for (std::size_t tau : r.taus) {
        const LemmaSettings ls{v.chains, r.seed, r.workers};
        reports.push_back(check_lemma_gradnorm(*ctx.problem, params, v.player, ctx.x0.values,
                                               gamma_for(tau), tau, ls));
        reports.push_back(check_lemma_local_error(*ctx.problem, params, v.player, ctx.x0.values,
                                                  gamma_for(tau), tau, ls));
      }
    } else if (suite == "decreasing") {
      for (std::size_t tau : r.taus) {
        auto res = check_decreasing_rate(*ctx.problem, ctx.x0, params, tau, v.t_grid,
                                         {v.mc_seeds, r.seed, r.workers}, ref);
        reports.push_back(std::move(res.bound));
        reports.push_back(std::move(res.trend));
      }
    } else {
      throw ConfigError("unknown verify suite '" + suite +
                        "' (expected assumptions, theorem1, theorem2, lemmas or decreasing)");
    }
  }
  write_common(ctx);
  json meta = base_metadata(ctx, "verify");
  write_file_atomic(ctx.out / "metadata.json", meta.dump(2) + "\n");
  write_file_atomic(ctx.out / "reports.json", to_json(reports).dump(2) + "\n");
  bool all_ok = true;
  for (const auto& rep : reports) {
    out << rep.name << ": " << to_string(rep.verdict)
        << " (checked=" << rep.checked << ", max_violation=" << format_double(rep.max_violation)
        << ")\n";
    all_ok = all_ok && rep.verdict != Verdict::fail;
  }
  return strict && !all_ok ? 1 : kExitOk;
}

inline int cmd_params(Context& ctx, std::ostream& out) {
  json j{{"problem_kind", ctx.problem->kind()},
         {"problem_hash", ctx.hash},
         {"parameters", ctx.params ? to_json(*ctx.params) : json(nullptr)},
         {"equilibrium_residual", ctx.reference.residual_norm}};
  if (!ctx.params) j["parameters_error"] = ctx.params_error;
  if (ctx.params) {
    json gammas = json::array();
    for (std::size_t tau : ctx.config.run.taus) {
      gammas.push_back({{"tau", tau},
                        {"theoretical", theoretical_gamma(*ctx.params, tau)},
                        {"theoretical_robot", theoretical_robot_gamma(*ctx.params, tau)}});
    }
    j["gamma"] = gammas;
  }
  out << j.dump(2) << "\n";
  return kExitOk;
}

// Re-runs an artifact directory from its own config and problem file and
// reports whether the trajectory reproduces byte for byte.
inline int cmd_replay(const std::string& dir, const Flags& flags, std::ostream& out,
                      std::ostream& err) {
  const fs::path src(dir);
  auto config = load_config((src / "config.yaml").string());
  config.problem.kind = "file";
  config.problem.path = (src / "problem.json").string();
  config.output_dir = flags.given("out") ? flags.out : (src / "replay").string();
  if (flags.given("workers")) config.run.workers = flags.workers;
  auto ctx = make_context(std::move(config));
  const json meta = json::parse(read_file(src / "metadata.json"));
  if (meta.at("problem_hash").get<std::string>() != ctx.hash) {
    err << "warning: problem hash " << ctx.hash << " differs from recorded "
        << meta.at("problem_hash").get<std::string>() << "\n";
  }
  const int rc = cmd_run(ctx, out);
  const bool same = read_file(src / "trajectory.csv") == read_file(ctx.out / "trajectory.csv");
  out << "replay: trajectory " << (same ? "matches" : "differs from") << " the recorded run\n";
  return rc;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Per-player local SGD for n-player games"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands{
      {"run", "single run; writes trajectory.csv, metadata, summary"},
      {"sweep-tau", "one run per tau with the schedule re-resolved per tau"},
      {"tune-gamma", "grid search over constant step-sizes per tau"},
      {"heatmap", "final error over a gamma x tau grid"},
      {"verify", "assumption, theorem and lemma checks"},
      {"params", "print problem parameters"},
      {"robot", "mobile-robot preset sweep"}};
  std::map<std::string, Flags> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    auto& f = flags[name];
    add_common_flags(sub, f, name == "tune-gamma" || name == "heatmap");
    if (name == "run") {
      f.opts["replay"] = sub->add_option("--replay", f.replay, "artifact directory to reproduce");
    }
    if (name == "verify") {
      f.opts["suites"] = sub->add_option("--suite", f.suites,
                                         "assumptions, theorem1, theorem2, lemmas, decreasing")
                             ->delimiter(',');
      f.opts["samples"] = sub->add_option("--samples", f.samples, "assumption sample points");
      f.opts["mc-seeds"] = sub->add_option("--mc-seeds", f.mc_seeds, "Monte Carlo replicates");
      f.opts["chains"] = sub->add_option("--chains", f.chains, "lemma chains");
      sub->add_flag("--strict", f.strict, "exit 1 if any check fails");
    }
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  Flags& f = flags[command];
  try {
    if (command == "run" && f.given("replay")) return cmd_replay(f.replay, f, out, err);
    ExperimentConfig config = command == "robot" ? robot_preset() : ExperimentConfig{};
    if (f.given("config")) config = load_config(f.config_path, config);
    apply_seed_env(config);
    apply_flags(f, config, command);
    auto ctx = make_context(std::move(config));
    if (command == "run") return cmd_run(ctx, out);
    if (command == "sweep-tau" || command == "robot") return cmd_sweep(ctx, out, command);
    if (command == "tune-gamma") return cmd_tune(ctx, out);
    if (command == "heatmap") return cmd_heatmap(ctx, out);
    if (command == "verify") return cmd_verify(ctx, out, f.strict);
    if (command == "params") return cmd_params(ctx, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    // LayoutError and PreconditionError: bad inputs rather than failures.
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace pearl::cli
