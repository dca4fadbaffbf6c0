#pragma once

// Per-player local SGD: each round the server collects and redistributes the
// joint action, then every player runs tau local (stochastic) gradient steps
// on its own block with the other players' blocks frozen.

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pearl/core.hpp"
#include "pearl/linalg.hpp"
#include "pearl/parallel.hpp"
#include "pearl/parameters.hpp"
#include "pearl/schedule.hpp"

namespace pearl {

enum class Mode { deterministic, stochastic };

inline std::string to_string(Mode m) {
  return m == Mode::deterministic ? "deterministic" : "stochastic";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "deterministic") return Mode::deterministic;
  if (s == "stochastic") return Mode::stochastic;
  throw std::invalid_argument("unknown mode '" + s + "' (expected deterministic or stochastic)");
}

inline constexpr double kDefaultDivergenceThreshold = 1e12;

struct RunConfig {
  std::size_t tau = 1;
  std::size_t rounds = 1;
  StepSizeSchedule schedule = StepSizeSchedule::constant(1e-2);
  Mode mode = Mode::deterministic;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;  // stream coordinate of this run
  double divergence_threshold = kDefaultDivergenceThreshold;
  double converge_tol = 0.0;  // final relative error at or below this counts as converged
  bool parallel_players = false;
  bool record_timing = false;

  void validate() const {
    if (tau == 0) throw PreconditionError("synchronization interval tau must be >= 1");
    if (rounds == 0) throw PreconditionError("number of rounds R must be >= 1");
    if (schedule.tau() != tau) {
      throw PreconditionError("schedule was resolved for tau = " + std::to_string(schedule.tau()) +
                              " but the run uses tau = " + std::to_string(tau));
    }
    if (!(divergence_threshold > 0.0)) throw PreconditionError("divergence threshold must be > 0");
  }
};

enum class RunStatus { converged, budget_exhausted, diverged };

inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::budget_exhausted: return "budget-exhausted";
    case RunStatus::diverged: return "diverged";
  }
  return "unknown";
}

struct RoundRecord {
  std::size_t round = 0;
  std::size_t iteration = 0;
  std::size_t communications = 0;  // server exchanges so far, p + 1 at round p
  Vector x;
  double rel_error = 0.0;
  double rel_error_std = 0.0;
  std::vector<double> objectives;
  double elapsed_ms = 0.0;
};

struct CommunicationStats {
  std::size_t exchanges = 0;       // collect + distribute rounds
  std::size_t final_collects = 0;  // collect of x_{tau R} for output
  std::size_t uplink_coordinates = 0;
  std::size_t downlink_coordinates = 0;
};

struct Trajectory {
  std::vector<RoundRecord> records;
  RunStatus status = RunStatus::budget_exhausted;
  std::vector<double> gammas;  // step-size used in each completed round
  CommunicationStats comms;
  std::size_t replicates = 1;

  const RoundRecord& final_record() const { return records.back(); }
  double final_rel_error() const { return records.back().rel_error; }
  bool diverged() const { return status == RunStatus::diverged; }
};

// Equilibrium used as the reference for relative errors: the problem's own,
// an affine solve, or a long gradient-play run with gamma = 1/(10 ell).
struct ReferenceEquilibrium {
  Vector point;
  double residual_norm = 0.0;
  std::string source;
};

inline ReferenceEquilibrium reference_equilibrium(const GameProblem& problem,
                                                  std::size_t fallback_steps = 1'000'000) {
  if (auto eq = problem.equilibrium()) {
    return {*eq, joint_gradient(problem, *eq).norm(), "problem"};
  }
  if (problem.affine_operator()) {
    auto sol = solve_equilibrium_linear(problem);
    return {sol.point.values, sol.residual_norm, "linear-solve"};
  }
  const auto params = problem.analytic_params();
  if (!params) {
    throw PreconditionError("no equilibrium, affine operator or parameters for problem '" +
                            problem.kind() + "'");
  }
  const double gamma = 1.0 / (10.0 * params->ell);
  Vector x = Vector::Zero(static_cast<Eigen::Index>(problem.layout().total()));
  for (std::size_t k = 0; k < fallback_steps; ++k) x -= gamma * joint_gradient(problem, x);
  return {x, joint_gradient(problem, x).norm(), "gradient-play"};
}

namespace detail {

inline double relative_error(const Vector& x, const Vector& ref, double denom) {
  const double num = (x - ref).squaredNorm();
  return denom > 0.0 ? num / denom : num;
}

inline std::vector<double> objectives_at(const GameProblem& problem, const Vector& x) {
  std::vector<double> f(problem.layout().players());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = problem.objective(i, x);
  return f;
}

}  // namespace detail

// Runs the algorithm for config.rounds rounds from x0 and records x_{tau p}
// for p = 0..R. Divergence ends the run early with status diverged.
inline Trajectory run_pearl_sgd(const GameProblem& problem, const JointAction& x0,
                                const RunConfig& config, const Vector& reference) {
  config.validate();
  const auto& layout = problem.layout();
  if (!(x0.layout == layout)) throw LayoutError("x0 does not conform to the problem layout");
  layout.check_vector(reference);
  const std::size_t n = layout.players();
  const std::size_t total = layout.total();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    if (!config.record_timing) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  };

  Trajectory traj;
  traj.records.reserve(config.rounds + 1);
  traj.gammas.reserve(config.rounds);
  const double denom = (x0.values - reference).squaredNorm();

  Vector x = x0.values;
  auto record = [&](std::size_t p) {
    RoundRecord r;
    r.round = p;
    r.iteration = p * config.tau;
    r.communications = p + 1;
    r.x = x;
    r.rel_error = detail::relative_error(x, reference, denom);
    r.objectives = detail::objectives_at(problem, x);
    r.elapsed_ms = elapsed();
    traj.records.push_back(std::move(r));
    const double e = traj.records.back().rel_error;
    return std::isfinite(e) && x.allFinite() && e <= config.divergence_threshold;
  };

  record(0);
  std::size_t completed = 0;
  bool ok = true;
  for (std::size_t p = 0; p < config.rounds && ok; ++p) {
    const double gamma = config.schedule.gamma_at_round(p);
    const Vector frozen = x;  // x_{tau p}, as distributed by the server
    Vector next = frozen;

    auto local_phase = [&](std::size_t i) {
      Vector local = frozen;  // only block i moves; x^{-i} stays at x_{tau p}^{-i}
      auto own = block_of(layout, local, i);
      for (std::size_t t = 0; t < config.tau; ++t) {
        const std::size_t k = p * config.tau + t;
        if (config.mode == Mode::deterministic) {
          own -= gamma * problem.grad(i, local);
        } else {
          RngStream rng(config.seed, i, k, config.replicate);
          own -= gamma * problem.stoch_grad(i, local, rng).value;
        }
      }
      block_of(layout, next, i) = own;
    };

    if (config.parallel_players && n > 1) {
      std::vector<std::jthread> workers;
      workers.reserve(n);
      for (std::size_t i = 0; i < n; ++i) workers.emplace_back(local_phase, i);
    } else {
      for (std::size_t i = 0; i < n; ++i) local_phase(i);
    }

    x = std::move(next);
    traj.gammas.push_back(gamma);
    ++completed;
    ok = record(p + 1);
  }

  traj.comms.exchanges = completed;
  traj.comms.final_collects = 1;
  traj.comms.uplink_coordinates = (completed + 1) * total;
  traj.comms.downlink_coordinates = completed * n * total;
  if (!ok) {
    traj.status = RunStatus::diverged;
  } else if (traj.final_rel_error() <= config.converge_tol) {
    traj.status = RunStatus::converged;
  } else {
    traj.status = RunStatus::budget_exhausted;
  }
  return traj;
}

inline Trajectory run_pearl_sgd(const GameProblem& problem, const JointAction& x0,
                                const RunConfig& config) {
  return run_pearl_sgd(problem, x0, config, reference_equilibrium(problem).point);
}

// Mean and standard deviation of relative errors (and mean objectives)
// across replicate trajectories, over the rounds all of them reached.
inline Trajectory aggregate_replicates(const std::vector<Trajectory>& runs) {
  if (runs.empty()) throw PreconditionError("no trajectories to aggregate");
  if (runs.size() == 1) return runs.front();
  std::size_t len = runs.front().records.size();
  bool any_diverged = false;
  for (const auto& r : runs) {
    len = std::min(len, r.records.size());
    any_diverged = any_diverged || r.diverged();
  }
  Trajectory out;
  out.replicates = runs.size();
  out.status = any_diverged ? RunStatus::diverged : runs.front().status;
  out.gammas = runs.front().gammas;
  out.gammas.resize(std::min(out.gammas.size(), len == 0 ? 0 : len - 1));
  out.comms = runs.front().comms;
  const std::size_t players = runs.front().records.front().objectives.size();
  std::vector<double> errs(runs.size()), vals(runs.size());
  for (std::size_t p = 0; p < len; ++p) {
    RoundRecord rec;
    const auto& first = runs.front().records[p];
    rec.round = first.round;
    rec.iteration = first.iteration;
    rec.communications = first.communications;
    rec.x = Vector::Zero(first.x.size());
    double elapsed = 0.0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      errs[r] = runs[r].records[p].rel_error;
      rec.x += runs[r].records[p].x;
      elapsed = std::max(elapsed, runs[r].records[p].elapsed_ms);
    }
    rec.x /= static_cast<double>(runs.size());
    const auto ms = mean_std(errs);
    rec.rel_error = ms.mean;
    rec.rel_error_std = ms.stddev;
    rec.objectives.resize(players);
    for (std::size_t i = 0; i < players; ++i) {
      for (std::size_t r = 0; r < runs.size(); ++r) vals[r] = runs[r].records[p].objectives[i];
      rec.objectives[i] = pairwise_mean(vals);
    }
    rec.elapsed_ms = elapsed;
    out.records.push_back(std::move(rec));
  }
  return out;
}

// Shared settings for multi-run experiments (sweeps, tuning, heatmaps).
struct ExperimentSettings {
  std::size_t rounds = 100;
  ScheduleSpec schedule;
  Mode mode = Mode::deterministic;
  std::uint64_t seed = 0;
  std::size_t replicates = 5;  // stochastic mode only
  std::size_t workers = 1;
  double divergence_threshold = kDefaultDivergenceThreshold;
  bool record_timing = false;
  std::optional<ProblemParameters> params;
  std::optional<Vector> reference;

  std::size_t effective_replicates() const {
    return mode == Mode::deterministic ? 1 : std::max<std::size_t>(replicates, 1);
  }
};

struct ReplicatedRun {
  std::size_t tau = 1;
  double gamma = 0.0;  // initial step-size of the resolved schedule
  StepSizeSchedule schedule = StepSizeSchedule::constant(1.0);
  Trajectory mean;  // aggregated over replicates
  std::vector<Trajectory> replicates;
};

inline Vector resolve_reference(const GameProblem& problem, const ExperimentSettings& s) {
  return s.reference ? *s.reference : reference_equilibrium(problem).point;
}

inline ReplicatedRun run_replicated(const GameProblem& problem, const JointAction& x0,
                                    std::size_t tau, const StepSizeSchedule& schedule,
                                    const ExperimentSettings& s, const Vector& reference) {
  const std::size_t reps = s.effective_replicates();
  ReplicatedRun out;
  out.tau = tau;
  out.schedule = schedule;
  out.gamma = schedule.initial_gamma();
  out.replicates.resize(reps);
  parallel_for(reps, s.workers, [&](std::size_t r) {
    RunConfig cfg;
    cfg.tau = tau;
    cfg.rounds = s.rounds;
    cfg.schedule = schedule;
    cfg.mode = s.mode;
    cfg.seed = s.seed;
    cfg.replicate = r;
    cfg.divergence_threshold = s.divergence_threshold;
    cfg.record_timing = s.record_timing;
    out.replicates[r] = run_pearl_sgd(problem, x0, cfg, reference);
  });
  out.mean = aggregate_replicates(out.replicates);
  return out;
}

// One replicated run per tau, each with its own resolved schedule.
inline std::vector<ReplicatedRun> sweep_tau(const GameProblem& problem, const JointAction& x0,
                                            const std::vector<std::size_t>& taus,
                                            const ExperimentSettings& s) {
  for (std::size_t tau : taus) {
    if (tau == 0) throw PreconditionError("synchronization interval tau must be >= 1");
  }
  const Vector reference = resolve_reference(problem, s);
  std::vector<ReplicatedRun> out;
  out.reserve(taus.size());
  for (std::size_t tau : taus) {
    const auto schedule = s.schedule.resolve(s.params, tau, s.rounds);
    out.push_back(run_replicated(problem, x0, tau, schedule, s, reference));
  }
  return out;
}

struct GammaEvaluation {
  double gamma = 0.0;
  double final_rel_error = 0.0;
  bool diverged = false;
};

struct TuneResult {
  bool all_diverged = false;
  double best_gamma = 0.0;
  std::optional<ReplicatedRun> best;
  std::vector<GammaEvaluation> evaluations;  // in grid order
};

// true if a ranks strictly before b: finished runs first, then lower final
// error, then larger gamma.
inline bool ranks_before(const GammaEvaluation& a, const GammaEvaluation& b) {
  if (a.diverged != b.diverged) return !a.diverged;
  if (!a.diverged && a.final_rel_error != b.final_rel_error) {
    return a.final_rel_error < b.final_rel_error;
  }
  return a.gamma > b.gamma;
}

inline TuneResult tune_gamma(const GameProblem& problem, const JointAction& x0, std::size_t tau,
                             const std::vector<double>& gamma_grid, const ExperimentSettings& s) {
  if (gamma_grid.empty()) throw PreconditionError("gamma grid must be nonempty");
  for (double g : gamma_grid) {
    if (!(g > 0.0)) throw PreconditionError("gamma grid entries must be positive");
  }
  const Vector reference = resolve_reference(problem, s);
  TuneResult out;
  std::vector<ReplicatedRun> runs;
  runs.reserve(gamma_grid.size());
  for (double g : gamma_grid) {
    runs.push_back(run_replicated(problem, x0, tau, StepSizeSchedule::constant(g, tau), s, reference));
    const auto& m = runs.back().mean;
    out.evaluations.push_back({g, m.final_rel_error(), m.diverged()});
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k) {
    if (ranks_before(out.evaluations[k], out.evaluations[best])) best = k;
  }
  out.all_diverged = out.evaluations[best].diverged;
  if (!out.all_diverged) {
    out.best_gamma = gamma_grid[best];
    out.best = std::move(runs[best]);
  }
  return out;
}

struct Heatmap {
  std::vector<double> gammas;
  std::vector<std::size_t> taus;
  std::vector<std::vector<double>> log10_error;  // [gamma][tau]; +inf for diverged

  // Grid step-size with the smallest final error for column t (ties to larger gamma).
  double argmin_gamma(std::size_t t) const {
    std::size_t best = 0;
    for (std::size_t g = 1; g < gammas.size(); ++g) {
      const double v = log10_error[g][t], b = log10_error[best][t];
      if (v < b || (v == b && gammas[g] > gammas[best])) best = g;
    }
    return gammas[best];
  }
};

inline constexpr double kDivergedSentinel = std::numeric_limits<double>::infinity();

// log10 of the final relative error after s.rounds rounds for every (gamma, tau).
inline Heatmap heatmap_grid(const GameProblem& problem, const JointAction& x0,
                            const std::vector<double>& gammas, const std::vector<std::size_t>& taus,
                            const ExperimentSettings& s) {
  if (gammas.empty() || taus.empty()) throw PreconditionError("heatmap grids must be nonempty");
  const Vector reference = resolve_reference(problem, s);
  Heatmap h{gammas, taus, std::vector<std::vector<double>>(gammas.size(),
                                                           std::vector<double>(taus.size()))};
  parallel_for(gammas.size() * taus.size(), s.workers, [&](std::size_t cell) {
    const std::size_t g = cell / taus.size(), t = cell % taus.size();
    ExperimentSettings single = s;
    single.workers = 1;
    const auto run = run_replicated(problem, x0, taus[t],
                                    StepSizeSchedule::constant(gammas[g], taus[t]), single,
                                    reference);
    h.log10_error[g][t] =
        run.mean.diverged() ? kDivergedSentinel : std::log10(run.mean.final_rel_error());
  });
  return h;
}

// n points spaced uniformly in log10 between lo and hi inclusive.
inline std::vector<double> log_uniform_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi >= lo) || n == 0) throw PreconditionError("invalid log-uniform grid");
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = std::pow(10.0, a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1));
  }
  return out;
}

}  // namespace pearl
