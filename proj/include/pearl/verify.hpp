#pragma once

// Sampled and Monte Carlo checks of the structural assumptions, the
// convergence bounds and the local-error lemmas.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "pearl/core.hpp"
#include "pearl/engine.hpp"
#include "pearl/linalg.hpp"
#include "pearl/parameters.hpp"
#include "pearl/problems.hpp"
#include "pearl/schedule.hpp"

namespace pearl {

enum class Verdict { pass, fail, inapplicable };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::inapplicable: return "inapplicable";
  }
  return "unknown";
}

// Monte Carlo checks allow this many CI half-widths of slack.
inline constexpr double kCiSlack = 3.0;
inline constexpr double kAssumptionTolerance = 1e-8;

struct BoundReport {
  std::string name;
  std::size_t checked = 0;
  double max_violation = -std::numeric_limits<double>::infinity();  // <= tolerance means pass
  double ci_half_width = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::inapplicable;
  std::string note;
  json detail = json::object();

  bool passed() const { return verdict == Verdict::pass; }

  void observe(double violation) {
    ++checked;
    if (violation > max_violation || std::isnan(violation)) max_violation = violation;
  }

  BoundReport& finish() {
    verdict = (max_violation <= tolerance) ? Verdict::pass : Verdict::fail;
    return *this;
  }

  static BoundReport inapplicable_because(std::string name, std::string why) {
    BoundReport r;
    r.name = std::move(name);
    r.verdict = Verdict::inapplicable;
    r.note = std::move(why);
    r.max_violation = 0.0;
    return r;
  }
};

inline json to_json(const BoundReport& r) {
  return json{{"bound", r.name},
              {"checked", r.checked},
              {"tolerance", r.tolerance},
              {"max_violation", std::isfinite(r.max_violation) ? json(r.max_violation)
                                                               : json(std::to_string(r.max_violation))},
              {"ci_half_width", r.ci_half_width},
              {"verdict", to_string(r.verdict)},
              {"note", r.note},
              {"detail", r.detail}};
}

inline json to_json(const std::vector<BoundReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return arr;
}

// Sampled QSM, SCO, sandwich, per-player convexity and per-player
// L_i-smoothness checks in a ball around the equilibrium.
inline std::vector<BoundReport> check_assumptions(const GameProblem& problem,
                                                  const ProblemParameters& params,
                                                  std::size_t n_samples, double radius,
                                                  std::uint64_t seed) {
  const auto eq = problem.equilibrium();
  if (!eq) {
    return {BoundReport::inapplicable_because("assumptions", "no equilibrium available")};
  }
  const auto& layout = problem.layout();
  const Vector& xs = *eq;
  BoundReport qsm, sco, sandwich, cvx, sm;
  qsm.name = "QSM";
  sco.name = "SCO";
  sandwich.name = "sandwich";
  cvx.name = "CVX";
  sm.name = "SM";
  for (auto* r : {&qsm, &sco, &sandwich, &cvx, &sm}) {
    r->tolerance = kAssumptionTolerance;
    r->detail = {{"radius", radius}, {"seed", seed}};
  }
  for (std::size_t s = 0; s < n_samples; ++s) {
    RngStream rng(seed, 0xa55, s, 0);
    const Vector x = sample_ball(xs, radius, rng);
    const Vector fx = joint_gradient(problem, x);
    const Vector diff = x - xs;
    const double inner = fx.dot(diff);
    qsm.observe(params.mu * diff.squaredNorm() - inner);
    sco.observe(fx.squaredNorm() / params.ell - inner);
    const double fn = fx.norm(), dn = diff.norm();
    sandwich.observe(std::max(params.mu * dn - fn, fn - params.ell * dn));

    // Perturb one player's block with the rest frozen.
    const std::size_t i = s % layout.players();
    Vector y = x;
    {
      RngStream pr(seed, 0xb66, s, 0);
      const Vector xi = block_of(layout, x, i);
      block_of(layout, y, i) = sample_ball(xi, radius, pr);
    }
    const Vector gx = problem.grad(i, x), gy = problem.grad(i, y);
    const Vector step = block_of(layout, y, i) - block_of(layout, x, i);
    cvx.observe(-(gy - gx).dot(step));
    sm.observe((gy - gx).norm() - params.l_per_player[i] * step.norm());
  }
  return {qsm.finish(), sco.finish(), sandwich.finish(), cvx.finish(), sm.finish()};
}

inline BoundReport check_sine_witness(const SineNonCocoerciveGame& game, int n) {
  BoundReport r;
  r.name = "monotonicity-witness";
  const double t = sine_witness_point(n);
  const double det = sine_monotonicity_witness(game, n);
  const double phi = game.phi(t);
  r.observe(det);
  r.tolerance = 0.0;
  r.detail = {{"N", n},
              {"point", t},
              {"det", det},
              {"closed_form", 4.0 * phi * phi - 4.0 * std::pow(game.ell() - game.mu(), 2) * t * t}};
  // Negative determinant shows F is not monotone; that is what the report asserts.
  r.verdict = det < 0.0 ? Verdict::pass : Verdict::fail;
  r.note = "det(DF + DF^T) < 0 witnesses non-monotonicity";
  return r;
}

inline bool gamma_in_linear_range(const ProblemParameters& p, double gamma, std::size_t tau) {
  return gamma > 0.0 && gamma <= theoretical_gamma(p, tau) * (1.0 + 1e-12) &&
         contraction_zeta(p, gamma, tau) > 0.0;
}

// Squared distances below this (relative to ||x0 - x*||^2) are at the
// resolution of double arithmetic and are not checked round by round.
inline constexpr double kRelativeErrorFloor = 1e-24;

// Per-round contraction by 1 - gamma tau mu zeta and the R-round rate on a
// deterministic trajectory.
inline BoundReport check_theorem1_bound(const Trajectory& traj, const ProblemParameters& params,
                                        double gamma, std::size_t tau) {
  if (!gamma_in_linear_range(params, gamma, tau)) {
    return BoundReport::inapplicable_because(
        "theorem1", "gamma outside (0, 1/(ell tau + 2 (tau-1) L_max sqrt(kappa))]");
  }
  BoundReport r;
  r.name = "theorem1";
  r.tolerance = 1e-9;
  const double rho = contraction_factor(params, gamma, tau);
  const auto& recs = traj.records;
  for (std::size_t p = 0; p + 1 < recs.size(); ++p) {
    const double e0 = recs[p].rel_error, e1 = recs[p + 1].rel_error;
    if (e0 < kRelativeErrorFloor) continue;
    r.observe(e1 / (rho * e0) - 1.0);
  }
  const std::size_t rounds = recs.size() - 1;
  const double bound = std::pow(rho, static_cast<double>(rounds)) * recs.front().rel_error;
  const double observed = recs.back().rel_error;
  if (observed >= kRelativeErrorFloor) r.observe(observed / bound - 1.0);
  r.detail = {{"rho", rho},
              {"zeta", contraction_zeta(params, gamma, tau)},
              {"gamma", gamma},
              {"tau", tau},
              {"rounds", rounds},
              {"final_observed", observed},
              {"final_bound", bound},
              {"tightness_ratio", bound > 0.0 ? observed / bound : 0.0}};
  if (r.checked == 0) r.max_violation = -1.0;
  return r.finish();
}

struct MonteCarloSettings {
  std::size_t n_seeds = 1000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

// E||x_{tau R} - x*||^2 against the constant-step neighborhood bound.
inline BoundReport check_theorem2_neighborhood(const GameProblem& problem, const JointAction& x0,
                                               const ProblemParameters& params, double gamma,
                                               std::size_t tau, std::size_t rounds,
                                               const MonteCarloSettings& mc,
                                               const Vector& reference) {
  if (!gamma_in_linear_range(params, gamma, tau)) {
    return BoundReport::inapplicable_because(
        "theorem2", "gamma outside (0, 1/(ell tau + 2 (tau-1) L_max sqrt(kappa))]");
  }
  std::vector<double> finals(mc.n_seeds);
  parallel_for(mc.n_seeds, mc.workers, [&](std::size_t r) {
    RunConfig cfg;
    cfg.tau = tau;
    cfg.rounds = rounds;
    cfg.schedule = StepSizeSchedule::constant(gamma, tau);
    cfg.mode = Mode::stochastic;
    cfg.seed = mc.seed;
    cfg.replicate = r;
    cfg.divergence_threshold = std::numeric_limits<double>::max();
    const auto traj = run_pearl_sgd(problem, x0, cfg, reference);
    finals[r] = (traj.final_record().x - reference).squaredNorm();
  });
  const auto est = mean_std(finals);
  const double zeta = contraction_zeta(params, gamma, tau);
  const double t = static_cast<double>(tau);
  const double rho = contraction_factor(params, gamma, tau);
  const double init = (x0.values - reference).squaredNorm();
  const double linear = std::pow(rho, static_cast<double>(rounds)) * init;
  const double factor =
      1.0 + (t - 1.0) * ((4.0 + std::sqrt(3.0) * params.q) * gamma * t * params.l_max +
                         params.q / (2.0 * t));
  const double neighborhood = factor * gamma * params.sigma_sq_total / (params.mu * zeta);
  const double bound = linear + neighborhood;

  BoundReport r;
  r.name = "theorem2";
  r.tolerance = 0.0;
  r.ci_half_width = est.ci_half_width();
  r.observe(est.mean - bound - kCiSlack * r.ci_half_width);
  r.detail = {{"estimate", est.mean},
              {"stddev", est.stddev},
              {"seeds", mc.n_seeds},
              {"bound", bound},
              {"linear_term", linear},
              {"neighborhood_term", neighborhood},
              {"gamma", gamma},
              {"tau", tau},
              {"rounds", rounds},
              {"zeta", zeta}};
  return r.finish();
}

namespace detail {

struct LocalChains {
  // [offset][chain]
  std::vector<std::vector<double>> grad_sq;
  std::vector<std::vector<double>> drift_sq;
  double initial_grad_sq = 0.0;
};

inline LocalChains run_local_chains(const GameProblem& problem, std::size_t player,
                                    const Vector& x_start, double gamma, std::size_t tau,
                                    std::size_t n_chains, std::uint64_t seed, std::size_t workers) {
  const auto& layout = problem.layout();
  LocalChains out;
  out.grad_sq.assign(tau + 1, std::vector<double>(n_chains));
  out.drift_sq.assign(tau + 1, std::vector<double>(n_chains));
  out.initial_grad_sq = problem.grad(player, x_start).squaredNorm();
  const Vector start_block = block_of(layout, x_start, player);
  parallel_for(n_chains, workers, [&](std::size_t c) {
    Vector local = x_start;
    auto own = block_of(layout, local, player);
    out.grad_sq[0][c] = out.initial_grad_sq;
    out.drift_sq[0][c] = 0.0;
    for (std::size_t j = 1; j <= tau; ++j) {
      RngStream rng(seed, player, j - 1, c);
      own -= gamma * problem.stoch_grad(player, local, rng).value;
      out.grad_sq[j][c] = problem.grad(player, local).squaredNorm();
      out.drift_sq[j][c] = (Vector(own) - start_block).squaredNorm();
    }
  });
  return out;
}

inline bool lemma_step_ok(double gamma, double li, std::size_t tau) {
  const double cap = tau > 1 ? std::min(1.0, 1.0 / static_cast<double>(tau - 1)) : 1.0;
  return gamma > 0.0 && gamma <= cap / li * (1.0 + 1e-12);
}

}  // namespace detail

struct LemmaSettings {
  std::size_t n_chains = 10000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

// E||grad f_i(x_j)||^2 <= ||grad f_i(x_start)||^2 + 2 j gamma L_i sigma_i^2 along
// tau local SGD steps with the other blocks frozen.
inline BoundReport check_lemma_gradnorm(const GameProblem& problem, const ProblemParameters& params,
                                        std::size_t player, const Vector& x_start, double gamma,
                                        std::size_t tau, const LemmaSettings& ls) {
  const double li = params.l_per_player.at(player);
  if (!detail::lemma_step_ok(gamma, li, tau)) {
    return BoundReport::inapplicable_because("lemma-gradnorm",
                                             "gamma exceeds (1/L_i) min{1, 1/(tau-1)}");
  }
  const double sigma_sq = std::pow(params.sigma_per_player.at(player), 2);
  const auto chains =
      detail::run_local_chains(problem, player, x_start, gamma, tau, ls.n_chains, ls.seed, ls.workers);
  BoundReport r;
  r.name = "lemma-gradnorm";
  r.tolerance = 1e-9;
  json offsets = json::array();
  for (std::size_t j = 0; j <= tau; ++j) {
    const auto est = mean_std(chains.grad_sq[j]);
    const double bound =
        chains.initial_grad_sq + 2.0 * static_cast<double>(j) * gamma * li * sigma_sq;
    const double slack = kCiSlack * est.ci_half_width();
    const double scale = std::max(bound, std::numeric_limits<double>::min());
    r.observe((est.mean - bound - slack) / scale);
    r.ci_half_width = std::max(r.ci_half_width, est.ci_half_width());
    offsets.push_back({{"j", j}, {"mean", est.mean}, {"bound", bound}, {"ci", est.ci_half_width()}});
  }
  r.detail = {{"player", player}, {"gamma", gamma}, {"tau", tau}, {"chains", ls.n_chains},
              {"offsets", offsets}};
  return r.finish();
}

// E||x_start^i - x_t^i||^2 <= gamma^2 t^2 ||grad f_i||^2 + gamma^2 t (1 + 2(t-1)(t+1) gamma L_i) sigma_i^2.
inline BoundReport check_lemma_local_error(const GameProblem& problem,
                                           const ProblemParameters& params, std::size_t player,
                                           const Vector& x_start, double gamma, std::size_t tau,
                                           const LemmaSettings& ls) {
  const double li = params.l_per_player.at(player);
  if (!detail::lemma_step_ok(gamma, li, tau)) {
    return BoundReport::inapplicable_because("lemma-local-error",
                                             "gamma exceeds (1/L_i) min{1, 1/(tau-1)}");
  }
  const double sigma_sq = std::pow(params.sigma_per_player.at(player), 2);
  const auto chains =
      detail::run_local_chains(problem, player, x_start, gamma, tau, ls.n_chains, ls.seed, ls.workers);
  BoundReport r;
  r.name = "lemma-local-error";
  r.tolerance = 1e-9;
  json offsets = json::array();
  for (std::size_t t = 0; t <= tau; ++t) {
    const double td = static_cast<double>(t);
    const auto est = mean_std(chains.drift_sq[t]);
    const double bound = gamma * gamma * td * td * chains.initial_grad_sq +
                         gamma * gamma * td * (1.0 + 2.0 * (td - 1.0) * (td + 1.0) * gamma * li) *
                             sigma_sq;
    const double slack = kCiSlack * est.ci_half_width();
    const double scale = std::max(bound, std::numeric_limits<double>::min());
    r.observe((est.mean - bound - slack) / scale);
    r.ci_half_width = std::max(r.ci_half_width, est.ci_half_width());
    offsets.push_back({{"t", t}, {"mean", est.mean}, {"bound", bound}, {"ci", est.ci_half_width()}});
  }
  r.detail = {{"player", player}, {"gamma", gamma}, {"tau", tau}, {"chains", ls.n_chains},
              {"offsets", offsets}};
  return r.finish();
}

struct DecreasingBoundTerms {
  double initial = 0.0;
  double variance = 0.0;  // 4 (1 + q) sigma^2 / (mu^2 T)
  double cross = 0.0;
  double local = 0.0;

  double total() const { return initial + variance + cross + local; }
  bool variance_dominates() const { return variance >= std::max({initial, cross, local}); }
};

// The four terms of the rate for the decreasing step-size rule after T iterations.
inline DecreasingBoundTerms decreasing_bound(const ProblemParameters& p, std::size_t tau, double t_total,
                                             double init_sq) {
  const double t = static_cast<double>(tau);
  const double a = 1.0 + 2.0 * p.q;
  const double s2 = p.sigma_sq_total;
  DecreasingBoundTerms b;
  b.initial = 4.0 * a * a * p.kappa * p.kappa * t * t * init_sq / (std::numbers::e * t_total * t_total);
  b.variance = 4.0 * (1.0 + p.q) * s2 / (p.mu * p.mu * t_total);
  b.cross = 4.0 * a * a * p.kappa * t * s2 / (p.mu * p.mu * t_total * t_total) *
            (1.0 + 2.0 * t / std::sqrt(p.kappa));
  b.local = 32.0 * (1.0 + p.q) * t * t * p.l_max * s2 * std::log(t_total) /
            (p.mu * p.mu * p.mu * t_total * t_total);
  return b;
}

struct DecreasingRateResult {
  BoundReport bound;
  BoundReport trend;
  std::vector<double> totals;       // T grid
  std::vector<double> mean_errors;  // E||x_T - x*||^2 estimates
  std::vector<double> ci;
};

// Monte Carlo check of the decreasing-schedule rate at every T of the grid,
// plus the O(1/T) trend between T and 2T once the variance term dominates.
inline DecreasingRateResult check_decreasing_rate(const GameProblem& problem, const JointAction& x0,
                                                  const ProblemParameters& params, std::size_t tau,
                                                  const std::vector<std::size_t>& t_grid,
                                                  const MonteCarloSettings& mc,
                                                  const Vector& reference) {
  if (t_grid.empty()) throw PreconditionError("T grid must be nonempty");
  std::size_t t_max = 0;
  for (std::size_t t : t_grid) {
    if (t == 0 || t % tau != 0) {
      throw PreconditionError("every T in the grid must be a positive multiple of tau");
    }
    t_max = std::max(t_max, t);
  }
  const std::size_t rounds = t_max / tau;
  const auto schedule = StepSizeSchedule::decreasing(params, tau);
  std::vector<std::vector<double>> errs(t_grid.size(), std::vector<double>(mc.n_seeds));
  parallel_for(mc.n_seeds, mc.workers, [&](std::size_t r) {
    RunConfig cfg;
    cfg.tau = tau;
    cfg.rounds = rounds;
    cfg.schedule = schedule;
    cfg.mode = Mode::stochastic;
    cfg.seed = mc.seed;
    cfg.replicate = r;
    cfg.divergence_threshold = std::numeric_limits<double>::max();
    const auto traj = run_pearl_sgd(problem, x0, cfg, reference);
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
      errs[g][r] = (traj.records.at(t_grid[g] / tau).x - reference).squaredNorm();
    }
  });

  DecreasingRateResult out;
  const double init = (x0.values - reference).squaredNorm();
  out.bound.name = "decreasing-bound";
  out.bound.tolerance = 0.0;
  out.trend.name = "decreasing-trend";
  out.trend.tolerance = 0.0;
  json rows = json::array();
  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    const auto est = mean_std(errs[g]);
    const auto b = decreasing_bound(params, tau, static_cast<double>(t_grid[g]), init);
    out.totals.push_back(static_cast<double>(t_grid[g]));
    out.mean_errors.push_back(est.mean);
    out.ci.push_back(est.ci_half_width());
    out.bound.observe(est.mean - b.total() - kCiSlack * est.ci_half_width());
    out.bound.ci_half_width = std::max(out.bound.ci_half_width, est.ci_half_width());
    rows.push_back({{"T", t_grid[g]},
                    {"mean", est.mean},
                    {"ci", est.ci_half_width()},
                    {"bound", b.total()},
                    {"variance_dominates", b.variance_dominates()}});
  }
  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    for (std::size_t h = 0; h < t_grid.size(); ++h) {
      if (t_grid[h] != 2 * t_grid[g]) continue;
      const auto b = decreasing_bound(params, tau, static_cast<double>(t_grid[g]), init);
      if (!b.variance_dominates()) continue;
      out.trend.observe(out.mean_errors[h] / out.mean_errors[g] - 0.75);
    }
  }
  out.bound.detail = {{"tau", tau}, {"seeds", mc.n_seeds}, {"rows", rows},
                      {"switch_round", schedule.switch_round()}};
  out.trend.detail = {{"ratio_limit", 0.75}};
  out.bound.finish();
  if (out.trend.checked == 0) {
    out.trend = BoundReport::inapplicable_because("decreasing-trend",
                                                  "variance term never dominates on this grid");
  } else {
    out.trend.finish();
  }
  return out;
}

}  // namespace pearl
