#pragma once

// Equilibrium solves and the constants (mu, ell, L_i, sigma_i) that drive
// step-size choices and bounds.

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <vector>

#include "pearl/core.hpp"
#include "pearl/linalg.hpp"

namespace pearl {

struct LinearEquilibrium {
  JointAction point;
  double residual_norm = 0.0;  // ||F(x*)|| evaluated through the problem's own gradients
};

// Solves F(x) = 0 for affine F by LU with partial pivoting.
inline LinearEquilibrium solve_equilibrium_linear(const GameProblem& problem) {
  const auto op = problem.affine_operator();
  if (!op) throw PreconditionError("problem '" + problem.kind() + "' has no affine operator");
  Vector x = solve_linear(op->jacobian, -op->offset);
  LinearEquilibrium out{JointAction(problem.layout(), x), 0.0};
  out.residual_norm = joint_gradient(problem, x).norm();
  return out;
}

// Uniform point in the Euclidean ball of the given radius around center.
inline Vector sample_ball(const Vector& center, double radius, RngStream& rng) {
  Vector dir(center.size());
  for (Eigen::Index k = 0; k < dir.size(); ++k) dir(k) = rng.normal();
  const double nd = dir.norm();
  if (nd == 0.0) return center;
  const double r = radius * std::pow(rng.uniform01(), 1.0 / static_cast<double>(center.size()));
  return center + (r / nd) * dir;
}

// Upper one-sided 99% factor for a variance estimated from `draws` samples.
inline double variance_inflation_99(std::size_t draws) {
  if (draws < 2) return 1.0;
  const double dof = static_cast<double>(draws);
  boost::math::chi_squared dist(dof);
  return dof / boost::math::quantile(dist, 0.01);
}

struct SigmaEstimateOptions {
  std::size_t n_points = 32;
  std::size_t n_draws = 1000;
  std::uint64_t seed = 0;
  double radius = 10.0;
};

// Largest empirical E||g - grad||^2 per player over sampled points (plus x*
// when known), inflated to its upper 99% confidence limit. Returns sigma_i.
inline std::vector<double> estimate_sigma(const GameProblem& problem,
                                          const SigmaEstimateOptions& opt) {
  if (opt.n_points == 0 || opt.n_draws == 0) {
    throw PreconditionError("estimate_sigma needs n_points >= 1 and n_draws >= 1");
  }
  const auto& layout = problem.layout();
  const auto eq = problem.equilibrium();
  const Vector center = eq ? *eq : Vector::Zero(static_cast<Eigen::Index>(layout.total()));

  std::vector<Vector> points;
  if (eq) points.push_back(*eq);
  for (std::size_t p = 0; p < opt.n_points; ++p) {
    RngStream rng(opt.seed, 0xba11, p, 0);
    points.push_back(sample_ball(center, opt.radius, rng));
  }

  const double inflation = variance_inflation_99(opt.n_draws);
  std::vector<double> sigma(layout.players(), 0.0);
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (std::size_t i = 0; i < layout.players(); ++i) {
      const Vector mean = problem.grad(i, points[p]);
      std::vector<double> sq(opt.n_draws);
      for (std::size_t k = 0; k < opt.n_draws; ++k) {
        RngStream rng(opt.seed, i, k, 1000003 + p);
        sq[k] = (problem.stoch_grad(i, points[p], rng).value - mean).squaredNorm();
      }
      const double var = pairwise_mean(sq) * inflation;
      sigma[i] = std::max(sigma[i], var);
    }
  }
  for (double& s : sigma) s = std::sqrt(s);
  return sigma;
}

struct ParameterOptions {
  SigmaEstimateOptions sigma;
  // Replace ell = L^2 / mu by a caller-supplied tighter constant when positive.
  double ell_override = 0.0;
};

// Constants of the game. Affine F(x) = Mx + b: mu = lambda_min((M + M^T)/2),
// L = ||M||_2, ell = L^2 / mu, L_i = ||M_ii||_2. Non-affine problems must
// supply analytic parameters. sigma_i is exact when the noise model allows,
// estimated otherwise.
inline ProblemParameters compute_parameters(const GameProblem& problem,
                                            const ParameterOptions& opt = {}) {
  auto sigma_of = [&]() -> std::vector<double> {
    if (auto s = problem.exact_sigma()) return *s;
    return estimate_sigma(problem, opt.sigma);
  };

  if (auto p = problem.analytic_params()) {
    if (problem.exact_sigma()) return *p;
    return p->with_sigma(sigma_of());
  }
  const auto op = problem.affine_operator();
  if (!op) {
    throw PreconditionError("problem '" + problem.kind() +
                            "' has neither an affine operator nor analytic parameters");
  }
  const auto& layout = problem.layout();
  const double mu = lambda_min_symmetric(symmetric_part(op->jacobian));
  if (!(mu > 0.0)) {
    throw PreconditionError("symmetric part of the Jacobian is not positive definite (mu = " +
                            std::to_string(mu) + "); QSM fails");
  }
  const double lip = spectral_norm(op->jacobian);
  const double ell = opt.ell_override > 0.0 ? opt.ell_override : lip * lip / mu;
  std::vector<double> li(layout.players());
  for (std::size_t i = 0; i < layout.players(); ++i) {
    const auto o = static_cast<Eigen::Index>(layout.offset(i));
    const auto d = static_cast<Eigen::Index>(layout.dim(i));
    li[i] = spectral_norm(op->jacobian.block(o, o, d, d));
  }
  return ProblemParameters::make(mu, ell, std::move(li), sigma_of());
}

}  // namespace pearl
