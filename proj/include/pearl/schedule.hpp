#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "pearl/core.hpp"

namespace pearl {

enum class ScheduleKind { constant, theoretical, theoretical_robot, corollary, decreasing };

inline std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::theoretical: return "theoretical";
    case ScheduleKind::theoretical_robot: return "theoretical-robot";
    case ScheduleKind::corollary: return "corollary";
    case ScheduleKind::decreasing: return "decreasing";
  }
  return "unknown";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "theoretical") return ScheduleKind::theoretical;
  if (s == "theoretical-robot") return ScheduleKind::theoretical_robot;
  if (s == "corollary") return ScheduleKind::corollary;
  if (s == "decreasing") return ScheduleKind::decreasing;
  throw std::invalid_argument("unknown schedule '" + s +
                              "' (expected constant, theoretical, theoretical-robot, corollary "
                              "or decreasing)");
}

// Largest constant step-size covered by the linear-rate guarantees:
// 1 / (ell tau + 2 (tau - 1) L_max sqrt(kappa)).
inline double theoretical_gamma(const ProblemParameters& p, std::size_t tau) {
  const double t = static_cast<double>(tau);
  return 1.0 / (p.ell * t + 2.0 * (t - 1.0) * p.l_max * std::sqrt(p.kappa));
}

// Variant used for the robot experiment, without the factor 2 on the drift term.
inline double theoretical_robot_gamma(const ProblemParameters& p, std::size_t tau) {
  const double t = static_cast<double>(tau);
  return 1.0 / (p.ell * t + (t - 1.0) * p.l_max * std::sqrt(p.kappa));
}

// zeta = 2 - gamma ell tau - 2 (tau - 1) gamma L_max sqrt(kappa / 3).
inline double contraction_zeta(const ProblemParameters& p, double gamma, std::size_t tau) {
  const double t = static_cast<double>(tau);
  return 2.0 - gamma * p.ell * t - 2.0 * (t - 1.0) * gamma * p.l_max * std::sqrt(p.kappa / 3.0);
}

// Per-round factor 1 - gamma tau mu zeta.
inline double contraction_factor(const ProblemParameters& p, double gamma, std::size_t tau) {
  return 1.0 - gamma * static_cast<double>(tau) * p.mu * contraction_zeta(p, gamma, tau);
}

struct EtaSolution {
  double eta = 0.0;
  double gamma = 0.0;
  double min_total_iterations = 0.0;
};

inline double corollary_total_iterations(double eta, double q) {
  return 2.0 * (1.0 + 2.0 * q) * eta * std::log(eta);
}

// Solves T = 2 (1 + 2q) eta log eta for eta by bisection on [e, T] and returns
// gamma = 1 / (mu eta (1 + 2q)). Requires eta > kappa tau.
inline EtaSolution corollary_eta_solve(double total_iterations, double q, double kappa,
                                       std::size_t tau, double mu = 1.0) {
  if (!(q >= 0.0) || !(kappa >= 1.0) || tau == 0 || !(mu > 0.0)) {
    throw PreconditionError("corollary step-size needs q >= 0, kappa >= 1, tau >= 1, mu > 0");
  }
  const double floor_eta = std::max(std::numbers::e, kappa * static_cast<double>(tau));
  const double min_t = corollary_total_iterations(floor_eta, q);
  const double target = total_iterations / (2.0 * (1.0 + 2.0 * q));
  auto h = [&](double eta) { return eta * std::log(eta) - target; };

  double lo = std::numbers::e;
  if (!(total_iterations >= lo) || h(lo) > 1e-15 * target) {
    throw PreconditionError("total iterations T = " + std::to_string(total_iterations) +
                            " too small for the corollary step-size; need T > " +
                            std::to_string(min_t));
  }
  double hi = std::max(total_iterations, lo);
  double eta = lo;
  if (h(lo) < 0.0) {
    for (int it = 0; it < 400 && (hi - lo) > 1e-12 * lo; ++it) {
      const double mid = 0.5 * (lo + hi);
      (h(mid) > 0.0 ? hi : lo) = mid;
    }
    eta = 0.5 * (lo + hi);
  }
  if (!(eta > kappa * static_cast<double>(tau))) {
    throw PreconditionError("solved eta = " + std::to_string(eta) + " does not exceed kappa*tau = " +
                            std::to_string(kappa * static_cast<double>(tau)) +
                            "; need T > " + std::to_string(min_t));
  }
  return EtaSolution{eta, 1.0 / (mu * eta * (1.0 + 2.0 * q)), min_t};
}

// gamma_k as a function of the round index; constant within a round.
class StepSizeSchedule {
 public:
  static StepSizeSchedule constant(double gamma, std::size_t tau = 1) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw PreconditionError("step-size gamma must be positive and finite");
    }
    StepSizeSchedule s(ScheduleKind::constant, tau);
    s.gamma_ = gamma;
    return s;
  }

  static StepSizeSchedule theoretical(const ProblemParameters& p, std::size_t tau) {
    StepSizeSchedule s(ScheduleKind::theoretical, tau);
    s.params_ = p;
    s.gamma_ = theoretical_gamma(p, tau);
    return s;
  }

  static StepSizeSchedule theoretical_robot(const ProblemParameters& p, std::size_t tau) {
    StepSizeSchedule s(ScheduleKind::theoretical_robot, tau);
    s.params_ = p;
    s.gamma_ = theoretical_robot_gamma(p, tau);
    return s;
  }

  static StepSizeSchedule corollary(const ProblemParameters& p, std::size_t tau,
                                    double total_iterations) {
    StepSizeSchedule s(ScheduleKind::corollary, tau);
    s.params_ = p;
    const auto sol = corollary_eta_solve(total_iterations, p.q, p.kappa, tau, p.mu);
    s.gamma_ = sol.gamma;
    s.eta_ = sol.eta;
    s.total_iterations_ = total_iterations;
    return s;
  }

  static StepSizeSchedule decreasing(const ProblemParameters& p, std::size_t tau) {
    StepSizeSchedule s(ScheduleKind::decreasing, tau);
    s.params_ = p;
    s.threshold_ = 2.0 * (1.0 + 2.0 * p.q) * p.kappa;
    s.gamma_ = 1.0 / (p.ell * static_cast<double>(tau) * (1.0 + 2.0 * p.q));
    return s;
  }

  ScheduleKind kind() const { return kind_; }
  std::size_t tau() const { return tau_; }

  double gamma_at_round(std::size_t p) const {
    if (kind_ != ScheduleKind::decreasing) return gamma_;
    const double pr = static_cast<double>(p);
    if (pr < threshold_) return gamma_;
    return (2.0 * pr + 1.0) / (static_cast<double>(tau_) * params_->mu * (pr + 1.0) * (pr + 1.0));
  }

  double gamma_at_iteration(std::size_t k) const { return gamma_at_round(k / tau_); }

  // The step-size of constant kinds (and the warm-up value of the decreasing rule).
  double initial_gamma() const { return gamma_; }
  bool is_constant() const { return kind_ != ScheduleKind::decreasing; }

  // First round that uses the decreasing branch.
  std::size_t switch_round() const {
    return kind_ == ScheduleKind::decreasing ? static_cast<std::size_t>(std::ceil(threshold_)) : 0;
  }

  std::optional<double> eta() const { return eta_; }

  json to_json() const {
    json j{{"kind", to_string(kind_)}, {"tau", tau_}, {"gamma", gamma_}};
    if (eta_) j["eta"] = *eta_;
    if (total_iterations_) j["total_iterations"] = *total_iterations_;
    if (kind_ == ScheduleKind::decreasing) {
      j["threshold"] = threshold_;
      j["switch_round"] = switch_round();
    }
    return j;
  }

 private:
  StepSizeSchedule(ScheduleKind k, std::size_t tau) : kind_(k), tau_(tau) {
    if (tau == 0) throw PreconditionError("synchronization interval tau must be >= 1");
  }

  ScheduleKind kind_;
  std::size_t tau_;
  double gamma_ = 0.0;
  double threshold_ = 0.0;
  std::optional<ProblemParameters> params_;
  std::optional<double> eta_;
  std::optional<double> total_iterations_;
};

// Unresolved schedule choice, bound to parameters and tau later.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::theoretical;
  double gamma = 0.0;             // constant
  double total_iterations = 0.0;  // corollary; 0 means tau * rounds

  StepSizeSchedule resolve(const std::optional<ProblemParameters>& params, std::size_t tau,
                           std::size_t rounds) const {
    if (kind == ScheduleKind::constant) return StepSizeSchedule::constant(gamma, tau);
    if (!params) {
      throw PreconditionError("schedule '" + to_string(kind) + "' needs problem parameters");
    }
    switch (kind) {
      case ScheduleKind::theoretical: return StepSizeSchedule::theoretical(*params, tau);
      case ScheduleKind::theoretical_robot:
        return StepSizeSchedule::theoretical_robot(*params, tau);
      case ScheduleKind::corollary:
        return StepSizeSchedule::corollary(
            *params, tau,
            total_iterations > 0.0 ? total_iterations
                                   : static_cast<double>(tau) * static_cast<double>(rounds));
      case ScheduleKind::decreasing: return StepSizeSchedule::decreasing(*params, tau);
      case ScheduleKind::constant: break;
    }
    return StepSizeSchedule::constant(gamma, tau);
  }
};

}  // namespace pearl
