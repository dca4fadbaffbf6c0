#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "pearl/linalg.hpp"
#include "pearl/problems.hpp"

using namespace pearl;

namespace {

// Independent equilibrium oracle: plain gradient play x <- x - eta F(x) with
// eta = mu / L^2, which contracts for a strongly monotone affine F.
Vector gradient_play_equilibrium(const GameProblem& g, std::size_t steps) {
  const auto op = g.affine_operator();
  const Matrix& m = op->jacobian;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  const double mu = es.eigenvalues().minCoeff();
  const double lip = Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
  const double eta = mu / (lip * lip);
  Vector x = Vector::Zero(m.rows());
  for (std::size_t k = 0; k < steps; ++k) x -= eta * joint_gradient(g, x);
  return x;
}

double central_difference(const GameProblem& g, std::size_t i, Vector x, Eigen::Index k) {
  const double h = 1e-5;
  x(k) += h;
  const double fp = g.objective(i, x);
  x(k) -= 2 * h;
  const double fm = g.objective(i, x);
  return (fp - fm) / (2 * h);
}

}  // namespace

TEST(QuadraticMinimax, GeneratorIsSeedDeterministic) {
  auto a = generate_quadratic_minimax(4, 10, {}, 3);
  auto b = generate_quadratic_minimax(4, 10, {}, 3);
  auto c = generate_quadratic_minimax(4, 10, {}, 4);
  EXPECT_EQ(problem_hash(*a), problem_hash(*b));
  EXPECT_NE(problem_hash(*a), problem_hash(*c));
}

TEST(QuadraticMinimax, SampleSpectraWithinBounds) {
  SpectrumBounds bounds{0.5, 3.0, 1.5, 2.5, 6.0};
  auto g = generate_quadratic_minimax(5, 12, bounds, 9);
  for (const auto& s : g->samples()) {
    const Eigen::SelfAdjointEigenSolver<Matrix> ea(s.a_mat), eb(s.b_mat), ec(s.c_mat);
    EXPECT_GE(ea.eigenvalues().minCoeff(), 0.5 - 1e-10);
    EXPECT_LE(ea.eigenvalues().maxCoeff(), 3.0 + 1e-10);
    EXPECT_GE(eb.eigenvalues().minCoeff(), -1e-10);
    EXPECT_LE(eb.eigenvalues().maxCoeff(), 6.0 + 1e-10);
    EXPECT_GE(ec.eigenvalues().minCoeff(), 1.5 - 1e-10);
    EXPECT_LE(ec.eigenvalues().maxCoeff(), 2.5 + 1e-10);
    EXPECT_LT((s.b_mat - s.b_mat.transpose()).norm(), 1e-12);
    EXPECT_GE(s.a_vec.minCoeff(), 0.0);
    EXPECT_LT(s.a_vec.maxCoeff(), 1.0);
    EXPECT_GE(s.c_vec.minCoeff(), 0.0);
    EXPECT_LT(s.c_vec.maxCoeff(), 1.0);
  }
}

TEST(QuadraticMinimax, EquilibriumMatchesGradientPlayOracle) {
  auto g = generate_quadratic_minimax(10, 100, {}, 7);
  const Vector eq = *g->equilibrium();
  EXPECT_LE(joint_gradient(*g, eq).norm(), 1e-10);
  const Vector oracle = gradient_play_equilibrium(*g, 20000);
  EXPECT_LE((eq - oracle).norm(), 1e-8 * std::max(1.0, eq.norm()));
}

TEST(QuadraticMinimax, ObjectivesAreZeroSumAndGradientsMatchDifferences) {
  auto g = generate_quadratic_minimax(3, 8, {}, 1);
  Vector x(6);
  x << 0.3, -1.2, 0.7, 2.0, -0.4, 1.1;
  EXPECT_DOUBLE_EQ(g->objective(0, x), -g->objective(1, x));
  for (std::size_t i = 0; i < 2; ++i) {
    const Vector gi = g->grad(i, x);
    for (Eigen::Index k = 0; k < 3; ++k) {
      EXPECT_NEAR(gi(k), central_difference(*g, i, x, static_cast<Eigen::Index>(3 * i) + k), 1e-6);
    }
  }
}

TEST(QuadraticMinimax, FiniteSumOracleAveragesToGradientExactly) {
  // Mean of the per-sample gradients equals the full gradient.
  auto g = generate_quadratic_minimax(4, 6, {}, 2);
  const Vector x = Vector::LinSpaced(8, -1.0, 2.0);
  const auto d = static_cast<Eigen::Index>(4);
  Vector mean_u = Vector::Zero(d), mean_v = Vector::Zero(d);
  for (const auto& s : g->samples()) {
    mean_u += s.a_mat * x.head(d) + s.b_mat * x.tail(d) + s.a_vec;
    mean_v += s.c_mat * x.tail(d) - s.b_mat.transpose() * x.head(d) + s.c_vec;
  }
  mean_u /= 6.0;
  mean_v /= 6.0;
  EXPECT_LT((mean_u - g->grad(0, x)).norm(), 1e-12);
  EXPECT_LT((mean_v - g->grad(1, x)).norm(), 1e-12);
}

TEST(QuadraticMinimax, StochasticOracleIsUnbiased) {
  auto g = generate_quadratic_minimax(3, 10, {}, 4);
  const Vector x = Vector::Ones(6);
  const int n = 40000;
  for (std::size_t i = 0; i < 2; ++i) {
    Vector sum = Vector::Zero(3), sq = Vector::Zero(3);
    for (int k = 0; k < n; ++k) {
      RngStream rng(5, i, static_cast<std::uint64_t>(k), 0);
      const Vector s = g->stoch_grad(i, x, rng).value;
      sum += s;
      sq += s.cwiseProduct(s);
    }
    const Vector mean = sum / n;
    const Vector var = sq / n - mean.cwiseProduct(mean);
    const Vector exact = g->grad(i, x);
    for (Eigen::Index k = 0; k < 3; ++k) {
      EXPECT_NEAR(mean(k), exact(k), 5.0 * std::sqrt(var(k) / n) + 1e-12);
    }
  }
}

TEST(QuadraticMinimax, GaussianNoiseVariance) {
  auto g = generate_quadratic_minimax(4, 5, {}, 4, OracleNoise::gaussian(0.5));
  ASSERT_TRUE(g->exact_sigma());
  EXPECT_DOUBLE_EQ((*g->exact_sigma())[0], 0.5 * 2.0);
  const Vector x = Vector::Ones(8);
  const Vector exact = g->grad(1, x);
  const int n = 40000;
  double sq = 0;
  for (int k = 0; k < n; ++k) {
    RngStream rng(1, 1, static_cast<std::uint64_t>(k), 0);
    sq += (g->stoch_grad(1, x, rng).value - exact).squaredNorm();
  }
  EXPECT_NEAR(sq / n, 1.0, 0.03);
}

TEST(QuadraticMinimax, BatchReducesVariance) {
  auto g1 = generate_quadratic_minimax(3, 30, {}, 8, OracleNoise::finite_sum(1));
  auto g8 = generate_quadratic_minimax(3, 30, {}, 8, OracleNoise::finite_sum(8));
  const Vector x = Vector::Ones(6);
  auto var = [&](const GameProblem& g) {
    double sq = 0;
    const Vector exact = g.grad(0, x);
    for (int k = 0; k < 20000; ++k) {
      RngStream rng(2, 0, static_cast<std::uint64_t>(k), 0);
      sq += (g.stoch_grad(0, x, rng).value - exact).squaredNorm();
    }
    return sq / 20000;
  };
  EXPECT_NEAR(var(*g8) / var(*g1), 1.0 / 8.0, 0.02);
}

TEST(QuadraticMinimax, SerializationRoundTrip) {
  auto g = generate_quadratic_minimax(3, 4, {0.5, 2.0, 1.0, 3.0, 5.0}, 12, OracleNoise::finite_sum(2));
  const json j = g->to_json();
  EXPECT_EQ(j.at("metadata").at("seed"), 12);
  EXPECT_EQ(j.at("metadata").at("bounds").at("l_b"), 5.0);
  auto back = problem_from_json(json::parse(j.dump()));
  EXPECT_EQ(back->to_json().dump(), j.dump());
  EXPECT_EQ(problem_hash(*back), problem_hash(*g));
  const Vector x = Vector::LinSpaced(6, 0.1, 0.9);
  EXPECT_EQ(back->grad(0, x), g->grad(0, x));
  RngStream r1(1, 0, 0, 0), r2(1, 0, 0, 0);
  EXPECT_EQ(back->stoch_grad(1, x, r1).value, g->stoch_grad(1, x, r2).value);
}

TEST(QuadraticMinimax, MatrixSerializationIsRowMajor) {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const json j = matrix_to_json(m);
  EXPECT_EQ(j.at("data"), json({1.0, 2.0, 3.0, 4.0, 5.0, 6.0}));
  EXPECT_EQ(matrix_from_json(j), m);
}

TEST(NPlayer, CouplingIsExactlySkew) {
  auto g = generate_nplayer_quadratic(4, 3, 5, {}, 2);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i == j) continue;
      for (std::size_t m = 0; m < 5; ++m) {
        EXPECT_EQ(g->coupling(j, i)[m], Matrix(-g->coupling(i, j)[m].transpose()));
      }
    }
  }
  // The off-diagonal part of the Jacobian has a vanishing quadratic form.
  Matrix jac = g->affine_operator()->jacobian;
  for (std::size_t i = 0; i < 4; ++i) jac.block(3 * i, 3 * i, 3, 3).setZero();
  EXPECT_LT((jac + jac.transpose()).norm(), 1e-12);
}

TEST(NPlayer, EquilibriumAndGradients) {
  auto g = generate_nplayer_quadratic(3, 2, 4, {}, 6);
  const Vector eq = *g->equilibrium();
  EXPECT_LE(joint_gradient(*g, eq).norm(), 1e-10);
  EXPECT_LE((eq - gradient_play_equilibrium(*g, 20000)).norm(), 1e-8);
  Vector x = Vector::LinSpaced(6, -1, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    for (Eigen::Index k = 0; k < 2; ++k) {
      EXPECT_NEAR(g->grad(i, x)(k), central_difference(*g, i, x, static_cast<Eigen::Index>(2 * i) + k),
                  1e-6);
    }
  }
}

TEST(NPlayer, SerializationRoundTrip) {
  auto g = generate_nplayer_quadratic(3, 2, 3, {}, 1);
  auto back = problem_from_json(json::parse(g->to_json().dump()));
  EXPECT_EQ(back->to_json().dump(), g->to_json().dump());
}

TEST(Robot, PresetConstants) {
  RobotControlGame g;
  // 1-based (1,2) -> 5, (2,1) -> -5, (5,3) -> 4
  EXPECT_EQ(g.h(0, 1), 5.0);
  EXPECT_EQ(g.h(1, 0), -5.0);
  EXPECT_EQ(g.h(4, 2), 4.0);
  EXPECT_DOUBLE_EQ(g.a(2), 10.5);
  EXPECT_DOUBLE_EQ(g.b(2), 0.5);
  EXPECT_EQ(g.anchor(3), -9.0);
  EXPECT_EQ(g.noise_variance(), 100.0);
  EXPECT_EQ(g.layout().total(), 5u);
}

TEST(Robot, GradientMatchesScalarEvaluation) {
  RobotControlGame g;
  Vector x(5);
  x << 0.5, -2.0, 3.0, 1.5, -0.25;
  for (std::size_t i = 0; i < 5; ++i) {
    // direct scalar formula
    const double xi = x(static_cast<Eigen::Index>(i));
    double expect = g.a(i) * (xi - g.anchor(i));
    for (std::size_t j = 0; j < 5; ++j) expect += g.b(i) * (xi - x(static_cast<Eigen::Index>(j)) - g.h(i, j));
    EXPECT_NEAR(g.grad(i, x)(0), expect, 1e-12);
    EXPECT_NEAR(g.grad(i, x)(0), central_difference(g, i, x, static_cast<Eigen::Index>(i)), 1e-6);
  }
}

TEST(Robot, JacobianAndEquilibrium) {
  RobotControlGame g;
  const auto op = *g.affine_operator();
  for (std::size_t i = 0; i < 5; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    EXPECT_DOUBLE_EQ(op.jacobian(ii, ii), g.a(i) + 4.0 * g.b(i));
    for (std::size_t j = 0; j < 5; ++j) {
      if (j != i) EXPECT_DOUBLE_EQ(op.jacobian(ii, static_cast<Eigen::Index>(j)), -g.b(i));
    }
  }
  const Vector eq = *g.equilibrium();
  EXPECT_LE(joint_gradient(g, eq).norm(), 1e-10);
  EXPECT_LE((eq - gradient_play_equilibrium(g, 20000)).norm(), 1e-9);
}

TEST(Sine, OperatorAndJacobian) {
  SineNonCocoerciveGame g(1.0, 4.0);
  Vector x(2);
  x << 0.7, -1.3;
  EXPECT_DOUBLE_EQ(g.grad(0, x)(0), 0.7 * (1.0 + 3.0 * std::pow(std::sin(-1.3), 2)));
  EXPECT_DOUBLE_EQ(g.grad(1, x)(0), -1.3 * (1.0 + 3.0 * std::pow(std::sin(0.7), 2)));
  const Matrix j = g.jacobian(0.7, -1.3);
  const double h = 1e-6;
  for (int c = 0; c < 2; ++c) {
    Vector xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    const Vector col = (joint_gradient(g, xp) - joint_gradient(g, xm)) / (2 * h);
    EXPECT_NEAR(j(0, c), col(0), 1e-6);
    EXPECT_NEAR(j(1, c), col(1), 1e-6);
  }
}

TEST(Sine, WitnessPoint) {
  SineNonCocoerciveGame g(1.0, 4.0);
  const double pi = std::numbers::pi;
  // At (2N + 1/2) pi the off-diagonal of DF + DF^T vanishes: det = 4 ell^2.
  EXPECT_NEAR(sine_symmetric_det(g, 20.5 * pi), 64.0, 1e-9);
  // At (2N + 1/4) pi: det = 4 phi^2 - 4 (ell - mu)^2 t^2 with phi = (mu + ell) / 2.
  const double t = 20.25 * pi;
  EXPECT_DOUBLE_EQ(sine_witness_point(10), t);
  const double closed = 4.0 * 2.5 * 2.5 - 4.0 * 9.0 * t * t;
  EXPECT_NEAR(sine_monotonicity_witness(g, 10), closed, 1e-9 * std::abs(closed));
  EXPECT_LT(sine_monotonicity_witness(g, 10), 0.0);
}

TEST(Sine, RejectsBadParameters) {
  EXPECT_THROW(SineNonCocoerciveGame(0.0, 1.0), PreconditionError);
  EXPECT_THROW(SineNonCocoerciveGame(2.0, 1.0), PreconditionError);
}

TEST(ScalarGame, OperatorAndSerialization) {
  auto g = scalar_minimax_game(0.5, 1.0, 0.5, 2.0);
  const auto op = *g->affine_operator();
  EXPECT_EQ(op.jacobian(0, 0), 0.5);
  EXPECT_EQ(op.jacobian(0, 1), 1.0);
  EXPECT_EQ(op.jacobian(1, 0), -1.0);
  EXPECT_EQ(op.jacobian(1, 1), 0.5);
  EXPECT_EQ((*g->exact_sigma())[1], 2.0);
  EXPECT_EQ(g->equilibrium()->norm(), 0.0);
  auto back = problem_from_json(g->to_json());
  EXPECT_EQ(problem_hash(*back), problem_hash(*g));
}

TEST(ProblemJson, RejectsForeignDocuments) {
  EXPECT_THROW(problem_from_json(json{{"format", "other"}}), std::invalid_argument);
  EXPECT_THROW(problem_from_json(json{{"format", "pearl-problem"}, {"kind", "nope"}}),
               std::invalid_argument);
}
