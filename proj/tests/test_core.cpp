#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pearl/core.hpp"
#include "pearl/problems.hpp"

using namespace pearl;

TEST(BlockLayout, OffsetsAndTotal) {
  BlockLayout l({2, 3, 1});
  EXPECT_EQ(l.players(), 3u);
  EXPECT_EQ(l.total(), 6u);
  EXPECT_EQ(l.offset(0), 0u);
  EXPECT_EQ(l.offset(1), 2u);
  EXPECT_EQ(l.offset(2), 5u);
  EXPECT_EQ(l.dim(1), 3u);
  EXPECT_TRUE(l == BlockLayout({2, 3, 1}));
  EXPECT_FALSE(l == BlockLayout::uniform(3, 2));
}

TEST(BlockLayout, RejectsBadInput) {
  EXPECT_THROW(BlockLayout(std::vector<std::size_t>{}), LayoutError);
  EXPECT_THROW(BlockLayout({2, 0}), LayoutError);
  BlockLayout l({1, 1});
  EXPECT_THROW(l.offset(2), LayoutError);
  EXPECT_THROW(l.check_vector(Vector::Zero(3)), LayoutError);
}

TEST(JointAction, BlockComplementReassemble) {
  BlockLayout l({2, 1, 2});
  Vector v(5);
  v << 1, 2, 3, 4, 5;
  JointAction x(l, v);
  EXPECT_EQ(x.block(1)(0), 3.0);
  Vector c = x.complement(1);
  ASSERT_EQ(c.size(), 4);
  EXPECT_EQ(c(0), 1.0);
  EXPECT_EQ(c(2), 4.0);
  Vector b(1);
  b << 9;
  auto y = JointAction::reassemble(l, b, c, 1);
  EXPECT_EQ(y.values(2), 9.0);
  EXPECT_EQ(y.values(4), 5.0);
  auto z = JointAction::reassemble(l, x.block(0), x.complement(0), 0);
  EXPECT_EQ(z.values, v);
  EXPECT_THROW(JointAction(l, Vector::Zero(4)), LayoutError);
}

TEST(RngStream, SameKeySameSequence) {
  RngStream a(7, 1, 2, 3), b(7, 1, 2, 3);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(a(), b());
  EXPECT_EQ(a.consumed(), 100u);
}

TEST(RngStream, EveryCoordinateMatters) {
  std::set<std::uint64_t> first;
  first.insert(RngStream(7, 1, 2, 3)());
  first.insert(RngStream(8, 1, 2, 3)());
  first.insert(RngStream(7, 2, 2, 3)());
  first.insert(RngStream(7, 1, 3, 3)());
  first.insert(RngStream(7, 1, 2, 4)());
  first.insert(RngStream(7, 2, 1, 3)());  // swapped coordinates
  EXPECT_EQ(first.size(), 6u);
}

TEST(RngStream, UniformMomentsAndRange) {
  RngStream r(1, 0, 0, 0);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int k = 0; k < n; ++k) {
    const double u = r.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  // mean 1/2, variance 1/12; 5 standard errors
  EXPECT_NEAR(sum / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sq / n - std::pow(sum / n, 2), 1.0 / 12.0, 2e-3);
}

TEST(RngStream, NormalMoments) {
  RngStream r(3, 0, 0, 0);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int k = 0; k < n; ++k) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(ProblemParameters, DerivedQuantities) {
  auto p = ProblemParameters::make(0.5, 8.0, {1.0, 3.0}, {1.0, 2.0});
  EXPECT_DOUBLE_EQ(p.kappa, 16.0);
  EXPECT_DOUBLE_EQ(p.l_max, 3.0);
  EXPECT_DOUBLE_EQ(p.q, 3.0 / 2.0);  // 3 / sqrt(8 * 0.5)
  EXPECT_DOUBLE_EQ(p.sigma_sq_total, 5.0);
}

TEST(ProblemParameters, Preconditions) {
  EXPECT_THROW(ProblemParameters::make(0.0, 1.0, {1.0}, {0.0}), PreconditionError);
  EXPECT_THROW(ProblemParameters::make(2.0, 1.0, {1.0}, {0.0}), PreconditionError);
  EXPECT_THROW(ProblemParameters::make(1.0, 2.0, {1.0}, {-1.0}), PreconditionError);
}

// L = a/2 u^2 + b u v - c/2 v^2 with a = 2, b = 3, c = 1:
// F(u, v) = (2u + 3v, v - 3u).
TEST(JointGradient, HandComputedScalarGame) {
  auto g = scalar_minimax_game(2.0, 3.0, 1.0);
  Vector x(2);
  x << 1.0, 2.0;
  const Vector f = joint_gradient(*g, x);
  EXPECT_DOUBLE_EQ(f(0), 8.0);
  EXPECT_DOUBLE_EQ(f(1), -1.0);
  JointAction ja(g->layout(), x);
  EXPECT_EQ(joint_gradient(*g, ja).values, f);
}

TEST(StochGrad, DrawIdRecordsStreamUse) {
  auto g = scalar_minimax_game(1.0, 1.0, 1.0, 0.5);
  RngStream rng(11, 0, 4, 2);
  const auto s = g->stoch_grad(0, Vector::Ones(2), rng);
  EXPECT_EQ(s.player, 0u);
  EXPECT_EQ(s.draw_id.key, (StreamKey{11, 0, 4, 2}));
  EXPECT_EQ(s.draw_id.words_before, 0u);
  EXPECT_GT(s.draw_id.words_after, 0u);
}

TEST(StochGrad, JointStochasticGradientIsKeyed) {
  auto g = generate_quadratic_minimax(3, 20, {}, 5);
  const Vector x = Vector::Ones(6);
  EXPECT_EQ(joint_stoch_gradient(*g, x, 1, 2, 3), joint_stoch_gradient(*g, x, 1, 2, 3));
  EXPECT_NE(joint_stoch_gradient(*g, x, 1, 2, 3), joint_stoch_gradient(*g, x, 1, 2, 4));
}
