#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fdsdf/tape.hpp"

namespace fdsdf::ad {
namespace {

double central_difference(Tape& tape, const ScalarNode& root, NodeId leaf, double h = 1e-6) {
  const double x = tape.value(leaf);
  tape.set_value(leaf, x + h);
  tape.replay();
  const double fp = root.value();
  tape.set_value(leaf, x - h);
  tape.replay();
  const double fm = root.value();
  tape.set_value(leaf, x);
  tape.replay();
  return (fp - fm) / (2.0 * h);
}

TEST(Tape, RecordComputesPrimitiveValues) {
  Tape t;
  auto a = t.variable(2.0), b = t.variable(3.0);
  EXPECT_EQ(t.record(Op::Mul, {a.id(), b.id()}).value(), 6.0);
  auto z = t.variable(0.0);
  auto s = t.record(Op::Sin, {z.id()});
  EXPECT_EQ(s.value(), 0.0);
  EXPECT_EQ(t.backward(s).wrt(z), 1.0);
  auto p = t.variable(1.5), m = t.variable(-1.5);
  EXPECT_EQ(t.record(Op::Add, {p.id(), m.id()}).value(), 0.0);
}

TEST(Tape, RecordRejectsBadParents) {
  Tape t;
  auto a = t.variable(1.0);
  EXPECT_THROW(t.record(Op::Mul, {a.id(), 7}), ContractViolation);
  EXPECT_THROW(t.record(Op::Mul, {a.id()}), ContractViolation);
  EXPECT_THROW(t.record(Op::Affine, {a.id()}), ContractViolation);
}

TEST(Tape, MixedTapesAreRejected) {
  Tape t1, t2;
  auto a = t1.variable(1.0), b = t2.variable(2.0);
  EXPECT_THROW(a + b, ContractViolation);
  EXPECT_THROW(t1.backward(b), ContractViolation);
  EXPECT_THROW(ScalarNode() * 2.0, ContractViolation);
}

TEST(Tape, ProductRule) {
  Tape t;
  auto x = t.variable(2.0), y = t.variable(3.0);
  auto g = backward(t, x * y);
  EXPECT_EQ(g.wrt(x), 3.0);
  EXPECT_EQ(g.wrt(y), 2.0);
}

TEST(Tape, SumOfSquaresMatchesFiniteDifferenceOnTape) {
  Tape t;
  auto x = t.variable(1.0), y = t.variable(2.0);
  auto f = x * x + y * y;
  auto g = t.backward(f);
  EXPECT_DOUBLE_EQ(g.wrt(x), 2.0);
  EXPECT_DOUBLE_EQ(g.wrt(y), 4.0);
  EXPECT_NEAR(central_difference(t, f, x.id()), 2.0, 2.0 * 1e-6);
  EXPECT_NEAR(central_difference(t, f, y.id()), 4.0, 4.0 * 1e-6);
}

TEST(Tape, BackwardDoesNotTouchValues) {
  Tape t;
  auto x = t.variable(0.3), y = t.variable(-1.2);
  auto f = sin(x * y, 3.0) + exp(x) / (y * y + 1.0);
  std::vector<double> before(t.values().begin(), t.values().end());
  t.backward(f);
  t.replay();
  std::vector<double> after(t.values().begin(), t.values().end());
  EXPECT_EQ(before, after);
}

TEST(Tape, AffineMatchesExpandedExpression) {
  Tape t;
  const double w[3] = {0.5, -1.0, 2.0};
  const double x[3] = {1.0, 2.0, -0.5};
  NodeId wb = t.variables(w);
  NodeId xb = t.variables(x);
  auto bias = t.variable(0.25);
  auto z = t.affine(wb, xb, 3, bias.id());
  EXPECT_DOUBLE_EQ(z.value(), 0.5 - 2.0 - 1.0 + 0.25);
  auto g = t.backward(z);
  for (int j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(g[wb + j], x[j]);
    EXPECT_DOUBLE_EQ(g[xb + j], w[j]);
  }
  EXPECT_DOUBLE_EQ(g.wrt(bias), 1.0);
}

TEST(Tape, SqrtAtZeroHasZeroSubgradient) {
  Tape t;
  auto x = t.variable(0.0);
  auto g = t.backward(sqrt(x * x));
  EXPECT_EQ(g.wrt(x), 0.0);
}

// Random expression trees over all unary/binary primitives; reverse-mode
// gradients must agree with central differences replayed on the same tape.
class RandomExpression {
 public:
  explicit RandomExpression(std::uint64_t seed) : rng_(seed) {}

  ScalarNode build(Tape& t, std::vector<ScalarNode>& leaves, int depth) {
    std::uniform_int_distribution<int> pick(0, 12);
    if (depth == 0 || pick(rng_) < 2) return leaves[std::uniform_int_distribution<std::size_t>(0, leaves.size() - 1)(rng_)];
    auto a = build(t, leaves, depth - 1);
    switch (pick(rng_)) {
      case 0: return a + build(t, leaves, depth - 1);
      case 1: return a - build(t, leaves, depth - 1);
      case 2: return a * build(t, leaves, depth - 1);
      case 3: return a / (square(build(t, leaves, depth - 1)) + 1.0);
      case 4: return sin(a, 1.7);
      case 5: return cos(a, 0.9);
      case 6: return exp(a * 0.3);
      case 7: return sqrt(square(a) + 0.5);
      case 8: return scaled_mul(a, build(t, leaves, depth - 1), 0.7);
      case 9: return -a + 0.25;
      case 10: return 2.0 - a * 1.5;
      case 11: return abs(a + 0.123);
      default: return square(a);
    }
  }

  std::mt19937_64 rng_;
};

TEST(TapeProperty, ReverseModeMatchesFiniteDifferences) {
  RandomExpression gen(42);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Tape t;
    std::vector<ScalarNode> leaves;
    for (int i = 0; i < 4; ++i) leaves.push_back(t.variable(uni(gen.rng_)));
    auto root = gen.build(t, leaves, 5);
    auto g = t.backward(root);
    for (const auto& leaf : leaves) {
      const double fd = central_difference(t, root, leaf.id(), 1e-6);
      const double ad = g.wrt(leaf);
      const double scale = std::max({std::abs(ad), std::abs(fd), 1e-3});
      EXPECT_LT(std::abs(ad - fd) / scale, 1e-6) << "trial " << trial;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 400);
}

TEST(TapeProperty, BackwardIsLinearInTheRoot) {
  RandomExpression gen(7);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    std::vector<ScalarNode> leaves;
    for (int i = 0; i < 3; ++i) leaves.push_back(t.variable(uni(gen.rng_)));
    auto l1 = gen.build(t, leaves, 4);
    auto l2 = gen.build(t, leaves, 4);
    const double a = 0.7, b = -1.3;
    auto combo = a * l1 + b * l2;
    auto g1 = t.backward(l1), g2 = t.backward(l2), gc = t.backward(combo);
    for (const auto& leaf : leaves)
      EXPECT_NEAR(gc.wrt(leaf), a * g1.wrt(leaf) + b * g2.wrt(leaf), 1e-12 * (1.0 + std::abs(gc.wrt(leaf))));
  }
}

TEST(TapeProperty, TangentChainRule) {
  // g(f(x)) with f = x^2 + sin(x), g = exp(0.5 f); tangent nodes built
  // forward must equal the directly differentiated composite.
  Tape t;
  auto x = t.variable(0.4);
  auto one = t.constant(1.0);
  auto f = square(x) + sin(x);
  auto df = 2.0 * x * one + cos(x) * one;
  auto g = exp(0.5 * f);
  auto dg = 0.5 * g * df;
  auto direct = t.backward(g).wrt(x);
  EXPECT_NEAR(dg.value(), direct, 1e-14);
}

TEST(Tape, CensusCountsPrimitives) {
  Tape t;
  auto x = t.variable(1.0);
  auto y = sin(x) * x + 1.0;
  (void)y;
  auto c = t.census();
  EXPECT_EQ(c[static_cast<std::size_t>(Op::Leaf)], 1u);
  EXPECT_EQ(c[static_cast<std::size_t>(Op::Sin)], 1u);
  EXPECT_EQ(c[static_cast<std::size_t>(Op::Mul)], 1u);
  EXPECT_EQ(c[static_cast<std::size_t>(Op::Shift)], 1u);
}

}  // namespace
}  // namespace fdsdf::ad
