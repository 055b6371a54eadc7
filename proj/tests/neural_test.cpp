#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "loopcert/errors.hpp"
#include "loopcert/neural.hpp"
#include "test_support.hpp"

using namespace loopcert;
using loopcert::testing::mat;
using loopcert::testing::vec;

namespace {

// Straight-line re-implementation with explicit loops.
Vector reference_forward(const ReluNetwork& net, const Vector& y) {
  std::vector<double> a(y.data(), y.data() + y.size());
  for (const auto& layer : net.layers()) {
    std::vector<double> next(static_cast<std::size_t>(layer.weights.rows()));
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      double s = layer.bias(i);
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) s += layer.weights(i, j) * a[j];
      next[i] = layer.activation == Activation::kRelu ? std::max(0.0, s) : s;
    }
    a = std::move(next);
  }
  Vector out(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) out(i) = a[i];
  return out;
}

Vector sample_in(std::mt19937_64& rng, const Box& box) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vector y(box.dim());
  for (int i = 0; i < box.dim(); ++i) y(i) = box.center(i) + box.radius(i) * unit(rng);
  return y;
}

Box random_box(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> c(-0.5, 0.5), r(0.05, 1.0);
  Vector center(dim), radius(dim);
  for (int i = 0; i < dim; ++i) {
    center(i) = c(rng);
    radius(i) = r(rng);
  }
  return Box(center, radius);
}

// Pre-activations of every layer at y.
std::vector<Vector> pre_activations(const ReluNetwork& net, const Vector& y) {
  std::vector<Vector> out;
  Vector a = y;
  for (const auto& layer : net.layers()) {
    Vector z = layer.weights * a + layer.bias;
    out.push_back(z);
    a = layer.activation == Activation::kRelu ? Vector(z.cwiseMax(0.0)) : z;
  }
  return out;
}

constexpr double kSlack = 1e-9;

}  // namespace

TEST(Evaluate, LinearLayer) {
  const auto net = ReluNetwork::linear(mat({{2.0}}), vec({1.0}));
  EXPECT_EQ(evaluate(net, vec({3.0})), vec({7.0}));
}

TEST(Evaluate, SingleReluNeuron) {
  EXPECT_EQ(evaluate(loopcert::testing::single_relu(), vec({-1.0})), vec({0.0}));
  EXPECT_EQ(evaluate(loopcert::testing::single_relu(), vec({2.5})), vec({2.5}));
}

TEST(Evaluate, MatchesStraightLineImplementation) {
  std::mt19937_64 rng(3);
  const auto net = loopcert::testing::random_network(rng, 3, 2, 1, 8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const Vector y = vec({g(rng), g(rng), g(rng)});
    EXPECT_LT((evaluate(net, y) - reference_forward(net, y)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Network, RejectsBadShapes) {
  EXPECT_THROW(ReluNetwork({Layer{mat({{1.0, 2.0}}), vec({0.0}), Activation::kRelu},
                            Layer{mat({{1.0, 1.0}}), vec({0.0}), Activation::kLinear}}),
               DimensionMismatch);
  EXPECT_THROW(ReluNetwork({Layer{mat({{1.0}}), vec({0.0}), Activation::kRelu}}), Error);
  EXPECT_THROW(evaluate(loopcert::testing::single_relu(), vec({1.0, 2.0})), DimensionMismatch);
}

TEST(IntervalBounds, LinearLayer) {
  const auto net = ReluNetwork::linear(mat({{1.0, -1.0}}), vec({0.0}));
  const auto ib = interval_bounds(net, Box::symmetric(vec({1.0, 1.0})));
  EXPECT_EQ(ib.output.lower, vec({-2.0}));
  EXPECT_EQ(ib.output.upper, vec({2.0}));
}

TEST(IntervalBounds, ZeroRadiusCollapses) {
  std::mt19937_64 rng(5);
  const auto net = loopcert::testing::random_network(rng, 3, 2, 2, 6);
  const Vector c = vec({0.3, -0.2, 0.7});
  const auto ib = interval_bounds(net, Box(c, Vector::Zero(3)));
  const Vector u = evaluate(net, c);
  EXPECT_LT((ib.output.lower - u).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((ib.output.upper - u).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(IntervalBounds, SampledPreActivationsInside) {
  std::mt19937_64 rng(11);
  const auto net = loopcert::testing::random_network(rng, 3, 2, 3, 10);
  const Box box = random_box(rng, 3);
  const auto ib = interval_bounds(net, box);
  for (int k = 0; k < 10000; ++k) {
    const auto pre = pre_activations(net, sample_in(rng, box));
    for (std::size_t l = 0; l < pre.size(); ++l) {
      ASSERT_TRUE((pre[l].array() >= ib.pre_activations[l].lower.array() - kSlack).all());
      ASSERT_TRUE((pre[l].array() <= ib.pre_activations[l].upper.array() + kSlack).all());
    }
  }
}

TEST(LinearRelaxation, SingleReluOnSymmetricBox) {
  const auto net = loopcert::testing::single_relu();
  const Box box = Box::symmetric(vec({1.0}));
  const LinearBounds lb = linear_relaxation(net, box);
  EXPECT_DOUBLE_EQ(lb.K_upper(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(lb.b_upper(0), 0.5);
  EXPECT_DOUBLE_EQ(lb.K_lower(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(lb.b_lower(0), 0.0);
  for (int k = 0; k <= 1000; ++k) {
    const double y = -1.0 + 2.0 * k / 1000.0;
    const double u = std::max(0.0, y);
    EXPECT_LE(lb.K_lower(0, 0) * y + lb.b_lower(0), u + 1e-15);
    EXPECT_GE(lb.K_upper(0, 0) * y + lb.b_upper(0), u - 1e-15);
  }
}

TEST(LinearRelaxation, PureLinearNetIsExact) {
  const Matrix W1 = mat({{1.0, 2.0}, {-1.0, 0.5}}), W2 = mat({{0.3, -0.7}});
  const Vector b1 = vec({0.1, -0.2}), b2 = vec({0.4});
  const ReluNetwork net({Layer{W1, b1, Activation::kLinear}, Layer{W2, b2, Activation::kLinear}});
  const LinearBounds lb = linear_relaxation(net, Box::symmetric(vec({2.0, 3.0})));
  const Matrix W = W2 * W1;
  const Vector b = W2 * b1 + b2;
  EXPECT_LT((lb.K_lower - W).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((lb.K_upper - W).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((lb.b_lower - b).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((lb.b_upper - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LinearRelaxation, AllDeadNetIsConstant) {
  const ReluNetwork net({Layer{mat({{1.0}, {-1.0}}), vec({-5.0, -5.0}), Activation::kRelu},
                         Layer{mat({{2.0, 3.0}}), vec({0.25}), Activation::kLinear}});
  const LinearBounds lb = linear_relaxation(net, Box::symmetric(vec({1.0})));
  EXPECT_EQ(lb.K_lower, mat({{0.0}}));
  EXPECT_EQ(lb.K_upper, mat({{0.0}}));
  EXPECT_EQ(lb.b_lower, vec({0.25}));
  EXPECT_EQ(lb.b_upper, vec({0.25}));
}

TEST(Concretize, SingleRelu) {
  const Box box = Box::symmetric(vec({1.0}));
  const OutputRange r = concretize(linear_relaxation(loopcert::testing::single_relu(), box), box);
  EXPECT_DOUBLE_EQ(r.upper(0), 1.0);
  EXPECT_DOUBLE_EQ(r.lower(0), -1.0);
  EXPECT_DOUBLE_EQ(r.magnitude()(0), 1.0);
}

TEST(Concretize, ZeroRadiusEqualsEvaluation) {
  std::mt19937_64 rng(19);
  const auto net = loopcert::testing::random_network(rng, 2, 2, 2, 5);
  const Box box(vec({0.4, -0.3}), Vector::Zero(2));
  const OutputRange r = concretize(linear_relaxation(net, box), box);
  const Vector u = evaluate(net, box.center);
  EXPECT_LT((r.lower - u).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((r.upper - u).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Concretize, LinearNet) {
  const auto net = ReluNetwork::linear(mat({{2.0}}), vec({0.0}));
  const Box box = Box::symmetric(vec({0.5}));
  EXPECT_DOUBLE_EQ(concretize(linear_relaxation(net, box), box).magnitude()(0), 1.0);
}

TEST(OutputRange, IntersectsWithIntervals) {
  const Box box = Box::symmetric(vec({1.0}));
  const OutputRange r = output_range(loopcert::testing::single_relu(), box);
  EXPECT_DOUBLE_EQ(r.lower(0), 0.0);
  EXPECT_DOUBLE_EQ(r.upper(0), 1.0);
}

TEST(ResidualBounds, LinearPolicyHasZeroResidual) {
  const Matrix K = mat({{0.5, -1.5}, {2.0, 0.25}});
  const auto net = ReluNetwork::linear(K, Vector::Zero(2));
  const auto rb = residual_bounds(net, Box::symmetric(vec({3.0, 0.7})), K);
  EXPECT_LT(rb.u0_bar.maxCoeff(), 1e-15);
  EXPECT_NEAR(rb.u_bar(0), 0.5 * 3.0 + 1.5 * 0.7, 1e-15);
}

TEST(ResidualBounds, SingleReluWithHalfGain) {
  const Box box = Box::symmetric(vec({1.0}));
  const auto rb = residual_bounds(loopcert::testing::single_relu(), box, mat({{0.5}}));
  double oracle = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double y = -1.0 + 2.0 * k / 1000.0;
    oracle = std::max(oracle, std::abs(std::max(0.0, y) - 0.5 * y));
  }
  EXPECT_DOUBLE_EQ(oracle, 0.5);
  EXPECT_GE(rb.u0_bar(0), oracle);
  EXPECT_DOUBLE_EQ(rb.u0_bar(0), 0.5);
  EXPECT_DOUBLE_EQ(rb.residual.upper(0), 0.5);
  EXPECT_DOUBLE_EQ(rb.residual.lower(0), -0.5);
}

TEST(ResidualBounds, MidpointGainShrinksResidual) {
  const Box box = Box::symmetric(vec({1.0}));
  const auto net = loopcert::testing::single_relu();
  const Matrix K0 = linear_relaxation(net, box).midpoint_gain();
  EXPECT_DOUBLE_EQ(K0(0, 0), 0.75);
  const auto rb = residual_bounds(net, box, K0);
  EXPECT_LT(rb.u0_bar(0), rb.u_bar(0));
}

TEST(ResidualBounds, RejectsGainOfWrongShape) {
  EXPECT_THROW(residual_bounds(loopcert::testing::single_relu(), Box::symmetric(vec({1.0})),
                               mat({{1.0, 2.0}})),
               DimensionMismatch);
}

TEST(Jacobian, LinearNet) {
  const Matrix W = mat({{1.0, -2.0}, {0.5, 3.0}});
  EXPECT_EQ(jacobian_at(ReluNetwork::linear(W, vec({1.0, 1.0})), vec({0.3, 0.1})), W);
}

TEST(Jacobian, SingleReluPattern) {
  const auto net = loopcert::testing::single_relu();
  EXPECT_EQ(jacobian_at(net, vec({1.0})), mat({{1.0}}));
  EXPECT_EQ(jacobian_at(net, vec({-1.0})), mat({{0.0}}));
  EXPECT_THROW(jacobian_at(net, vec({0.0})), OnKink);
}

TEST(Jacobian, MatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  const auto net = loopcert::testing::random_network(rng, 3, 2, 2, 8);
  std::normal_distribution<double> g(0.0, 1.0);
  const double h = 1e-6;
  for (int k = 0; k < 20; ++k) {
    const Vector y = vec({g(rng), g(rng), g(rng)});
    const Matrix J = jacobian_at(net, y);
    for (int j = 0; j < 3; ++j) {
      Vector e = Vector::Zero(3);
      e(j) = h;
      const Vector fd = (evaluate(net, y + e) - evaluate(net, y - e)) / (2.0 * h);
      EXPECT_LT((J.col(j) - fd).cwiseAbs().maxCoeff(), 1e-5) << "point " << k;
    }
  }
}

TEST(Quantization, WidensByHalfStep) {
  const Box box = Box::symmetric(vec({1.0}));
  const LinearBounds lb = linear_relaxation(loopcert::testing::single_relu(), box);
  const OutputRange q = quantized_concretize(lb, box, QuantizationSpec{0.1});
  EXPECT_DOUBLE_EQ(q.lower(0), -1.05);
  EXPECT_DOUBLE_EQ(q.upper(0), 1.05);
  const OutputRange tiny = quantized_concretize(lb, box, QuantizationSpec{1e-15});
  const OutputRange plain = concretize(lb, box);
  EXPECT_NEAR(tiny.lower(0), plain.lower(0), 1e-15);
  EXPECT_NEAR(tiny.upper(0), plain.upper(0), 1e-15);
}

TEST(Quantization, RoundsToNearestLevel) {
  const QuantizationSpec q{0.1};
  EXPECT_NEAR(q.apply(0.26), 0.3, 1e-15);
  EXPECT_NEAR(q.apply(-0.04), 0.0, 1e-15);
  EXPECT_NEAR(q.apply(-0.16), -0.2, 1e-15);
}

TEST(Quantization, SampledOutputsInsideWidenedBounds) {
  std::mt19937_64 rng(29);
  const auto net = loopcert::testing::random_network(rng, 2, 1, 2, 8);
  const Policy policy{net, QuantizationSpec{0.1}};
  const Box box = random_box(rng, 2);
  const auto rb = residual_bounds(net, box, Matrix::Zero(1, 2), policy.quantization);
  for (int k = 0; k < 10000; ++k) {
    const Vector u = policy.act(sample_in(rng, box));
    ASSERT_LE(std::abs(u(0)), rb.u_bar(0) + kSlack);
    ASSERT_LE(std::abs(u(0)), rb.u0_bar(0) + kSlack);
  }
}

// 50 random nets (<= 3 layers, <= 16 neurons per layer), random boxes.
class RelaxationCorpus : public ::testing::Test {
 protected:
  struct Case {
    ReluNetwork net;
    Box box;
  };
  static std::vector<Case> corpus() {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> dim(1, 4), depth(1, 2);
    std::vector<Case> cases;
    for (int k = 0; k < 50; ++k) {
      const int in = dim(rng), out = dim(rng);
      auto net = loopcert::testing::random_network(rng, in, out, depth(rng), 16);
      cases.push_back({std::move(net), random_box(rng, in)});
    }
    return cases;
  }
};

TEST_F(RelaxationCorpus, LinearBoundsHoldOnSamples) {
  std::mt19937_64 rng(37);
  for (const auto& c : corpus()) {
    const LinearBounds lb = linear_relaxation(c.net, c.box);
    for (int k = 0; k < 10000; ++k) {
      const Vector y = sample_in(rng, c.box);
      const Vector u = evaluate(c.net, y);
      ASSERT_TRUE(((lb.K_lower * y + lb.b_lower).array() <= u.array() + kSlack).all());
      ASSERT_TRUE(((lb.K_upper * y + lb.b_upper).array() >= u.array() - kSlack).all());
    }
  }
}

TEST_F(RelaxationCorpus, OutputRangeNoLooserThanIntervals) {
  for (const auto& c : corpus()) {
    const OutputRange r = output_range(c.net, c.box);
    const auto ib = interval_bounds(c.net, c.box);
    EXPECT_LE((ib.output.lower - r.lower).maxCoeff(), kSlack);
    EXPECT_LE((r.upper - ib.output.upper).maxCoeff(), kSlack);
  }
}

TEST_F(RelaxationCorpus, ShrinkingBoxNeverLoosensBounds) {
  for (const auto& c : corpus()) {
    Vector previous = output_range(c.net, c.box).magnitude();
    for (double s : {0.75, 0.5, 0.25, 0.1, 0.0}) {
      const Box inner(c.box.center, s * c.box.radius);
      const Vector now = output_range(c.net, inner).magnitude();
      EXPECT_LE((now - previous).maxCoeff(), kSlack) << "scale " << s;
      previous = now;
    }
  }
}
