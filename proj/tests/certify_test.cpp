#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "loopcert/certify.hpp"
#include "loopcert/errors.hpp"
#include "test_support.hpp"

using namespace loopcert;
using loopcert::testing::linear_policy;
using loopcert::testing::mat;
using loopcert::testing::scalar_plant;
using loopcert::testing::vec;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// x+ = a x + u + w + delta, y = x, alpha = x.
StateSpacePlant uncertain_scalar(double a, double w_inf) {
  StateSpacePlant p = scalar_plant(a, 1.0, 1.0, 1.0, 0.0, w_inf);
  p.Bdelta = mat({{1.0}});
  p.Calpha = mat({{1.0}});
  p.Dalpha_u = mat({{0.0}});
  p.Dalpha_w = mat({{0.0}});
  return p;
}

ClosedLoopMaps half_maps(double eps = 1e-14) { return close_loop(scalar_plant(0.5), mat({{0.0}}), eps); }

Quadruplet scalar_quad(double y_bar, double u_bar) {
  return Quadruplet{vec({y_bar}), vec({u_bar}), Vector(), Vector(), Vector()};
}

}  // namespace

TEST(CheckTheorem1, ZeroPerturbationZeroBox) {
  const auto r = check_theorem1(half_maps(), scalar_quad(0.0, 0.0), vec({0.0}));
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.x_bar, vec({0.0}));
}

TEST(CheckTheorem1, ScalarInequalityBoundary) {
  // 0.2 + 0.8 y <= y  iff  y >= 1.
  const auto maps = half_maps();
  const auto ok = check_theorem1(maps, scalar_quad(1.0 + 1e-9, 0.4 * (1.0 + 1e-9)), vec({0.1}));
  EXPECT_TRUE(ok.holds);
  EXPECT_NEAR(ok.x_bar(0), 1.0, 1e-8);
  EXPECT_FALSE(check_theorem1(maps, scalar_quad(0.5, 0.2), vec({0.1})).holds);
  EXPECT_FALSE(check_theorem1(maps, scalar_quad(0.999, 0.4 * 0.999), vec({0.1})).holds);
}

TEST(CheckTheorem1, RejectsMismatchedSizes) {
  EXPECT_THROW(check_theorem1(half_maps(), scalar_quad(1.0, 0.4), vec({0.1, 0.1})), DimensionMismatch);
}

TEST(CheckLemma1, ScalarCertified) {
  const BaselineResult r = check_lemma1(half_maps(), 0.4, 0.0, 0.1, 1.0 + 1e-9);
  EXPECT_NEAR(r.beta1, 0.0, 1e-15);
  EXPECT_NEAR(r.beta2, 0.8, 1e-12);
  EXPECT_NEAR(r.y_inf_implied, 1.0, 1e-10);
  EXPECT_TRUE(r.certified);
}

TEST(CheckLemma1, GainTooLarge) {
  const BaselineResult r = check_lemma1(half_maps(), 0.6, 0.0, 0.1, 100.0);
  EXPECT_NEAR(r.beta2, 1.2, 1e-12);
  EXPECT_FALSE(r.certified);
  EXPECT_EQ(r.y_inf_implied, kInf);
}

TEST(CheckLemma1, LargeUncertaintyFailsRegardlessOfPolicyGain) {
  const auto maps = close_loop(uncertain_scalar(0.5, 0.0), mat({{0.0}}));
  for (double gamma_pi : {0.0, 0.1, 0.4}) {
    const BaselineResult r = check_lemma1(maps, gamma_pi, 10.0, 0.1, 1e9);
    EXPECT_GE(r.beta1, 1.0);
    EXPECT_FALSE(r.certified);
  }
}

TEST(HinfCorollary, ScalarCases) {
  const auto maps = half_maps();
  EXPECT_TRUE(hinf_corollary(maps, 0.4, 0.0));
  EXPECT_FALSE(hinf_corollary(maps, 0.6, 0.0));
  EXPECT_TRUE(hinf_corollary(maps, 0.0, 0.0));
}

TEST(ConstructiveQuadruplet, ScalarWithoutUncertainty) {
  const Quadruplet q = constructive_quadruplet(half_maps(), 0.4, 0.0, 0.1);
  EXPECT_NEAR(q.y_bar(0), 1.0, 1e-9);
  EXPECT_NEAR(q.u_bar(0), 0.4, 1e-9);
  EXPECT_TRUE(check_theorem1(half_maps(), q, vec({0.1})).holds);
}

TEST(ConstructiveQuadruplet, ZeroPerturbation) {
  const Quadruplet q = constructive_quadruplet(half_maps(), 0.4, 0.0, 0.0);
  EXPECT_EQ(q.y_bar, vec({0.0}));
  EXPECT_EQ(q.u_bar, vec({0.0}));
}

TEST(ConstructiveQuadruplet, ThrowsWhenSmallGainFails) {
  EXPECT_THROW(constructive_quadruplet(half_maps(), 0.6, 0.0, 0.1), Error);
}

TEST(ConstructiveQuadruplet, RandomValidGainsPassTheorem1) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int checked = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const StateSpacePlant p = loopcert::testing::random_stable_plant(rng, 2, 1, 1, 1, 0.7);
    const ClosedLoopMaps maps = close_loop(p, Matrix::Zero(1, 2));
    const double g_d = 0.9 * unit(rng) / l1_norm(maps.ad);
    const double beta1 = g_d * l1_norm(maps.ad);
    const double den =
        l1_norm(maps.yu) + g_d / (1.0 - beta1) * l1_norm(maps.yd) * l1_norm(maps.au);
    const double g_pi = 0.9 * unit(rng) / den;
    const double w = unit(rng);
    const Quadruplet q = constructive_quadruplet(maps, g_pi, g_d, w);
    EXPECT_TRUE(check_theorem1(maps, q, vec({w})).holds) << "seed " << seed;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(Algorithm1, LinearPolicyClosedForm) {
  const auto plant = scalar_plant(0.5, 1.0, 1.0, 1.0, 0.0, 0.1);
  const CertResult r = algorithm1(plant, linear_policy(mat({{-0.2}})), Matrix(), Matrix());
  ASSERT_TRUE(r.success);
  EXPECT_LE(r.iterations, 3);
  const double y = 0.1 / 0.7;
  EXPECT_NEAR(r.y_bar(0), y, 1e-8);
  EXPECT_NEAR(r.x_bar(0), y, 1e-8);
  EXPECT_NEAR(r.u_bar(0), 0.2 * y, 1e-7);
  ASSERT_TRUE(r.quadruplet.has_value());
  EXPECT_TRUE(check_theorem1(close_loop(plant, r.gain), *r.quadruplet, vec({0.1})).holds);
}

TEST(Algorithm1, ZeroPerturbationSucceedsImmediately) {
  const auto plant = scalar_plant(0.5, 1.0, 1.0, 1.0, 0.0, 0.0);
  const Policy policy{loopcert::testing::single_relu(), std::nullopt};
  const CertResult r = algorithm1(plant, policy, mat({{-0.2}}), Matrix());
  ASSERT_TRUE(r.success);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.x_bar, vec({0.0}));
  EXPECT_EQ(r.y_bar, vec({0.0}));
  EXPECT_EQ(r.u_bar, vec({0.0}));
}

TEST(Algorithm1, TightLimitViolated) {
  auto plant = scalar_plant(0.5, 1.0, 1.0, 1.0, 0.0, 0.1);
  plant.x_lim = vec({0.14});
  const CertResult r = algorithm1(plant, linear_policy(mat({{-0.2}})), Matrix(), Matrix());
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.failure_reason, FailureReason::kConstraintViolated);
  plant.x_lim = vec({0.143});
  EXPECT_TRUE(algorithm1(plant, linear_policy(mat({{-0.2}})), Matrix(), Matrix()).success);
}

TEST(Algorithm1, NoStabilizingGain) {
  const auto plant = scalar_plant(1.2, 1.0, 1.0, 1.0, 0.0, 0.1);
  const CertResult r = algorithm1(plant, linear_policy(mat({{0.0}})), Matrix(), Matrix());
  EXPECT_EQ(r.failure_reason, FailureReason::kNoStabilizingGain);
  const CertResult with_kd = algorithm1(plant, linear_policy(mat({{0.0}})), mat({{-0.9}}), Matrix());
  EXPECT_NE(with_kd.failure_reason, FailureReason::kNoStabilizingGain);
}

TEST(Algorithm1, LoopGainAboveOneExhaustsIterations) {
  // Jacobian 0.6 destabilizes a = 0.5; with K_d = -0.2 the residual 0.8 y
  // sees a loop gain 0.8 / 0.7 > 1.
  const auto plant = scalar_plant(0.5, 1.0, 1.0, 1.0, 0.0, 0.1);
  const CertResult r = algorithm1(plant, linear_policy(mat({{0.6}})), mat({{-0.2}}), Matrix());
  EXPECT_FALSE(r.success);
  EXPECT_EQ(r.failure_reason, FailureReason::kMaxIterExceeded);
  EXPECT_EQ(r.gain_source, GainSource::kDefault);
}

TEST(Algorithm1, UncertaintyClosedForm) {
  // |delta| <= 0.1 |x|: x_bar = w / (0.7 - 0.1).
  const auto plant = uncertain_scalar(0.5, 0.1);
  const CertResult r = algorithm1(plant, linear_policy(mat({{-0.2}})), Matrix(), mat({{0.1}}));
  ASSERT_TRUE(r.success);
  EXPECT_NEAR(r.x_bar(0), 0.1 / 0.6, 1e-5);
  EXPECT_NEAR(r.alpha_bar(0), 0.1 / 0.6, 1e-5);
  ASSERT_TRUE(r.quadruplet.has_value());
  EXPECT_NEAR(r.quadruplet->delta_bar(0), 0.1 * r.quadruplet->alpha_bar(0), 1e-15);
  EXPECT_TRUE(check_theorem1(close_loop(plant, r.gain), *r.quadruplet, vec({0.1})).holds);
}

TEST(Algorithm1, RejectsNegativeUncertaintyGain) {
  const auto plant = uncertain_scalar(0.5, 0.1);
  EXPECT_THROW(algorithm1(plant, linear_policy(mat({{-0.2}})), Matrix(), mat({{-0.1}})), Error);
}

TEST(Algorithm1, Deterministic) {
  const auto& f = loopcert::testing::cartpole_fixture();
  StateSpacePlant plant = f.plant;
  plant.w_inf = 1e-3;
  const CertResult a = algorithm1(plant, f.policy, f.K_d, Matrix());
  const CertResult b = algorithm1(plant, f.policy, f.K_d, Matrix());
  ASSERT_TRUE(a.success);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.x_bar, b.x_bar);
  EXPECT_EQ(a.y_bar, b.y_bar);
  EXPECT_EQ(a.u_bar, b.u_bar);
  EXPECT_EQ(a.gain, b.gain);
}

TEST(Algorithm1, QuadrupletPassesTheorem1OnCartPole) {
  const auto& f = loopcert::testing::cartpole_fixture();
  StateSpacePlant plant = f.plant;
  plant.w_inf = 1e-3;
  const CertResult r = algorithm1(plant, f.policy, f.K_d, Matrix());
  ASSERT_TRUE(r.success);
  const auto check = check_theorem1(close_loop(plant, r.gain), *r.quadruplet, vec({1e-3}));
  EXPECT_TRUE(check.holds);
}

TEST(GammaDeltaNorm, MaxRowSum) {
  EXPECT_DOUBLE_EQ(gamma_delta_norm(mat({{1.0, -2.0}, {0.5, 0.5}})), 3.0);
  EXPECT_DOUBLE_EQ(gamma_delta_norm(Matrix()), 0.0);
}

TEST(SampledGain, LinearPolicyExact) {
  EXPECT_DOUBLE_EQ(sampled_gain(linear_policy(mat({{0.7}})), mat({{0.0}}), 1.0, 100, 1), 0.7);
  EXPECT_NEAR(sampled_gain(linear_policy(mat({{0.3, -0.5}})), mat({{0.0, 0.0}}), 2.0, 100, 1), 0.8,
              1e-15);
  EXPECT_NEAR(sampled_gain(linear_policy(mat({{0.7}})), mat({{0.7}}), 1.0, 100, 1), 0.0, 1e-15);
}

TEST(SampledGain, ZeroRadius) {
  EXPECT_EQ(sampled_gain(linear_policy(mat({{0.7}})), mat({{0.0}}), 0.0, 100, 1), 0.0);
  const Policy offset{ReluNetwork::linear(mat({{1.0}}), vec({0.5})), std::nullopt};
  EXPECT_EQ(sampled_gain(offset, mat({{0.0}}), 0.0, 100, 1), kInf);
}

TEST(ProbeLipschitz, LinearPolicyIsBounded) {
  const LipschitzProbe p = probe_lipschitz(linear_policy(mat({{0.7}})), mat({{0.0}}), 1.0, 50, 3);
  EXPECT_FALSE(p.diverges);
  for (double e : p.estimates) EXPECT_NEAR(e, 0.7, 1e-6);
}

TEST(ProbeLipschitz, QuantizedPolicyDiverges) {
  const Policy q{ReluNetwork::linear(mat({{0.7}}), vec({0.0})), QuantizationSpec{0.1}};
  const LipschitzProbe p = probe_lipschitz(q, mat({{0.0}}), 1.0, 50, 3);
  EXPECT_TRUE(p.diverges);
  EXPECT_GT(p.estimates.back(), 100.0 * p.estimates.front());
}

TEST(Lemma1Certify, ScalarLinearPolicy) {
  const auto plant = scalar_plant(0.5, 1.0, 1.0, 1.0, 0.0, 0.1);
  const BaselineCertification r = lemma1_certify(plant, linear_policy(mat({{-0.2}})), Matrix(), Matrix());
  EXPECT_TRUE(r.applicable);
  ASSERT_TRUE(r.certified);
  EXPECT_NEAR(r.gamma_pi, 0.2, 1e-12);
  EXPECT_NEAR(r.lemma.beta2, 0.4, 1e-8);
  EXPECT_NEAR(r.y_inf, 0.1 * 2.0 / 0.6, 1e-6);
  // Baseline never beats the invariant-box search on this plant.
  const CertResult a1 = algorithm1(plant, linear_policy(mat({{-0.2}})), Matrix(), Matrix());
  EXPECT_LE(a1.y_bar(0), r.y_inf);
}

TEST(Lemma1Certify, MatchesCheckLemma1) {
  const auto plant = scalar_plant(0.5, 1.0, 1.0, 1.0, 0.0, 0.1);
  const BaselineCertification r = lemma1_certify(plant, linear_policy(mat({{-0.2}})), Matrix(), Matrix());
  const BaselineResult direct =
      check_lemma1(close_loop(plant, r.gain), r.gamma_pi, r.gamma_delta, plant.w_inf, r.y_inf);
  EXPECT_DOUBLE_EQ(direct.beta1, r.lemma.beta1);
  EXPECT_DOUBLE_EQ(direct.beta2, r.lemma.beta2);
  EXPECT_EQ(direct.certified, r.lemma.certified);
}

TEST(Lemma1Certify, QuantizedPolicyInapplicable) {
  const auto plant = scalar_plant(0.5, 1.0, 1.0, 1.0, 0.0, 0.01);
  const Policy q{ReluNetwork::linear(mat({{-0.2}}), vec({0.0})), QuantizationSpec{0.1}};
  const BaselineCertification r = lemma1_certify(plant, q, Matrix(), Matrix());
  EXPECT_FALSE(r.applicable);
  EXPECT_FALSE(r.certified);
  EXPECT_TRUE(r.probe.diverges);
}

TEST(Frontier, ScalarLinearPolicyLine) {
  const auto plant = scalar_plant(0.5, 1.0, 1.0, 1.0, 0.0, 0.0);
  FrontierOptions opt;
  opt.threads = 2;
  const auto pts = frontier(plant, linear_policy(mat({{-0.2}})), Matrix(), Matrix(), {0.0, 0.5, 1.0, 2.0}, opt);
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_EQ(pts[0].w_certified, 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double exact = 0.7 * pts[i].x_lim;
    EXPECT_LE(pts[i].w_certified, exact);
    EXPECT_GE(pts[i].w_certified, exact * (1.0 - 2.0 * opt.tol));
  }
}

TEST(Frontier, NondecreasingOnCartPole) {
  const auto& f = loopcert::testing::cartpole_fixture();
  FrontierOptions opt;
  opt.constrained_states = {2};
  std::vector<double> x_lims;
  for (int k = 1; k <= 10; ++k) x_lims.push_back(0.0015 * k);
  const auto pts = frontier(f.plant, f.policy, f.K_d, Matrix(), x_lims, opt);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_GE(pts[i].w_certified, pts[i - 1].w_certified * (1.0 - opt.tol)) << i;
  }
  EXPECT_GT(pts.front().w_certified, 0.0);
}

TEST(Frontier, RejectsBadOptions) {
  const auto plant = scalar_plant(0.5);
  FrontierOptions opt;
  opt.tol = 0.0;
  EXPECT_THROW(frontier(plant, linear_policy(mat({{-0.2}})), Matrix(), Matrix(), {1.0}, opt), Error);
  opt.tol = 1e-4;
  opt.constrained_states = {3};
  EXPECT_THROW(frontier(plant, linear_policy(mat({{-0.2}})), Matrix(), Matrix(), {1.0}, opt), Error);
}

TEST(FailureReason, Names) {
  EXPECT_EQ(to_string(FailureReason::kConstraintViolated), "ConstraintViolated");
  EXPECT_EQ(to_string(FailureReason::kMaxIterExceeded), "MaxIterExceeded");
  EXPECT_EQ(to_string(FailureReason::kNoStabilizingGain), "NoStabilizingGain");
}
