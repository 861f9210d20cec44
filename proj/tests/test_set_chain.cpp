#include "oracles.hpp"

#include "robust_ldp/set_chain.hpp"

#include <gtest/gtest.h>

using namespace robust_ldp;

namespace {

const Vector kMuStar = Vector{{3.0, 4.0, 6.0}} / 13.0;

ChainSpec two_state(const Kernel& k) { return ChainSpec{MetricSpace::discrete(2), Dist{1.0, 0.0}, k, 0.0}; }

ChainSpec discrete_chain(oracle::Rng& g, Index n, double r) {
  return ChainSpec{MetricSpace::discrete(n), oracle::random_dist(g, n), oracle::random_kernel(g, n), r};
}

}  // namespace

TEST(Stationary, ThreeStateExample) {
  const auto st = stationary(oracle::three_state_example().kernel);
  EXPECT_TRUE(st.unique);
  EXPECT_LT((st.dist.probs() - kMuStar).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Stationary, FlipChainIsUniform) {
  const auto st = stationary(Kernel{{0.0, 1.0}, {1.0, 0.0}});
  EXPECT_TRUE(st.unique);
  EXPECT_NEAR(st.dist[0], 0.5, 1e-15);
}

TEST(Stationary, IdentityIsNotUnique) {
  const auto st = stationary(Kernel::identity(3));
  EXPECT_FALSE(st.unique);
  EXPECT_NEAR(st.dist.probs().sum(), 1.0, 1e-15);
}

TEST(Stationary, RandomKernelsAreFixedPoints) {
  oracle::Rng g(41);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = oracle::uniform_index(g, 2, 8);
    const Kernel k = oracle::random_kernel(g, n, trial % 2 == 0);
    const auto st = stationary(k);
    const Vector p = st.dist.probs();
    EXPECT_LT((k.matrix().transpose() * p - p).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CheckConditions, ThreeStateExampleWitnessIsTwo) {
  const auto s = oracle::three_state_example();
  const auto rep = check_conditions(s, default_max_exponent(3));
  EXPECT_TRUE(rep.m1_holds);
  EXPECT_EQ(rep.l0, 2);
  EXPECT_EQ(rep.n0, 2);
  EXPECT_TRUE(rep.unique_invariant);
}

TEST(CheckConditions, IdentityFails) {
  const auto rep = check_conditions(two_state(Kernel::identity(2)), 6);
  EXPECT_FALSE(rep.m1_holds);
  EXPECT_FALSE(rep.l0.has_value());
  EXPECT_FALSE(rep.unique_invariant);
  EXPECT_FALSE(rep.note.empty());
}

TEST(CheckConditions, PeriodicChainHolds) {
  const auto rep = check_conditions(two_state(Kernel{{0.0, 1.0}, {1.0, 0.0}}), 6);
  EXPECT_TRUE(rep.m1_holds);
  EXPECT_EQ(rep.l0, 1);
}

TEST(CheckConditions, TransientStateIsDominated) {
  // State 1 leaves at once; both tails charge only state 2.
  const auto rep = check_conditions(two_state(Kernel{{0.0, 1.0}, {0.0, 1.0}}), 6);
  EXPECT_TRUE(rep.m1_holds);
  EXPECT_EQ(rep.l0, 1);
}

TEST(CheckConditions, LingeringTransientStateFails) {
  // From state 1 every power still charges state 1; from state 2 none does.
  const auto rep = check_conditions(two_state(Kernel{{0.5, 0.5}, {0.0, 1.0}}), 6);
  EXPECT_FALSE(rep.m1_holds);
  EXPECT_TRUE(rep.unique_invariant);
}

TEST(CheckConditions, RejectsNonPositiveBound) {
  EXPECT_THROW(check_conditions(oracle::three_state_example(), 0), std::invalid_argument);
}

TEST(CheckConditions, PositiveKernelsHoldWithWitnessOne) {
  oracle::Rng g(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = oracle::uniform_index(g, 2, 6);
    const auto rep = check_conditions(oracle::random_chain(g, n, 0.0), default_max_exponent(n));
    EXPECT_TRUE(rep.m1_holds);
    EXPECT_EQ(rep.l0, 1);
  }
}

TEST(Cesaro, FirstTermIsInitialLaw) {
  const auto s = oracle::three_state_example();
  EXPECT_EQ(cesaro(s, 1), s.pi0);
  EXPECT_THROW(cesaro(s, 0), std::invalid_argument);
}

TEST(Cesaro, ConvergesToStationaryLaw) {
  const auto s = oracle::three_state_example();
  EXPECT_LT((cesaro(s, 2000).probs() - kMuStar).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Cesaro, IdentityKeepsInitialLaw) {
  auto s = two_state(Kernel::identity(2));
  s.pi0 = Dist{0.3, 0.7};
  EXPECT_LT((cesaro(s, 500).probs() - s.pi0.probs()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Envelope, ZeroRadiusCollapsesToStationaryLaw) {
  const auto env = envelope(oracle::three_state_example(0.0), Divergence::ball_indicator);
  EXPECT_LT((env.lo - kMuStar).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((env.hi - kMuStar).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Envelope, RadiusAtDiameterIsVacuous) {
  const auto env = envelope(oracle::three_state_example(1.0), Divergence::ball_indicator);
  EXPECT_LT(env.lo.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((env.hi.array() - 1.0).abs().maxCoeff(), 1e-8);
}

TEST(Envelope, ExampleBracketsStationaryLawAndMatchesGrid) {
  const auto s = oracle::three_state_example(0.05);
  const auto env = envelope(s, Divergence::ball_indicator);
  for (Index x = 0; x < 3; ++x) {
    EXPECT_LT(env.lo(x), kMuStar(x));
    EXPECT_GT(env.hi(x), kMuStar(x));
    const auto [glo, ghi] = oracle::envelope_grid_3state(s.kernel.matrix(), 0.05, x);
    // The grid sits inside the feasible set, so it can only shrink the range.
    EXPECT_LE(env.lo(x), glo + 1e-9) << "state " << x + 1;
    EXPECT_GE(env.hi(x), ghi - 1e-9) << "state " << x + 1;
    EXPECT_NEAR(env.lo(x), glo, 2e-3) << "state " << x + 1;
    EXPECT_NEAR(env.hi(x), ghi, 2e-3) << "state " << x + 1;
  }
}

TEST(Envelope, NestedInRadius) {
  Envelope prev = envelope(oracle::three_state_example(0.0), Divergence::ball_indicator);
  for (int i = 1; i <= 10; ++i) {
    const auto env = envelope(oracle::three_state_example(0.01 * i), Divergence::ball_indicator);
    EXPECT_TRUE((env.lo.array() <= prev.lo.array() + 1e-8).all()) << "r = " << 0.01 * i;
    EXPECT_TRUE((env.hi.array() >= prev.hi.array() - 1e-8).all()) << "r = " << 0.01 * i;
    EXPECT_LE(env.lo.sum(), 1.0 + 1e-8);
    EXPECT_GE(env.hi.sum(), 1.0 - 1e-8);
    prev = env;
  }
}

TEST(Envelope, ThreadCountDoesNotChangeTheResult) {
  const auto s = oracle::three_state_example(0.05);
  const auto a = envelope(s, Divergence::ball_indicator, 1);
  const auto b = envelope(s, Divergence::ball_indicator, 4);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
}

TEST(Envelope, AbsolutelyContinuousVariantIsTighter) {
  const auto s = oracle::three_state_example(0.05);
  const auto plain = envelope(s, Divergence::ball_indicator);
  const auto ac = envelope(s, Divergence::ball_indicator_ac);
  EXPECT_TRUE((ac.lo.array() >= plain.lo.array() - 1e-8).all());
  EXPECT_TRUE((ac.hi.array() <= plain.hi.array() + 1e-8).all());
}

TEST(Envelope, RejectsRateModels) {
  EXPECT_THROW(envelope(oracle::three_state_example(), Divergence::robust_entropy), std::invalid_argument);
}

TEST(FunctionalBound, ConstantWeightsGiveTheConstant) {
  const auto fb = robust_functional_bound(oracle::three_state_example(0.05), Divergence::ball_indicator,
                                          Vector::Constant(3, 0.7));
  EXPECT_NEAR(fb.max, 0.7, 1e-8);
}

TEST(FunctionalBound, ZeroRadiusEvaluatesAtStationaryLaw) {
  const Vector w{{0.2, -1.0, 0.5}};
  const auto fb = robust_functional_bound(oracle::three_state_example(0.0), Divergence::ball_indicator, w);
  EXPECT_NEAR(fb.max, w.dot(kMuStar), 1e-8);
}

TEST(FunctionalBound, ArgmaxIsFeasibleAndAttainsTheBound) {
  oracle::Rng g(43);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = oracle::uniform_index(g, 2, 5);
    const auto s = discrete_chain(g, n, oracle::uniform(g, 0.0, 0.3));
    Vector w(n);
    for (Index i = 0; i < n; ++i) w(i) = oracle::uniform(g, -1.0, 1.0);
    const auto fb = robust_functional_bound(s, Divergence::ball_indicator, w);
    EXPECT_NEAR(fb.argmax.probs().dot(w), fb.max, 1e-7);
    EXPECT_TRUE(oracle::invariant_feasible_discrete(s.kernel.matrix(), fb.argmax.probs(), s.radius, 1e-7))
        << "trial " << trial;
    EXPECT_GE(fb.max, w.dot(stationary(s.kernel).dist.probs()) - 1e-8);
  }
}

TEST(FunctionalBound, NoFeasibleGridPointBeatsTheBound) {
  oracle::Rng g(44);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = discrete_chain(g, 3, oracle::uniform(g, 0.0, 0.3));
    const Vector w{{oracle::uniform(g, -1.0, 1.0), oracle::uniform(g, -1.0, 1.0), oracle::uniform(g, -1.0, 1.0)}};
    const auto fb = robust_functional_bound(s, Divergence::ball_indicator, w);
    double best = -oracle::kInf;
    const int steps = 200;
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; i + j <= steps; ++j) {
        const Vector nu{{double(i) / steps, double(j) / steps, double(steps - i - j) / steps}};
        if (oracle::invariant_feasible_discrete(s.kernel.matrix(), nu, s.radius)) best = std::max(best, w.dot(nu));
      }
    }
    EXPECT_LE(best, fb.max + 1e-9);
    EXPECT_NEAR(best, fb.max, 2e-2);
  }
}
