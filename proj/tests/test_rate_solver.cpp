#include "oracles.hpp"

#include "robust_ldp/rate_solver.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace robust_ldp;

namespace {

const BallSet kBall{Dist::dirac(3, 2), 0.2};

/// Certificates every converged finite report must carry.
void expect_certified(const ChainSpec& s, const RateReport& rep, double radius) {
  ASSERT_TRUE(rep.converged);
  ASSERT_TRUE(std::isfinite(rep.value));
  EXPECT_LE(rep.invariance_residual, 1e-7);
  double recomputed = 0.0;
  for (Index x = 0; x < s.size(); ++x) {
    if (rep.nu_star[x] <= 1e-10) continue;
    EXPECT_LE(w1(s.space, rep.pi_hat.row(x), s.kernel.row(x)).value, radius + 1e-7) << "row " << x;
    recomputed += rep.nu_star[x] * oracle::kl(rep.q_star.matrix().row(x).transpose(), rep.pi_hat.matrix().row(x).transpose());
  }
  EXPECT_NEAR(recomputed, rep.value, 1e-6);
}

}  // namespace

TEST(TailRate, ThreeStateNominal) {
  const auto s = oracle::three_state_example(0.0);
  const auto rep = tail_rate(s, kBall);
  expect_certified(s, rep, 0.0);
  EXPECT_NEAR(rep.value, 0.0910, 0.002);
  EXPECT_EQ(rep.pi_hat, s.kernel);
  EXPECT_TRUE(sharpness_check(s, rep));
}

TEST(TailRate, ThreeStateRobust) {
  const auto s = oracle::three_state_example(0.05);
  const auto rep = tail_rate(s, kBall);
  expect_certified(s, rep, 0.05);
  EXPECT_NEAR(rep.value, 0.0511, 0.002);
  EXPECT_TRUE(sharpness_check(s, rep));
  const Matrix expected = (Matrix(3, 3) << 0.55, 0.2, 0.25, 0.25, 0.4, 0.35, 0.0, 0.25, 0.75).finished();
  EXPECT_LT((rep.pi_hat.matrix() - expected).cwiseAbs().maxCoeff(), 1e-2);
  // The optimizer sits on the boundary of the ball.
  EXPECT_NEAR(w1(s.space, rep.nu_star, kBall.center).value, 0.2, 1e-6);
}

TEST(TailRate, AbsolutelyContinuousVariantAgreesOnTheExample) {
  const auto s = oracle::three_state_example(0.05);
  const auto plain = tail_rate(s, kBall);
  const auto ac = tail_rate(s, kBall, Divergence::robust_entropy_ac);
  ASSERT_TRUE(ac.converged);
  EXPECT_NEAR(ac.value, plain.value, 1e-6);
  EXPECT_LE(plain.value, ac.value + 1e-9);
}

TEST(TailRate, EntropyModelIgnoresTheRadius) {
  const auto s = oracle::three_state_example(0.05);
  EXPECT_NEAR(tail_rate(s, kBall, Divergence::entropy).value, tail_rate(oracle::three_state_example(0.0), kBall).value,
              1e-9);
}

TEST(TailRate, BallContainingStationaryLawHasRateZero) {
  const auto s = oracle::three_state_example(0.05);
  const Dist mu = stationary(s.kernel).dist;
  const double k = w1(s.space, mu, kBall.center).value;
  const auto rep = tail_rate(s, BallSet{kBall.center, k});
  EXPECT_EQ(rep.value, 0.0);
  EXPECT_FALSE(nonvacuous(s, BallSet{kBall.center, k}));
  EXPECT_FALSE(nonvacuous(s, BallSet{mu, 0.0}));
  EXPECT_TRUE(nonvacuous(s, kBall));
}

TEST(TailRate, MonotoneNonincreasingInRadius) {
  double prev = kInfinity;
  for (int i = 0; i <= 10; ++i) {
    const auto rep = tail_rate(oracle::three_state_example(0.01 * i), kBall);
    ASSERT_TRUE(rep.converged);
    EXPECT_LE(rep.value, prev + 1e-9) << "r = " << 0.01 * i;
    prev = rep.value;
  }
}

TEST(TailRate, TwoStateCorpusMatchesGrid) {
  for (const auto& inst : oracle::two_state_corpus()) {
    const BallSet ball{Dist{inst.center1, 1 - inst.center1}, inst.kappa};
    const auto rep = tail_rate(inst.spec, ball);
    ASSERT_TRUE(rep.converged);
    EXPECT_NEAR(rep.value, oracle::tail_rate_grid_2state(inst.spec, inst.center1, inst.kappa), 1e-4);
  }
}

TEST(RateAt, DiracThreeIsMinusLogPointSeven) {
  const auto s = oracle::three_state_example(0.0);
  const auto rep = rate_at(s, Dist::dirac(3, 2));
  ASSERT_TRUE(rep.converged);
  EXPECT_NEAR(rep.value, -std::log(0.7), 1e-8);
  EXPECT_NEAR(rep.q_star(2, 2), 1.0, 1e-8);
}

TEST(RateAt, StationaryLawHasRateExactlyZero) {
  oracle::Rng g(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = oracle::random_chain(g, oracle::uniform_index(g, 2, 5), 0.0);
    const Dist mu = stationary(s.kernel).dist;
    for (double r : {0.0, 0.05, 0.2}) {
      auto sr = s;
      sr.radius = r;
      for (auto m : {Divergence::entropy, Divergence::robust_entropy, Divergence::robust_entropy_ac}) {
        const auto rep = rate_at(sr, mu, m);
        EXPECT_EQ(rep.value, 0.0);
        EXPECT_EQ(rep.q_star, s.kernel);
        EXPECT_EQ(rep.pi_hat, s.kernel);
      }
    }
  }
}

TEST(RateAt, TwoStateCorpusMatchesGrid) {
  for (const auto& inst : oracle::two_state_corpus()) {
    const auto rep = rate_at(inst.spec, Dist{inst.nu1, 1 - inst.nu1});
    ASSERT_TRUE(rep.converged);
    EXPECT_NEAR(rep.value, oracle::rate_at_grid_2state(inst.spec, inst.nu1), 1e-5);
    auto nominal = inst.spec;
    nominal.radius = 0.0;
    EXPECT_NEAR(rate_at(nominal, Dist{inst.nu1, 1 - inst.nu1}).value, oracle::rate_at_grid_2state(nominal, inst.nu1),
                1e-5);
  }
}

TEST(RateAt, ConvexAlongMixtures) {
  oracle::Rng g(32);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = oracle::uniform_index(g, 2, 4);
    const auto s = oracle::random_chain(g, n, oracle::uniform(g, 0.0, 0.2));
    const Dist a = oracle::random_dist(g, n), b = oracle::random_dist(g, n);
    const double lam = oracle::uniform(g);
    const Dist mid(lam * a.probs() + (1 - lam) * b.probs());
    const auto ra = rate_at(s, a), rb = rate_at(s, b), rm = rate_at(s, mid);
    ASSERT_TRUE(ra.converged && rb.converged && rm.converged);
    EXPECT_LE(rm.value, lam * ra.value + (1 - lam) * rb.value + 1e-5);
    expect_certified(s, rm, s.radius);
  }
}

TEST(RateAt, RandomChainsCarryCertificates) {
  oracle::Rng g(33);
  for (int trial = 0; trial < 15; ++trial) {
    const Index n = oracle::uniform_index(g, 2, 5);
    const auto s = oracle::random_chain(g, n, oracle::uniform(g, 0.0, 0.3), trial % 2 == 0);
    const Dist nu = oracle::random_dist(g, n);
    const auto rep = rate_at(s, nu);
    if (!std::isfinite(rep.value)) continue;
    expect_certified(s, rep, s.radius);
  }
}

TEST(WorstCaseKernel, ZeroRadiusReturnsTheNominalKernel) {
  const auto s = oracle::three_state_example(0.0);
  EXPECT_EQ(worst_case_kernel(s, kBall), s.kernel);
}

TEST(WorstCaseKernel, RowsStayInTheirBalls) {
  const auto s = oracle::three_state_example(0.05);
  const Kernel k = worst_case_kernel(s, kBall);
  for (Index x = 0; x < 3; ++x) {
    EXPECT_TRUE(ball_membership(s.space, k.row(x), BallSet{s.kernel.row(x), s.radius + 1e-9}));
  }
}

TEST(Sharpness, FailsWhenTheWorstCaseLeavesTheSupport) {
  // From state 1 the nominal chain always jumps; with r = 1 the adversary
  // may keep it in place, which the nominal kernel never does.
  const ChainSpec s{MetricSpace::discrete(2), Dist{1.0, 0.0}, Kernel{{0.0, 1.0}, {0.5, 0.5}}, 1.0};
  const BallSet ball{Dist{1.0, 0.0}, 0.1};
  const auto rep = tail_rate(s, ball);
  ASSERT_TRUE(rep.converged);
  EXPECT_NEAR(rep.value, 0.0, 1e-7);
  EXPECT_GT(rep.pi_hat(0, 0), 1e-3);
  EXPECT_FALSE(sharpness_check(s, rep));
  const auto ac = tail_rate(s, ball, Divergence::robust_entropy_ac);
  EXPECT_TRUE(std::isinf(ac.value) || ac.value > 1e-3);
}

TEST(RateSolver, RejectsIndicatorModelsAndBadBalls) {
  const auto s = oracle::three_state_example();
  EXPECT_THROW(tail_rate(s, kBall, Divergence::ball_indicator), std::invalid_argument);
  EXPECT_THROW(tail_rate(s, BallSet{Dist{0.5, 0.5}, 0.1}), std::invalid_argument);
  EXPECT_THROW(tail_rate(s, BallSet{kBall.center, -1.0}), std::invalid_argument);
}

TEST(RateSolver, SolveDispatchesOnTarget) {
  const auto s = oracle::three_state_example(0.05);
  EXPECT_NEAR(solve(RateProgram{s, Divergence::robust_entropy, kBall}).value, tail_rate(s, kBall).value, 1e-12);
  EXPECT_NEAR(solve(RateProgram{s, Divergence::entropy, Dist::dirac(3, 2)}).value, -std::log(0.7), 1e-8);
  EXPECT_EQ(solve(RateProgram{s}).value, 0.0);
}
