#include "robust_ldp/convex_program.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace robust_ldp;

TEST(ConvexProgram, LinearProgramOnSimplex) {
  // min x0 + 2 x1 + 3 x2 over the simplex.
  ConvexProgram p;
  const Index x = p.add_variables(3);
  p.set_cost(x, 1.0);
  p.set_cost(x + 1, 2.0);
  p.set_cost(x + 2, 3.0);
  p.add_equality({{x, 1.0}, {x + 1, 1.0}, {x + 2, 1.0}}, 1.0);
  const auto s = p.solve();
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.objective, 1.0, 1e-9);
  EXPECT_NEAR(s.x(x), 1.0, 1e-8);
}

TEST(ConvexProgram, EntropyAgainstFixedReferenceGivesGibbsLaw) {
  // min Σ τ_i ln(τ_i / σ_i) with σ fixed and Σ τ = 1, Σ i τ_i = m:
  // the minimizer is exponential tilting of σ.
  const double sigma[3] = {0.2, 0.3, 0.5};
  ConvexProgram p;
  const Index t = p.add_variables(3), s = p.add_variables(3);
  for (Index i = 0; i < 3; ++i) {
    p.fix(s + i, sigma[i]);
    p.add_relative_entropy(t + i, s + i);
  }
  p.add_equality({{t, 1.0}, {t + 1, 1.0}, {t + 2, 1.0}}, 1.0);
  p.add_equality({{t + 1, 1.0}, {t + 2, 2.0}}, 0.8);
  const auto sol = p.solve();
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  // Tilted law τ_i ∝ σ_i e^{λ i}; check the log-ratios are affine in i.
  const double l1 = std::log(sol.x(t + 1) / sigma[1]) - std::log(sol.x(t) / sigma[0]);
  const double l2 = std::log(sol.x(t + 2) / sigma[2]) - std::log(sol.x(t + 1) / sigma[1]);
  EXPECT_NEAR(l1, l2, 1e-7);
  EXPECT_NEAR(sol.x(t + 1) + 2.0 * sol.x(t + 2), 0.8, 1e-10);
}

TEST(ConvexProgram, JointRelativeEntropyIsZeroWhenSigmaIsFree) {
  ConvexProgram p;
  const Index t = p.add_variables(2), s = p.add_variables(2);
  p.add_relative_entropy(t, s);
  p.add_relative_entropy(t + 1, s + 1);
  p.add_equality({{t, 1.0}}, 0.3);
  p.add_equality({{t + 1, 1.0}}, 0.7);
  p.add_equality({{s, 1.0}, {s + 1, 1.0}}, 1.0);
  const auto sol = p.solve();
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  EXPECT_NEAR(sol.objective, 0.0, 1e-9);
  EXPECT_NEAR(sol.x(s), 0.3, 1e-6);
}

TEST(ConvexProgram, NegLogTermMaximizesLogLikelihood) {
  // min −0.3 ln σ0 − 0.7 ln σ1 over the simplex: σ = (0.3, 0.7).
  ConvexProgram p;
  const Index s = p.add_variables(2);
  p.add_neg_log(0.3, s);
  p.add_neg_log(0.7, s + 1);
  p.add_equality({{s, 1.0}, {s + 1, 1.0}}, 1.0);
  const auto sol = p.solve();
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  EXPECT_NEAR(sol.x(s), 0.3, 1e-8);
  EXPECT_NEAR(sol.objective, -(0.3 * std::log(0.3) + 0.7 * std::log(0.7)), 1e-10);
}

TEST(ConvexProgram, PresolveDetectsInfeasibility) {
  ConvexProgram p;
  const Index x = p.add_variables(2);
  p.add_equality({{x, 1.0}, {x + 1, 1.0}}, -1.0);
  EXPECT_EQ(p.solve().status, SolveStatus::infeasible);

  ConvexProgram q;
  const Index y = q.add_variables(2);
  q.add_equality({{y, 1.0}, {y + 1, 1.0}}, 1.0);
  q.add_equality({{y, 1.0}, {y + 1, 1.0}}, 2.0);
  EXPECT_EQ(q.solve().status, SolveStatus::infeasible);
}

TEST(ConvexProgram, EntropyWithZeroReferenceForcesZeroMass) {
  ConvexProgram p;
  const Index t = p.add_variables(2), s = p.add_variables(2);
  p.fix(s, 0.0);
  p.fix(s + 1, 1.0);
  p.add_relative_entropy(t, s);
  p.add_relative_entropy(t + 1, s + 1);
  p.add_equality({{t, 1.0}, {t + 1, 1.0}}, 1.0);
  const auto sol = p.solve();
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  EXPECT_EQ(sol.x(t), 0.0);
  EXPECT_NEAR(sol.objective, 0.0, 1e-12);

  ConvexProgram q;
  const Index u = q.add_variables(2);
  q.fix(u + 1, 0.0);
  q.fix(u, 1.0);
  q.add_relative_entropy(u, u + 1);
  EXPECT_EQ(q.solve().status, SolveStatus::infeasible);
}

TEST(ConvexProgram, RedundantRowsAreTolerated) {
  ConvexProgram p;
  const Index x = p.add_variables(3);
  p.set_cost(x + 2, 1.0);
  p.add_equality({{x, 1.0}, {x + 1, 1.0}, {x + 2, 1.0}}, 1.0);
  p.add_equality({{x, 2.0}, {x + 1, 2.0}, {x + 2, 2.0}}, 2.0);
  p.add_equality({{x, 1.0}}, 0.25);
  const auto sol = p.solve();
  ASSERT_EQ(sol.status, SolveStatus::optimal);
  EXPECT_NEAR(sol.objective, 0.0, 1e-9);
  EXPECT_NEAR(sol.x(x + 1), 0.75, 1e-8);
}

TEST(ConvexProgram, VariableMayJoinOnlyOneNonlinearTerm) {
  ConvexProgram p;
  const Index x = p.add_variables(3);
  p.add_relative_entropy(x, x + 1);
  EXPECT_THROW(p.add_neg_log(1.0, x + 1), std::invalid_argument);
  EXPECT_THROW(p.add_equality({{7, 1.0}}, 0.0), std::out_of_range);
  EXPECT_THROW(p.fix(x, -1.0), std::invalid_argument);
}

TEST(ConvexProgram, ObjectiveUsesZeroLogZero) {
  ConvexProgram p;
  const Index x = p.add_variables(2);
  p.add_relative_entropy(x, x + 1);
  EXPECT_EQ(p.objective(Vector{{0.0, 0.0}}), 0.0);
  EXPECT_TRUE(std::isinf(p.objective(Vector{{0.5, 0.0}})));
}
