#pragma once

// Relative entropy and its robust relatives on a finite metric space.
//
//   RobustEntropy     β(ν, μ)  = min { R(ν, μ̂) : d_W(μ̂, μ) ≤ r }
//   RobustEntropyAC   β̲(ν, μ)  = same, restricted to μ̂ ≪ μ
//   BallIndicator     0 if d_W(ν, μ) ≤ r, +∞ otherwise
//   BallIndicatorAC   0 if d_W(ν, μ) ≤ r and ν ≪ μ, +∞ otherwise
//   Entropy           R(ν, μ), the radius is ignored
//
// The robust minimizations are solved over the coupling γ between μ and μ̂
// (μ̂ = column sums of γ), which keeps every constraint linear.

#include "robust_ldp/chain_core.hpp"
#include "robust_ldp/convex_program.hpp"
#include "robust_ldp/transport.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace robust_ldp {

enum class Divergence {
  entropy,
  robust_entropy,
  robust_entropy_ac,
  ball_indicator,
  ball_indicator_ac,
};

inline const char* to_string(Divergence d) {
  switch (d) {
    case Divergence::entropy: return "Entropy";
    case Divergence::robust_entropy: return "RobustEntropy";
    case Divergence::robust_entropy_ac: return "RobustEntropyAC";
    case Divergence::ball_indicator: return "BallIndicator";
    case Divergence::ball_indicator_ac: return "BallIndicatorAC";
  }
  return "unknown";
}

inline Divergence divergence_from_string(const std::string& s) {
  for (auto d : {Divergence::entropy, Divergence::robust_entropy, Divergence::robust_entropy_ac,
                 Divergence::ball_indicator, Divergence::ball_indicator_ac}) {
    if (s == to_string(d)) return d;
  }
  throw std::invalid_argument("unknown divergence model '" + s + "'");
}

struct DivergenceModel {
  Divergence variant = Divergence::robust_entropy;
  double radius = 0.0;

  bool absolutely_continuous() const {
    return variant == Divergence::robust_entropy_ac || variant == Divergence::ball_indicator_ac;
  }
  bool indicator() const {
    return variant == Divergence::ball_indicator || variant == Divergence::ball_indicator_ac;
  }
  /// Radius actually in force (Entropy is RobustEntropy at radius 0).
  double effective_radius() const { return variant == Divergence::entropy ? 0.0 : radius; }
};

struct DivergenceResult {
  double value = kInfinity;
  std::optional<Dist> witness_mu_hat;
  std::optional<TransportPlan> witness_plan;
  double kkt_residual = 0.0;
  bool converged = true;
};

/// Σ ν ln(ν/μ) with 0 ln 0 = 0; +∞ when ν charges a state μ does not.
inline double rel_entropy(const Dist& nu, const Dist& mu) {
  if (nu.size() != mu.size()) throw std::invalid_argument("rel_entropy: dimension mismatch");
  double r = 0.0;
  for (Index i = 0; i < nu.size(); ++i) {
    if (nu[i] <= 0.0) continue;
    if (mu[i] <= 0.0) return kInfinity;
    r += nu[i] * std::log(nu[i] / mu[i]);
  }
  return std::max(r, 0.0);
}

namespace detail {

inline bool support_dominated(const Dist& nu, const Dist& mu) {
  for (Index i = 0; i < nu.size(); ++i) {
    if (nu.in_support(i) && !mu.in_support(i)) return false;
  }
  return true;
}

inline DivergenceResult witness_result(const MetricSpace& space, const Dist& mu, Dist mu_hat, double value) {
  DivergenceResult out;
  out.value = value;
  out.witness_plan = w1(space, mu, mu_hat).plan;
  out.witness_mu_hat = std::move(mu_hat);
  return out;
}

}  // namespace detail

inline DivergenceResult beta(const MetricSpace& space, const Dist& nu, const Dist& mu,
                             const DivergenceModel& model, const SolverOptions& opt = {}) {
  const Index n = space.size();
  if (nu.size() != n || mu.size() != n) throw std::invalid_argument("beta: dimension mismatch");
  const double r = model.effective_radius();
  const bool ac = model.absolutely_continuous();

  if (model.indicator()) {
    const bool inside = w1(space, nu, mu).value <= r + 1e-10;
    if (inside && (!ac || detail::support_dominated(nu, mu))) {
      return detail::witness_result(space, mu, nu, 0.0);
    }
    return DivergenceResult{};
  }

  if (r == 0.0) {
    const double v = rel_entropy(nu, mu);
    if (!std::isfinite(v)) return DivergenceResult{};
    return detail::witness_result(space, mu, mu, v);
  }
  if (w1(space, nu, mu).value <= r + 1e-12 && (!ac || detail::support_dominated(nu, mu))) {
    return detail::witness_result(space, mu, nu, 0.0);
  }

  // Variables: γ (n×n, row-major), σ = μ̂ (n), cost slack.
  ConvexProgram prog;
  const Index g0 = prog.add_variables(n * n);
  const Index s0 = prog.add_variables(n);
  const Index slack = prog.add_variable();
  auto g = [&](Index i, Index j) { return g0 + i * n + j; };
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<Index, double>> row;
    for (Index j = 0; j < n; ++j) row.emplace_back(g(i, j), 1.0);
    prog.add_equality(std::move(row), mu[i]);
  }
  for (Index j = 0; j < n; ++j) {
    std::vector<std::pair<Index, double>> col{{s0 + j, 1.0}};
    for (Index i = 0; i < n; ++i) col.emplace_back(g(i, j), -1.0);
    prog.add_equality(std::move(col), 0.0);
  }
  std::vector<std::pair<Index, double>> cost{{slack, 1.0}};
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) cost.emplace_back(g(i, j), space.dist(i, j));
  }
  prog.add_equality(std::move(cost), r);
  for (Index j = 0; j < n; ++j) {
    if (ac && !mu.in_support(j)) prog.fix(s0 + j, 0.0);
    if (nu[j] > 0.0) {
      prog.add_neg_log(nu[j], s0 + j);
      prog.add_constant(nu[j] * std::log(nu[j]));
    }
  }

  const ProgramSolution sol = prog.solve(opt);
  DivergenceResult out;
  out.kkt_residual = sol.kkt_residual();
  out.converged = sol.status != SolveStatus::not_converged;
  if (sol.status == SolveStatus::infeasible) return out;
  Vector mu_hat = sol.x.segment(s0, n).cwiseMax(0.0);
  mu_hat /= mu_hat.sum();
  out.value = std::max(sol.objective, 0.0);
  out.witness_plan = w1(space, mu, Dist(mu_hat)).plan;
  out.witness_mu_hat = Dist(std::move(mu_hat));
  return out;
}

/// Law of (X_1, ..., X_m) in decomposed form: the law of X_1 and, for each
/// step i, the conditional law of X_{i+1} given the history (X_1..X_i).
/// History (x_1, ..., x_i) is flattened with x_1 most significant, so step i
/// holds n^i conditionals.
struct JointLaw {
  Dist initial;
  std::vector<std::vector<Dist>> conditionals;

  Index steps() const { return static_cast<Index>(conditionals.size()) + 1; }
};

/// θ ⊗ π ⊗ ... ⊗ π over m steps.
inline JointLaw markov_law(const Dist& theta, const Kernel& kernel, Index m) {
  JointLaw law{theta, {}};
  const Index n = theta.size();
  Index histories = n;
  for (Index i = 1; i < m; ++i) {
    std::vector<Dist> step;
    step.reserve(static_cast<std::size_t>(histories));
    for (Index h = 0; h < histories; ++h) step.push_back(kernel.row(h % n));
    law.conditionals.push_back(std::move(step));
    histories *= n;
  }
  return law;
}

/// Probabilities of all n^m paths, flattened with x_1 most significant.
inline Vector joint_probabilities(const JointLaw& law) {
  Vector p = law.initial.probs();
  const Index n = law.initial.size();
  for (const auto& step : law.conditionals) {
    Vector next(p.size() * n);
    for (Index h = 0; h < p.size(); ++h) next.segment(h * n, n) = p(h) * step[static_cast<std::size_t>(h)].probs();
    p = std::move(next);
  }
  return p;
}

/// β_m^θ(ν) = β(ν_{0,1}, θ) + Σ_i E_ν[β(ν_{i,i+1}(X_1..X_i), π(X_i))].
/// Histories of ν-probability zero contribute nothing.
inline double beta_chain(const MetricSpace& space, const JointLaw& joint, const Dist& theta,
                         const Kernel& kernel, const DivergenceModel& model) {
  const Index n = space.size();
  if (joint.initial.size() != n || theta.size() != n || kernel.size() != n) {
    throw std::invalid_argument("beta_chain: dimension mismatch");
  }
  double total = beta(space, joint.initial, theta, model).value;
  if (!std::isfinite(total)) return kInfinity;
  Vector p = joint.initial.probs();
  Index histories = n;
  for (const auto& step : joint.conditionals) {
    if (static_cast<Index>(step.size()) != histories) throw std::invalid_argument("beta_chain: dimension mismatch");
    Vector next(histories * n);
    for (Index h = 0; h < histories; ++h) {
      const Dist& cond = step[static_cast<std::size_t>(h)];
      if (cond.size() != n) throw std::invalid_argument("beta_chain: dimension mismatch");
      next.segment(h * n, n) = p(h) * cond.probs();
      if (p(h) <= 0.0) continue;
      const double b = beta(space, cond, kernel.row(h % n), model).value;
      if (!std::isfinite(b)) return kInfinity;
      total += p(h) * b;
    }
    p = std::move(next);
    histories *= n;
  }
  return total;
}

/// min R(ν, μ̂) over μ̂ in M_2(θ) (or its absolutely continuous subset),
/// solved directly as one convex program over two-step joint laws. `joint`
/// is the n×n matrix ν(x_1, x_2). Entropy-type models only.
inline DivergenceResult beta_joint_direct(const MetricSpace& space, const Matrix& joint, const Dist& theta,
                                          const Kernel& kernel, const DivergenceModel& model,
                                          const SolverOptions& opt = {}) {
  if (model.indicator()) throw std::invalid_argument("beta_joint_direct: entropy-type models only");
  const Index n = space.size();
  const double r = model.effective_radius();
  const bool ac = model.absolutely_continuous();

  ConvexProgram prog;
  const Index m0 = prog.add_variables(n);          // first marginal of μ̂
  const Index j0 = prog.add_variables(n * n);      // μ̂(a, b)
  const Index c0 = prog.add_variables(n * n);      // coupling of m with θ
  const Index c0s = prog.add_variable();
  const Index k0 = prog.add_variables(n * n * n);  // per-state couplings
  const Index ks = prog.add_variables(n);
  auto jv = [&](Index a, Index b) { return j0 + a * n + b; };
  auto cv = [&](Index i, Index j) { return c0 + i * n + j; };
  auto kv = [&](Index a, Index y, Index z) { return k0 + (a * n + y) * n + z; };

  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<Index, double>> row{{m0 + i, -1.0}};
    for (Index j = 0; j < n; ++j) row.emplace_back(cv(i, j), 1.0);
    prog.add_equality(std::move(row), 0.0);
    std::vector<std::pair<Index, double>> col;
    for (Index k = 0; k < n; ++k) col.emplace_back(cv(k, i), 1.0);
    prog.add_equality(std::move(col), theta[i]);
  }
  std::vector<std::pair<Index, double>> cost0{{c0s, 1.0}};
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) cost0.emplace_back(cv(i, j), space.dist(i, j));
  }
  prog.add_equality(std::move(cost0), r);

  for (Index a = 0; a < n; ++a) {
    std::vector<std::pair<Index, double>> marg{{m0 + a, -1.0}};
    for (Index b = 0; b < n; ++b) marg.emplace_back(jv(a, b), 1.0);
    prog.add_equality(std::move(marg), 0.0);
    for (Index y = 0; y < n; ++y) {
      std::vector<std::pair<Index, double>> row{{m0 + a, -kernel(a, y)}};
      for (Index z = 0; z < n; ++z) row.emplace_back(kv(a, y, z), 1.0);
      prog.add_equality(std::move(row), 0.0);
    }
    for (Index z = 0; z < n; ++z) {
      std::vector<std::pair<Index, double>> col{{jv(a, z), -1.0}};
      for (Index y = 0; y < n; ++y) col.emplace_back(kv(a, y, z), 1.0);
      prog.add_equality(std::move(col), 0.0);
    }
    std::vector<std::pair<Index, double>> cost{{ks + a, 1.0}, {m0 + a, -r}};
    for (Index y = 0; y < n; ++y) {
      for (Index z = 0; z < n; ++z) cost.emplace_back(kv(a, y, z), space.dist(y, z));
    }
    prog.add_equality(std::move(cost), 0.0);
  }
  for (Index a = 0; a < n; ++a) {
    if (ac && !theta.in_support(a)) prog.fix(m0 + a, 0.0);
    for (Index b = 0; b < n; ++b) {
      if (ac && kernel(a, b) <= kSupportThreshold) prog.fix(jv(a, b), 0.0);
      const double w = joint(a, b);
      if (w > 0.0) {
        prog.add_neg_log(w, jv(a, b));
        prog.add_constant(w * std::log(w));
      }
    }
  }

  const ProgramSolution sol = prog.solve(opt);
  DivergenceResult out;
  out.kkt_residual = sol.kkt_residual();
  out.converged = sol.status != SolveStatus::not_converged;
  if (sol.status == SolveStatus::infeasible) return out;
  out.value = std::max(sol.objective, 0.0);
  return out;
}

}  // namespace robust_ldp
