#pragma once

// Robust large-deviations rates for the empirical measure.
//
//   I(ν) = inf { Σ_x ν_x β(q(x), π(x)) : ν q = ν }
//
// with β the Wasserstein-robust relative entropy. Because β is itself an
// infimum over μ̂ in a ball, I(ν) is one joint convex program in
// (τ = ν ⊗ q, σ_x = ν_x π̂(x), couplings γˣ); see chain_programs.hpp. The tail
// rate inf_{ν ∈ A} I(ν) over a Wasserstein ball A frees ν as well.

#include "robust_ldp/chain_core.hpp"
#include "robust_ldp/chain_programs.hpp"
#include "robust_ldp/convex_program.hpp"
#include "robust_ldp/divergence.hpp"
#include "robust_ldp/set_chain.hpp"
#include "robust_ldp/transport.hpp"

#include <variant>

namespace robust_ldp {

/// Mass at or below this in an optimal ν* marks a state the optimizer does
/// not visit; its rows of q* and π̂ are reported as π.
inline constexpr double kNegligibleMass = 1e-9;
/// Entries of solver output at or below this count as zero in support tests.
inline constexpr double kSolverZero = 1e-8;

struct RateReport {
  double value = kInfinity;
  Dist nu_star;
  Kernel q_star;
  Kernel pi_hat;
  double kkt_residual = 0.0;
  double marginal_residual = 0.0;
  double invariance_residual = 0.0;
  bool converged = true;
};

struct Unconstrained {};

struct RateProgram {
  ChainSpec spec;
  Divergence model = Divergence::robust_entropy;
  std::variant<BallSet, Dist, Unconstrained> target = Unconstrained{};
};

namespace detail {

inline void require_entropy_model(Divergence model) {
  if (model != Divergence::entropy && model != Divergence::robust_entropy &&
      model != Divergence::robust_entropy_ac) {
    throw std::invalid_argument("rate programs need an entropy-type model; use set_chain for indicators");
  }
}

inline double model_radius(const ChainSpec& spec, Divergence model) {
  return model == Divergence::entropy ? 0.0 : spec.radius;
}

/// Report for a law that is invariant under π itself: q = π̂ = π, rate 0.
inline RateReport invariant_report(const ChainSpec& spec, const Dist& nu) {
  RateReport rep;
  rep.value = 0.0;
  rep.nu_star = nu;
  rep.q_star = spec.kernel;
  rep.pi_hat = spec.kernel;
  rep.invariance_residual = l1_distance((nu.probs().transpose() * spec.kernel.matrix()).transpose(), nu.probs());
  return rep;
}

inline RateReport extract_report(const ChainSpec& spec, const ChainProgramLayout& L, const ProgramSolution& sol,
                                 double radius, const Dist& fallback_nu) {
  const Index n = spec.size();
  RateReport rep;
  rep.converged = sol.status != SolveStatus::not_converged;
  rep.kkt_residual = sol.kkt_residual();
  rep.marginal_residual = sol.primal_residual;
  if (sol.status == SolveStatus::infeasible) {
    rep.value = kInfinity;
    rep.nu_star = fallback_nu;
    rep.q_star = spec.kernel;
    rep.pi_hat = spec.kernel;
    return rep;
  }

  Vector nu = sol.x.segment(L.nu, n).cwiseMax(0.0);
  for (Index x = 0; x < n; ++x) {
    if (nu(x) <= kNegligibleMass) nu(x) = 0.0;
  }
  nu /= nu.sum();
  Matrix q = spec.kernel.matrix();
  Matrix ph = spec.kernel.matrix();
  for (Index x = 0; x < n; ++x) {
    if (nu(x) == 0.0) continue;
    Vector t(n), s(n);
    for (Index y = 0; y < n; ++y) {
      t(y) = std::max(sol.x(L.tau_at(x, y)), 0.0);
      s(y) = std::max(sol.x(L.sigma_at(x, y)), 0.0);
    }
    q.row(x) = (t / t.sum()).transpose();
    if (radius > 0.0) ph.row(x) = (s / s.sum()).transpose();
  }
  rep.value = std::max(sol.objective, 0.0);
  rep.nu_star = Dist(nu);
  rep.q_star = Kernel(std::move(q));
  rep.pi_hat = Kernel(std::move(ph));
  rep.invariance_residual = l1_distance((nu.transpose() * rep.q_star.matrix()).transpose(), nu);
  return rep;
}

inline RateReport solve_rate_program(const ChainSpec& spec, Divergence model, const std::optional<Dist>& fixed_nu,
                                     const BallSet* ball, const SolverOptions& opt) {
  ConvexProgram prog;
  ChainProgramOptions o;
  o.radius = model_radius(spec, model);
  o.absolutely_continuous = model == Divergence::robust_entropy_ac;
  o.fixed_nu = fixed_nu;
  if (ball != nullptr) {
    o.ball_center = &ball->center;
    o.ball_kappa = ball->kappa;
  }
  const auto L = build_chain_program(spec, o, prog);
  const ProgramSolution sol = prog.solve(opt);
  return extract_report(spec, L, sol, o.radius, fixed_nu ? *fixed_nu : ball ? ball->center : spec.pi0);
}

}  // namespace detail

/// I(ν) (or its absolutely continuous variant) with optimal q* and π̂.
inline RateReport rate_at(const ChainSpec& spec, const Dist& nu, Divergence model = Divergence::robust_entropy,
                          const SolverOptions& opt = {}) {
  detail::require_entropy_model(model);
  if (nu.size() != spec.size()) throw std::invalid_argument("rate_at: dimension mismatch");
  const Vector drift = (nu.probs().transpose() * spec.kernel.matrix()).transpose() - nu.probs();
  if (drift.cwiseAbs().maxCoeff() <= 1e-12) return detail::invariant_report(spec, nu);
  return detail::solve_rate_program(spec, model, nu, nullptr, opt);
}

/// inf_{ν ∈ A} I(ν) over the closed ball A, with the optimizing ν*, q*, π̂.
inline RateReport tail_rate(const ChainSpec& spec, const BallSet& ball, Divergence model = Divergence::robust_entropy,
                            const SolverOptions& opt = {}) {
  detail::require_entropy_model(model);
  if (ball.center.size() != spec.size()) throw std::invalid_argument("tail_rate: dimension mismatch");
  if (ball.kappa < 0.0) throw std::invalid_argument("tail_rate: negative ball radius");
  const Dist mu_star = stationary(spec.kernel).dist;
  if (ball_membership(spec.space, mu_star, ball)) return detail::invariant_report(spec, mu_star);
  return detail::solve_rate_program(spec, model, std::nullopt, &ball, opt);
}

inline RateReport solve(const RateProgram& program, const SolverOptions& opt = {}) {
  return std::visit(
      [&](const auto& target) -> RateReport {
        using T = std::decay_t<decltype(target)>;
        if constexpr (std::is_same_v<T, BallSet>) {
          return tail_rate(program.spec, target, program.model, opt);
        } else if constexpr (std::is_same_v<T, Dist>) {
          return rate_at(program.spec, target, program.model, opt);
        } else {
          detail::require_entropy_model(program.model);
          return detail::invariant_report(program.spec, stationary(program.spec.kernel).dist);
        }
      },
      program.target);
}

/// The worst-case kernel π̂ from the tail-rate optimizer.
inline Kernel worst_case_kernel(const ChainSpec& spec, const BallSet& ball, Divergence model = Divergence::robust_entropy,
                                const SolverOptions& opt = {}) {
  const RateReport rep = tail_rate(spec, ball, model, opt);
  if (!rep.converged) throw SolverError("worst_case_kernel: tail-rate solve did not converge");
  if (!std::isfinite(rep.value)) throw std::invalid_argument("worst_case_kernel: tail rate is infinite");
  return rep.pi_hat;
}

/// True iff the tail rate over the ball is strictly positive (> 1e-6).
inline bool nonvacuous(const ChainSpec& spec, const BallSet& ball, Divergence model = Divergence::robust_entropy,
                       const SolverOptions& opt = {}) {
  const RateReport rep = tail_rate(spec, ball, model, opt);
  if (!rep.converged) throw SolverError("nonvacuous: tail-rate solve did not converge");
  return rep.value > 1e-6;
}

/// True iff every visited row of π̂ is absolutely continuous with respect to
/// the nominal row, so the upper-bound optimizer is also feasible for the
/// absolutely continuous rate and both rates coincide at the optimum.
inline bool sharpness_check(const ChainSpec& spec, const RateReport& report) {
  if (!report.converged || !std::isfinite(report.value)) {
    throw std::invalid_argument("sharpness_check: needs a converged report with finite value");
  }
  const Index n = spec.size();
  for (Index x = 0; x < n; ++x) {
    if (report.nu_star[x] <= 1e-10) continue;
    for (Index y = 0; y < n; ++y) {
      if (report.pi_hat(x, y) > kSolverZero && spec.kernel(x, y) <= kSupportThreshold) return false;
    }
  }
  return true;
}

}  // namespace robust_ldp
