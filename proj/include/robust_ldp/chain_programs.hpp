#pragma once

// Builders for the joint programs over (ν, τ, σ, γ) shared by the rate solver
// and the law-of-large-numbers envelopes.
//
// For a candidate invariant law ν:
//   τ  (n×n)   joint law ν ⊗ q, row sums = column sums = ν
//   γˣ (n×n)   coupling of ν_x·π(x,·) with σ_x, cost ≤ r·ν_x
//   σ_x        ν_x·π̂(x,·), the column sums of γˣ
// Scaling rows by ν_x leaves states of zero mass unconstrained. The rate
// program minimizes Σ τ ln(τ/σ); the envelope programs identify σ with τ
// (q itself must lie in the ball) and optimize a linear functional of ν.
// An optional ball A = {ν : d_W(ν, c) ≤ κ} adds one more coupling.

#include "robust_ldp/chain_core.hpp"
#include "robust_ldp/convex_program.hpp"

#include <optional>
#include <stdexcept>

namespace robust_ldp {

/// Raised when an interior-point solve fails to reach its tolerances.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct ChainProgramLayout {
  Index n = 0;
  Index nu = -1;
  Index tau = -1;
  Index sigma = -1;  // equals tau when σ is identified with τ
  Index gamma = -1;
  Index slack = -1;
  Index ball_gamma = -1;
  Index ball_slack = -1;

  Index tau_at(Index x, Index y) const { return tau + x * n + y; }
  Index sigma_at(Index x, Index y) const { return sigma + x * n + y; }
  Index gamma_at(Index x, Index y, Index z) const { return gamma + (x * n + y) * n + z; }
};

struct ChainProgramOptions {
  double radius = 0.0;
  bool absolutely_continuous = false;
  /// Identify σ with τ (law-of-large-numbers constraint set) instead of
  /// minimizing relative entropy between them.
  bool sigma_is_tau = false;
  std::optional<Dist> fixed_nu;
  const Dist* ball_center = nullptr;
  double ball_kappa = 0.0;
};

inline ChainProgramLayout build_chain_program(const ChainSpec& spec, const ChainProgramOptions& o,
                                              ConvexProgram& prog) {
  const Index n = spec.size();
  const Matrix& d = spec.space.dist;
  const Kernel& pi = spec.kernel;
  ChainProgramLayout L;
  L.n = n;
  L.nu = prog.add_variables(n);
  L.tau = prog.add_variables(n * n);
  L.sigma = o.sigma_is_tau ? L.tau : prog.add_variables(n * n);
  L.gamma = prog.add_variables(n * n * n);
  L.slack = prog.add_variables(n);

  for (Index x = 0; x < n; ++x) {
    std::vector<std::pair<Index, double>> row{{L.nu + x, -1.0}}, col{{L.nu + x, -1.0}};
    for (Index y = 0; y < n; ++y) {
      row.emplace_back(L.tau_at(x, y), 1.0);
      col.emplace_back(L.tau_at(y, x), 1.0);
    }
    prog.add_equality(std::move(row), 0.0);
    prog.add_equality(std::move(col), 0.0);
  }
  {
    std::vector<std::pair<Index, double>> total;
    for (Index x = 0; x < n; ++x) total.emplace_back(L.nu + x, 1.0);
    prog.add_equality(std::move(total), 1.0);
  }
  for (Index x = 0; x < n; ++x) {
    for (Index y = 0; y < n; ++y) {
      std::vector<std::pair<Index, double>> row{{L.nu + x, -pi(x, y)}};
      for (Index z = 0; z < n; ++z) row.emplace_back(L.gamma_at(x, y, z), 1.0);
      prog.add_equality(std::move(row), 0.0);
    }
    for (Index z = 0; z < n; ++z) {
      std::vector<std::pair<Index, double>> col{{L.sigma_at(x, z), -1.0}};
      for (Index y = 0; y < n; ++y) col.emplace_back(L.gamma_at(x, y, z), 1.0);
      prog.add_equality(std::move(col), 0.0);
    }
    std::vector<std::pair<Index, double>> cost{{L.slack + x, 1.0}, {L.nu + x, -o.radius}};
    for (Index y = 0; y < n; ++y) {
      for (Index z = 0; z < n; ++z) cost.emplace_back(L.gamma_at(x, y, z), d(y, z));
    }
    prog.add_equality(std::move(cost), 0.0);
  }

  if (o.ball_center != nullptr) {
    const Dist& c = *o.ball_center;
    L.ball_gamma = prog.add_variables(n * n);
    L.ball_slack = prog.add_variable();
    auto b = [&](Index i, Index j) { return L.ball_gamma + i * n + j; };
    for (Index i = 0; i < n; ++i) {
      std::vector<std::pair<Index, double>> row{{L.nu + i, -1.0}}, col;
      for (Index j = 0; j < n; ++j) {
        row.emplace_back(b(i, j), 1.0);
        col.emplace_back(b(j, i), 1.0);
      }
      prog.add_equality(std::move(row), 0.0);
      prog.add_equality(std::move(col), c[i]);
    }
    std::vector<std::pair<Index, double>> cost{{L.ball_slack, 1.0}};
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) cost.emplace_back(b(i, j), d(i, j));
    }
    prog.add_equality(std::move(cost), o.ball_kappa);
  }

  if (o.absolutely_continuous) {
    for (Index x = 0; x < n; ++x) {
      for (Index y = 0; y < n; ++y) {
        if (pi(x, y) <= kSupportThreshold) prog.fix(L.sigma_at(x, y), 0.0);
      }
    }
  }
  if (!o.sigma_is_tau) {
    for (Index x = 0; x < n; ++x) {
      for (Index y = 0; y < n; ++y) prog.add_relative_entropy(L.tau_at(x, y), L.sigma_at(x, y));
    }
  }
  if (o.fixed_nu) {
    for (Index x = 0; x < n; ++x) prog.fix(L.nu + x, (*o.fixed_nu)[x]);
  }
  return L;
}

}  // namespace detail
}  // namespace robust_ldp
