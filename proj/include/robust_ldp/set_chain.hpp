#pragma once

// Law-of-large-numbers side: stationary laws, the ergodicity-type support
// conditions on the nominal kernel, Cesàro averages and the robust invariant
// envelopes (linear programs over laws that admit an invariant kernel inside
// the Wasserstein ball).

#include "robust_ldp/chain_core.hpp"
#include "robust_ldp/chain_programs.hpp"
#include "robust_ldp/convex_program.hpp"
#include "robust_ldp/divergence.hpp"
#include "robust_ldp/transport.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace robust_ldp {

struct StationaryResult {
  Dist dist;
  bool unique = false;
};

namespace detail {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline BoolMatrix support_of(const Matrix& p) { return (p.array() > kSupportThreshold).matrix(); }

inline BoolMatrix bool_product(const BoolMatrix& a, const BoolMatrix& b) {
  const Index n = a.rows();
  BoolMatrix c = BoolMatrix::Constant(n, b.cols(), false);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < a.cols(); ++k) {
      if (!a(i, k)) continue;
      for (Index j = 0; j < b.cols(); ++j) c(i, j) = c(i, j) || b(k, j);
    }
  }
  return c;
}

/// reach(x, y): y reachable from x in zero or more steps.
inline BoolMatrix reachability(const Matrix& p) {
  const Index n = p.rows();
  BoolMatrix r = support_of(p);
  for (Index i = 0; i < n; ++i) r(i, i) = true;
  for (Index k = 0; k < n; ++k) {
    for (Index i = 0; i < n; ++i) {
      if (!r(i, k)) continue;
      for (Index j = 0; j < n; ++j) r(i, j) = r(i, j) || r(k, j);
    }
  }
  return r;
}

inline std::string key_of(const BoolMatrix& m) {
  std::string s(static_cast<std::size_t>(m.size()), '0');
  for (Index i = 0; i < m.size(); ++i) s[static_cast<std::size_t>(i)] = m.data()[i] ? '1' : '0';
  return s;
}

}  // namespace detail

/// An invariant law of the kernel and whether it is the only one.
///
/// Uniqueness is decided by the rank of I − P (singular values below 1e-10
/// count as zero). The returned law is the invariant law supported on the
/// closed communicating class containing the smallest state index.
inline StationaryResult stationary(const Kernel& kernel) {
  const Index n = kernel.size();
  const Matrix& p = kernel.matrix();

  Eigen::JacobiSVD<Matrix> svd(Matrix::Identity(n, n) - p);
  const Vector sv = svd.singularValues();
  Index nullity = 0;
  for (Index i = 0; i < sv.size(); ++i) nullity += sv(i) <= 1e-10 ? 1 : 0;

  const auto reach = detail::reachability(p);
  std::vector<Index> cls;
  for (Index x = 0; x < n && cls.empty(); ++x) {
    bool closed = true;
    for (Index y = 0; y < n; ++y) {
      if (reach(x, y) && !reach(y, x)) closed = false;
    }
    if (!closed) continue;
    for (Index y = 0; y < n; ++y) {
      if (reach(x, y)) cls.push_back(y);
    }
  }

  const auto m = static_cast<Index>(cls.size());
  Matrix a(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) a(i, j) = p(cls[static_cast<std::size_t>(j)], cls[static_cast<std::size_t>(i)]);
  }
  a -= Matrix::Identity(m, m);
  a.row(m - 1).setOnes();
  Vector rhs = Vector::Zero(m);
  rhs(m - 1) = 1.0;
  const Vector sol = a.fullPivLu().solve(rhs).cwiseMax(0.0);

  Vector out = Vector::Zero(n);
  for (Index i = 0; i < m; ++i) out(cls[static_cast<std::size_t>(i)]) = sol(i);
  out /= out.sum();
  return {Dist(std::move(out)), nullity == 1};
}

struct ConditionReport {
  bool m1_holds = false;
  std::optional<int> l0;
  std::optional<int> n0;
  bool m2_holds = true;
  std::optional<Dist> invariant;
  bool unique_invariant = false;
  std::string note;
};

/// Support-dominance condition on the tail mixtures Σ_{i≥l} 2^{-i} π^(i)(x)
/// plus existence of an invariant law.
///
/// On a finite space the tail mixture from x charges exactly
/// S_{≥l}(x) = ∪_{i≥l} supp π^(i)(x). The boolean powers of supp π are
/// eventually periodic; from the first exponent k of the periodic regime on,
/// S_{≥k}(x) is the union over one period and no longer changes. The
/// condition holds for some (l0, n0) iff it holds at l0 = n0 = k, which is the
/// witness reported.
inline ConditionReport check_conditions(const ChainSpec& spec, int max_exponent) {
  if (max_exponent < 1) throw std::invalid_argument("check_conditions: max_exponent must be positive");
  const Index n = spec.size();
  ConditionReport rep;
  const auto st = stationary(spec.kernel);
  rep.invariant = st.dist;
  rep.unique_invariant = st.unique;
  rep.m2_holds = true;

  const detail::BoolMatrix b = detail::support_of(spec.kernel.matrix());
  std::vector<detail::BoolMatrix> powers{b};
  std::map<std::string, int> seen{{detail::key_of(b), 1}};
  int cycle_start = -1;
  const long cap = std::max<long>(4L * max_exponent, static_cast<long>(max_exponent) + 10000L);
  for (long k = 2; k <= cap; ++k) {
    detail::BoolMatrix next = detail::bool_product(powers.back(), b);
    const auto key = detail::key_of(next);
    if (auto it = seen.find(key); it != seen.end()) {
      cycle_start = it->second;
      break;
    }
    seen.emplace(key, static_cast<int>(k));
    powers.push_back(std::move(next));
    if (static_cast<long>(powers.size()) > cap) break;
  }
  if (cycle_start < 0 || cycle_start > max_exponent) {
    rep.note = "support sequence not periodic within exponent bound " + std::to_string(max_exponent) +
               "; the condition may still hold beyond it";
    return rep;
  }

  detail::BoolMatrix tail = detail::BoolMatrix::Constant(n, n, false);
  for (std::size_t k = static_cast<std::size_t>(cycle_start - 1); k < powers.size(); ++k) {
    tail = tail.array() || powers[k].array();
  }
  for (Index x = 0; x < n; ++x) {
    for (Index y = 0; y < n; ++y) {
      for (Index z = 0; z < n; ++z) {
        if (tail(x, z) && !tail(y, z)) {
          rep.note = "tail support from state " + spec.space.labels[static_cast<std::size_t>(x)] +
                     " is not dominated by the tail support from state " +
                     spec.space.labels[static_cast<std::size_t>(y)];
          return rep;
        }
      }
    }
  }
  rep.m1_holds = true;
  rep.l0 = cycle_start;
  rep.n0 = cycle_start;
  return rep;
}

/// Default search bound for check_conditions.
inline int default_max_exponent(Index n) { return static_cast<int>(n * n + n); }

/// (1/n) Σ_{i=1}^{n} π0 π^(i-1).
inline Dist cesaro(const ChainSpec& spec, int n) {
  if (n < 1) throw std::invalid_argument("cesaro: n must be positive");
  Eigen::RowVectorXd cur = spec.pi0.probs().transpose();
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(cur.size());
  for (int i = 0; i < n; ++i) {
    acc += cur;
    cur = cur * spec.kernel.matrix();
  }
  return Dist((acc / static_cast<double>(n)).transpose());
}

struct Envelope {
  Vector lo;
  Vector hi;
};

struct FunctionalBound {
  double max = 0.0;
  Dist argmax;
};

namespace detail {

inline void require_indicator(Divergence model) {
  if (model != Divergence::ball_indicator && model != Divergence::ball_indicator_ac) {
    throw std::invalid_argument("envelope: model must be BallIndicator or BallIndicatorAC");
  }
}

}  // namespace detail

/// max Σ w_x ν_x over laws ν admitting an invariant kernel whose rows lie
/// within the robustness radius of the nominal rows. Minimization is the same
/// call with negated weights.
inline FunctionalBound robust_functional_bound(const ChainSpec& spec, Divergence model, const Vector& weights,
                                               const SolverOptions& opt = {}) {
  detail::require_indicator(model);
  const Index n = spec.size();
  if (weights.size() != n) throw std::invalid_argument("robust_functional_bound: dimension mismatch");

  ConvexProgram prog;
  detail::ChainProgramOptions o;
  o.radius = spec.radius;
  o.absolutely_continuous = model == Divergence::ball_indicator_ac;
  o.sigma_is_tau = true;
  const auto L = detail::build_chain_program(spec, o, prog);
  for (Index x = 0; x < n; ++x) prog.set_cost(L.nu + x, -weights(x));

  const ProgramSolution sol = prog.solve(opt);
  if (sol.status != SolveStatus::optimal) {
    throw SolverError(std::string("envelope linear program: ") + to_string(sol.status));
  }
  Vector nu = sol.x.segment(L.nu, n).cwiseMax(0.0);
  nu /= nu.sum();
  return {-sol.objective, Dist(std::move(nu))};
}

/// Coordinate-wise range [min ν_x, max ν_x] over the same feasible set; 2n
/// linear programs, spread over `threads` workers.
inline Envelope envelope(const ChainSpec& spec, Divergence model, unsigned threads = 1,
                         const SolverOptions& opt = {}) {
  detail::require_indicator(model);
  const Index n = spec.size();
  Envelope env{Vector::Zero(n), Vector::Zero(n)};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(2 * n));

  auto task = [&](Index k) {
    const Index x = k / 2;
    const bool upper = k % 2 == 0;
    try {
      Vector w = Vector::Zero(n);
      w(x) = upper ? 1.0 : -1.0;
      const auto fb = robust_functional_bound(spec, model, w, opt);
      if (upper) {
        env.hi(x) = std::clamp(fb.max, 0.0, 1.0);
      } else {
        env.lo(x) = std::clamp(-fb.max, 0.0, 1.0);
      }
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  };

  threads = std::max(1u, threads);
  if (threads == 1) {
    for (Index k = 0; k < 2 * n; ++k) task(k);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (Index k = t; k < 2 * n; k += threads) task(k);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return env;
}

}  // namespace robust_ldp
