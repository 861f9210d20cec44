#pragma once

// Small dense convex programs of the form
//
//   minimize   Σ c_i x_i + Σ τ ln(τ/σ) + Σ -w ln σ
//   subject to A x = b,  x ≥ 0
//
// where every relative-entropy pair (τ, σ) and every log term refers to
// variables of x. This covers the relative-entropy projections onto
// Wasserstein balls, the joint rate programs over (τ, σ) and, with no
// nonlinear terms, plain linear programs.
//
// Solution strategy:
//  1. Presolve. Propagates structurally forced values to a fixpoint: a row
//     whose free coefficients share a sign and whose residual right-hand side
//     is zero forces all those variables to zero; a row with a single free
//     variable fixes it; σ = 0 forces its paired τ = 0. A fixed τ > 0 facing a
//     fixed σ = 0 (or a log term on σ = 0) makes the objective +∞.
//  2. Redundant rows are dropped by a rank-revealing QR.
//  3. Infeasible-start primal-dual interior point with Mehrotra
//     predictor-corrector on the reduced problem. The Newton system is
//     reduced to normal equations A W⁻¹ Aᵀ with W = ∇²f + X⁻¹Z, which is
//     block diagonal with 1×1 and 2×2 blocks.
//
// The extended-value convention 0 ln(0/σ) = 0 is used throughout.

#include "robust_ldp/chain_core.hpp"

#include <Eigen/QR>
#include <Eigen/Sparse>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace robust_ldp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class SolveStatus {
  optimal,
  /// The constraints admit no point, or every feasible point has objective +∞.
  infeasible,
  not_converged,
};

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::not_converged: return "not_converged";
  }
  return "unknown";
}

struct SolverOptions {
  int max_iterations = 10000;
  double primal_tolerance = 1e-10;
  double dual_tolerance = 1e-10;
  double gap_tolerance = 1e-12;
  /// Magnitude below which presolve treats a residual right-hand side as zero.
  double presolve_tolerance = 1e-12;
  /// Scaled KKT error at which the best iterate is accepted when the
  /// iteration stops making progress.
  double acceptable_tolerance = 1e-9;
};

struct ProgramSolution {
  SolveStatus status = SolveStatus::not_converged;
  Vector x;
  /// Objective value; +∞ when infeasible.
  double objective = kInfinity;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  int iterations = 0;

  double kkt_residual() const { return std::max({primal_residual, dual_residual, complementarity}); }
  bool finite() const { return status == SolveStatus::optimal && std::isfinite(objective); }
};

class ConvexProgram {
 public:
  struct Row {
    std::vector<std::pair<Index, double>> terms;
    double rhs = 0.0;
  };

  /// Adds a nonnegative variable with linear cost.
  Index add_variable(double cost = 0.0) {
    cost_.push_back(cost);
    fixed_.emplace_back();
    return static_cast<Index>(cost_.size()) - 1;
  }

  Index add_variables(Index count, double cost = 0.0) {
    const Index first = num_variables();
    for (Index i = 0; i < count; ++i) add_variable(cost);
    return first;
  }

  /// Equality Σ coef·x = rhs. Zero coefficients are dropped.
  void add_equality(std::vector<std::pair<Index, double>> terms, double rhs) {
    Row row;
    row.rhs = rhs;
    for (const auto& [var, coef] : terms) {
      check_var(var);
      if (coef != 0.0) row.terms.emplace_back(var, coef);
    }
    rows_.push_back(std::move(row));
  }

  /// Adds τ ln(τ/σ) to the objective.
  void add_relative_entropy(Index tau, Index sigma) {
    check_var(tau);
    check_var(sigma);
    claim(tau);
    claim(sigma);
    pairs_.emplace_back(tau, sigma);
  }

  /// Adds -weight·ln σ (weight ≥ 0) to the objective.
  void add_neg_log(double weight, Index sigma) {
    check_var(sigma);
    if (weight < 0.0) throw std::invalid_argument("add_neg_log: negative weight");
    if (weight == 0.0) return;
    claim(sigma);
    logs_.emplace_back(weight, sigma);
  }

  void set_cost(Index var, double cost) {
    check_var(var);
    cost_[static_cast<std::size_t>(var)] = cost;
  }

  void add_constant(double c) { constant_ += c; }

  void fix(Index var, double value) {
    check_var(var);
    if (value < 0.0) throw std::invalid_argument("fix: negative value");
    fixed_[static_cast<std::size_t>(var)] = value;
  }

  Index num_variables() const { return static_cast<Index>(cost_.size()); }
  Index num_rows() const { return static_cast<Index>(rows_.size()); }
  const std::vector<Row>& rows() const { return rows_; }

  /// Objective at x with the 0 ln 0 = 0 convention; +∞ outside the domain.
  double objective(const Vector& x) const {
    double f = constant_;
    for (std::size_t i = 0; i < cost_.size(); ++i) f += cost_[i] * x(static_cast<Index>(i));
    for (const auto& [t, s] : pairs_) f += xlogy_ratio(x(t), x(s));
    for (const auto& [w, s] : logs_) f += x(s) > 0.0 ? -w * std::log(x(s)) : kInfinity;
    return f;
  }

  /// Max-norm of A x - b over all rows.
  double primal_residual(const Vector& x) const {
    double r = 0.0;
    for (const auto& row : rows_) {
      double s = -row.rhs;
      for (const auto& [var, coef] : row.terms) s += coef * x(var);
      r = std::max(r, std::abs(s));
    }
    return r;
  }

  ProgramSolution solve(const SolverOptions& opt = {}) const;

 private:
  friend class ProgramSolver;

  static double xlogy_ratio(double t, double s) {
    if (t <= 0.0) return 0.0;
    if (s <= 0.0) return kInfinity;
    return t * std::log(t / s);
  }

  void check_var(Index v) const {
    if (v < 0 || v >= num_variables()) throw std::out_of_range("ConvexProgram: variable index");
  }

  void claim(Index v) {
    if (static_cast<std::size_t>(v) >= nonlinear_.size()) nonlinear_.resize(cost_.size(), 0);
    if (nonlinear_[static_cast<std::size_t>(v)]) {
      throw std::invalid_argument("ConvexProgram: variable already used in a nonlinear term");
    }
    nonlinear_[static_cast<std::size_t>(v)] = 1;
  }

  std::vector<double> cost_;
  std::vector<std::optional<double>> fixed_;
  std::vector<Row> rows_;
  std::vector<std::pair<Index, Index>> pairs_;
  std::vector<std::pair<double, Index>> logs_;
  std::vector<char> nonlinear_;
  double constant_ = 0.0;
};

class ProgramSolver {
 public:
  ProgramSolver(const ConvexProgram& p, const SolverOptions& opt) : p_(p), opt_(opt) {}

  ProgramSolution run() {
    ProgramSolution out;
    const Index nv = p_.num_variables();
    value_ = Vector::Zero(nv);
    fixed_.assign(static_cast<std::size_t>(nv), 0);
    for (Index i = 0; i < nv; ++i) {
      if (const auto& f = p_.fixed_[static_cast<std::size_t>(i)]) {
        fixed_[static_cast<std::size_t>(i)] = 1;
        value_(i) = *f;
      }
    }
    if (!presolve()) {
      out.status = SolveStatus::infeasible;
      out.x = value_;
      return out;
    }
    build_reduced();
    if (!drop_redundant_rows()) {
      out.status = SolveStatus::infeasible;
      out.x = value_;
      return out;
    }

    if (free_.empty()) {
      out.status = SolveStatus::optimal;
    } else {
      out.status = interior_point(out);
    }
    out.x = value_;
    out.primal_residual = std::max(out.primal_residual, p_.primal_residual(value_));
    out.objective = p_.objective(value_);
    if (out.status == SolveStatus::optimal && !std::isfinite(out.objective)) {
      out.status = SolveStatus::infeasible;
    }
    return out;
  }

 private:
  bool is_fixed(Index v) const { return fixed_[static_cast<std::size_t>(v)] != 0; }

  void set_fixed(Index v, double value) {
    fixed_[static_cast<std::size_t>(v)] = 1;
    value_(v) = std::max(value, 0.0);
  }

  // Returns false when the constraints are structurally infeasible or the
  // objective is +∞ on the whole feasible set.
  bool presolve() {
    const double tol = opt_.presolve_tolerance;
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& row : p_.rows_) {
        double rhs = row.rhs;
        Index free_count = 0, last = -1;
        bool pos = false, neg = false;
        double last_coef = 0.0;
        double scale = std::abs(row.rhs);
        for (const auto& [var, coef] : row.terms) {
          if (is_fixed(var)) {
            rhs -= coef * value_(var);
            scale = std::max(scale, std::abs(coef * value_(var)));
          } else {
            ++free_count;
            last = var;
            last_coef = coef;
            (coef > 0.0 ? pos : neg) = true;
          }
        }
        const double zero = tol * std::max(1.0, scale);
        if (free_count == 0) {
          if (std::abs(rhs) > zero) return false;
          continue;
        }
        if (free_count == 1) {
          const double v = rhs / last_coef;
          if (v < -zero) return false;
          set_fixed(last, v);
          changed = true;
          continue;
        }
        if (pos != neg) {
          const double signed_rhs = pos ? rhs : -rhs;
          if (signed_rhs < -zero) return false;
          if (signed_rhs <= zero) {
            for (const auto& [var, coef] : row.terms) {
              if (!is_fixed(var)) set_fixed(var, 0.0);
            }
            changed = true;
          }
        }
      }
      for (const auto& [t, s] : p_.pairs_) {
        if (is_fixed(s) && value_(s) <= 0.0) {
          if (!is_fixed(t)) {
            set_fixed(t, 0.0);
            changed = true;
          } else if (value_(t) > 0.0) {
            return false;
          }
        }
      }
      for (const auto& [w, s] : p_.logs_) {
        if (is_fixed(s) && value_(s) <= 0.0) return false;
      }
    }
    return true;
  }

  void build_reduced() {
    const Index nv = p_.num_variables();
    position_.assign(static_cast<std::size_t>(nv), -1);
    free_.clear();
    for (Index i = 0; i < nv; ++i) {
      if (!is_fixed(i)) {
        position_[static_cast<std::size_t>(i)] = static_cast<Index>(free_.size());
        free_.push_back(i);
      }
    }
    const auto m = static_cast<Index>(free_.size());
    c_ = Vector::Zero(m);
    for (Index k = 0; k < m; ++k) c_(k) = p_.cost_[static_cast<std::size_t>(free_[static_cast<std::size_t>(k)])];

    // Nonlinear terms in reduced coordinates. A pair whose σ is fixed positive
    // becomes τ ln τ − τ ln σ₀; a pair whose τ is fixed positive becomes a log
    // term on σ; pairs with τ fixed at zero vanish.
    kind_.assign(static_cast<std::size_t>(m), Term::linear);
    partner_.assign(static_cast<std::size_t>(m), -1);
    weight_ = Vector::Zero(m);
    for (const auto& [t, s] : p_.pairs_) {
      const bool tf = is_fixed(t), sf = is_fixed(s);
      if (!tf && !sf) {
        const Index rt = pos(t), rs = pos(s);
        kind_[static_cast<std::size_t>(rt)] = Term::pair_tau;
        kind_[static_cast<std::size_t>(rs)] = Term::pair_sigma;
        partner_[static_cast<std::size_t>(rt)] = rs;
        partner_[static_cast<std::size_t>(rs)] = rt;
      } else if (!tf && sf) {
        const Index rt = pos(t);
        kind_[static_cast<std::size_t>(rt)] = Term::xlogx;
        c_(rt) -= std::log(value_(s));
      } else if (tf && !sf && value_(t) > 0.0) {
        const Index rs = pos(s);
        kind_[static_cast<std::size_t>(rs)] = Term::neglog;
        weight_(rs) = value_(t);
      }
    }
    for (const auto& [w, s] : p_.logs_) {
      if (!is_fixed(s)) {
        const Index rs = pos(s);
        kind_[static_cast<std::size_t>(rs)] = Term::neglog;
        weight_(rs) = w;
      }
    }

    std::vector<Eigen::Triplet<double>> trip;
    std::vector<double> rhs;
    for (const auto& row : p_.rows_) {
      double r = row.rhs;
      bool any = false;
      for (const auto& [var, coef] : row.terms) {
        if (is_fixed(var)) {
          r -= coef * value_(var);
        } else {
          trip.emplace_back(static_cast<Index>(rhs.size()), pos(var), coef);
          any = true;
        }
      }
      if (any) rhs.push_back(r);
    }
    A_.resize(static_cast<Index>(rhs.size()), m);
    A_.setFromTriplets(trip.begin(), trip.end());
    b_ = Eigen::Map<const Vector>(rhs.data(), static_cast<Index>(rhs.size()));
  }

  bool drop_redundant_rows() {
    if (A_.rows() == 0) return true;
    const Matrix dense = Matrix(A_);
    Eigen::ColPivHouseholderQR<Matrix> qr(dense.transpose());
    qr.setThreshold(1e-10);
    const Index rank = qr.rank();
    if (rank == A_.rows()) return true;
    std::vector<Index> keep;
    for (Index k = 0; k < rank; ++k) keep.push_back(qr.colsPermutation().indices()(k));
    std::sort(keep.begin(), keep.end());
    // Consistency: the least-norm solution of the kept rows must satisfy all.
    Matrix Ak(static_cast<Index>(keep.size()), dense.cols());
    Vector bk(static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
      Ak.row(static_cast<Index>(k)) = dense.row(keep[k]);
      bk(static_cast<Index>(k)) = b_(keep[k]);
    }
    const Vector xls = Ak.transpose() * (Ak * Ak.transpose()).ldlt().solve(bk);
    if ((dense * xls - b_).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, b_.cwiseAbs().maxCoeff())) {
      return false;
    }
    A_ = Ak.sparseView();
    b_ = bk;
    return true;
  }

  Index pos(Index v) const { return position_[static_cast<std::size_t>(v)]; }

  Vector gradient(const Vector& x) const {
    Vector g = c_;
    for (Index k = 0; k < x.size(); ++k) {
      switch (kind_[static_cast<std::size_t>(k)]) {
        case Term::pair_tau: g(k) += std::log(x(k) / x(partner_[static_cast<std::size_t>(k)])) + 1.0; break;
        case Term::pair_sigma: g(k) -= x(partner_[static_cast<std::size_t>(k)]) / x(k); break;
        case Term::xlogx: g(k) += std::log(x(k)) + 1.0; break;
        case Term::neglog: g(k) -= weight_(k) / x(k); break;
        case Term::linear: break;
      }
    }
    return g;
  }

  // Inverse of W = ∇²f(x) + diag(z/x), stored as a sparse block-diagonal matrix.
  Eigen::SparseMatrix<double> inverse_scaling(const Vector& x, const Vector& z) const {
    const Index m = x.size();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(2 * m));
    for (Index k = 0; k < m; ++k) {
      const double d = z(k) / x(k);
      switch (kind_[static_cast<std::size_t>(k)]) {
        case Term::pair_tau: {
          const Index s = partner_[static_cast<std::size_t>(k)];
          const double t = x(k), sg = x(s);
          const double ds = z(s) / sg;
          const double a = 1.0 / t + d;
          const double c = t / (sg * sg) + ds;
          const double off = -1.0 / sg;
          // a·c − off² with the 1/σ² terms cancelled analytically.
          const double det = ds / t + d * t / (sg * sg) + d * ds;
          trip.emplace_back(k, k, c / det);
          trip.emplace_back(s, s, a / det);
          trip.emplace_back(k, s, -off / det);
          trip.emplace_back(s, k, -off / det);
          break;
        }
        case Term::pair_sigma: break;
        case Term::xlogx: trip.emplace_back(k, k, 1.0 / (1.0 / x(k) + d)); break;
        case Term::neglog: trip.emplace_back(k, k, 1.0 / (weight_(k) / (x(k) * x(k)) + d)); break;
        case Term::linear: trip.emplace_back(k, k, 1.0 / d); break;
      }
    }
    Eigen::SparseMatrix<double> w(m, m);
    w.setFromTriplets(trip.begin(), trip.end());
    return w;
  }

  static double step_to_boundary(const Vector& v, const Vector& dv) {
    double a = 1.0;
    for (Index k = 0; k < v.size(); ++k) {
      if (dv(k) < 0.0) a = std::min(a, -v(k) / dv(k));
    }
    return a;
  }

  SolveStatus interior_point(ProgramSolution& out) {
    const Index m = static_cast<Index>(free_.size());
    const Index k = A_.rows();
    const Eigen::SparseMatrix<double> At = A_.transpose();

    // Start from the least-norm solution of A x = b pushed into the interior.
    Vector x(m);
    if (k > 0) {
      const Matrix Ad = Matrix(A_);
      const Vector xls = Ad.transpose() * (Ad * Ad.transpose()).ldlt().solve(b_);
      const double shift = std::max(0.1 * xls.cwiseAbs().maxCoeff(), 1e-2) ;
      x = xls.cwiseMax(0.0).array() + shift;
    } else {
      x.setConstant(1.0);
    }
    Vector y = Vector::Zero(k);
    Vector z = Vector::Ones(m);

    const double bscale = 1.0 + (k > 0 ? b_.cwiseAbs().maxCoeff() : 0.0);
    const double cscale = 1.0 + c_.cwiseAbs().maxCoeff();

    Vector rp, rd, g;
    int stalls = 0;
    // Best iterate by scaled KKT error, returned if later iterates degrade.
    double best_err = kInfinity;
    int last_progress = 0;
    Vector best_x;
    ProgramSolution best_stats;
    for (int it = 0; it < opt_.max_iterations; ++it) {
      out.iterations = it;
      g = gradient(x);
      rp = A_ * x - b_;
      rd = g - At * y - z;
      const double mu = x.dot(z) / static_cast<double>(m);
      out.primal_residual = rp.size() ? rp.cwiseAbs().maxCoeff() : 0.0;
      out.dual_residual = rd.cwiseAbs().maxCoeff();
      out.complementarity = mu;
      if (out.primal_residual <= opt_.primal_tolerance * bscale &&
          out.dual_residual <= opt_.dual_tolerance * cscale && mu <= opt_.gap_tolerance) {
        write_back(x);
        return SolveStatus::optimal;
      }
      const double err = std::max({out.primal_residual / bscale, out.dual_residual / cscale, mu});
      if (err < best_err) {
        if (err < 0.5 * best_err) last_progress = it;
        best_err = err;
        best_x = x;
        best_stats = out;
      }
      if (it - last_progress > 200) break;
      if (!x.allFinite() || !z.allFinite() || err > 1e6 * best_err) break;

      const Eigen::SparseMatrix<double> Winv = inverse_scaling(x, z);
      Matrix M = Matrix(A_ * Winv * At);
      // Relative diagonal shift: rows whose variables are vanishing keep
      // their own scale.
      M.diagonal().array() *= 1.0 + 1e-14;
      Eigen::LDLT<Matrix> ldlt(M);

      auto direction = [&](const Vector& rc, Vector& dx, Vector& dy, Vector& dz) {
        const Vector t = rd + rc.cwiseQuotient(x);
        if (k > 0) {
          const Vector rhs = -rp + A_ * (Winv * t);
          dy = ldlt.solve(rhs);
          for (int refine = 0; refine < 3; ++refine) {
            const Vector res = rhs - A_ * (Winv * (At * dy));
            dy += ldlt.solve(res);
          }
          dx = Winv * (At * dy - t);
        } else {
          dy = Vector::Zero(0);
          dx = -(Winv * t);
        }
        dz = -(rc + z.cwiseProduct(dx)).cwiseQuotient(x);
      };

      // Predictor.
      Vector dx, dy, dz;
      Vector rc = x.cwiseProduct(z);
      direction(rc, dx, dy, dz);
      const double a_aff = std::min(step_to_boundary(x, dx), step_to_boundary(z, dz));
      const double mu_aff = (x + a_aff * dx).dot(z + a_aff * dz) / static_cast<double>(m);
      const double sigma = std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3.0), 0.0, 1.0);

      // Corrector.
      rc = x.cwiseProduct(z) + dx.cwiseProduct(dz);
      rc.array() -= sigma * mu;
      direction(rc, dx, dy, dz);
      if (!dx.allFinite() || !dz.allFinite() || !dy.allFinite()) break;
      double alpha = 0.995 * std::min(step_to_boundary(x, dx), step_to_boundary(z, dz));
      alpha = std::min(alpha, 1.0);

      // Backtrack on the scaled residual norm; the linearization of ln(τ/σ)
      // is poor once a pair heads to zero at uneven rates.
      auto merit = [&](const Vector& xt, const Vector& yt, const Vector& zt) {
        const Vector rpt = A_ * xt - b_;
        const Vector rdt = gradient(xt) - At * yt - zt;
        const double pr = rpt.size() ? rpt.cwiseAbs().maxCoeff() : 0.0;
        return pr / bscale + rdt.cwiseAbs().maxCoeff() / cscale + xt.dot(zt) / static_cast<double>(m);
      };
      const double phi0 = out.primal_residual / bscale + out.dual_residual / cscale + mu;
      for (int back = 0; back < 30; ++back) {
        const double phi = merit(x + alpha * dx, y + alpha * dy, z + alpha * dz);
        if (std::isfinite(phi) && phi <= (1.0 - 1e-4 * alpha) * phi0) break;
        alpha *= 0.5;
      }

      x += alpha * dx;
      y += alpha * dy;
      z += alpha * dz;
      // Keep strictly interior despite rounding.
      x = x.cwiseMax(1e-300);
      z = z.cwiseMax(1e-300);

      stalls = alpha < 1e-10 ? stalls + 1 : 0;
      if (stalls > 50) break;
    }
    if (best_x.size() == m) {
      x = best_x;
      out.primal_residual = best_stats.primal_residual;
      out.dual_residual = best_stats.dual_residual;
      out.complementarity = best_stats.complementarity;
    }
    write_back(x);
    return best_err <= opt_.acceptable_tolerance ? SolveStatus::optimal : SolveStatus::not_converged;
  }

  void write_back(const Vector& x) {
    for (std::size_t k = 0; k < free_.size(); ++k) value_(free_[k]) = x(static_cast<Index>(k));
  }

  enum class Term { linear, pair_tau, pair_sigma, xlogx, neglog };

  const ConvexProgram& p_;
  SolverOptions opt_;
  Vector value_;
  std::vector<char> fixed_;
  std::vector<Index> position_;
  std::vector<Index> free_;
  std::vector<Term> kind_;
  std::vector<Index> partner_;
  Vector weight_;
  Vector c_;
  Eigen::SparseMatrix<double> A_;
  Vector b_;
};

inline ProgramSolution ConvexProgram::solve(const SolverOptions& opt) const {
  return ProgramSolver(*this, opt).run();
}

}  // namespace robust_ldp
