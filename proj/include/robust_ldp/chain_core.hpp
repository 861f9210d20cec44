#pragma once

// Domain types for finite-state Markov chains on a metric space: the metric
// space itself, probability vectors, row-stochastic kernels and the
// robustness radius, together with validation and elementary operations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace robust_ldp {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Tolerance on Σp = 1 for simplex membership.
inline constexpr double kProbabilityTolerance = 1e-12;
/// A probability mass at or below this is treated as zero when deciding supports.
inline constexpr double kSupportThreshold = 1e-14;

/// Finite metric space: n labelled points and an n×n distance matrix.
struct MetricSpace {
  std::vector<std::string> labels;
  Matrix dist;

  Index size() const { return dist.rows(); }

  /// Discrete (0/1) metric on n points labelled "1".."n".
  static MetricSpace discrete(Index n) {
    MetricSpace s;
    s.dist = Matrix::Ones(n, n) - Matrix::Identity(n, n);
    for (Index i = 0; i < n; ++i) s.labels.push_back(std::to_string(i + 1));
    return s;
  }

  static MetricSpace from_matrix(Matrix d) {
    MetricSpace s;
    s.dist = std::move(d);
    for (Index i = 0; i < s.dist.rows(); ++i) s.labels.push_back(std::to_string(i + 1));
    return s;
  }

  double diameter() const { return dist.size() == 0 ? 0.0 : dist.maxCoeff(); }
};

/// Probability vector on the states of a MetricSpace.
class Dist {
 public:
  Dist() = default;
  explicit Dist(Vector p) : p_(std::move(p)) {}
  Dist(std::initializer_list<double> p) : p_(static_cast<Index>(p.size())) {
    Index i = 0;
    for (double v : p) p_(i++) = v;
  }

  static Dist dirac(Index n, Index at) {
    Vector p = Vector::Zero(n);
    p(at) = 1.0;
    return Dist(std::move(p));
  }
  static Dist uniform(Index n) { return Dist(Vector::Constant(n, 1.0 / static_cast<double>(n))); }

  Index size() const { return p_.size(); }
  double operator[](Index i) const { return p_(i); }
  const Vector& probs() const { return p_; }

  bool in_support(Index i) const { return p_(i) > kSupportThreshold; }

  friend bool operator==(const Dist& a, const Dist& b) {
    return a.p_.size() == b.p_.size() && a.p_ == b.p_;
  }

 private:
  Vector p_;
};

/// Row-stochastic matrix; row x is the next-step law from state x.
class Kernel {
 public:
  Kernel() = default;
  explicit Kernel(Matrix p) : p_(std::move(p)) {}
  Kernel(std::initializer_list<std::initializer_list<double>> rows) {
    const auto n = static_cast<Index>(rows.size());
    p_.resize(n, n);
    Index i = 0;
    for (const auto& row : rows) {
      if (static_cast<Index>(row.size()) != n) throw std::invalid_argument("kernel must be square");
      Index j = 0;
      for (double v : row) p_(i, j++) = v;
      ++i;
    }
  }

  static Kernel identity(Index n) { return Kernel(Matrix::Identity(n, n)); }

  Index size() const { return p_.rows(); }
  double operator()(Index x, Index y) const { return p_(x, y); }
  Dist row(Index x) const { return Dist(p_.row(x).transpose()); }
  const Matrix& matrix() const { return p_; }

  friend bool operator==(const Kernel& a, const Kernel& b) {
    return a.p_.rows() == b.p_.rows() && a.p_.cols() == b.p_.cols() && a.p_ == b.p_;
  }

 private:
  Matrix p_;
};

/// Nominal chain together with the Wasserstein-1 robustness radius.
struct ChainSpec {
  MetricSpace space;
  Dist pi0;
  Kernel kernel;
  double radius = 0.0;

  Index size() const { return space.size(); }
};

/// Closed Wasserstein-1 ball {ν : d_W(ν, center) ≤ kappa}.
struct BallSet {
  Dist center;
  double kappa = 0.0;
};

/// One broken invariant. Indices in `where` are 1-based.
struct Violation {
  std::string where;
  std::string what;
  double magnitude = 0.0;
};

namespace detail {

inline std::string fmt_index(std::initializer_list<Index> ix) {
  std::ostringstream os;
  os << '(';
  bool first = true;
  for (Index i : ix) {
    if (!first) os << ',';
    os << i + 1;
    first = false;
  }
  os << ')';
  return os.str();
}

inline void check_dist(const Vector& p, const std::string& where, std::vector<Violation>& out) {
  for (Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p(i)) || p(i) < 0.0) {
      out.push_back({where + "[" + std::to_string(i + 1) + "]", "negative or non-finite probability",
                     p(i)});
    }
  }
  const double s = p.sum();
  if (!(std::abs(s - 1.0) <= kProbabilityTolerance)) {
    out.push_back({where, "probabilities sum to " + std::to_string(s), s - 1.0});
  }
}

}  // namespace detail

/// Every invariant violation of the metric space, distributions and radius.
/// Empty iff the chain is valid.
inline std::vector<Violation> validate_chain(const ChainSpec& spec) {
  std::vector<Violation> out;
  const Index n = spec.space.size();
  const Matrix& d = spec.space.dist;

  if (n == 0) out.push_back({"space", "empty state space", 0.0});
  if (d.rows() != d.cols()) out.push_back({"space.dist", "distance matrix is not square", 0.0});
  if (static_cast<Index>(spec.space.labels.size()) != n) {
    out.push_back({"space.labels", "label count differs from the number of states",
                   static_cast<double>(spec.space.labels.size())});
  }
  if (spec.pi0.size() != n) {
    out.push_back({"pi0", "dimension mismatch", static_cast<double>(spec.pi0.size())});
  }
  if (spec.kernel.size() != n || spec.kernel.matrix().cols() != n) {
    out.push_back({"kernel", "dimension mismatch", static_cast<double>(spec.kernel.size())});
  }
  if (!(spec.radius >= 0.0) || !std::isfinite(spec.radius)) {
    out.push_back({"r", "radius must be finite and nonnegative", spec.radius});
  }
  if (!out.empty()) return out;

  for (Index i = 0; i < n; ++i) {
    if (d(i, i) != 0.0) out.push_back({"dist" + detail::fmt_index({i, i}), "nonzero diagonal", d(i, i)});
    for (Index j = i + 1; j < n; ++j) {
      if (d(i, j) != d(j, i)) {
        out.push_back({"dist" + detail::fmt_index({i, j}), "asymmetric", d(i, j) - d(j, i)});
      }
      if (!(d(i, j) > 0.0) || !std::isfinite(d(i, j))) {
        out.push_back({"dist" + detail::fmt_index({i, j}), "distinct points at nonpositive distance",
                       d(i, j)});
      }
    }
  }
  for (Index i = 0; i < n; ++i) {
    for (Index k = i + 1; k < n; ++k) {
      for (Index j = 0; j < n; ++j) {
        const double excess = d(i, k) - d(i, j) - d(j, k);
        if (excess > 1e-12 * std::max(1.0, d(i, k))) {
          out.push_back({"triangle" + detail::fmt_index({i, j, k}),
                         "dist[i][k] exceeds dist[i][j] + dist[j][k]", excess});
        }
      }
    }
  }

  detail::check_dist(spec.pi0.probs(), "pi0", out);
  for (Index x = 0; x < n; ++x) {
    detail::check_dist(spec.kernel.matrix().row(x).transpose(), "kernel[" + std::to_string(x + 1) + "]",
                       out);
  }
  return out;
}

/// k-fold composition of the kernel (k ≥ 1).
inline Kernel k_step_kernel(const Kernel& kernel, int k) {
  if (k < 1) throw std::invalid_argument("k_step_kernel: k must be at least 1");
  Matrix result = kernel.matrix();
  for (int i = 1; i < k; ++i) result = result * kernel.matrix();
  return Kernel(std::move(result));
}

/// Fraction of time the path spends in each of n states.
inline Dist empirical_measure(std::span<const Index> path, Index n) {
  if (path.empty()) throw std::invalid_argument("empty path");
  Vector counts = Vector::Zero(n);
  for (Index s : path) {
    if (s < 0 || s >= n) throw std::out_of_range("empirical_measure: state index out of range");
    counts(s) += 1.0;
  }
  return Dist(counts / static_cast<double>(path.size()));
}

/// L1 distance between two vectors.
inline double l1_distance(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().sum(); }

/// Rescales a vector whose sum is within kProbabilityTolerance of one.
inline Dist renormalized(const Vector& p) {
  const double s = p.sum();
  if (!(std::abs(s - 1.0) <= kProbabilityTolerance)) {
    throw std::invalid_argument("renormalized: sum " + std::to_string(s) + " is not within tolerance");
  }
  return Dist(p / s);
}

}  // namespace robust_ldp
