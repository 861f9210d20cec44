#pragma once

// Exact Wasserstein-1 distance on a finite metric space.
//
// The transportation problem is solved with the primal transportation simplex
// (MODI method): a spanning-tree basis of n + m - 1 cells, row/column
// potentials from the tree, entering cell by most negative reduced cost and
// leaving cell by minimum flow on the negative half of the cycle. All ties are
// broken by the smallest cell index so plans are reproducible. After an
// optimal basis is found the column potentials are c-transformed into a single
// 1-Lipschitz potential f with value = Σ f (mu - nu).

#include "robust_ldp/chain_core.hpp"

#include <limits>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

namespace robust_ldp {

/// Coupling of two distributions with its transport cost.
struct TransportPlan {
  Matrix gamma;
  double cost = 0.0;
};

/// Kantorovich potential, 1-Lipschitz with respect to the ground metric.
struct DualPotential {
  Vector f;
};

struct W1Result {
  double value = 0.0;
  TransportPlan plan;
  DualPotential potential;
  /// |primal - dual|.
  double duality_gap = 0.0;
};

namespace detail {

class TransportationSimplex {
 public:
  TransportationSimplex(const Matrix& cost, const Vector& supply, const Vector& demand)
      : c_(cost), m_(supply.size()), n_(demand.size()), flow_(Matrix::Zero(m_, n_)),
        basic_(m_, n_) {
    basic_.setConstant(false);
    north_west_corner(supply, demand);
  }

  void solve() {
    // Dantzig pricing; after a run of degenerate pivots fall back to Bland's
    // rule, which cannot cycle.
    int degenerate_run = 0;
    const long max_pivots = 50L * (m_ + n_) * (m_ + n_) + 1000;
    for (long it = 0; it < max_pivots; ++it) {
      compute_potentials();
      const bool bland = degenerate_run > 2 * (m_ + n_);
      Index ei = -1, ej = -1;
      double best = -1e-12 * std::max(1.0, c_.cwiseAbs().maxCoeff());
      for (Index i = 0; i < m_ && !(bland && ei >= 0); ++i) {
        for (Index j = 0; j < n_; ++j) {
          if (basic_(i, j)) continue;
          const double rc = c_(i, j) - u_(i) - v_(j);
          if (rc < best) {
            best = bland ? best : rc;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei < 0) return;
      degenerate_run = pivot(ei, ej) ? 0 : degenerate_run + 1;
    }
    throw std::runtime_error("transportation simplex: pivot limit exceeded");
  }

  const Matrix& flow() const { return flow_; }
  const Vector& u() const { return u_; }
  const Vector& v() const { return v_; }

 private:
  void north_west_corner(const Vector& supply, const Vector& demand) {
    Vector a = supply, b = demand;
    Index i = 0, j = 0;
    while (i < m_ && j < n_) {
      const double q = std::min(a(i), b(j));
      flow_(i, j) = q;
      basic_(i, j) = true;
      a(i) -= q;
      b(j) -= q;
      if (i == m_ - 1) {
        ++j;
      } else if (j == n_ - 1) {
        ++i;
      } else if (a(i) <= b(j)) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Basis tree nodes: rows 0..m-1, columns m..m+n-1.
  std::vector<std::vector<Index>> adjacency() const {
    std::vector<std::vector<Index>> adj(static_cast<std::size_t>(m_ + n_));
    for (Index i = 0; i < m_; ++i) {
      for (Index j = 0; j < n_; ++j) {
        if (!basic_(i, j)) continue;
        adj[static_cast<std::size_t>(i)].push_back(m_ + j);
        adj[static_cast<std::size_t>(m_ + j)].push_back(i);
      }
    }
    return adj;
  }

  void compute_potentials() {
    u_ = Vector::Zero(m_);
    v_ = Vector::Zero(n_);
    const auto adj = adjacency();
    std::vector<char> seen(static_cast<std::size_t>(m_ + n_), 0);
    std::queue<Index> q;
    q.push(0);
    seen[0] = 1;
    while (!q.empty()) {
      const Index node = q.front();
      q.pop();
      for (Index next : adj[static_cast<std::size_t>(node)]) {
        if (seen[static_cast<std::size_t>(next)]) continue;
        seen[static_cast<std::size_t>(next)] = 1;
        if (node < m_) {
          v_(next - m_) = c_(node, next - m_) - u_(node);
        } else {
          u_(next) = c_(next, node - m_) - v_(node - m_);
        }
        q.push(next);
      }
    }
  }

  // Returns false for a degenerate (zero-flow) pivot.
  bool pivot(Index ei, Index ej) {
    // Path in the basis tree from column node ej back to row node ei.
    const auto adj = adjacency();
    std::vector<Index> parent(static_cast<std::size_t>(m_ + n_), -1);
    std::queue<Index> q;
    q.push(ei);
    parent[static_cast<std::size_t>(ei)] = ei;
    while (!q.empty()) {
      const Index node = q.front();
      q.pop();
      if (node == m_ + ej) break;
      for (Index next : adj[static_cast<std::size_t>(node)]) {
        if (parent[static_cast<std::size_t>(next)] != -1) continue;
        parent[static_cast<std::size_t>(next)] = node;
        q.push(next);
      }
    }
    // Cells along the cycle: entering (+), then alternating -, +, ... walking
    // from column ej back to row ei.
    std::vector<std::pair<Index, Index>> cycle{{ei, ej}};
    for (Index node = m_ + ej; node != ei; node = parent[static_cast<std::size_t>(node)]) {
      const Index prev = parent[static_cast<std::size_t>(node)];
      if (node >= m_) {
        cycle.emplace_back(prev, node - m_);
      } else {
        cycle.emplace_back(node, prev - m_);
      }
    }
    Index leave = -1;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < cycle.size(); k += 2) {
      const auto [i, j] = cycle[k];
      const double f = flow_(i, j);
      const Index key = i * n_ + j;
      if (f < theta || (f == theta && key < leave)) {
        theta = f;
        leave = key;
      }
    }
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      const auto [i, j] = cycle[k];
      flow_(i, j) += (k % 2 == 0) ? theta : -theta;
    }
    const Index li = leave / n_, lj = leave % n_;
    flow_(li, lj) = 0.0;
    basic_(li, lj) = false;
    basic_(ei, ej) = true;
    return theta > 0.0;
  }

  const Matrix& c_;
  Index m_, n_;
  Matrix flow_;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> basic_;
  Vector u_, v_;
};

}  // namespace detail

/// Exact W1 distance between mu and nu with an optimal plan and a
/// 1-Lipschitz dual potential.
inline W1Result w1(const MetricSpace& space, const Dist& mu, const Dist& nu) {
  const Index n = space.size();
  if (mu.size() != n || nu.size() != n) throw std::invalid_argument("w1: dimension mismatch");

  // Balance the demand exactly so the tree solve is consistent.
  Vector supply = mu.probs().cwiseMax(0.0);
  Vector demand = nu.probs().cwiseMax(0.0);
  demand *= supply.sum() / demand.sum();

  detail::TransportationSimplex simplex(space.dist, supply, demand);
  simplex.solve();

  W1Result out;
  out.plan.gamma = simplex.flow().cwiseMax(0.0);
  out.plan.cost = space.dist.cwiseProduct(out.plan.gamma).sum();
  out.value = out.plan.cost;

  // c-transform of the column potentials: f(i) = min_j d(i,j) - v(j).
  Vector f(n);
  for (Index i = 0; i < n; ++i) f(i) = (space.dist.row(i).transpose() - simplex.v()).minCoeff();
  f.array() -= f.minCoeff();
  out.potential.f = f;
  const double dual = f.dot(mu.probs() - nu.probs());
  out.duality_gap = std::abs(out.value - dual);
  return out;
}

/// Closed-ball test with 1e-10 absolute slack.
inline bool ball_membership(const MetricSpace& space, const Dist& nu, const BallSet& ball) {
  return w1(space, nu, ball.center).value <= ball.kappa + 1e-10;
}

}  // namespace robust_ldp
