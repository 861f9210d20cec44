#pragma once

// Naive path simulation of the tail event {L_n ∈ A} and extraction of the
// empirical exponential decay rate.
//
// Every path owns its generator, seeded from (seed, length index, path index)
// through splitmix64, so hit counts do not depend on how paths are spread
// over worker threads.

#include "robust_ldp/chain_core.hpp"
#include "robust_ldp/transport.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace robust_ldp {

struct SimPlan {
  ChainSpec spec;
  Kernel play_kernel;
  BallSet ball;
  std::vector<int> lengths;
  std::uint64_t paths_per_length = 200000;
  std::uint64_t seed = 42;
};

struct RateEstimate {
  std::vector<int> lengths;
  std::vector<std::uint64_t> hits;
  std::vector<double> p_hat;
  std::uint64_t paths_per_length = 0;
  double slope = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;
  /// Lengths with at least one hit.
  std::vector<int> usable_lengths;
  /// Lengths that entered the least-squares fit.
  std::vector<int> fit_lengths;
  bool usable = false;
  std::string status;
};

struct RateVerdict {
  bool pass = false;
  std::string status;
  double analytic = 0.0;
  double slope = 0.0;
  double std_error = 0.0;
  double margin = 0.0;
};

/// Lengths with fewer hits are left out of the slope fit when enough others remain.
inline constexpr std::uint64_t kMinFitHits = 10;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t path_seed(std::uint64_t seed, std::uint64_t length_index, std::uint64_t path) {
  return splitmix64(splitmix64(splitmix64(seed) ^ length_index) ^ path);
}

inline double unit_uniform(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline Index sample_row(const std::vector<double>& cum, Index n, Index row, double u) {
  const auto* begin = cum.data() + row * n;
  const auto* it = std::upper_bound(begin, begin + n, u);
  // Round-off can leave the last cumulative entry just below 1.
  if (it == begin + n) --it;
  while (it != begin && *it == *(it - 1)) --it;
  return static_cast<Index>(it - begin);
}

inline std::vector<double> cumulative_rows(const Matrix& p) {
  const Index n = p.cols();
  std::vector<double> cum(static_cast<std::size_t>(p.rows() * n));
  for (Index x = 0; x < p.rows(); ++x) {
    double acc = 0.0;
    for (Index y = 0; y < n; ++y) {
      acc += p(x, y);
      cum[static_cast<std::size_t>(x * n + y)] = acc;
    }
  }
  return cum;
}

inline void validate_plan(const SimPlan& plan) {
  const auto problems = validate_chain(plan.spec);
  if (!problems.empty()) throw std::invalid_argument("simulate_paths: " + problems.front().where + ": " + problems.front().what);
  const Index n = plan.spec.size();
  if (plan.play_kernel.size() != n || plan.play_kernel.matrix().cols() != n) {
    throw std::invalid_argument("simulate_paths: play kernel dimension mismatch");
  }
  for (Index x = 0; x < n; ++x) {
    const auto row = plan.play_kernel.matrix().row(x);
    if (row.minCoeff() < -kProbabilityTolerance || std::abs(row.sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("simulate_paths: play kernel row " + std::to_string(x + 1) + " is not a distribution");
    }
  }
  if (plan.ball.center.size() != n) throw std::invalid_argument("simulate_paths: ball dimension mismatch");
  if (plan.lengths.empty()) throw std::invalid_argument("simulate_paths: no lengths");
  if (plan.lengths.front() < 1) throw std::invalid_argument("simulate_paths: lengths must be positive");
  for (std::size_t i = 1; i < plan.lengths.size(); ++i) {
    if (plan.lengths[i] <= plan.lengths[i - 1]) throw std::invalid_argument("simulate_paths: lengths must increase strictly");
  }
  if (plan.paths_per_length < 1) throw std::invalid_argument("simulate_paths: need at least one path per length");
}

/// Hits among paths [first, last) of one length. Ball membership depends on
/// the visit counts only, so it is memoized per count vector.
inline std::uint64_t count_hits(const SimPlan& plan, const std::vector<double>& cum, const std::vector<double>& cum0,
                                std::size_t length_index, std::uint64_t first, std::uint64_t last) {
  const Index n = plan.spec.size();
  const int len = plan.lengths[length_index];
  std::map<std::vector<int>, bool> memo;
  std::vector<int> counts(static_cast<std::size_t>(n));
  std::uint64_t hits = 0;
  for (std::uint64_t p = first; p < last; ++p) {
    std::mt19937_64 gen(path_seed(plan.seed, length_index, p));
    std::fill(counts.begin(), counts.end(), 0);
    Index x = sample_row(cum0, n, 0, unit_uniform(gen));
    ++counts[static_cast<std::size_t>(x)];
    for (int step = 1; step < len; ++step) {
      x = sample_row(cum, n, x, unit_uniform(gen));
      ++counts[static_cast<std::size_t>(x)];
    }
    auto it = memo.find(counts);
    if (it == memo.end()) {
      Vector l(n);
      for (Index i = 0; i < n; ++i) l(i) = counts[static_cast<std::size_t>(i)] / static_cast<double>(len);
      it = memo.emplace(counts, ball_membership(plan.spec.space, Dist(std::move(l)), plan.ball)).first;
    }
    hits += it->second ? 1 : 0;
  }
  return hits;
}

/// Least-squares fit of ln p̂ = a − slope·n. The standard error is the
/// residual-based one, floored by the binomial sampling noise propagated
/// through the fit.
inline void fit_slope(RateEstimate& est, const std::vector<std::size_t>& idx) {
  const auto k = static_cast<double>(idx.size());
  double mn = 0.0, my = 0.0;
  for (auto i : idx) {
    mn += est.lengths[i];
    my += std::log(est.p_hat[i]);
  }
  mn /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (auto i : idx) {
    const double dx = est.lengths[i] - mn;
    sxx += dx * dx;
    sxy += dx * (std::log(est.p_hat[i]) - my);
  }
  const double b = sxy / sxx;
  est.slope = b == 0.0 ? 0.0 : -b;
  est.intercept = my - b * mn;

  double sse = 0.0, sampling = 0.0;
  for (auto i : idx) {
    const double res = std::log(est.p_hat[i]) - (est.intercept + b * est.lengths[i]);
    sse += res * res;
    const double w = (est.lengths[i] - mn) / sxx;
    const double p = est.p_hat[i];
    sampling += w * w * (1.0 - p) / (static_cast<double>(est.paths_per_length) * p);
  }
  const double residual_var = idx.size() > 2 ? sse / (k - 2.0) / sxx : 0.0;
  est.std_error = std::sqrt(std::max(residual_var, sampling));
}

}  // namespace detail

/// Simulates paths_per_length paths for every length and fits the decay rate.
/// Paths start from π0 and a path of length n visits n states x_1..x_n.
inline RateEstimate simulate_paths(const SimPlan& plan, unsigned threads = 1) {
  detail::validate_plan(plan);
  const auto cum = detail::cumulative_rows(plan.play_kernel.matrix());
  const auto cum0 = detail::cumulative_rows(plan.spec.pi0.probs().transpose());
  threads = std::max(1u, threads);

  RateEstimate est;
  est.lengths = plan.lengths;
  est.paths_per_length = plan.paths_per_length;
  const std::uint64_t total = plan.paths_per_length;
  for (std::size_t li = 0; li < plan.lengths.size(); ++li) {
    std::vector<std::uint64_t> partial(threads, 0);
    if (threads == 1) {
      partial[0] = detail::count_hits(plan, cum, cum0, li, 0, total);
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        const std::uint64_t first = total * t / threads;
        const std::uint64_t last = total * (t + 1) / threads;
        pool.emplace_back([&, t, first, last] { partial[t] = detail::count_hits(plan, cum, cum0, li, first, last); });
      }
      for (auto& th : pool) th.join();
    }
    std::uint64_t hits = 0;
    for (auto h : partial) hits += h;
    est.hits.push_back(hits);
    est.p_hat.push_back(static_cast<double>(hits) / static_cast<double>(total));
  }

  std::vector<std::size_t> nonzero, strong;
  for (std::size_t i = 0; i < est.lengths.size(); ++i) {
    if (est.hits[i] > 0) {
      nonzero.push_back(i);
      est.usable_lengths.push_back(est.lengths[i]);
    }
    if (est.hits[i] >= kMinFitHits) strong.push_back(i);
  }
  if (nonzero.empty()) {
    est.status = "no path hit the target set at any length";
    return est;
  }
  const auto& idx = strong.size() >= 2 ? strong : nonzero;
  if (idx.size() < 2) {
    est.status = "hits at fewer than two lengths; slope cannot be fitted";
    return est;
  }
  for (auto i : idx) est.fit_lengths.push_back(est.lengths[i]);
  detail::fit_slope(est, idx);
  est.usable = true;
  est.status = strong.size() >= 2 ? "ok" : "fitted on lengths with fewer than 10 hits";
  return est;
}

/// Pass iff |slope − analytic| ≤ rel_tol·analytic + 2·stderr; for a zero
/// analytic rate the margin is 2·stderr + 1e-3.
inline RateVerdict compare_rates(double analytic, const RateEstimate& estimate, double rel_tol) {
  RateVerdict v;
  v.analytic = analytic;
  v.slope = estimate.slope;
  v.std_error = estimate.std_error;
  if (!estimate.usable) {
    v.status = "insufficient data";
    return v;
  }
  v.margin = analytic > 0.0 ? rel_tol * analytic + 2.0 * estimate.std_error : 2.0 * estimate.std_error + 1e-3;
  v.pass = std::abs(estimate.slope - analytic) <= v.margin;
  v.status = v.pass ? "pass" : "fail";
  return v;
}

/// Shortest decimal text that reads back to the same double.
inline std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// CSV series with header "n,hits,p_hat,ln_p_hat"; ln 0 is written as -inf.
inline void write_plot_csv(std::ostream& os, const RateEstimate& est) {
  os << "n,hits,p_hat,ln_p_hat\n";
  for (std::size_t i = 0; i < est.lengths.size(); ++i) {
    os << est.lengths[i] << ',' << est.hits[i] << ',' << shortest(est.p_hat[i]) << ','
       << (est.hits[i] == 0 ? std::string("-inf") : shortest(std::log(est.p_hat[i]))) << '\n';
  }
}

}  // namespace robust_ldp
