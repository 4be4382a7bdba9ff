#pragma once

// Exact tabular MDP representation and solvers.
//
// Layout conventions (shared with the JSON format):
//   transition: row-major (state, action, next_state)
//   reward:     row-major (state, action)
//   policy:     row-major (state, action)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "robustcoop/errors.hpp"

namespace robustcoop {

inline constexpr double kProbabilityTolerance = 1e-9;

namespace detail {

inline void check_distribution(std::span<const double> row, const std::string& what) {
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ModelError(what + ": negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance)
    throw ModelError(what + ": row sums to " + std::to_string(sum));
}

}  // namespace detail

class TabularMdp {
 public:
  TabularMdp(std::size_t n_states, std::size_t n_actions, std::vector<double> transition,
             std::vector<double> reward, double discount, std::vector<double> initial_dist)
      : n_states_(n_states),
        n_actions_(n_actions),
        transition_(std::move(transition)),
        reward_(std::move(reward)),
        discount_(discount),
        initial_dist_(std::move(initial_dist)) {
    validate();
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double discount() const noexcept { return discount_; }

  double transition(std::size_t s, std::size_t a, std::size_t next) const {
    return transition_[(s * n_actions_ + a) * n_states_ + next];
  }
  std::span<const double> transition_row(std::size_t s, std::size_t a) const {
    return {transition_.data() + (s * n_actions_ + a) * n_states_, n_states_};
  }
  double reward(std::size_t s, std::size_t a) const { return reward_[s * n_actions_ + a]; }

  const std::vector<double>& transitions() const noexcept { return transition_; }
  const std::vector<double>& rewards() const noexcept { return reward_; }
  const std::vector<double>& initial_dist() const noexcept { return initial_dist_; }

  /// max(0, largest reward).
  double r_max() const {
    double m = 0.0;
    for (double r : reward_) m = std::max(m, r);
    return m;
  }
  double min_reward() const { return *std::min_element(reward_.begin(), reward_.end()); }

  TabularMdp with_rewards(std::vector<double> reward) const {
    return {n_states_, n_actions_, transition_, std::move(reward), discount_, initial_dist_};
  }
  TabularMdp with_transitions(std::vector<double> transition) const {
    return {n_states_, n_actions_, std::move(transition), reward_, discount_, initial_dist_};
  }
  TabularMdp with_initial_dist(std::vector<double> initial_dist) const {
    return {n_states_, n_actions_, transition_, reward_, discount_, std::move(initial_dist)};
  }
  /// Same MDP with every reward increased by `offset`.
  TabularMdp shifted(double offset) const {
    std::vector<double> r = reward_;
    for (double& x : r) x += offset;
    return with_rewards(std::move(r));
  }

 private:
  void validate() const {
    if (n_states_ == 0 || n_actions_ == 0) throw ModelError("MDP needs at least one state and action");
    if (transition_.size() != n_states_ * n_actions_ * n_states_)
      throw DimensionError("transition tensor has wrong size");
    if (reward_.size() != n_states_ * n_actions_) throw DimensionError("reward table has wrong size");
    if (initial_dist_.size() != n_states_) throw DimensionError("initial distribution has wrong size");
    if (!(discount_ >= 0.0 && discount_ < 1.0)) throw DomainError("discount must lie in [0, 1)");
    for (std::size_t s = 0; s < n_states_; ++s)
      for (std::size_t a = 0; a < n_actions_; ++a)
        detail::check_distribution(transition_row(s, a), "transition row");
    for (double r : reward_)
      if (!std::isfinite(r)) throw ModelError("non-finite reward");
    detail::check_distribution(initial_dist_, "initial distribution");
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> transition_;
  std::vector<double> reward_;
  double discount_;
  std::vector<double> initial_dist_;
};

class StochasticPolicy {
 public:
  StochasticPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
      : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
    if (probs_.size() != n_states_ * n_actions_) throw DimensionError("policy table has wrong size");
    for (std::size_t s = 0; s < n_states_; ++s) detail::check_distribution(row(s), "policy row");
  }

  static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions) {
    return {n_states, n_actions,
            std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions))};
  }
  static StochasticPolicy deterministic(std::span<const std::size_t> actions, std::size_t n_actions) {
    std::vector<double> p(actions.size() * n_actions, 0.0);
    for (std::size_t s = 0; s < actions.size(); ++s) {
      if (actions[s] >= n_actions) throw DimensionError("action index out of range");
      p[s * n_actions + actions[s]] = 1.0;
    }
    return {actions.size(), n_actions, std::move(p)};
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double operator()(std::size_t s, std::size_t a) const { return probs_[s * n_actions_ + a]; }
  std::span<const double> row(std::size_t s) const { return {probs_.data() + s * n_actions_, n_actions_}; }
  const std::vector<double>& probs() const noexcept { return probs_; }

  friend bool operator==(const StochasticPolicy&, const StochasticPolicy&) = default;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  std::vector<double> probs_;
};

struct ValueFunction {
  std::vector<double> values;

  double operator[](std::size_t s) const { return values[s]; }
  std::size_t size() const noexcept { return values.size(); }
};

struct QFunction {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> values;

  double operator()(std::size_t s, std::size_t a) const { return values[s * n_actions + a]; }
  std::span<const double> row(std::size_t s) const { return {values.data() + s * n_actions, n_actions}; }
};

struct SolverOptions {
  double tol = 1e-9;
  std::size_t max_iterations = 1'000'000;
};

struct OptimalSolution {
  ValueFunction value;
  StochasticPolicy policy;
  std::size_t iterations = 0;
  double residual = 0.0;
};

namespace detail {

// Compressed view of the nonzero transition entries; the dense tensor is
// mostly zeros for grid problems.
struct SparseKernel {
  std::vector<std::size_t> offsets;  // (s * A + a) -> range start
  std::vector<std::uint32_t> next;
  std::vector<double> prob;

  explicit SparseKernel(const TabularMdp& mdp) {
    const std::size_t S = mdp.n_states(), A = mdp.n_actions();
    offsets.reserve(S * A + 1);
    offsets.push_back(0);
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t a = 0; a < A; ++a) {
        auto row = mdp.transition_row(s, a);
        for (std::size_t n = 0; n < S; ++n)
          if (row[n] != 0.0) {
            next.push_back(static_cast<std::uint32_t>(n));
            prob.push_back(row[n]);
          }
        offsets.push_back(next.size());
      }
  }

  double expect(std::size_t sa, std::span<const double> v) const {
    double acc = 0.0;
    for (std::size_t k = offsets[sa]; k < offsets[sa + 1]; ++k) acc += prob[k] * v[next[k]];
    return acc;
  }
};

inline bool strictly_better(double candidate, double best) {
  return candidate > best + 1e-12 * (1.0 + std::abs(best));
}

inline void check_policy_shape(const TabularMdp& mdp, const StochasticPolicy& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw DimensionError("policy shape does not match MDP");
}

}  // namespace detail

/// Greedy deterministic policy from a Q table; ties go to the lowest action index.
inline StochasticPolicy greedy_policy(const QFunction& q) {
  std::vector<std::size_t> best(q.n_states, 0);
  for (std::size_t s = 0; s < q.n_states; ++s) {
    double b = q(s, 0);
    for (std::size_t a = 1; a < q.n_actions; ++a)
      if (detail::strictly_better(q(s, a), b)) {
        b = q(s, a);
        best[s] = a;
      }
  }
  return StochasticPolicy::deterministic(best, q.n_actions);
}

/// One Bellman backup Q(s,a) = R(s,a) + gamma * E[V(s')].
inline QFunction bellman_q(const TabularMdp& mdp, std::span<const double> v) {
  detail::SparseKernel kernel(mdp);
  QFunction q{mdp.n_states(), mdp.n_actions(), std::vector<double>(mdp.n_states() * mdp.n_actions())};
  for (std::size_t sa = 0; sa < q.values.size(); ++sa)
    q.values[sa] = mdp.rewards()[sa] + mdp.discount() * kernel.expect(sa, v);
  return q;
}

/// Value iteration to sup-norm Bellman residual <= tol. Returns V* and the
/// greedy deterministic policy.
inline OptimalSolution value_iteration(const TabularMdp& mdp, const SolverOptions& options = {}) {
  if (!(options.tol > 0.0)) throw DomainError("value_iteration: tol must be positive");
  const std::size_t S = mdp.n_states(), A = mdp.n_actions();
  const double gamma = mdp.discount();
  detail::SparseKernel kernel(mdp);
  std::vector<double> v(S, 0.0), next(S);
  double residual = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  while (it < options.max_iterations) {
    ++it;
    residual = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < A; ++a)
        best = std::max(best, mdp.rewards()[s * A + a] + gamma * kernel.expect(s * A + a, v));
      next[s] = best;
      residual = std::max(residual, std::abs(best - v[s]));
    }
    v.swap(next);
    if (residual <= options.tol) break;
  }
  if (residual > options.tol)
    throw IterationLimitError("value_iteration did not converge", it, residual);
  QFunction q = bellman_q(mdp, v);
  return {ValueFunction{std::move(v)}, greedy_policy(q), it, residual};
}

inline OptimalSolution value_iteration(const TabularMdp& mdp, double tol) {
  return value_iteration(mdp, SolverOptions{tol, SolverOptions{}.max_iterations});
}

/// Exact value of a stationary policy. Direct LU solve for up to 2000 states,
/// iterative evaluation to residual 1e-10 beyond that.
inline ValueFunction policy_evaluation(const TabularMdp& mdp, const StochasticPolicy& policy) {
  detail::check_policy_shape(mdp, policy);
  const std::size_t S = mdp.n_states(), A = mdp.n_actions();
  const double gamma = mdp.discount();

  std::vector<double> r_pi(S, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) r_pi[s] += policy(s, a) * mdp.reward(s, a);

  if (S <= 2000) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t a = 0; a < A; ++a) {
        const double p = policy(s, a);
        if (p == 0.0) continue;
        auto row = mdp.transition_row(s, a);
        for (std::size_t n = 0; n < S; ++n)
          if (row[n] != 0.0) m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n)) -= gamma * p * row[n];
      }
    Eigen::Map<const Eigen::VectorXd> rhs(r_pi.data(), static_cast<Eigen::Index>(S));
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    Eigen::VectorXd v = lu.solve(rhs);
    // one step of iterative refinement
    v += lu.solve(rhs - m * v);
    return ValueFunction{std::vector<double>(v.data(), v.data() + S)};
  }

  detail::SparseKernel kernel(mdp);
  std::vector<double> v(S, 0.0), next(S);
  for (std::size_t it = 0; it < 10'000'000; ++it) {
    double residual = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      double acc = r_pi[s];
      for (std::size_t a = 0; a < A; ++a)
        if (policy(s, a) != 0.0) acc += gamma * policy(s, a) * kernel.expect(s * A + a, v);
      next[s] = acc;
      residual = std::max(residual, std::abs(acc - v[s]));
    }
    v.swap(next);
    if (residual <= 1e-10) return ValueFunction{std::move(v)};
  }
  throw IterationLimitError("policy_evaluation did not converge", 10'000'000, 0.0);
}

/// J(pi) = D0 . V^pi
inline double total_return(const TabularMdp& mdp, const StochasticPolicy& policy) {
  const ValueFunction v = policy_evaluation(mdp, policy);
  double j = 0.0;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) j += mdp.initial_dist()[s] * v[s];
  return j;
}

inline QFunction q_from_policy(const TabularMdp& mdp, const StochasticPolicy& policy) {
  const ValueFunction v = policy_evaluation(mdp, policy);
  return bellman_q(mdp, v.values);
}

struct SoftSolution {
  QFunction q;
  ValueFunction value;
  StochasticPolicy policy;
  std::size_t iterations = 0;
};

/// Soft (entropy-regularized) value iteration with the log-sum-exp backup
/// V(s) = temperature * log sum_a exp(Q(s,a) / temperature).
inline SoftSolution soft_value_iteration(const TabularMdp& mdp, double temperature,
                                         const SolverOptions& options = {1e-8, 1'000'000}) {
  if (!(temperature > 0.0)) throw DomainError("soft_bellman_policy: temperature must be positive");
  const std::size_t S = mdp.n_states(), A = mdp.n_actions();
  const double gamma = mdp.discount();
  detail::SparseKernel kernel(mdp);
  std::vector<double> v(S, 0.0), next(S), q(S * A);

  auto backup = [&](std::span<const double> values) {
    for (std::size_t sa = 0; sa < S * A; ++sa)
      q[sa] = mdp.rewards()[sa] + gamma * kernel.expect(sa, values);
  };
  auto log_sum_exp = [&](std::size_t s) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < A; ++a) m = std::max(m, q[s * A + a]);
    double acc = 0.0;
    for (std::size_t a = 0; a < A; ++a) acc += std::exp((q[s * A + a] - m) / temperature);
    return m + temperature * std::log(acc);
  };

  double residual = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  while (it < options.max_iterations) {
    ++it;
    backup(v);
    residual = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      next[s] = log_sum_exp(s);
      residual = std::max(residual, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    if (residual <= options.tol) break;
  }
  if (residual > options.tol)
    throw IterationLimitError("soft value iteration did not converge", it, residual);

  backup(v);
  std::vector<double> probs(S * A);
  for (std::size_t s = 0; s < S; ++s) {
    const double lse = log_sum_exp(s);
    double total = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      probs[s * A + a] = std::exp((q[s * A + a] - lse) / temperature);
      total += probs[s * A + a];
    }
    for (std::size_t a = 0; a < A; ++a) probs[s * A + a] /= total;
  }
  return {QFunction{S, A, q}, ValueFunction{std::move(v)}, StochasticPolicy(S, A, std::move(probs)), it};
}

inline StochasticPolicy soft_bellman_policy(const TabularMdp& mdp, double temperature = 1.0) {
  return soft_value_iteration(mdp, temperature).policy;
}

/// max_s || p(.|s) - q(.|s) ||_1
inline double policy_l1_distance(const StochasticPolicy& p, const StochasticPolicy& q) {
  if (p.n_states() != q.n_states() || p.n_actions() != q.n_actions())
    throw DimensionError("policy_l1_distance: shape mismatch");
  double worst = 0.0;
  for (std::size_t s = 0; s < p.n_states(); ++s) {
    double d = 0.0;
    for (std::size_t a = 0; a < p.n_actions(); ++a) d += std::abs(p(s, a) - q(s, a));
    worst = std::max(worst, d);
  }
  return worst;
}

/// KL(p || q) of two distributions; +infinity when q misses support of p.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

/// max_s KL(p(.|s) || q(.|s)); +infinity on support loss.
inline double policy_kl_distance(const StochasticPolicy& p, const StochasticPolicy& q) {
  if (p.n_states() != q.n_states() || p.n_actions() != q.n_actions())
    throw DimensionError("policy_kl_distance: shape mismatch");
  double worst = 0.0;
  for (std::size_t s = 0; s < p.n_states(); ++s) worst = std::max(worst, kl_divergence(p.row(s), q.row(s)));
  return worst;
}

/// Discounted state occupancy sum_tau gamma^tau P(s_tau = s) from `start`.
/// horizon == 0 sums the infinite series until the added mass drops below
/// `tol`; otherwise exactly `horizon` terms are summed.
inline std::vector<double> discounted_occupancy(const TabularMdp& mdp, const StochasticPolicy& policy,
                                                std::span<const double> start, std::size_t horizon = 0,
                                                double tol = 1e-8,
                                                std::size_t max_iterations = 10'000'000) {
  detail::check_policy_shape(mdp, policy);
  if (start.size() != mdp.n_states()) throw DimensionError("start distribution has wrong size");
  const std::size_t S = mdp.n_states(), A = mdp.n_actions();
  detail::SparseKernel kernel(mdp);
  std::vector<double> dist(start.begin(), start.end()), next(S), occupancy(S, 0.0);
  double weight = 1.0;
  const std::size_t limit = horizon == 0 ? max_iterations : horizon;
  for (std::size_t t = 0; t < limit; ++t) {
    for (std::size_t s = 0; s < S; ++s) occupancy[s] += weight * dist[s];
    // remaining tail mass is at most weight * gamma / (1 - gamma)
    if (horizon == 0 && weight * mdp.discount() / (1.0 - mdp.discount()) <= tol) return occupancy;
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      if (dist[s] == 0.0) continue;
      for (std::size_t a = 0; a < A; ++a) {
        const double w = dist[s] * policy(s, a);
        if (w == 0.0) continue;
        const std::size_t sa = s * A + a;
        for (std::size_t k = kernel.offsets[sa]; k < kernel.offsets[sa + 1]; ++k)
          next[kernel.next[k]] += w * kernel.prob[k];
      }
    }
    dist.swap(next);
    weight *= mdp.discount();
  }
  if (horizon == 0) throw IterationLimitError("discounted occupancy did not converge", limit, weight);
  return occupancy;
}

}  // namespace robustcoop
