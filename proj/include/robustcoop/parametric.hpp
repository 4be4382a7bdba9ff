#pragma once

// Parametric MDP families M(theta), two-agent dynamics, smoothness constants
// and the performance bounds built from them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "robustcoop/errors.hpp"
#include "robustcoop/mdp.hpp"

namespace robustcoop {

using ThetaVector = std::vector<double>;

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("theta dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

struct ParamSpace {
  std::vector<double> lower;
  std::vector<double> upper;

  ParamSpace() = default;
  ParamSpace(std::vector<double> lo, std::vector<double> hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size() || lower.empty()) throw DimensionError("parameter box bounds disagree");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (!(lower[i] <= upper[i])) throw DomainError("parameter box has lower > upper");
  }

  static ParamSpace cube(std::size_t dim, double lo, double hi) {
    return {std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  }

  std::size_t dim() const noexcept { return lower.size(); }

  bool contains(std::span<const double> theta, double slack = 1e-12) const {
    if (theta.size() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (theta[i] < lower[i] - slack || theta[i] > upper[i] + slack) return false;
    return true;
  }

  void require(std::span<const double> theta) const {
    if (theta.size() != dim()) throw DimensionError("theta has wrong dimension");
    if (!contains(theta)) throw DomainError("theta lies outside the parameter box");
  }

  /// All 2^d corners of the box.
  std::vector<ThetaVector> corners() const {
    std::vector<ThetaVector> out;
    for (std::size_t mask = 0; mask < (std::size_t{1} << dim()); ++mask) {
      ThetaVector t(dim());
      for (std::size_t i = 0; i < dim(); ++i) t[i] = (mask >> i) & 1U ? upper[i] : lower[i];
      out.push_back(std::move(t));
    }
    return out;
  }
};

/// Componentwise clamp into the box.
inline ThetaVector project_box(std::span<const double> theta, const ParamSpace& space) {
  if (theta.size() != space.dim()) throw DimensionError("project_box: dimension mismatch");
  ThetaVector out(theta.begin(), theta.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], space.lower[i], space.upper[i]);
  return out;
}

/// Inclusive grid with round(width / resolution) + 1 points per axis,
/// first coordinate varying slowest.
inline std::vector<ThetaVector> theta_grid(const ParamSpace& space, double resolution,
                                           std::size_t cap = 1'000'000) {
  if (!(resolution > 0.0)) throw DomainError("grid resolution must be positive");
  std::vector<std::size_t> counts(space.dim());
  std::size_t total = 1;
  for (std::size_t i = 0; i < space.dim(); ++i) {
    const double width = space.upper[i] - space.lower[i];
    counts[i] = static_cast<std::size_t>(std::llround(width / resolution)) + 1;
    if (width == 0.0) counts[i] = 1;
    total *= counts[i];
    if (total > cap) throw CapacityError("theta grid exceeds the configured size cap");
  }
  std::vector<ThetaVector> out;
  out.reserve(total);
  std::vector<std::size_t> idx(space.dim(), 0);
  for (std::size_t n = 0; n < total; ++n) {
    std::size_t rem = n;
    for (std::size_t i = space.dim(); i-- > 0;) {
      idx[i] = rem % counts[i];
      rem /= counts[i];
    }
    ThetaVector t(space.dim());
    for (std::size_t i = 0; i < space.dim(); ++i) {
      t[i] = counts[i] == 1 ? space.lower[i]
                            : space.lower[i] + (space.upper[i] - space.lower[i]) * static_cast<double>(idx[i]) /
                                                   static_cast<double>(counts[i] - 1);
      if (std::abs(t[i]) < 1e-15) t[i] = 0.0;
    }
    out.push_back(std::move(t));
  }
  return out;
}

/// T^{x,y}(s' | s, a, b): a is the y action, b the x action.
class TwoAgentDynamics {
 public:
  TwoAgentDynamics(std::size_t n_states, std::size_t n_y_actions, std::size_t n_x_actions,
                   std::vector<double> transition)
      : n_states_(n_states), n_y_(n_y_actions), n_x_(n_x_actions), transition_(std::move(transition)) {
    if (transition_.size() != n_states_ * n_y_ * n_x_ * n_states_)
      throw DimensionError("two-agent transition tensor has wrong size");
    for (std::size_t s = 0; s < n_states_; ++s)
      for (std::size_t a = 0; a < n_y_; ++a)
        for (std::size_t b = 0; b < n_x_; ++b) detail::check_distribution(row(s, a, b), "two-agent row");
  }

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_y_actions() const noexcept { return n_y_; }
  std::size_t n_x_actions() const noexcept { return n_x_; }

  std::span<const double> row(std::size_t s, std::size_t a, std::size_t b) const {
    return {transition_.data() + ((s * n_y_ + a) * n_x_ + b) * n_states_, n_states_};
  }
  const std::vector<double>& tensor() const noexcept { return transition_; }

 private:
  std::size_t n_states_;
  std::size_t n_y_;
  std::size_t n_x_;
  std::vector<double> transition_;
};

/// T(s'|s,a) = sum_b pi^x(b|s) T^{x,y}(s'|s,a,b). Returns the (s, a, s')
/// tensor in TabularMdp layout.
inline std::vector<double> marginalize(const TwoAgentDynamics& dynamics, const StochasticPolicy& x_policy) {
  if (x_policy.n_states() != dynamics.n_states() || x_policy.n_actions() != dynamics.n_x_actions())
    throw DimensionError("marginalize: x policy shape does not match dynamics");
  const std::size_t S = dynamics.n_states(), A = dynamics.n_y_actions(), B = dynamics.n_x_actions();
  std::vector<double> out(S * A * S, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      double* dst = out.data() + (s * A + a) * S;
      for (std::size_t b = 0; b < B; ++b) {
        const double w = x_policy(s, b);
        if (w == 0.0) continue;
        auto src = dynamics.row(s, a, b);
        for (std::size_t n = 0; n < S; ++n) dst[n] += w * src[n];
      }
    }
  return out;
}

/// max over s, a, b, b' of || T^{x,y}(.|s,a,b) - T^{x,y}(.|s,a,b') ||_1.
/// Range [0, 2]; halve it for the total-variation normalization.
inline double influence(const TwoAgentDynamics& dynamics) {
  double worst = 0.0;
  const std::size_t S = dynamics.n_states();
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < dynamics.n_y_actions(); ++a)
      for (std::size_t b = 0; b < dynamics.n_x_actions(); ++b)
        for (std::size_t c = b + 1; c < dynamics.n_x_actions(); ++c) {
          auto p = dynamics.row(s, a, b), q = dynamics.row(s, a, c);
          double d = 0.0;
          for (std::size_t n = 0; n < S; ++n) d += std::abs(p[n] - q[n]);
          worst = std::max(worst, d);
        }
  return worst;
}

/// Sparse next-state distribution.
using SparseRow = std::vector<std::pair<std::size_t, double>>;

/// M(theta) together with the policy agent A^x follows under theta.
struct FamilyInstance {
  TabularMdp mdp;
  StochasticPolicy x_policy;  // over joint states and x actions
};

/// Optional product structure: the joint state is (x part, y part) and each
/// agent moves independently of the other's action.
struct FactoredKinematics {
  std::size_t n_x_states = 0;
  std::size_t n_y_states = 0;
  std::function<SparseRow(std::size_t x_state, std::size_t x_action)> x_row;
  std::function<SparseRow(std::size_t y_state, std::size_t y_action)> y_row;

  std::size_t compose(std::size_t xs, std::size_t ys) const { return xs * n_y_states + ys; }
  std::size_t x_part(std::size_t s) const { return s / n_y_states; }
  std::size_t y_part(std::size_t s) const { return s % n_y_states; }
};

struct MdpFamily {
  std::string name;
  ParamSpace space;
  std::size_t n_states = 0;
  std::size_t n_actions = 0;    // agent A^y
  std::size_t n_x_actions = 0;  // agent A^x
  double discount = 0.0;
  /// Added to every reward so that shifted rewards lie in [0, r_max].
  double reward_offset = 0.0;
  double r_max = 0.0;

  std::function<FamilyInstance(const ThetaVector&)> build;
  /// T^{x,y}(.|s,a,b) as a sparse row.
  std::function<SparseRow(std::size_t s, std::size_t a, std::size_t b)> joint_row;
  std::optional<FactoredKinematics> factored;

  // A^x's own decision problem, used by type inference. Absent for families
  // where A^x is not a reward-driven planner.
  std::function<TabularMdp(const ThetaVector&)> x_mdp;
  std::function<std::size_t(std::size_t)> x_state;  // joint state -> A^x state
  std::function<std::vector<double>(std::size_t)> x_features;
  std::size_t x_start = 0;
  double x_temperature = 1.0;

  /// Network input encoding of a joint state (theta is appended separately).
  std::function<std::vector<double>(std::size_t)> encode_state;
  std::size_t encoded_size = 0;

  FamilyInstance instance(const ThetaVector& theta) const {
    space.require(theta);
    return build(theta);
  }

  TabularMdp mdp(const ThetaVector& theta) const { return instance(theta).mdp; }

  /// Materialized T^{x,y}. Memory grows as S^2 * A * B.
  TwoAgentDynamics dynamics() const {
    std::vector<double> t(n_states * n_actions * n_x_actions * n_states, 0.0);
    for (std::size_t s = 0; s < n_states; ++s)
      for (std::size_t a = 0; a < n_actions; ++a)
        for (std::size_t b = 0; b < n_x_actions; ++b) {
          double* dst = t.data() + ((s * n_actions + a) * n_x_actions + b) * n_states;
          for (auto [next, p] : joint_row(s, a, b)) dst[next] += p;
        }
    return {n_states, n_actions, n_x_actions, std::move(t)};
  }
};

/// Sets reward_offset and r_max from the extreme rewards over the box corners.
/// Exact when rewards are affine in theta.
inline void calibrate_reward_range(MdpFamily& family) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& corner : family.space.corners()) {
    const TabularMdp m = family.build(corner).mdp;
    lo = std::min(lo, m.min_reward());
    hi = std::max(hi, *std::max_element(m.rewards().begin(), m.rewards().end()));
  }
  family.reward_offset = -lo;
  family.r_max = hi - lo;
}

struct SmoothnessProfile {
  double alpha = 0.0;
  double beta = 0.0;
  double influence = 0.0;
};

namespace detail {

inline void require_distinct_pair(const std::vector<ThetaVector>& thetas) {
  for (std::size_t i = 0; i < thetas.size(); ++i)
    for (std::size_t j = i + 1; j < thetas.size(); ++j)
      if (euclidean_distance(thetas[i], thetas[j]) > 0.0) return;
  throw DomainError("smoothness estimate needs at least two distinct thetas");
}

}  // namespace detail

/// max over pairs of max_{s,a} |R_theta - R_theta'| / (r_max * ||theta - theta'||).
inline double empirical_alpha(const MdpFamily& family, const std::vector<ThetaVector>& thetas) {
  detail::require_distinct_pair(thetas);
  if (!(family.r_max > 0.0)) throw DomainError("empirical_alpha: family r_max must be positive");
  std::vector<std::vector<double>> rewards;
  for (const auto& t : thetas) rewards.push_back(family.mdp(t).rewards());
  double alpha = 0.0;
  for (std::size_t i = 0; i < thetas.size(); ++i)
    for (std::size_t j = i + 1; j < thetas.size(); ++j) {
      const double dist = euclidean_distance(thetas[i], thetas[j]);
      if (dist == 0.0) continue;
      double gap = 0.0;
      for (std::size_t k = 0; k < rewards[i].size(); ++k) gap = std::max(gap, std::abs(rewards[i][k] - rewards[j][k]));
      alpha = std::max(alpha, gap / (family.r_max * dist));
    }
  return alpha;
}

/// max over ordered pairs of max_s KL(pi^x_theta || pi^x_theta') / ||theta - theta'||.
/// Support loss yields +infinity.
inline double empirical_beta(const MdpFamily& family, const std::vector<ThetaVector>& thetas) {
  detail::require_distinct_pair(thetas);
  std::vector<StochasticPolicy> policies;
  for (const auto& t : thetas) policies.push_back(family.instance(t).x_policy);
  double beta = 0.0;
  for (std::size_t i = 0; i < thetas.size(); ++i)
    for (std::size_t j = 0; j < thetas.size(); ++j) {
      if (i == j) continue;
      const double dist = euclidean_distance(thetas[i], thetas[j]);
      if (dist == 0.0) continue;
      beta = std::max(beta, policy_kl_distance(policies[i], policies[j]) / dist);
    }
  return beta;
}

inline SmoothnessProfile estimate_smoothness(const MdpFamily& family, const std::vector<ThetaVector>& thetas) {
  return {empirical_alpha(family, thetas), empirical_beta(family, thetas), influence(family.dynamics())};
}

namespace detail {

inline void require_discount(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("discount must lie in [0, 1)");
}

inline void require_nonnegative(std::initializer_list<double> values) {
  for (double v : values)
    if (!(v >= 0.0)) throw DomainError("bound arguments must be nonnegative");
}

}  // namespace detail

/// eps*alpha*r_max/(1-gamma) + I_x*sqrt(2*beta*eps)*r_max/(1-gamma)^2
inline double theorem2_bound(const SmoothnessProfile& profile, double epsilon, double r_max, double gamma) {
  detail::require_discount(gamma);
  detail::require_nonnegative({profile.alpha, profile.beta, profile.influence, epsilon, r_max});
  const double h = 1.0 - gamma;
  return epsilon * profile.alpha * r_max / h +
         profile.influence * std::sqrt(2.0 * profile.beta * epsilon) * r_max / (h * h);
}

inline double corollary1_bound(const SmoothnessProfile& profile, double eps_cover, double eps_infer, double r_max,
                               double gamma) {
  detail::require_nonnegative({eps_cover, eps_infer});
  return theorem2_bound(profile, eps_cover + eps_infer, r_max, gamma);
}

struct Equivalence {
  double eps_r = 0.0;
  double eps_p = 0.0;
};

/// eps_p = max_{s,a} ||T1 - T2||_1, eps_r = max_{s,a} |R1 - R2| / r_max.
/// r_max defaults to the shared reward span of the two instances.
inline Equivalence eps_equivalence(const TabularMdp& m1, const TabularMdp& m2,
                                   std::optional<double> r_max = std::nullopt) {
  if (m1.n_states() != m2.n_states() || m1.n_actions() != m2.n_actions())
    throw DimensionError("eps_equivalence: MDP dimensions differ");
  if (m1.discount() != m2.discount()) throw DomainError("eps_equivalence: discounts differ");
  for (std::size_t s = 0; s < m1.n_states(); ++s)
    if (std::abs(m1.initial_dist()[s] - m2.initial_dist()[s]) > kProbabilityTolerance)
      throw DomainError("eps_equivalence: initial distributions differ");

  double scale = 0.0;
  if (r_max) {
    scale = *r_max;
  } else {
    const double lo = std::min(m1.min_reward(), m2.min_reward());
    double hi = -std::numeric_limits<double>::infinity();
    for (double r : m1.rewards()) hi = std::max(hi, r);
    for (double r : m2.rewards()) hi = std::max(hi, r);
    scale = hi - lo;
  }

  Equivalence e;
  double reward_gap = 0.0;
  for (std::size_t k = 0; k < m1.rewards().size(); ++k)
    reward_gap = std::max(reward_gap, std::abs(m1.rewards()[k] - m2.rewards()[k]));
  e.eps_r = reward_gap == 0.0 ? 0.0 : reward_gap / scale;
  for (std::size_t s = 0; s < m1.n_states(); ++s)
    for (std::size_t a = 0; a < m1.n_actions(); ++a) {
      auto p = m1.transition_row(s, a), q = m2.transition_row(s, a);
      double d = 0.0;
      for (std::size_t n = 0; n < p.size(); ++n) d += std::abs(p[n] - q[n]);
      e.eps_p = std::max(e.eps_p, d);
    }
  return e;
}

/// eps_r*r_max/(1-gamma) + gamma*eps_p*r_max/(1-gamma)^2
inline double value_diff_bound(double eps_r, double eps_p, double r_max, double gamma) {
  detail::require_discount(gamma);
  detail::require_nonnegative({eps_r, eps_p, r_max});
  const double h = 1.0 - gamma;
  return eps_r * r_max / h + gamma * eps_p * r_max / (h * h);
}

struct SmoothnessCheck {
  double lhs = 0.0;               // max_{s,a} ||T_p1 - T_p2||_1
  double rhs_simple = 0.0;        // max_s ||p1 - p2||_1
  double rhs_influence_tv = 0.0;  // influence/2 * rhs_simple
  double rhs_influence_l1 = 0.0;  // influence * rhs_simple
};

inline SmoothnessCheck smoothness_lemma_check(const TwoAgentDynamics& dynamics, const StochasticPolicy& p1,
                                              const StochasticPolicy& p2) {
  const std::vector<double> t1 = marginalize(dynamics, p1), t2 = marginalize(dynamics, p2);
  const std::size_t S = dynamics.n_states(), A = dynamics.n_y_actions();
  SmoothnessCheck out;
  for (std::size_t sa = 0; sa < S * A; ++sa) {
    double d = 0.0;
    for (std::size_t n = 0; n < S; ++n) d += std::abs(t1[sa * S + n] - t2[sa * S + n]);
    out.lhs = std::max(out.lhs, d);
  }
  out.rhs_simple = policy_l1_distance(p1, p2);
  const double inf = influence(dynamics);
  out.rhs_influence_tv = 0.5 * inf * out.rhs_simple;
  out.rhs_influence_l1 = inf * out.rhs_simple;
  return out;
}

}  // namespace robustcoop
