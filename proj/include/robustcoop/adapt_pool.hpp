#pragma once

// AdaptPool: best responses precomputed on an epsilon-cover of the type box,
// nearest-neighbour selection at test time.

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "robustcoop/errors.hpp"
#include "robustcoop/mdp.hpp"
#include "robustcoop/parametric.hpp"
#include "robustcoop/rng.hpp"

namespace robustcoop {

/// Cell-centre grid: per-axis spacing h with sqrt(d)*h/2 <= radius, one point
/// at the centre of each cell. Degenerate axes get a single point.
inline std::vector<ThetaVector> epsilon_cover(const ParamSpace& space, double radius,
                                              std::size_t cap = 1'000'000) {
  if (!(radius > 0.0)) throw DomainError("cover radius must be positive");
  const double d = static_cast<double>(space.dim());
  const double h_max = 2.0 * radius / std::sqrt(d);
  std::vector<std::size_t> counts(space.dim());
  std::size_t total = 1;
  for (std::size_t i = 0; i < space.dim(); ++i) {
    const double width = space.upper[i] - space.lower[i];
    // the small slack keeps exact multiples (width / h_max integral) from rounding up
    counts[i] = width == 0.0 ? 1 : std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(width / h_max - 1e-12)));
    if (static_cast<double>(counts[i]) > static_cast<double>(cap) / static_cast<double>(total))
      throw CapacityError("epsilon cover exceeds the configured size cap");
    total *= counts[i];
  }
  std::vector<ThetaVector> out;
  out.reserve(total);
  for (std::size_t n = 0; n < total; ++n) {
    std::size_t rem = n;
    ThetaVector t(space.dim());
    for (std::size_t i = space.dim(); i-- > 0;) {
      const std::size_t k = rem % counts[i];
      rem /= counts[i];
      const double width = space.upper[i] - space.lower[i];
      t[i] = space.lower[i] + width * (static_cast<double>(k) + 0.5) / static_cast<double>(counts[i]);
      if (std::abs(t[i]) < 1e-15) t[i] = 0.0;
    }
    out.push_back(std::move(t));
  }
  return out;
}

struct PoolEntry {
  ThetaVector theta;
  std::shared_ptr<const StochasticPolicy> policy;
};

struct PolicyPool {
  std::vector<PoolEntry> entries;
  double cover_radius = 0.0;

  std::size_t size() const noexcept { return entries.size(); }
};

/// Euclidean nearest entry; ties go to the lowest index.
inline std::size_t nearest_index(const PolicyPool& pool, std::span<const double> theta) {
  if (pool.entries.empty()) throw DomainError("policy pool is empty");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    const double d = euclidean_distance(pool.entries[i].theta, theta);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline PolicyPool train_pool(const MdpFamily& family, const std::vector<ThetaVector>& train_points,
                             double cover_radius = 0.0, const SolverOptions& options = {}) {
  if (train_points.empty()) throw DomainError("train_pool needs at least one point");
  PolicyPool pool;
  pool.cover_radius = cover_radius;
  for (const auto& theta : train_points) {
    auto sol = value_iteration(family.mdp(theta), options);
    pool.entries.push_back({theta, std::make_shared<const StochasticPolicy>(std::move(sol.policy))});
  }
  return pool;
}

/// Nearest pool policy for theta_est, then an action drawn from its row.
inline std::size_t select_and_act(const PolicyPool& pool, std::span<const double> theta_est, std::size_t state,
                                  Rng& rng) {
  const auto& policy = *pool.entries[nearest_index(pool, theta_est)].policy;
  if (state >= policy.n_states()) throw DimensionError("state out of range for pool policy");
  return sample_categorical(policy.row(state), rng);
}

/// Largest distance from a point of the audit grid to its nearest pool entry.
inline double cover_audit(const PolicyPool& pool, const ParamSpace& space, double resolution = 0.01) {
  double worst = 0.0;
  for (const auto& t : theta_grid(space, resolution))
    worst = std::max(worst, euclidean_distance(pool.entries[nearest_index(pool, t)].theta, t));
  return worst;
}

}  // namespace robustcoop
