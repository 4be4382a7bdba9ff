#pragma once

// Sequential maximum-causal-entropy IRL over agent A^x's observed behaviour.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "robustcoop/errors.hpp"
#include "robustcoop/mdp.hpp"
#include "robustcoop/parametric.hpp"

namespace robustcoop {

using FeatureMap = std::function<std::vector<double>(std::size_t)>;

struct Observation {
  std::size_t state = 0;  // A^x's own state
  std::size_t x_action = 0;
};

class ObservationHistory {
 public:
  void append(Observation o) { steps_.push_back(o); }
  /// Marks the end of the current episode; empty episodes are ignored.
  void end_episode() {
    if (steps_.size() > (boundaries_.empty() ? 0 : boundaries_.back())) boundaries_.push_back(steps_.size());
  }

  const std::vector<Observation>& steps() const noexcept { return steps_; }
  const std::vector<std::size_t>& episode_boundaries() const noexcept { return boundaries_; }
  std::size_t n_episodes() const noexcept { return boundaries_.size(); }

  std::span<const Observation> episode(std::size_t k) const {
    if (k >= boundaries_.size()) throw DomainError("episode index out of range");
    const std::size_t begin = k == 0 ? 0 : boundaries_[k - 1];
    return {steps_.data() + begin, boundaries_[k] - begin};
  }

 private:
  std::vector<Observation> steps_;
  std::vector<std::size_t> boundaries_;
};

/// sum_s d(s) phi(s), d the discounted occupancy from `start`. horizon 0 means
/// the infinite discounted sum; otherwise the first `horizon` steps.
inline std::vector<double> expected_feature_counts(const TabularMdp& mdp, const StochasticPolicy& policy,
                                                   std::size_t start, const FeatureMap& features,
                                                   std::size_t horizon = 0) {
  if (start >= mdp.n_states()) throw DimensionError("start state out of range");
  std::vector<double> init(mdp.n_states(), 0.0);
  init[start] = 1.0;
  const std::vector<double> occ = discounted_occupancy(mdp, policy, init, horizon);
  std::vector<double> counts;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    if (occ[s] == 0.0) continue;
    const auto phi = features(s);
    if (counts.empty()) counts.assign(phi.size(), 0.0);
    if (phi.size() != counts.size()) throw DimensionError("feature map returned inconsistent dimensions");
    for (std::size_t i = 0; i < phi.size(); ++i) counts[i] += occ[s] * phi[i];
  }
  if (counts.empty()) counts.assign(features(start).size(), 0.0);
  return counts;
}

/// sum_tau gamma^tau phi(s_tau) along one episode.
inline std::vector<double> empirical_feature_counts(std::span<const Observation> episode, double gamma,
                                                    const FeatureMap& features) {
  if (episode.empty()) throw DomainError("empty episode");
  std::vector<double> counts;
  double w = 1.0;
  for (const Observation& o : episode) {
    const auto phi = features(o.state);
    if (counts.empty()) counts.assign(phi.size(), 0.0);
    for (std::size_t i = 0; i < phi.size(); ++i) counts[i] += w * phi[i];
    w *= gamma;
  }
  return counts;
}

struct InferenceState {
  ThetaVector theta_est;
  double learning_rate = 0.001;
  std::size_t episodes_seen = 0;
};

struct MceIrlModel {
  ParamSpace space;
  std::function<TabularMdp(const ThetaVector&)> x_mdp;
  FeatureMap features;
  std::size_t start = 0;
  double temperature = 1.0;

  static MceIrlModel from_family(const MdpFamily& family) {
    if (!family.x_mdp || !family.x_features)
      throw ModelError("family '" + family.name + "' does not describe A^x's decision problem");
    return {family.space, family.x_mdp, family.x_features, family.x_start, family.x_temperature};
  }
};

/// theta <- project(theta + eta * (empirical - expected)). Expected counts
/// cover the same number of steps as the observed episode.
inline InferenceState episode_update(const InferenceState& state, std::span<const Observation> episode,
                                     const MceIrlModel& model) {
  if (episode.empty()) throw DomainError("episode_update needs a nonempty episode");
  if (!(state.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  const TabularMdp mdp = model.x_mdp(state.theta_est);
  const StochasticPolicy pi = soft_bellman_policy(mdp, model.temperature);
  const auto empirical = empirical_feature_counts(episode, mdp.discount(), model.features);
  const auto expected = expected_feature_counts(mdp, pi, model.start, model.features, episode.size());
  if (empirical.size() != state.theta_est.size()) throw DimensionError("feature dimension differs from theta");

  InferenceState next = state;
  for (std::size_t i = 0; i < next.theta_est.size(); ++i)
    next.theta_est[i] += state.learning_rate * (empirical[i] - expected[i]);
  next.theta_est = project_box(next.theta_est, model.space);
  ++next.episodes_seen;
  return next;
}

/// Source of the type estimate theta_t used by an adaptive policy.
class TypeEstimator {
 public:
  virtual ~TypeEstimator() = default;
  virtual const ThetaVector& current() const = 0;
  virtual void observe_episode(std::span<const Observation> episode) = 0;
};

class MceIrlEstimator final : public TypeEstimator {
 public:
  MceIrlEstimator(MceIrlModel model, ThetaVector theta0, double learning_rate)
      : model_(std::move(model)), state_{project_box(theta0, model_.space), learning_rate, 0} {
    if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  }

  const ThetaVector& current() const override { return state_.theta_est; }
  void observe_episode(std::span<const Observation> episode) override {
    if (episode.empty()) return;
    state_ = episode_update(state_, episode, model_);
  }
  const InferenceState& state() const noexcept { return state_; }

 private:
  MceIrlModel model_;
  InferenceState state_;
};

/// Replays a fixed schedule: schedule(k) is the estimate after k episodes.
/// With a constant schedule this is an oracle clamped to the true type.
class ScriptedEstimator final : public TypeEstimator {
 public:
  explicit ScriptedEstimator(std::function<ThetaVector(std::size_t)> schedule)
      : schedule_(std::move(schedule)), theta_(schedule_(0)) {}

  const ThetaVector& current() const override { return theta_; }
  void observe_episode(std::span<const Observation>) override { theta_ = schedule_(++episodes_); }

 private:
  std::function<ThetaVector(std::size_t)> schedule_;
  std::size_t episodes_ = 0;
  ThetaVector theta_;
};

/// Builds a fresh estimator for a test run against the given true type.
using EstimatorFactory = std::function<std::unique_ptr<TypeEstimator>(const ThetaVector& theta_test)>;

inline EstimatorFactory mce_irl_factory(const MdpFamily& family, ThetaVector theta0, double learning_rate) {
  auto model = std::make_shared<const MceIrlModel>(MceIrlModel::from_family(family));
  return [model, theta0 = std::move(theta0), learning_rate](const ThetaVector&) -> std::unique_ptr<TypeEstimator> {
    return std::make_unique<MceIrlEstimator>(*model, theta0, learning_rate);
  };
}

inline EstimatorFactory oracle_factory() {
  return [](const ThetaVector& truth) -> std::unique_ptr<TypeEstimator> {
    return std::make_unique<ScriptedEstimator>([truth](std::size_t) { return truth; });
  };
}

/// Reports `initial` for the first `delay` episodes, then the true type.
inline EstimatorFactory delayed_oracle_factory(ThetaVector initial, std::size_t delay) {
  return [initial = std::move(initial), delay](const ThetaVector& truth) -> std::unique_ptr<TypeEstimator> {
    return std::make_unique<ScriptedEstimator>(
        [initial, delay, truth](std::size_t k) { return k < delay ? initial : truth; });
  };
}

}  // namespace robustcoop
