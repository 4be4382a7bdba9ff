#include <gtest/gtest.h>

#include <cmath>

#include "robustcoop/environments.hpp"
#include "robustcoop/inference.hpp"
#include "robustcoop/rng.hpp"

using namespace robustcoop;

namespace {

const GatheringConfig kCfg = GatheringConfig::square(3);

std::vector<Observation> rollout(const TabularMdp& m, const StochasticPolicy& pi, std::size_t start, std::size_t steps,
                                 Rng& rng) {
  std::vector<Observation> ep;
  std::size_t s = start;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t a = sample_categorical(pi.row(s), rng);
    ep.push_back({s, a});
    s = sample_categorical(m.transition_row(s, a), rng);
  }
  return ep;
}

}  // namespace

TEST(FeatureCounts, EmpiricalIsDiscountedSum) {
  const FeatureMap phi = [](std::size_t s) { return std::vector<double>{s == 2 ? 1.0 : 0.0, 1.0}; };
  const std::vector<Observation> ep{{0, 0}, {2, 1}, {2, 0}};
  const auto c = empirical_feature_counts(ep, 0.5, phi);
  EXPECT_DOUBLE_EQ(c[0], 0.5 + 0.25);
  EXPECT_DOUBLE_EQ(c[1], 1.0 + 0.5 + 0.25);
  EXPECT_THROW(empirical_feature_counts({}, 0.5, phi), DomainError);
}

TEST(FeatureCounts, ExpectedMatchesMonteCarlo) {
  const auto m = build_x_mdp(kCfg, {0.8, -0.3});
  const auto pi = soft_bellman_policy(m, 1.0);
  const FeatureMap phi = [](std::size_t s) { return fruit_features(kCfg, s); };
  const std::size_t start = kCfg.index(kCfg.x_start), H = 30;
  const auto expected = expected_feature_counts(m, pi, start, phi, H);
  Rng rng(123);
  const int n = 4000;
  std::vector<double> sum(2, 0.0), sq(2, 0.0);
  for (int k = 0; k < n; ++k) {
    const auto c = empirical_feature_counts(rollout(m, pi, start, H, rng), m.discount(), phi);
    for (int i = 0; i < 2; ++i) {
      sum[i] += c[i];
      sq[i] += c[i] * c[i];
    }
  }
  for (int i = 0; i < 2; ++i) {
    const double mean = sum[i] / n, se = std::sqrt((sq[i] / n - mean * mean) / n);
    EXPECT_NEAR(mean, expected[i], 3.0 * se + 1e-9) << "feature " << i;
  }
}

TEST(FeatureCounts, HorizonTruncationConvergesToInfiniteSum) {
  const auto m = build_x_mdp(kCfg, {0.2, 0.4});
  const auto pi = soft_bellman_policy(m, 1.0);
  const FeatureMap phi = [](std::size_t s) { return fruit_features(kCfg, s); };
  const auto inf = expected_feature_counts(m, pi, 0, phi);
  const auto h100 = expected_feature_counts(m, pi, 0, phi, 100);
  const auto h5000 = expected_feature_counts(m, pi, 0, phi, 5000);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(h100[i], inf[i]);
    EXPECT_NEAR(h5000[i], inf[i], 1e-6);
  }
}

TEST(EpisodeUpdate, MovesTowardDemonstratedFruit) {
  const auto family = build_joint_family(kCfg);
  const auto model = MceIrlModel::from_family(family);
  const std::size_t fruit0 = kCfg.index(kCfg.fruit_cells[0]);
  std::vector<Observation> ep(50, Observation{fruit0, static_cast<std::size_t>(Move::Stay)});
  const InferenceState s0{{0.0, 0.0}, 0.01, 0};
  const auto s1 = episode_update(s0, ep, model);
  EXPECT_GT(s1.theta_est[0], 0.0);
  EXPECT_LT(s1.theta_est[1], 0.0);
  EXPECT_EQ(s1.episodes_seen, 1U);
  const auto big = episode_update({{0.0, 0.0}, 100.0, 0}, ep, model);
  EXPECT_EQ(big.theta_est[0], 1.0);
  EXPECT_EQ(big.theta_est[1], -1.0);
}

TEST(EpisodeUpdate, RejectsBadInput) {
  const auto model = MceIrlModel::from_family(build_joint_family(kCfg));
  EXPECT_THROW(episode_update({{0.0, 0.0}, 0.01, 0}, {}, model), DomainError);
  const std::vector<Observation> ep{{0, 0}};
  EXPECT_THROW(episode_update({{0.0, 0.0}, 0.0, 0}, ep, model), DomainError);
  EXPECT_THROW(MceIrlModel::from_family(build_worstcase_pair(0.9, 1.0)), ModelError);
}

TEST(EpisodeUpdate, GradientHasZeroMeanAtTruth) {
  // expected counts are truncated to the episode length, so the update is
  // unbiased at theta_est = theta_test
  const auto family = build_joint_family(kCfg);
  const ThetaVector truth{0.5, -0.5};
  const auto m = family.x_mdp(truth);
  const auto pi = soft_bellman_policy(m, family.x_temperature);
  const auto expected = expected_feature_counts(m, pi, family.x_start, family.x_features, 40);
  Rng rng(5);
  const int n = 3000;
  std::vector<double> sum(2, 0.0), sq(2, 0.0);
  for (int k = 0; k < n; ++k) {
    const auto c = empirical_feature_counts(rollout(m, pi, family.x_start, 40, rng), m.discount(), family.x_features);
    for (int i = 0; i < 2; ++i) {
      const double g = c[i] - expected[i];
      sum[i] += g;
      sq[i] += g * g;
    }
  }
  for (int i = 0; i < 2; ++i) {
    const double mean = sum[i] / n, se = std::sqrt((sq[i] / n - mean * mean) / n);
    EXPECT_NEAR(mean, 0.0, 3.0 * se);
  }
}

TEST(ObservationHistory, EpisodeBoundaries) {
  ObservationHistory h;
  h.append({0, 1});
  h.append({1, 2});
  h.end_episode();
  h.end_episode();
  h.append({3, 0});
  h.end_episode();
  EXPECT_EQ(h.n_episodes(), 2U);
  EXPECT_EQ(h.episode(0).size(), 2U);
  EXPECT_EQ(h.episode(1)[0].state, 3U);
  EXPECT_THROW(h.episode(2), DomainError);
}

TEST(Estimators, OracleAndDelayedOracle) {
  const ThetaVector truth{0.25, -0.75};
  auto oracle = oracle_factory()(truth);
  EXPECT_EQ(oracle->current(), truth);
  auto delayed = delayed_oracle_factory({0.0, 0.0}, 2)(truth);
  const std::vector<Observation> ep{{0, 0}};
  EXPECT_EQ(delayed->current(), (ThetaVector{0.0, 0.0}));
  delayed->observe_episode(ep);
  EXPECT_EQ(delayed->current(), (ThetaVector{0.0, 0.0}));
  delayed->observe_episode(ep);
  EXPECT_EQ(delayed->current(), truth);
}
