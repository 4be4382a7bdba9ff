#include <gtest/gtest.h>

#include <cmath>

#include "robustcoop/adapt_pool.hpp"
#include "robustcoop/environments.hpp"

using namespace robustcoop;

TEST(EpsilonCover, CountsOnTheGatheringBox) {
  const auto box = ParamSpace::cube(2, -1.0, 1.0);
  // per-axis spacing h <= 2r/sqrt(2): r = 1 gives 2 cells per axis, r = 0.25 gives 6
  EXPECT_EQ(epsilon_cover(box, 1.0).size(), 4U);
  EXPECT_EQ(epsilon_cover(box, 0.25).size(), 36U);
  EXPECT_EQ(epsilon_cover(box, 2.0).size(), 1U);
  EXPECT_THROW(epsilon_cover(box, 0.0), DomainError);
}

TEST(EpsilonCover, EveryPointOfTheBoxIsWithinRadius) {
  const auto box = ParamSpace::cube(2, -1.0, 1.0);
  for (double r : {1.0, 0.6, 0.25, 0.17}) {
    PolicyPool pool;
    pool.cover_radius = r;
    for (const auto& t : epsilon_cover(box, r))
      pool.entries.push_back({t, std::make_shared<const StochasticPolicy>(StochasticPolicy::uniform(1, 1))});
    EXPECT_LE(cover_audit(pool, box, 0.01), r + 1e-12) << "radius " << r;
  }
}

TEST(EpsilonCover, OneDimensionalBox) {
  const auto pts = epsilon_cover(ParamSpace::cube(1, 0.0, 1.0), 0.25);
  ASSERT_EQ(pts.size(), 2U);
  EXPECT_DOUBLE_EQ(pts[0][0], 0.25);
  EXPECT_DOUBLE_EQ(pts[1][0], 0.75);
}

TEST(NearestIndex, EuclideanWithLowestIndexTieBreak) {
  PolicyPool pool;
  auto p = std::make_shared<const StochasticPolicy>(StochasticPolicy::uniform(1, 1));
  pool.entries = {{{-0.5, 0.0}, p}, {{0.5, 0.0}, p}, {{0.0, 0.9}, p}};
  EXPECT_EQ(nearest_index(pool, ThetaVector{0.0, 0.0}), 0U);
  EXPECT_EQ(nearest_index(pool, ThetaVector{0.1, 0.0}), 1U);
  EXPECT_EQ(nearest_index(pool, ThetaVector{0.0, 0.8}), 2U);
  EXPECT_THROW(nearest_index(PolicyPool{}, ThetaVector{0.0, 0.0}), DomainError);
}

TEST(TrainPool, EntriesAreBestResponses) {
  const auto f = build_joint_family(GatheringConfig::square(3));
  const auto pts = epsilon_cover(f.space, 1.0);
  const auto pool = train_pool(f, pts, 1.0);
  ASSERT_EQ(pool.size(), 4U);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    EXPECT_EQ(pool.entries[i].theta, pts[i]);
    const auto m = f.mdp(pts[i]);
    const double opt = value_iteration(m).value.values[0];
    EXPECT_NEAR(total_return(m, *pool.entries[i].policy), total_return(m, value_iteration(m).policy), 1e-9);
    (void)opt;
  }
  EXPECT_THROW(train_pool(f, {}, 1.0), DomainError);
}

TEST(SelectAndAct, SamplesFromNearestEntry) {
  PolicyPool pool;
  const std::vector<std::size_t> zero{0}, two{2};
  pool.entries = {{{0.0}, std::make_shared<const StochasticPolicy>(StochasticPolicy::deterministic(zero, 3))},
                  {{1.0}, std::make_shared<const StochasticPolicy>(StochasticPolicy::deterministic(two, 3))}};
  Rng rng(1);
  EXPECT_EQ(select_and_act(pool, ThetaVector{0.2}, 0, rng), 0U);
  EXPECT_EQ(select_and_act(pool, ThetaVector{0.9}, 0, rng), 2U);
  EXPECT_THROW(select_and_act(pool, ThetaVector{0.9}, 4, rng), DimensionError);
}
