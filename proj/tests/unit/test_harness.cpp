#include <gtest/gtest.h>

#include <cmath>

#include "robustcoop/adapt_pool.hpp"
#include "robustcoop/environments.hpp"
#include "robustcoop/harness.hpp"
#include "robustcoop/inference.hpp"

using namespace robustcoop;

namespace {

std::shared_ptr<const MdpFamily> family3() {
  static const auto f = std::make_shared<const MdpFamily>(build_joint_family(GatheringConfig::square(3)));
  return f;
}

}  // namespace

TEST(DeriveSeed, OrderMattersAndIsStable) {
  EXPECT_NE(derive_seed(7, 1, 2), derive_seed(7, 2, 1));
  EXPECT_NE(derive_seed(7, 1), derive_seed(8, 1));
  EXPECT_EQ(derive_seed(7, 3, 4), derive_seed(7, 3, 4));
}

TEST(WorstCaseGap, ClosedForms) {
  const auto r = theorem1_check(0.99, 1.0);
  EXPECT_NEAR(r.j_theta1_opt, 100.0, 1e-9);
  EXPECT_NEAR(r.j_theta2_opt, 100.0, 1e-9);
  EXPECT_NEAR(r.minimax_mixture, 0.5, 1e-12);
  EXPECT_NEAR(r.j_minimax_theta1, 1.0 / (1.0 - 0.495), 1e-9);
  EXPECT_NEAR(r.j_minimax_theta2, 1.0 / (1.0 - 0.495), 1e-9);
  EXPECT_GE(r.gap, r.lower_bound);
  EXPECT_NEAR(r.lower_bound, 98.0, 1e-12);
}

TEST(WorstCaseGap, GapBoundAcrossDiscounts) {
  for (double g : {0.5, 0.8, 0.95}) {
    const auto r = theorem1_check(g, 2.0);
    EXPECT_GE(r.gap, r.lower_bound - 1e-9) << "gamma " << g;
    EXPECT_NEAR(r.j_theta1_opt, 2.0 / (1.0 - g), 1e-9);
  }
}

TEST(RunTestPhase, OracleHasZeroRegretAndRunsAreReproducible) {
  const auto f = family3();
  const auto cell = CellContext::make(*f, {0.5, -0.5});
  const BestResponsePolicy oracle(f);
  auto e1 = oracle_factory()(cell.theta_test), e2 = oracle_factory()(cell.theta_test);
  const TestPhaseOptions opt{20, 30};
  const auto a = run_test_phase(*f, cell, oracle, *e1, opt, 99);
  const auto b = run_test_phase(*f, cell, oracle, *e2, opt, 99);
  EXPECT_EQ(a.per_episode_return, b.per_episode_return);
  ASSERT_EQ(a.per_episode_regret.size(), 20U);
  for (double r : a.per_episode_regret) EXPECT_NEAR(r, 0.0, 1e-9);
  for (double e : a.inference_error) EXPECT_EQ(e, 0.0);
}

TEST(RunTestPhase, DiscountedReturnMatchesExactValueOnAverage) {
  // long episodes, so truncation is negligible; the empirical mean of the
  // per-episode discounted return must agree with J within 3 standard errors
  const auto f = family3();
  const auto cell = CellContext::make(*f, {-0.5, 1.0});
  const BestResponsePolicy oracle(f);
  auto est = oracle_factory()(cell.theta_test);
  const auto rec = run_test_phase(*f, cell, oracle, *est, {600, 600}, 5);
  double sum = 0.0, sq = 0.0;
  for (double r : rec.per_episode_return) {
    sum += r;
    sq += r * r;
  }
  const double n = 600.0, mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
  const double tail = std::pow(0.99, 600) * 6.0 / 0.01;
  EXPECT_NEAR(mean, cell.optimal_return, 3.0 * se + tail);
}

TEST(RunTestPhase, RegretIsExactAndNonnegative) {
  const auto f = family3();
  const auto cell = CellContext::make(*f, {1.0, 1.0});
  const auto pol = std::make_shared<const StochasticPolicy>(StochasticPolicy::uniform(f->n_states, f->n_actions));
  const FixedPolicy fixed("Uniform", pol);
  auto est = oracle_factory()(cell.theta_test);
  const auto rec = run_test_phase(*f, cell, fixed, *est, {3, 10}, 1);
  const double expected = cell.optimal_return - total_return(cell.instance.mdp, *pol);
  for (double r : rec.per_episode_regret) EXPECT_DOUBLE_EQ(r, expected);
  EXPECT_GT(expected, 0.0);
}

TEST(RunTestPhase, RejectsEmptyPhase) {
  const auto f = family3();
  const auto cell = CellContext::make(*f, {0.0, 0.0});
  const BestResponsePolicy oracle(f);
  auto est = oracle_factory()(cell.theta_test);
  EXPECT_THROW(run_test_phase(*f, cell, oracle, *est, {0, 10}, 1), DomainError);
}

TEST(FixedBaselines, MinimaxNotWorseThanAnyCandidateInWorstCase) {
  const auto f = family3();
  const auto cands = theta_grid(f->space, 0.5);
  const auto mm = fixed_minimax_policy(*f, cands);
  const auto best = fixed_best_policy(*f, cands);
  const auto reg = regret_matrix(*f, best_responses(*f, cands), cands);
  double best_worst = 1e300, best_mean = 1e300;
  for (const auto& row : reg) {
    double w = 0.0, m = 0.0;
    for (double r : row) {
      w = std::max(w, r);
      m += r / static_cast<double>(row.size());
    }
    best_worst = std::min(best_worst, w);
    best_mean = std::min(best_mean, m);
  }
  EXPECT_NEAR(mm.worst_regret, best_worst, 1e-9);
  EXPECT_NEAR(best.mean_regret, best_mean, 1e-9);
}

TEST(FixedBaselines, WorstCasePairMinimaxIsTheCoinFlip) {
  const auto f = build_worstcase_pair(0.9, 1.0);
  const auto mm = fixed_minimax_policy(f, {{0.0}, {1.0}});
  ASSERT_TRUE(mm.mixture.has_value());
  EXPECT_NEAR(*mm.mixture, 0.5, 1e-12);
}

TEST(EvaluateGrid, JobsDoNotChangeResults) {
  const auto f = family3();
  auto pool = std::make_shared<const PolicyPool>(train_pool(*f, epsilon_cover(f->space, 1.0), 1.0));
  std::vector<std::shared_ptr<const AdaptivePolicy>> algs{std::make_shared<PoolPolicy>("AdaptPool1", pool),
                                                          std::make_shared<RandomTypePolicy>(f)};
  EvalOptions opt;
  opt.resolution = 1.0;
  opt.runs = 2;
  opt.phase = {5, 20};
  opt.seed = 13;
  opt.jobs = 1;
  const auto est = mce_irl_factory(*f, {0.0, 0.0}, 0.001);
  const auto a = evaluate_grid(*f, algs, est, opt);
  opt.jobs = 3;
  const auto b = evaluate_grid(*f, algs, est, opt);
  ASSERT_EQ(a.grid.size(), 9U);
  EXPECT_TRUE(a.complete);
  for (std::size_t c = 0; c < 9; ++c)
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(a.cell_regret(c, k), b.cell_regret(c, k));
      EXPECT_EQ(a.cells[c].theta_trace, b.cells[c].theta_trace);
    }
  for (std::size_t k = 0; k < 2; ++k) EXPECT_GE(a.worst_case[k], a.average_case[k]);
}

TEST(EvaluateGrid, SharedInferenceTraceMatchesIndependentRun) {
  // the replayed trace for the second algorithm equals what its own MCE-IRL
  // run would have produced, because A^x's trajectory ignores A^y
  const auto f = family3();
  auto pool = std::make_shared<const PolicyPool>(train_pool(*f, epsilon_cover(f->space, 1.0), 1.0));
  const auto est = mce_irl_factory(*f, {0.0, 0.0}, 0.001);
  const PoolPolicy adapt("AdaptPool1", pool);
  const RandomTypePolicy rnd(f);
  const auto cell = CellContext::make(*f, {0.5, 1.0});
  auto e1 = est(cell.theta_test), e2 = est(cell.theta_test);
  const auto a = run_test_phase(*f, cell, adapt, *e1, {6, 25}, 8);
  const auto b = run_test_phase(*f, cell, rnd, *e2, {6, 25}, 8);
  EXPECT_EQ(a.theta_trace, b.theta_trace);
}

TEST(EvaluateGrid, FailedCellIsReportedNotFatal) {
  const auto f = family3();
  struct Broken final : AdaptivePolicy {
    std::string name() const override { return "Broken"; }
    std::unique_ptr<PolicySession> start_session(std::uint64_t) const override {
      throw ModelError("no session");
    }
  };
  EvalOptions opt;
  opt.resolution = 2.0;
  opt.runs = 1;
  opt.phase = {1, 1};
  const auto rep = evaluate_grid(*f, {std::make_shared<Broken>()}, oracle_factory(), opt);
  EXPECT_FALSE(rep.complete);
  EXPECT_FALSE(rep.cells[0].error.empty());
}

TEST(PoolRegretAudit, PoolEntriesWithinBound) {
  const auto f = family3();
  const auto pool = train_pool(*f, epsilon_cover(f->space, 1.0), 1.0);
  const auto tests = theta_grid(f->space, 1.0);
  std::vector<ThetaVector> pts = tests;
  for (const auto& e : pool.entries) pts.push_back(e.theta);
  const auto profile = estimate_smoothness(*f, pts);
  for (const auto& row : corollary1_audit(*f, pool, tests, profile)) {
    EXPECT_TRUE(row.pass);
    EXPECT_GE(row.regret, -1e-9);
    EXPECT_LE(row.distance, 1.0 + 1e-12);
  }
}

TEST(BoundsCampaign, PassesAndSelfTestFails) {
  const auto rows = verify_bounds_campaign(11, 20);
  EXPECT_EQ(rows.size(), 100U);
  for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.check << " trial " << r.trial_id;
  CampaignOptions broken;
  broken.bound_scale = 0.5;
  EXPECT_THROW(verify_bounds_campaign(11, 20, broken), VerificationFailure);
  broken.throw_on_failure = false;
  std::size_t failures = 0;
  for (const auto& r : verify_bounds_campaign(11, 20, broken)) failures += r.pass ? 0 : 1;
  EXPECT_GT(failures, 0U);
}
