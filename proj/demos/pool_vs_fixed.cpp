// AdaptPool with MCE-IRL inference against the best single fixed policy on
// the 3x3 gathering game: mean regret per test type, and the worst case.

#include <algorithm>
#include <cstdio>
#include <memory>

#include "robustcoop/robustcoop.hpp"

using namespace robustcoop;

int main() {
  auto family = std::make_shared<const MdpFamily>(build_joint_family(GatheringConfig::square(3)));
  auto pool = std::make_shared<const PolicyPool>(train_pool(*family, epsilon_cover(family->space, 0.25), 0.25));
  const PoolPolicy adapt("AdaptPool0.25", pool);
  const FixedPolicy fixed("FixedBest", std::make_shared<const StochasticPolicy>(
                                           fixed_best_policy(*family, theta_grid(family->space, 0.5)).policy));
  const auto irl = mce_irl_factory(*family, {0.0, 0.0}, 0.001);
  const TestPhaseOptions phase{100, 100};

  std::printf("%7s %7s %12s %12s %10s\n", "theta1", "theta2", "pool", "fixed", "|err|@100");
  double worst_pool = 0.0, worst_fixed = 0.0;
  for (const auto& theta : theta_grid(family->space, 0.5)) {
    const auto cell = CellContext::make(*family, theta);
    auto e1 = irl(theta), e2 = irl(theta);
    const auto a = run_test_phase(*family, cell, adapt, *e1, phase, 1);
    const auto b = run_test_phase(*family, cell, fixed, *e2, phase, 1);
    worst_pool = std::max(worst_pool, a.mean_regret());
    worst_fixed = std::max(worst_fixed, b.mean_regret());
    std::printf("%7.2f %7.2f %12.4f %12.4f %10.4f\n", theta[0], theta[1], a.mean_regret(), b.mean_regret(),
                a.inference_error.back());
  }
  std::printf("worst-case mean regret: pool %.4f, fixed %.4f\n", worst_pool, worst_fixed);
}
