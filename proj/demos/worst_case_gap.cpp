// Regret of the best fixed policy on the two-state gold/end pair, against
// the discount factor.

#include <cstdio>

#include "robustcoop/harness.hpp"

int main() {
  std::printf("%6s %10s %12s %10s %10s\n", "gamma", "J*", "J(minimax)", "gap", "bound");
  for (double gamma : {0.5, 0.9, 0.99, 0.999}) {
    const auto r = robustcoop::theorem1_check(gamma, 1.0);
    std::printf("%6.3f %10.3f %12.5f %10.3f %10.3f\n", gamma, r.j_theta1_opt, r.j_minimax_theta1, r.gap,
                r.lower_bound);
  }
}
