#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "robustcoop/mdp.hpp"
#include "robustcoop/rng.hpp"

namespace testutil {

using robustcoop::Rng;
using robustcoop::StochasticPolicy;
using robustcoop::TabularMdp;

inline std::vector<double> simplex(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  double sum = 0.0;
  for (auto& x : v) sum += (x = -std::log(1.0 - robustcoop::uniform01(rng)));
  for (auto& x : v) x /= sum;
  return v;
}

inline TabularMdp random_mdp(std::size_t S, std::size_t A, double gamma, Rng& rng) {
  std::vector<double> t, r;
  for (std::size_t k = 0; k < S * A; ++k) {
    auto row = simplex(S, rng);
    t.insert(t.end(), row.begin(), row.end());
    r.push_back(2.0 * robustcoop::uniform01(rng) - 1.0);
  }
  return {S, A, t, r, gamma, simplex(S, rng)};
}

inline StochasticPolicy random_policy(std::size_t S, std::size_t A, Rng& rng) {
  std::vector<double> p;
  for (std::size_t s = 0; s < S; ++s) {
    auto row = simplex(A, rng);
    p.insert(p.end(), row.begin(), row.end());
  }
  return {S, A, p};
}

// Plain fixed-point iteration of V = R_pi + gamma P_pi V, run far past
// convergence.
inline std::vector<double> naive_values(const TabularMdp& m, const StochasticPolicy& pi, std::size_t sweeps = 20000) {
  const std::size_t S = m.n_states(), A = m.n_actions();
  std::vector<double> v(S, 0.0), next(S);
  for (std::size_t it = 0; it < sweeps; ++it) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        double ev = 0.0;
        for (std::size_t n = 0; n < S; ++n) ev += m.transition(s, a, n) * v[n];
        acc += pi(s, a) * (m.reward(s, a) + m.discount() * ev);
      }
      next[s] = acc;
    }
    v.swap(next);
  }
  return v;
}

// (I - gamma P_pi) v = R_pi by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_values(const TabularMdp& m, const StochasticPolicy& pi) {
  const std::size_t S = m.n_states(), A = m.n_actions();
  std::vector<std::vector<double>> a(S, std::vector<double>(S + 1, 0.0));
  for (std::size_t s = 0; s < S; ++s) {
    a[s][s] = 1.0;
    for (std::size_t b = 0; b < A; ++b) {
      a[s][S] += pi(s, b) * m.reward(s, b);
      for (std::size_t n = 0; n < S; ++n) a[s][n] -= m.discount() * pi(s, b) * m.transition(s, b, n);
    }
  }
  for (std::size_t c = 0; c < S; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < S; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < S; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= S; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> v(S);
  for (std::size_t s = 0; s < S; ++s) v[s] = a[s][S] / a[s][s];
  return v;
}

// Best value per state over all A^S deterministic policies.
inline std::vector<double> enumerate_optimal_values(const TabularMdp& m) {
  const std::size_t S = m.n_states(), A = m.n_actions();
  std::vector<double> best(S, -1e300);
  std::vector<std::size_t> actions(S, 0);
  while (true) {
    const auto v = solve_values(m, StochasticPolicy::deterministic(actions, A));
    for (std::size_t s = 0; s < S; ++s) best[s] = std::max(best[s], v[s]);
    std::size_t k = 0;
    while (k < S && ++actions[k] == A) actions[k++] = 0;
    if (k == S) break;
  }
  return best;
}

}  // namespace testutil
