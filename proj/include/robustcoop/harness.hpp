#pragma once

// Test-phase loop, baselines, grid evaluation and the verification campaigns.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "robustcoop/adapt_dqn.hpp"
#include "robustcoop/adapt_pool.hpp"
#include "robustcoop/environments.hpp"
#include "robustcoop/errors.hpp"
#include "robustcoop/inference.hpp"
#include "robustcoop/mdp.hpp"
#include "robustcoop/parametric.hpp"
#include "robustcoop/rng.hpp"

namespace robustcoop {

using PolicyPtr = std::shared_ptr<const StochasticPolicy>;

/// Per-run state of an adaptive policy psi(s, theta).
class PolicySession {
 public:
  virtual ~PolicySession() = default;
  /// Stationary policy A^y follows while the type estimate is theta_est.
  virtual PolicyPtr policy_for(const ThetaVector& theta_est) = 0;
};

class AdaptivePolicy {
 public:
  virtual ~AdaptivePolicy() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<PolicySession> start_session(std::uint64_t seed) const = 0;
};

namespace detail {

class ConstantSession final : public PolicySession {
 public:
  explicit ConstantSession(PolicyPtr p) : policy_(std::move(p)) {}
  PolicyPtr policy_for(const ThetaVector&) override { return policy_; }

 private:
  PolicyPtr policy_;
};

}  // namespace detail

class PoolPolicy final : public AdaptivePolicy {
 public:
  PoolPolicy(std::string name, std::shared_ptr<const PolicyPool> pool) : name_(std::move(name)), pool_(std::move(pool)) {
    if (!pool_ || pool_->entries.empty()) throw DomainError("pool policy needs a nonempty pool");
  }
  std::string name() const override { return name_; }
  std::unique_ptr<PolicySession> start_session(std::uint64_t) const override {
    struct Session final : PolicySession {
      std::shared_ptr<const PolicyPool> pool;
      PolicyPtr policy_for(const ThetaVector& t) override { return pool->entries[nearest_index(*pool, t)].policy; }
    };
    auto s = std::make_unique<Session>();
    s->pool = pool_;
    return s;
  }
  const PolicyPool& pool() const { return *pool_; }

 private:
  std::string name_;
  std::shared_ptr<const PolicyPool> pool_;
};

class DqnPolicy final : public AdaptivePolicy {
 public:
  DqnPolicy(std::string name, std::shared_ptr<const MlpNetwork> net, std::shared_ptr<const MdpFamily> family)
      : name_(std::move(name)), net_(std::move(net)), family_(std::move(family)) {}
  std::string name() const override { return name_; }
  std::unique_ptr<PolicySession> start_session(std::uint64_t) const override {
    struct Session final : PolicySession {
      std::shared_ptr<const MlpNetwork> net;
      std::shared_ptr<const MdpFamily> family;
      ThetaVector last;
      PolicyPtr cached;
      PolicyPtr policy_for(const ThetaVector& t) override {
        if (!cached || t != last) {
          cached = std::make_shared<const StochasticPolicy>(greedy_policy(*net, *family, t));
          last = t;
        }
        return cached;
      }
    };
    auto s = std::make_unique<Session>();
    s->net = net_;
    s->family = family_;
    return s;
  }

 private:
  std::string name_;
  std::shared_ptr<const MlpNetwork> net_;
  std::shared_ptr<const MdpFamily> family_;
};

class FixedPolicy final : public AdaptivePolicy {
 public:
  FixedPolicy(std::string name, PolicyPtr policy) : name_(std::move(name)), policy_(std::move(policy)) {}
  std::string name() const override { return name_; }
  std::unique_ptr<PolicySession> start_session(std::uint64_t) const override {
    return std::make_unique<detail::ConstantSession>(policy_);
  }

 private:
  std::string name_;
  PolicyPtr policy_;
};

/// Uniform theta draw in the box; the result is a best-response policy.
struct RandomTypeChoice {
  ThetaVector theta;
  StochasticPolicy policy;
};

inline RandomTypeChoice random_type_policy(const MdpFamily& family, std::uint64_t seed) {
  Rng rng(seed);
  ThetaVector theta(family.space.dim());
  for (std::size_t i = 0; i < theta.size(); ++i)
    theta[i] = std::uniform_real_distribution<double>(family.space.lower[i], family.space.upper[i])(rng);
  return {theta, value_iteration(family.mdp(theta)).policy};
}

/// Rand baseline: each run commits to the best response of a random type.
class RandomTypePolicy final : public AdaptivePolicy {
 public:
  explicit RandomTypePolicy(std::shared_ptr<const MdpFamily> family, std::string name = "Rand")
      : name_(std::move(name)), family_(std::move(family)) {}
  std::string name() const override { return name_; }
  std::unique_ptr<PolicySession> start_session(std::uint64_t seed) const override {
    return std::make_unique<detail::ConstantSession>(
        std::make_shared<const StochasticPolicy>(random_type_policy(*family_, seed).policy));
  }

 private:
  std::string name_;
  std::shared_ptr<const MdpFamily> family_;
};

/// Exact best response to the current estimate (the omniscient reference when
/// paired with an oracle estimator).
class BestResponsePolicy final : public AdaptivePolicy {
 public:
  explicit BestResponsePolicy(std::shared_ptr<const MdpFamily> family, std::string name = "Oracle")
      : name_(std::move(name)), family_(std::move(family)) {}
  std::string name() const override { return name_; }
  std::unique_ptr<PolicySession> start_session(std::uint64_t) const override {
    struct Session final : PolicySession {
      std::shared_ptr<const MdpFamily> family;
      std::map<ThetaVector, PolicyPtr> memo;
      PolicyPtr policy_for(const ThetaVector& t) override {
        auto it = memo.find(t);
        if (it != memo.end()) return it->second;
        auto p = std::make_shared<const StochasticPolicy>(value_iteration(family->mdp(t)).policy);
        memo.emplace(t, p);
        return p;
      }
    };
    auto s = std::make_unique<Session>();
    s->family = family_;
    return s;
  }

 private:
  std::string name_;
  std::shared_ptr<const MdpFamily> family_;
};

struct TestPhaseOptions {
  std::size_t episodes = 200;
  std::size_t steps_per_episode = 100;
};

struct TestRunRecord {
  ThetaVector theta_test;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  std::vector<double> per_episode_return;       // discounted from the episode start
  std::vector<double> per_episode_undiscounted;
  std::vector<double> per_episode_regret;       // exact J(pi*) - J(policy in use)
  std::vector<double> inference_error;          // ||theta_t - theta_test|| after each episode
  std::vector<ThetaVector> theta_trace;         // theta_t after each episode
  double total_discounted_return = 0.0;         // sum over episodes

  double mean_regret() const { return mean(per_episode_regret); }
  double mean_return() const { return mean(per_episode_return); }
  double mean_undiscounted() const { return mean(per_episode_undiscounted); }

  static double mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
  }
};

/// Quantities that depend only on theta_test; shared by all runs of a cell.
struct CellContext {
  ThetaVector theta_test;
  FamilyInstance instance;
  double optimal_return = 0.0;

  static CellContext make(const MdpFamily& family, const ThetaVector& theta_test) {
    FamilyInstance inst = family.instance(theta_test);
    const auto sol = value_iteration(inst.mdp);
    const double j = total_return(inst.mdp, sol.policy);
    return {theta_test, std::move(inst), j};
  }
};

namespace detail {

inline std::size_t sample_row(const SparseRow& row, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (const auto& [n, p] : row) {
    acc += p;
    if (u < acc) return n;
  }
  for (auto it = row.rbegin(); it != row.rend(); ++it)
    if (it->second > 0.0) return it->first;
  throw ModelError("empty transition row");
}

}  // namespace detail

/// One test run of the adaptive loop. A^x draws from its own random stream
/// (actions and movement), A^y from another, so the A^x trajectory and hence
/// the inference trace do not depend on the algorithm under test whenever the
/// family is factored.
inline TestRunRecord run_test_phase(const MdpFamily& family, const CellContext& cell, const AdaptivePolicy& algorithm,
                                    TypeEstimator& estimator, const TestPhaseOptions& options, std::uint64_t seed) {
  family.space.require(cell.theta_test);
  if (options.episodes == 0 || options.steps_per_episode == 0)
    throw DomainError("test phase needs at least one episode and one step");
  const TabularMdp& mdp = cell.instance.mdp;
  const StochasticPolicy& x_policy = cell.instance.x_policy;
  Rng x_rng(derive_seed(seed, 1)), y_rng(derive_seed(seed, 2)), env_rng(derive_seed(seed, 3));
  auto session = algorithm.start_session(derive_seed(seed, 4));

  TestRunRecord rec;
  rec.theta_test = cell.theta_test;
  rec.algorithm = algorithm.name();
  rec.seed = seed;
  rec.episodes = options.episodes;

  std::map<const StochasticPolicy*, std::pair<PolicyPtr, double>> value_cache;
  auto exact_return = [&](const PolicyPtr& p) {
    auto it = value_cache.find(p.get());
    if (it != value_cache.end()) return it->second.second;
    const double j = total_return(mdp, *p);
    value_cache.emplace(p.get(), std::make_pair(p, j));
    return j;
  };

  std::vector<Observation> episode;
  episode.reserve(options.steps_per_episode);
  for (std::size_t e = 0; e < options.episodes; ++e) {
    const PolicyPtr policy = session->policy_for(estimator.current());
    if (policy->n_states() != mdp.n_states() || policy->n_actions() != mdp.n_actions())
      throw DimensionError("adaptive policy shape does not match the family");
    std::size_t s = sample_categorical(mdp.initial_dist(), env_rng);
    double disc = 0.0, undisc = 0.0, w = 1.0;
    episode.clear();
    for (std::size_t t = 0; t < options.steps_per_episode; ++t) {
      const std::size_t b = sample_categorical(x_policy.row(s), x_rng);
      const std::size_t a = sample_categorical(policy->row(s), y_rng);
      const double r = mdp.reward(s, a);
      disc += w * r;
      undisc += r;
      w *= mdp.discount();
      episode.push_back({family.x_state ? family.x_state(s) : s, b});
      if (family.factored) {
        const auto& fk = *family.factored;
        const std::size_t xn = detail::sample_row(fk.x_row(fk.x_part(s), b), x_rng);
        const std::size_t yn = detail::sample_row(fk.y_row(fk.y_part(s), a), y_rng);
        s = fk.compose(xn, yn);
      } else {
        s = detail::sample_row(family.joint_row(s, a, b), env_rng);
      }
    }
    estimator.observe_episode(episode);

    rec.per_episode_return.push_back(disc);
    rec.per_episode_undiscounted.push_back(undisc);
    rec.per_episode_regret.push_back(cell.optimal_return - exact_return(policy));
    rec.theta_trace.push_back(estimator.current());
    rec.inference_error.push_back(euclidean_distance(estimator.current(), cell.theta_test));
    rec.total_discounted_return += disc;
  }
  return rec;
}

/// regret[c][k] = J_k(pi*_k) - J_k(candidate c) over the evaluation types.
inline std::vector<std::vector<double>> regret_matrix(const MdpFamily& family,
                                                      const std::vector<PolicyPtr>& candidates,
                                                      const std::vector<ThetaVector>& eval_thetas) {
  std::vector<std::vector<double>> out(candidates.size(), std::vector<double>(eval_thetas.size()));
  for (std::size_t k = 0; k < eval_thetas.size(); ++k) {
    const TabularMdp m = family.mdp(eval_thetas[k]);
    const double best = total_return(m, value_iteration(m).policy);
    for (std::size_t c = 0; c < candidates.size(); ++c) out[c][k] = best - total_return(m, *candidates[c]);
  }
  return out;
}

inline std::vector<PolicyPtr> best_responses(const MdpFamily& family, const std::vector<ThetaVector>& thetas) {
  std::vector<PolicyPtr> out;
  for (const auto& t : thetas) out.push_back(std::make_shared<const StochasticPolicy>(value_iteration(family.mdp(t)).policy));
  return out;
}

struct FixedChoice {
  StochasticPolicy policy;
  std::optional<ThetaVector> theta;  // set when the choice is a best response
  std::optional<double> mixture;     // P(action 0) for mixture candidates
  double worst_regret = 0.0;
  double mean_regret = 0.0;
};

namespace detail {

inline FixedChoice choose_fixed(const MdpFamily& family, const std::vector<ThetaVector>& candidate_thetas,
                                bool minimax, double mixture_resolution) {
  if (candidate_thetas.empty()) throw DomainError("fixed baseline needs at least one candidate");
  std::vector<PolicyPtr> candidates = best_responses(family, candidate_thetas);
  std::vector<double> mixtures;
  if (minimax && family.n_actions == 2 && mixture_resolution > 0.0) {
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / mixture_resolution));
    for (std::size_t k = 0; k <= steps; ++k) {
      const double p = static_cast<double>(k) / static_cast<double>(steps);
      mixtures.push_back(p);
      std::vector<double> probs;
      for (std::size_t s = 0; s < family.n_states; ++s) {
        probs.push_back(p);
        probs.push_back(1.0 - p);
      }
      candidates.push_back(std::make_shared<const StochasticPolicy>(family.n_states, 2, std::move(probs)));
    }
  }
  const auto regret = regret_matrix(family, candidates, candidate_thetas);
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<double> worst(candidates.size()), mean(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    worst[c] = *std::max_element(regret[c].begin(), regret[c].end());
    mean[c] = TestRunRecord::mean(regret[c]);
    const double score = minimax ? worst[c] : mean[c];
    if (c == 0 || score < best_score - 1e-12 * (1.0 + std::abs(best_score))) {
      best_score = score;
      best = c;
    }
  }
  FixedChoice out{*candidates[best], std::nullopt, std::nullopt, worst[best], mean[best]};
  if (best < candidate_thetas.size()) out.theta = candidate_thetas[best];
  else out.mixture = mixtures[best - candidate_thetas.size()];
  return out;
}

}  // namespace detail

/// Minimises the worst-case regret over the candidate types among their best
/// responses, plus state-uniform mixtures on two-action families.
inline FixedChoice fixed_minimax_policy(const MdpFamily& family, const std::vector<ThetaVector>& candidate_thetas,
                                        double mixture_resolution = 0.01) {
  return detail::choose_fixed(family, candidate_thetas, true, mixture_resolution);
}

/// Minimises the mean regret over the candidate types among their best responses.
inline FixedChoice fixed_best_policy(const MdpFamily& family, const std::vector<ThetaVector>& candidate_thetas) {
  return detail::choose_fixed(family, candidate_thetas, false, 0.0);
}

struct EvalOptions {
  double resolution = 0.5;
  std::size_t runs = 5;
  TestPhaseOptions phase;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;  // 0: hardware concurrency
};

struct RunSummary {
  std::size_t cell = 0;
  std::size_t algorithm = 0;
  std::size_t run = 0;
  double discounted_return = 0.0;    // mean over episodes
  double undiscounted_return = 0.0;  // mean over episodes
  double regret = 0.0;               // mean over episodes
  double final_inference_error = 0.0;
};

struct CellResult {
  std::vector<std::vector<RunSummary>> runs;            // [algorithm][run]
  std::vector<std::vector<double>> episode_regret;      // [algorithm][episode], mean over runs
  std::vector<std::vector<double>> episode_return;      // [algorithm][episode], mean over runs
  std::vector<std::vector<ThetaVector>> theta_trace;    // [run][episode]
  std::vector<double> episode_inference_error;          // [episode], mean over runs
  std::string error;                                    // nonempty when the cell failed
};

struct EvalGridReport {
  std::vector<ThetaVector> grid;
  std::vector<std::string> algorithms;
  std::vector<CellResult> cells;
  std::vector<double> worst_case;    // per algorithm: max over cells of mean regret
  std::vector<double> average_case;  // per algorithm: mean over cells of mean regret
  bool complete = true;

  double cell_regret(std::size_t cell, std::size_t alg) const {
    double acc = 0.0;
    for (const auto& r : cells[cell].runs[alg]) acc += r.regret;
    return acc / static_cast<double>(cells[cell].runs[alg].size());
  }
};

/// Cross product of test grid x algorithms x runs. Seeds derive from
/// (master seed, cell index, run index); every algorithm sees the same seed in
/// a given (cell, run). When the family is factored the inference trace of
/// the first algorithm is replayed for the others, since it cannot depend on
/// A^y's behaviour.
inline EvalGridReport evaluate_grid(const MdpFamily& family,
                                    const std::vector<std::shared_ptr<const AdaptivePolicy>>& algorithms,
                                    const EstimatorFactory& estimators, const EvalOptions& options) {
  if (algorithms.empty()) throw DomainError("evaluate_grid needs at least one algorithm");
  if (options.runs == 0) throw DomainError("evaluate_grid needs at least one run per cell");
  EvalGridReport report;
  report.grid = theta_grid(family.space, options.resolution);
  for (const auto& a : algorithms) report.algorithms.push_back(a->name());
  report.cells.resize(report.grid.size());
  const std::size_t E = options.phase.episodes;

  auto run_cell = [&](std::size_t c) {
    CellResult& out = report.cells[c];
    const CellContext ctx = CellContext::make(family, report.grid[c]);
    out.runs.assign(algorithms.size(), {});
    out.episode_regret.assign(algorithms.size(), std::vector<double>(E, 0.0));
    out.episode_return.assign(algorithms.size(), std::vector<double>(E, 0.0));
    out.episode_inference_error.assign(E, 0.0);
    const double inv_runs = 1.0 / static_cast<double>(options.runs);
    for (std::size_t r = 0; r < options.runs; ++r) {
      const std::uint64_t seed = derive_seed(options.seed, c, r);
      std::vector<ThetaVector> shared_trace;
      for (std::size_t a = 0; a < algorithms.size(); ++a) {
        std::unique_ptr<TypeEstimator> est;
        if (a > 0 && family.factored) {
          const ThetaVector start = estimators(ctx.theta_test)->current();
          est = std::make_unique<ScriptedEstimator>(
              [start, &shared_trace](std::size_t k) { return k == 0 ? start : shared_trace[k - 1]; });
        } else {
          est = estimators(ctx.theta_test);
        }
        TestRunRecord rec = run_test_phase(family, ctx, *algorithms[a], *est, options.phase, seed);
        if (a == 0) {
          shared_trace = rec.theta_trace;
          out.theta_trace.push_back(rec.theta_trace);
          for (std::size_t e = 0; e < E; ++e) out.episode_inference_error[e] += inv_runs * rec.inference_error[e];
        }
        for (std::size_t e = 0; e < E; ++e) {
          out.episode_regret[a][e] += inv_runs * rec.per_episode_regret[e];
          out.episode_return[a][e] += inv_runs * rec.per_episode_return[e];
        }
        out.runs[a].push_back({c, a, r, rec.mean_return(), rec.mean_undiscounted(), rec.mean_regret(),
                               rec.inference_error.back()});
      }
    }
  };

  std::size_t jobs = options.jobs == 0 ? std::max(1U, std::thread::hardware_concurrency()) : options.jobs;
  jobs = std::min(jobs, report.grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < report.grid.size(); c = next++) {
      try {
        run_cell(c);
      } catch (const std::exception& ex) {
        report.cells[c].error = ex.what();
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  report.worst_case.assign(algorithms.size(), -std::numeric_limits<double>::infinity());
  report.average_case.assign(algorithms.size(), 0.0);
  std::size_t ok = 0;
  for (std::size_t c = 0; c < report.cells.size(); ++c) {
    if (!report.cells[c].error.empty()) {
      report.complete = false;
      continue;
    }
    ++ok;
    for (std::size_t a = 0; a < algorithms.size(); ++a) {
      const double v = report.cell_regret(c, a);
      report.worst_case[a] = std::max(report.worst_case[a], v);
      report.average_case[a] += v;
    }
  }
  for (auto& v : report.average_case) v = ok == 0 ? std::numeric_limits<double>::quiet_NaN() : v / static_cast<double>(ok);
  return report;
}

struct Theorem1Result {
  double j_theta1_opt = 0.0;  // J_theta1(pi*_theta1)
  double j_theta2_opt = 0.0;
  double minimax_mixture = 0.0;  // P(a1 at gold) of the minimax policy
  double j_minimax_theta1 = 0.0;
  double j_minimax_theta2 = 0.0;
  double gap = 0.0;          // max_theta J_theta(pi*_theta) - J_theta(minimax)
  double lower_bound = 0.0;  // r_max/(1-gamma) - 2 r_max
};

inline Theorem1Result theorem1_check(double gamma, double r_max, double mixture_resolution = 0.01) {
  const MdpFamily f = build_worstcase_pair(gamma, r_max);
  const ThetaVector t1{0.0}, t2{1.0};
  const TabularMdp m1 = f.mdp(t1), m2 = f.mdp(t2);
  Theorem1Result r;
  r.j_theta1_opt = total_return(m1, value_iteration(m1).policy);
  r.j_theta2_opt = total_return(m2, value_iteration(m2).policy);
  const FixedChoice mm = fixed_minimax_policy(f, {t1, t2}, mixture_resolution);
  r.minimax_mixture = mm.mixture ? *mm.mixture : mm.policy(kGold, 0);
  r.j_minimax_theta1 = total_return(m1, mm.policy);
  r.j_minimax_theta2 = total_return(m2, mm.policy);
  r.gap = std::max(r.j_theta1_opt - r.j_minimax_theta1, r.j_theta2_opt - r.j_minimax_theta2);
  r.lower_bound = r_max / (1.0 - gamma) - 2.0 * r_max;
  return r;
}

struct AuditRow {
  ThetaVector theta_test;
  ThetaVector theta_hat;
  double distance = 0.0;
  double regret = 0.0;
  double theorem2 = 0.0;    // theorem2_bound at epsilon = distance
  double corollary1 = 0.0;  // corollary1_bound(cover radius, eps_infer)
  bool pass = false;
};

/// For each test type, the pool entry nearest to it and the exact regret of
/// that entry's policy (rewards shifted into [0, r_max]) against both bounds.
inline std::vector<AuditRow> corollary1_audit(const MdpFamily& family, const PolicyPool& pool,
                                              const std::vector<ThetaVector>& tests, const SmoothnessProfile& profile,
                                              double eps_infer = 0.0) {
  std::vector<AuditRow> rows;
  for (const auto& t : tests) {
    const std::size_t k = nearest_index(pool, t);
    const TabularMdp m = family.mdp(t).shifted(family.reward_offset);
    const double best = total_return(m, value_iteration(m).policy);
    AuditRow row;
    row.theta_test = t;
    row.theta_hat = pool.entries[k].theta;
    row.distance = euclidean_distance(t, row.theta_hat);
    row.regret = best - total_return(m, *pool.entries[k].policy);
    row.theorem2 = theorem2_bound(profile, row.distance, family.r_max, family.discount);
    row.corollary1 = corollary1_bound(profile, pool.cover_radius, eps_infer, family.r_max, family.discount);
    const double tol = 1e-9 * (1.0 + std::abs(best));
    row.pass = row.regret <= row.theorem2 + tol && row.regret <= row.corollary1 + tol &&
               (pool.cover_radius == 0.0 || row.distance <= pool.cover_radius + 1e-12);
    rows.push_back(std::move(row));
  }
  return rows;
}

struct BoundsRow {
  std::size_t trial_id = 0;
  std::string check;
  double eps_r = 0.0;
  double eps_p = 0.0;
  double measured_gap = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct CampaignOptions {
  double bound_scale = 1.0;  // multiplies every bound; below 1 is a self-test
  bool throw_on_failure = true;
  std::size_t grid = 3;      // side of the gathering family used for regret-bound trials
};

namespace detail {

inline std::vector<double> random_simplex(std::size_t n, Rng& rng, bool sparse) {
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> v(n);
  double sum = 0.0;
  for (auto& x : v) {
    x = ex(rng);
    if (sparse && uniform01(rng) < 0.3) x = 0.0;
    sum += x;
  }
  if (sum == 0.0) {
    v[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
    return v;
  }
  for (auto& x : v) x /= sum;
  return v;
}

inline TabularMdp random_mdp(std::size_t S, std::size_t A, double gamma, Rng& rng) {
  std::vector<double> t, r(S * A);
  for (std::size_t k = 0; k < S * A; ++k) {
    const auto row = random_simplex(S, rng, true);
    t.insert(t.end(), row.begin(), row.end());
  }
  for (auto& x : r) x = uniform01(rng);
  return {S, A, std::move(t), std::move(r), gamma, random_simplex(S, rng, false)};
}

/// Perturbs rewards by up to delta_r and mixes each row with a random one.
inline TabularMdp perturb_mdp(const TabularMdp& m, double delta_r, double mix, Rng& rng) {
  std::vector<double> t = m.transitions(), r = m.rewards();
  const std::size_t S = m.n_states();
  for (std::size_t k = 0; k < m.n_states() * m.n_actions(); ++k) {
    const double lam = mix * uniform01(rng);
    const auto other = random_simplex(S, rng, true);
    for (std::size_t n = 0; n < S; ++n) t[k * S + n] = (1.0 - lam) * t[k * S + n] + lam * other[n];
  }
  for (auto& x : r) x = std::clamp(x + delta_r * (2.0 * uniform01(rng) - 1.0), 0.0, 1.0);
  return {m.n_states(), m.n_actions(), std::move(t), std::move(r), m.discount(), m.initial_dist()};
}

inline StochasticPolicy random_full_support_policy(std::size_t S, std::size_t A, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.5);
  std::vector<double> p;
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<double> logits(A);
    double m = -std::numeric_limits<double>::infinity();
    for (auto& l : logits) m = std::max(m, l = nd(rng));
    double z = 0.0;
    for (auto& l : logits) z += (l = std::exp(l - m));
    for (auto l : logits) p.push_back(l / z);
  }
  return {S, A, std::move(p)};
}

}  // namespace detail

/// Value-difference trial: a random MDP and an (eps_r, eps_p)-perturbed copy,
/// rewards in [0, 1]. Compares ||V^pi1_M1 - V^pi1_M2||_inf with the bound,
/// pi1 optimal in M1.
inline BoundsRow value_diff_trial(std::size_t trial_id, Rng& rng, double bound_scale = 1.0) {
  const std::size_t S = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
  const std::size_t A = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
  const double gamma = uniform01(rng) < 0.5 ? 0.5 : 0.9;
  const TabularMdp m1 = detail::random_mdp(S, A, gamma, rng);
  const TabularMdp m2 = detail::perturb_mdp(m1, 0.2 * uniform01(rng), 0.3 * uniform01(rng), rng);
  double r_max = 0.0;
  for (double r : m1.rewards()) r_max = std::max(r_max, r);
  for (double r : m2.rewards()) r_max = std::max(r_max, r);
  if (r_max == 0.0) r_max = 1.0;
  const Equivalence eq = eps_equivalence(m1, m2, r_max);
  const StochasticPolicy pi1 = value_iteration(m1).policy;
  const ValueFunction v1 = policy_evaluation(m1, pi1), v2 = policy_evaluation(m2, pi1);
  double gap = 0.0;
  for (std::size_t s = 0; s < S; ++s) gap = std::max(gap, std::abs(v1[s] - v2[s]));
  const double bound = bound_scale * value_diff_bound(eq.eps_r, eq.eps_p, r_max, gamma);
  return {trial_id, "value_diff", eq.eps_r, eq.eps_p, gap, bound, gap <= bound + 1e-10};
}

struct SmoothnessTrial {
  BoundsRow simple;     // marginal-transition L1 gap vs policy L1 gap
  BoundsRow influence;  // same gap vs influence/2 * policy L1 gap
  BoundsRow pinsker;    // worst row of ||p - q||_1 - sqrt(2 KL)
};

/// Random two-agent dynamics and a pair of full-support x policies.
inline SmoothnessTrial smoothness_trial(std::size_t trial_id, Rng& rng, double bound_scale = 1.0) {
  const std::size_t S = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
  const std::size_t A = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
  const std::size_t B = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
  std::vector<double> t;
  for (std::size_t k = 0; k < S * A * B; ++k) {
    const auto row = detail::random_simplex(S, rng, true);
    t.insert(t.end(), row.begin(), row.end());
  }
  const TwoAgentDynamics dyn(S, A, B, std::move(t));
  const StochasticPolicy p1 = detail::random_full_support_policy(S, B, rng);
  const StochasticPolicy p2 = detail::random_full_support_policy(S, B, rng);
  const SmoothnessCheck chk = smoothness_lemma_check(dyn, p1, p2);

  SmoothnessTrial out;
  const double tol = 1e-12;
  out.simple = {trial_id, "smoothness", 0.0, chk.lhs, chk.lhs, bound_scale * chk.rhs_simple,
                chk.lhs <= bound_scale * chk.rhs_simple + tol};
  out.influence = {trial_id, "influence_tv", 0.0, chk.lhs, chk.lhs, bound_scale * chk.rhs_influence_tv,
                   chk.lhs <= bound_scale * chk.rhs_influence_tv + tol};
  // Pinsker row with the smallest slack
  double worst_slack = std::numeric_limits<double>::infinity(), worst_l1 = 0.0, worst_rhs = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    double l1 = 0.0;
    for (std::size_t b = 0; b < B; ++b) l1 += std::abs(p1(s, b) - p2(s, b));
    const double rhs = bound_scale * std::sqrt(2.0 * kl_divergence(p1.row(s), p2.row(s)));
    if (rhs - l1 < worst_slack) {
      worst_slack = rhs - l1;
      worst_l1 = l1;
      worst_rhs = rhs;
    }
  }
  out.pinsker = {trial_id, "pinsker", 0.0, 0.0, worst_l1, worst_rhs, worst_l1 <= worst_rhs + tol};
  return out;
}

/// Regret-bound trial on a gathering family: random theta, theta' in the box;
/// regret of pi*_theta' when the true type is theta against the bound at
/// epsilon = ||theta - theta'||. `profile` supplies the influence and a
/// baseline alpha, beta; both are raised to cover the sampled pair.
inline BoundsRow theorem2_trial(std::size_t trial_id, const MdpFamily& family, const SmoothnessProfile& profile,
                                Rng& rng, double bound_scale = 1.0) {
  ThetaVector a(family.space.dim()), b(family.space.dim());
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::uniform_real_distribution<double> u(family.space.lower[i], family.space.upper[i]);
    a[i] = u(rng);
    b[i] = u(rng);
  }
  SmoothnessProfile p = profile;
  p.alpha = std::max(p.alpha, empirical_alpha(family, {a, b}));
  p.beta = std::max(p.beta, empirical_beta(family, {a, b}));
  const FamilyInstance ia = family.instance(a), ib = family.instance(b);
  const TabularMdp ma = ia.mdp.shifted(family.reward_offset), mb = ib.mdp.shifted(family.reward_offset);
  const Equivalence eq = eps_equivalence(ma, mb, family.r_max);
  const double best = total_return(ma, value_iteration(ma).policy);
  const double regret = best - total_return(ma, value_iteration(mb).policy);
  const double eps = euclidean_distance(a, b);
  const double bound = bound_scale * theorem2_bound(p, eps, family.r_max, family.discount);
  return {trial_id, "theorem2", eq.eps_r, eq.eps_p, regret, bound, regret <= bound + 1e-9 * (1.0 + std::abs(best))};
}

/// Every inequality on n_trials independently seeded random instances. With
/// throw_on_failure, the first violated row raises VerificationFailure.
inline std::vector<BoundsRow> verify_bounds_campaign(std::uint64_t seed, std::size_t n_trials,
                                                     const CampaignOptions& options = {}) {
  if (n_trials == 0) throw DomainError("verify_bounds_campaign needs at least one trial");
  const MdpFamily family = build_joint_family(GatheringConfig::square(static_cast<int>(options.grid)));
  const auto grid = theta_grid(family.space, 0.5);
  const SmoothnessProfile profile = estimate_smoothness(family, grid);

  std::vector<BoundsRow> rows;
  for (std::size_t k = 0; k < n_trials; ++k) {
    Rng rng(derive_seed(seed, k));
    rows.push_back(value_diff_trial(k, rng, options.bound_scale));
    const SmoothnessTrial sm = smoothness_trial(k, rng, options.bound_scale);
    rows.push_back(sm.simple);
    rows.push_back(sm.influence);
    rows.push_back(sm.pinsker);
    rows.push_back(theorem2_trial(k, family, profile, rng, options.bound_scale));
  }
  if (options.throw_on_failure)
    for (const auto& r : rows)
      if (!r.pass)
        throw VerificationFailure("trial " + std::to_string(r.trial_id) + " violates the " + r.check +
                                  " inequality (measured " + std::to_string(r.measured_gap) + " > bound " +
                                  std::to_string(r.bound) + ")");
  return rows;
}

}  // namespace robustcoop
