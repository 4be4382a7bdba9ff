// robustcoop: train pools and networks, evaluate on a test grid, verify the bounds.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "robustcoop/robustcoop.hpp"

namespace fs = std::filesystem;
using namespace robustcoop;

namespace {

enum Exit : int { kOk = 0, kVerifyFailed = 1, kUsage = 2, kRuntime = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> grid;
  std::optional<std::string> output;
  std::optional<std::size_t> jobs;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "master seed (overrides ROBUSTCOOP_SEED and the config)");
  cmd->add_option("--grid", f.grid, "square gathering grid of this side")->check(CLI::Range(2, 64));
  cmd->add_option("--output", f.output, "output directory");
  cmd->add_option("--jobs", f.jobs, "worker threads for grid cells (0: all cores)");
}

// flag > ROBUSTCOOP_SEED > config file > defaults
RunConfig load_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) {
    if (!fs::exists(f.config_path)) throw UsageError("config file not found: " + f.config_path);
    cfg = config_from_json(read_json_file(f.config_path));
  }
  if (const char* env = std::getenv("ROBUSTCOOP_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      cfg.seed = std::stoull(env, &used);
      if (env[used] != '\0') throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("ROBUSTCOOP_SEED", "expected an unsigned integer");
    }
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.grid) {
    if (cfg.environment.kind != "gathering") throw ConfigError("environment.kind", "--grid needs a gathering environment");
    cfg.environment.gathering = GatheringConfig::square(*f.grid);
  }
  if (f.output) cfg.output_dir = *f.output;
  if (f.jobs) cfg.evaluation.jobs = *f.jobs;
  validate_config(cfg);
  return cfg;
}

Json environment_json(const RunConfig& cfg) { return environment_to_json(cfg.environment); }

std::string out_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / name).string();
}

struct NamedPool {
  std::string name;
  PolicyPool pool;
};

std::string pool_name(double radius) { return "AdaptPool" + fmt_num(radius); }

std::vector<NamedPool> build_pools(const MdpFamily& family, const RunConfig& cfg) {
  std::vector<NamedPool> out;
  if (cfg.training.pool_points == "grid") {
    const double res = cfg.training.train_resolution;
    const double radius = res * std::sqrt(static_cast<double>(family.space.dim())) / 2.0;
    out.push_back({pool_name(radius), train_pool(family, theta_grid(family.space, res), radius)});
    return out;
  }
  for (double r : cfg.training.cover_radii)
    out.push_back({pool_name(r), train_pool(family, epsilon_cover(family.space, r), r)});
  return out;
}

Json load_artifact(const std::string& path, const std::string& kind, const RunConfig& cfg) {
  if (!fs::exists(path)) throw UsageError("artifact not found: " + path);
  Json j = read_json_file(path);
  if (!j.contains("manifest") || !j.contains("payload")) throw UsageError(path + ": not a robustcoop artifact");
  const Json& m = j["manifest"];
  if (m.value("kind", "") != kind) throw UsageError(path + ": expected a " + kind + " artifact");
  const std::string want = hex64(fnv1a(environment_json(cfg).dump()));
  if (m.value("env_hash", "") != want)
    throw UsageError(path + ": environment hash " + m.value("env_hash", "?") + " does not match the configured " +
                     "environment (" + want + ")");
  return j["payload"];
}

EstimatorFactory make_estimators(const MdpFamily& family, const RunConfig& cfg) {
  if (!family.x_mdp) return oracle_factory();
  ThetaVector theta0 = cfg.inference.theta0;
  if (theta0.empty())
    for (std::size_t i = 0; i < family.space.dim(); ++i)
      theta0.push_back(0.5 * (family.space.lower[i] + family.space.upper[i]));
  return mce_irl_factory(family, theta0, cfg.inference.learning_rate);
}

std::string fmt_theta(const ThetaVector& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.size(); ++i) s += (i ? ", " : "") + fmt_num(t[i]);
  return s + ")";
}

// --- subcommands ---------------------------------------------------------------

int cmd_train_pool(const CommonFlags& flags, const std::vector<double>& radii, const std::string& points) {
  RunConfig cfg = load_config(flags);
  if (!radii.empty()) cfg.training.cover_radii = radii;
  if (!points.empty()) cfg.training.pool_points = points;
  validate_config(cfg);
  const MdpFamily family = build_family(cfg.environment);
  const Json config_json = config_to_json(cfg);
  for (const auto& p : build_pools(family, cfg)) {
    const std::string path = out_path(cfg, "pool_" + fmt_num(p.pool.cover_radius) + ".json");
    write_json_file(path, with_manifest(to_json(p.pool), "pool", config_json, environment_json(cfg), cfg.seed));
    std::cout << p.name << ": " << p.pool.size() << " entries, audited cover radius "
              << fmt_num(cover_audit(p.pool, family.space)) << " -> " << path << "\n";
  }
  return kOk;
}

int cmd_train_dqn(const CommonFlags& flags, std::optional<std::size_t> iterations) {
  RunConfig cfg = load_config(flags);
  if (iterations) cfg.training.dqn.max_iterations = *iterations;
  DqnTrainingConfig dq = cfg.training.dqn;
  dq.seed = cfg.seed;
  const MdpFamily family = build_family(cfg.environment);
  const auto train = theta_grid(family.space, cfg.training.train_resolution);
  const DqnTrainingResult res = train_adaptdqn(family, train, dq);
  const std::string model = out_path(cfg, "dqn_model.json");
  write_json_file(model, with_manifest(to_json(res.network), "dqn", config_to_json(cfg), environment_json(cfg), cfg.seed));
  write_text_file(out_path(cfg, "dqn_log.csv"), to_csv([&](std::ostream& o) { write_dqn_log_csv(o, res.log); }));
  std::cout << "iterations " << res.iterations << (res.converged ? " (early stop)" : "") << ", greedy match "
            << fmt_num(greedy_match_rate(res.network, family, train)) << " on " << train.size() << " train types -> "
            << model << "\n";
  return kOk;
}

int run_verify(const RunConfig& cfg, std::size_t trials, double bound_scale) {
  CampaignOptions opt;
  opt.bound_scale = bound_scale;
  opt.throw_on_failure = false;
  if (cfg.environment.kind == "gathering") opt.grid = static_cast<std::size_t>(cfg.environment.gathering.grid_w);
  const auto rows = verify_bounds_campaign(cfg.seed, trials, opt);
  const std::string path = out_path(cfg, "bounds_report.csv");
  write_text_file(path, to_csv([&](std::ostream& o) { write_bounds_csv(o, rows); }));
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
  for (const auto& r : rows) {
    auto& t = tally[r.check];
    t.first += r.pass ? 1 : 0;
    ++t.second;
  }
  bool ok = true;
  for (const auto& [check, t] : tally) {
    std::cout << "  " << check << ": " << t.first << "/" << t.second << " pass\n";
    ok = ok && t.first == t.second;
  }
  for (const auto& r : rows)
    if (!r.pass) {
      std::cerr << "verification failed: trial " << r.trial_id << " " << r.check << " measured "
                << fmt_num(r.measured_gap) << " > bound " << fmt_num(r.bound) << "\n";
      break;
    }
  std::cout << "bounds report -> " << path << "\n";
  return ok ? kOk : kVerifyFailed;
}

int cmd_verify(const CommonFlags& flags, std::size_t trials, double bound_scale) {
  const RunConfig cfg = load_config(flags);
  const Theorem1Result t1 = theorem1_check(0.99, 1.0);
  const bool t1_ok = t1.gap >= t1.lower_bound;
  std::cout << "worst-case pair (gamma 0.99): J* " << fmt_num(t1.j_theta1_opt) << ", minimax J "
            << fmt_num(t1.j_minimax_theta1) << ", gap " << fmt_num(t1.gap) << " >= " << fmt_num(t1.lower_bound)
            << (t1_ok ? "" : "  FAILED") << "\n";
  const int rc = run_verify(cfg, trials, bound_scale);
  return t1_ok ? rc : kVerifyFailed;
}

struct EvalFlags {
  std::vector<std::string> pools;
  std::string model;
  std::optional<double> resolution;
  std::optional<std::size_t> runs, episodes, steps;
  bool verify = false;
  std::size_t trials = 200;
  bool oracle = false;
};

int cmd_eval(const CommonFlags& flags, const EvalFlags& ef) {
  RunConfig cfg = load_config(flags);
  if (ef.resolution) cfg.evaluation.resolution = *ef.resolution;
  if (ef.runs) cfg.evaluation.runs = *ef.runs;
  if (ef.episodes) cfg.evaluation.episodes = *ef.episodes;
  if (ef.steps) cfg.evaluation.steps = *ef.steps;
  validate_config(cfg);
  auto family = std::make_shared<const MdpFamily>(build_family(cfg.environment));

  std::vector<NamedPool> pools;
  for (const auto& path : ef.pools) {
    PolicyPool p = pool_from_json(load_artifact(path, "pool", cfg));
    if (p.entries.front().policy->n_states() != family->n_states) throw UsageError(path + ": pool does not fit the environment");
    pools.push_back({pool_name(p.cover_radius), std::move(p)});
  }
  std::shared_ptr<const MlpNetwork> net;
  if (!ef.model.empty()) net = std::make_shared<const MlpNetwork>(network_from_json(load_artifact(ef.model, "dqn", cfg)));
  if (pools.empty()) pools = build_pools(*family, cfg);

  std::vector<std::shared_ptr<const AdaptivePolicy>> algs;
  for (auto& p : pools)
    algs.push_back(std::make_shared<PoolPolicy>(p.name, std::make_shared<const PolicyPool>(std::move(p.pool))));
  if (net) algs.push_back(std::make_shared<DqnPolicy>("AdaptDQN", net, family));
  const auto candidates = theta_grid(family->space, cfg.training.train_resolution);
  const FixedChoice best = fixed_best_policy(*family, candidates);
  const FixedChoice mm = fixed_minimax_policy(*family, candidates);
  algs.push_back(std::make_shared<FixedPolicy>("FixedBest", std::make_shared<const StochasticPolicy>(best.policy)));
  algs.push_back(std::make_shared<FixedPolicy>("FixedMM", std::make_shared<const StochasticPolicy>(mm.policy)));
  algs.push_back(std::make_shared<RandomTypePolicy>(family));
  if (ef.oracle) algs.push_back(std::make_shared<BestResponsePolicy>(family));

  EvalOptions opt;
  opt.resolution = cfg.evaluation.resolution;
  opt.runs = cfg.evaluation.runs;
  opt.phase = {cfg.evaluation.episodes, cfg.evaluation.steps};
  opt.seed = cfg.seed;
  opt.jobs = cfg.evaluation.jobs;
  const EvalGridReport rep = evaluate_grid(*family, algs, make_estimators(*family, cfg), opt);

  write_text_file(out_path(cfg, "eval_grid.csv"), to_csv([&](std::ostream& o) { write_eval_grid_csv(o, rep); }));
  write_text_file(out_path(cfg, "inference_trace.csv"),
                  to_csv([&](std::ostream& o) { write_inference_trace_csv(o, rep); }));
  write_text_file(out_path(cfg, "eval_curves.csv"), to_csv([&](std::ostream& o) { write_eval_curves_csv(o, rep); }));

  std::cout << rep.grid.size() << " cells x " << opt.runs << " runs x " << opt.phase.episodes << " episodes of "
            << opt.phase.steps_per_episode << " steps\n";
  if (best.theta) std::cout << "FixedBest plays the best response to " << fmt_theta(*best.theta) << "\n";
  if (mm.theta) std::cout << "FixedMM plays the best response to " << fmt_theta(*mm.theta) << "\n";
  if (mm.mixture) std::cout << "FixedMM mixes action 0 with probability " << fmt_num(*mm.mixture) << "\n";
  std::cout << "algorithm        worst regret   average regret\n";
  for (std::size_t a = 0; a < rep.algorithms.size(); ++a) {
    char line[128];
    std::snprintf(line, sizeof line, "%-16s %12.4f %16.4f\n", rep.algorithms[a].c_str(), rep.worst_case[a],
                  rep.average_case[a]);
    std::cout << line;
  }
  std::cout << "CSVs -> " << cfg.output_dir << "\n";

  int rc = kOk;
  if (!rep.complete) {
    for (std::size_t c = 0; c < rep.cells.size(); ++c)
      if (!rep.cells[c].error.empty())
        std::cerr << "cell " << fmt_theta(rep.grid[c]) << " failed: " << rep.cells[c].error << "\n";
    rc = kRuntime;
  }
  if (ef.verify) {
    const int v = run_verify(cfg, ef.trials, 1.0);
    if (rc == kOk) rc = v;
  }
  return rc;
}

int cmd_infer_demo(const CommonFlags& flags, const std::vector<double>& theta, std::optional<std::size_t> episodes,
                   std::optional<std::size_t> steps) {
  RunConfig cfg = load_config(flags);
  auto family = std::make_shared<const MdpFamily>(build_family(cfg.environment));
  if (!family->x_mdp) throw UsageError("infer-demo needs an environment where A^x plans on its own rewards");
  if (theta.size() != family->space.dim() || !family->space.contains(theta))
    throw UsageError("--theta must give " + std::to_string(family->space.dim()) + " coordinates inside the box");
  TestPhaseOptions phase{episodes.value_or(cfg.evaluation.episodes), steps.value_or(cfg.evaluation.steps)};
  const CellContext ctx = CellContext::make(*family, theta);
  const auto est = make_estimators(*family, cfg)(theta);
  const BestResponsePolicy oracle(family);
  const TestRunRecord rec = run_test_phase(*family, ctx, oracle, *est, phase, cfg.seed);

  EvalGridReport rep;
  rep.grid = {theta};
  rep.cells.resize(1);
  rep.cells[0].theta_trace = {rec.theta_trace};
  const std::string path = out_path(cfg, "inference_demo.csv");
  write_text_file(path, to_csv([&](std::ostream& o) { write_inference_trace_csv(o, rep); }));
  const std::size_t E = rec.theta_trace.size();
  for (std::size_t e : std::set<std::size_t>{1, 10, 50, 100, E})
    if (e >= 1 && e <= E)
      std::cout << "episode " << e << ": estimate " << fmt_theta(rec.theta_trace[e - 1]) << ", error "
                << fmt_num(rec.inference_error[e - 1]) << "\n";
  std::cout << "trace -> " << path << "\n";
  return kOk;
}

// Plain comma-separated input as written by the harness; no quoting.
std::vector<std::map<std::string, std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw UsageError(path + ": empty file");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  const auto header = split(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw UsageError(path + ": ragged row");
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  for (const char* col : {"theta1", "theta2", "algorithm", "run", "discounted_return", "regret", "final_inference_error"})
    if (!rows.empty() && !rows[0].count(col)) throw UsageError(path + ": missing column " + col);
  return rows;
}

int cmd_export_report(const std::string& input, const std::string& outdir) {
  const auto rows = read_csv(input);
  struct Acc {
    double regret = 0.0, ret = 0.0, err = 0.0;
    std::size_t n = 0;
  };
  std::vector<std::string> algorithms;
  std::vector<std::pair<std::string, std::string>> cells;
  std::map<std::pair<std::size_t, std::size_t>, Acc> acc;  // (cell, algorithm)
  auto index_of = [](auto& v, const auto& x) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] == x) return i;
    v.push_back(x);
    return v.size() - 1;
  };
  for (const auto& r : rows) {
    const std::size_t c = index_of(cells, std::make_pair(r.at("theta1"), r.at("theta2")));
    const std::size_t a = index_of(algorithms, r.at("algorithm"));
    Acc& x = acc[{c, a}];
    x.regret += std::stod(r.at("regret"));
    x.ret += std::stod(r.at("discounted_return"));
    x.err += std::stod(r.at("final_inference_error"));
    ++x.n;
  }
  fs::create_directories(outdir);
  std::ostringstream cell_csv, summary_csv;
  cell_csv << "theta1,theta2,algorithm,runs,mean_regret,mean_discounted_return,mean_final_inference_error\n";
  summary_csv << "algorithm,cells,worst_regret,average_regret,worst_return,average_return\n";
  for (std::size_t a = 0; a < algorithms.size(); ++a) {
    double worst = -1e300, sum = 0.0, worst_ret = 1e300, sum_ret = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto it = acc.find({c, a});
      if (it == acc.end()) continue;
      const double k = static_cast<double>(it->second.n);
      const double reg = it->second.regret / k, ret = it->second.ret / k;
      cell_csv << cells[c].first << ',' << cells[c].second << ',' << algorithms[a] << ',' << it->second.n << ','
               << fmt_num(reg) << ',' << fmt_num(ret) << ',' << fmt_num(it->second.err / k) << '\n';
      worst = std::max(worst, reg);
      worst_ret = std::min(worst_ret, ret);
      sum += reg;
      sum_ret += ret;
      ++n;
    }
    const double k = static_cast<double>(n);
    summary_csv << algorithms[a] << ',' << n << ',' << fmt_num(worst) << ',' << fmt_num(sum / k) << ','
                << fmt_num(worst_ret) << ',' << fmt_num(sum_ret / k) << '\n';
  }
  write_text_file((fs::path(outdir) / "report_cells.csv").string(), cell_csv.str());
  write_text_file((fs::path(outdir) / "report_summary.csv").string(), summary_csv.str());
  std::cout << summary_csv.str() << "report -> " << outdir << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policies that stay robust to a cooperating agent of unknown type"};
  app.require_subcommand(1);

  CommonFlags pool_flags, dqn_flags, eval_flags, infer_flags, verify_flags;
  std::vector<double> radii;
  std::string points;
  auto* train_pool_cmd = app.add_subcommand("train-pool", "solve the best responses on a cover of the type box");
  add_common(train_pool_cmd, pool_flags);
  train_pool_cmd->add_option("--radius", radii, "cover radii (overrides training.cover_radii)");
  train_pool_cmd->add_option("--points", points, "cover or grid")->check(CLI::IsMember({"cover", "grid"}));

  std::optional<std::size_t> dqn_iterations;
  auto* train_dqn_cmd = app.add_subcommand("train-dqn", "fit the type-conditioned Q network");
  add_common(train_dqn_cmd, dqn_flags);
  train_dqn_cmd->add_option("--iterations", dqn_iterations, "iteration budget");

  EvalFlags ef;
  auto* eval_cmd = app.add_subcommand("eval", "run every algorithm on the test grid");
  add_common(eval_cmd, eval_flags);
  eval_cmd->add_option("--pool", ef.pools, "pool artifact (repeatable; default: train from the config)");
  eval_cmd->add_option("--model", ef.model, "AdaptDQN model artifact");
  eval_cmd->add_option("--resolution", ef.resolution, "test grid spacing");
  eval_cmd->add_option("--runs", ef.runs, "runs per cell");
  eval_cmd->add_option("--episodes", ef.episodes, "episodes per run");
  eval_cmd->add_option("--steps", ef.steps, "steps per episode");
  eval_cmd->add_flag("--oracle", ef.oracle, "also run the best response to the current estimate");
  eval_cmd->add_flag("--verify", ef.verify, "run the bounds campaign as well");
  eval_cmd->add_option("--trials", ef.trials, "bounds campaign trials");

  std::vector<double> demo_theta;
  std::optional<std::size_t> demo_episodes, demo_steps;
  auto* infer_cmd = app.add_subcommand("infer-demo", "trace the type estimate against one true type");
  add_common(infer_cmd, infer_flags);
  infer_cmd->add_option("--theta", demo_theta, "true type")->required()->delimiter(',');
  infer_cmd->add_option("--episodes", demo_episodes, "episodes");
  infer_cmd->add_option("--steps", demo_steps, "steps per episode");

  std::size_t trials = 200;
  double bound_scale = 1.0;
  auto* verify_cmd = app.add_subcommand("verify", "check the value-difference, smoothness and regret bounds");
  add_common(verify_cmd, verify_flags);
  verify_cmd->add_option("--trials", trials, "random trials");
  verify_cmd->add_option("--bound-scale", bound_scale, "multiply every bound (below 1 forces failures)")
      ->group("");

  std::string report_input, report_outdir = "report";
  auto* export_cmd = app.add_subcommand("export-report", "aggregate eval_grid.csv per cell and per algorithm");
  export_cmd->add_option("--input", report_input, "eval_grid.csv")->required();
  export_cmd->add_option("--outdir", report_outdir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train_pool_cmd) return cmd_train_pool(pool_flags, radii, points);
    if (*train_dqn_cmd) return cmd_train_dqn(dqn_flags, dqn_iterations);
    if (*eval_cmd) return cmd_eval(eval_flags, ef);
    if (*infer_cmd) return cmd_infer_demo(infer_flags, demo_theta, demo_episodes, demo_steps);
    if (*verify_cmd) return cmd_verify(verify_flags, trials, bound_scale);
    if (*export_cmd) return cmd_export_report(report_input, report_outdir);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kVerifyFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
