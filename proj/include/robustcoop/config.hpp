#pragma once

// Run configuration: a JSON document whose fields map onto the modules'
// parameters. Unknown keys are rejected so typos surface as errors.

#include <cstdint>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "robustcoop/adapt_dqn.hpp"
#include "robustcoop/environments.hpp"
#include "robustcoop/errors.hpp"

namespace robustcoop {

/// Invalid configuration; `field()` is the JSON path of the offending entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct EnvironmentConfig {
  std::string kind = "gathering";  // "gathering" or "worstcase"
  GatheringConfig gathering = GatheringConfig::square(3);
  double worstcase_gamma = 0.99;
  double worstcase_r_max = 1.0;
};

struct TrainingConfig {
  std::vector<double> cover_radii{1.0, 0.25};
  /// "cover": one pool per radius from epsilon_cover; "grid": a single pool
  /// on the train grid.
  std::string pool_points = "cover";
  double train_resolution = 0.25;
  DqnTrainingConfig dqn{};
};

struct InferenceConfig {
  double learning_rate = 0.001;
  std::vector<double> theta0;  // empty: centre of the box
};

struct EvaluationConfig {
  double resolution = 0.5;
  std::size_t runs = 5;
  std::size_t episodes = 200;
  std::size_t steps = 100;
  std::size_t jobs = 0;
};

struct RunConfig {
  EnvironmentConfig environment;
  TrainingConfig training;
  InferenceConfig inference;
  EvaluationConfig evaluation;
  std::uint64_t seed = 0;
  std::string output_dir = ".";
};

namespace detail {

using Json = nlohmann::json;

inline void reject_unknown(const Json& j, const std::string& path, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError(path + (path.empty() ? "" : ".") + it.key(), "unknown field");
}

template <typename T>
void read_field(const Json& j, const std::string& path, const std::string& key, T& out) {
  if (!j.contains(key)) return;
  const std::string field = path + (path.empty() ? "" : ".") + key;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(field, std::string("wrong type (") + e.what() + ")");
  }
}

inline Cell read_cell(const Json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw ConfigError(field, "expected [row, col]");
  return {j[0].get<int>(), j[1].get<int>()};
}

inline Json cell_json(Cell c) { return Json::array({c.row, c.col}); }

}  // namespace detail

inline nlohmann::json environment_to_json(const EnvironmentConfig& e) {
  if (e.kind == "worstcase")
    return {{"kind", e.kind}, {"gamma", e.worstcase_gamma}, {"r_max", e.worstcase_r_max}};
  const GatheringConfig& g = e.gathering;
  return {{"kind", e.kind},
          {"grid_w", g.grid_w},
          {"grid_h", g.grid_h},
          {"fruit_cells", {detail::cell_json(g.fruit_cells[0]), detail::cell_json(g.fruit_cells[1])}},
          {"random_move_prob", g.random_move_prob},
          {"collision_cost", g.collision_cost},
          {"proximity_cost", g.proximity_cost},
          {"discount", g.discount},
          {"start_cells", {detail::cell_json(g.x_start), detail::cell_json(g.y_start)}},
          {"soft_temperature", g.soft_temperature}};
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  const auto& d = c.training.dqn;
  return {{"environment", environment_to_json(c.environment)},
          {"training",
           {{"cover_radii", c.training.cover_radii},
            {"pool_points", c.training.pool_points},
            {"train_resolution", c.training.train_resolution},
            {"dqn",
             {{"hidden", d.hidden},
              {"learning_rate", d.learning_rate},
              {"final_learning_rate", d.final_learning_rate},
              {"batch_size", d.batch_size},
              {"max_iterations", d.max_iterations},
              {"check_every", d.check_every},
              {"patience", d.patience},
              {"min_improvement", d.min_improvement},
              {"validation_size", d.validation_size},
              {"optimizer", d.optimizer == Optimizer::Adam ? "adam" : "sgd"},
              {"target_scale", d.target_scale},
              {"target_shift", d.target_shift}}}}},
          {"inference", {{"learning_rate", c.inference.learning_rate}, {"theta0", c.inference.theta0}}},
          {"evaluation",
           {{"resolution", c.evaluation.resolution},
            {"runs", c.evaluation.runs},
            {"episodes", c.evaluation.episodes},
            {"steps", c.evaluation.steps},
            {"jobs", c.evaluation.jobs}}},
          {"seed", c.seed},
          {"output_dir", c.output_dir}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  RunConfig c;
  detail::reject_unknown(j, "", {"environment", "training", "inference", "evaluation", "seed", "output_dir"});
  read_field(j, "", "seed", c.seed);
  read_field(j, "", "output_dir", c.output_dir);

  if (j.contains("environment")) {
    const auto& e = j["environment"];
    detail::reject_unknown(e, "environment",
                           {"kind", "grid", "grid_w", "grid_h", "fruit_cells", "random_move_prob", "collision_cost",
                            "proximity_cost", "discount", "start_cells", "soft_temperature", "gamma", "r_max"});
    read_field(e, "environment", "kind", c.environment.kind);
    if (c.environment.kind != "gathering" && c.environment.kind != "worstcase")
      throw ConfigError("environment.kind", "expected \"gathering\" or \"worstcase\"");
    if (e.contains("grid")) {
      int n = 0;
      read_field(e, "environment", "grid", n);
      if (n < 2) throw ConfigError("environment.grid", "grid side must be at least 2");
      c.environment.gathering = GatheringConfig::square(n);
    }
    GatheringConfig& g = c.environment.gathering;
    read_field(e, "environment", "grid_w", g.grid_w);
    read_field(e, "environment", "grid_h", g.grid_h);
    if (e.contains("fruit_cells")) {
      const auto& f = e["fruit_cells"];
      if (!f.is_array() || f.size() != 2) throw ConfigError("environment.fruit_cells", "expected two cells");
      g.fruit_cells = {detail::read_cell(f[0], "environment.fruit_cells[0]"),
                       detail::read_cell(f[1], "environment.fruit_cells[1]")};
    }
    if (e.contains("start_cells")) {
      const auto& s = e["start_cells"];
      if (!s.is_array() || s.size() != 2) throw ConfigError("environment.start_cells", "expected two cells");
      g.x_start = detail::read_cell(s[0], "environment.start_cells[0]");
      g.y_start = detail::read_cell(s[1], "environment.start_cells[1]");
    }
    read_field(e, "environment", "random_move_prob", g.random_move_prob);
    read_field(e, "environment", "collision_cost", g.collision_cost);
    read_field(e, "environment", "proximity_cost", g.proximity_cost);
    read_field(e, "environment", "discount", g.discount);
    read_field(e, "environment", "soft_temperature", g.soft_temperature);
    read_field(e, "environment", "gamma", c.environment.worstcase_gamma);
    read_field(e, "environment", "r_max", c.environment.worstcase_r_max);
  }

  if (j.contains("training")) {
    const auto& t = j["training"];
    detail::reject_unknown(t, "training", {"cover_radii", "pool_points", "train_resolution", "dqn"});
    read_field(t, "training", "cover_radii", c.training.cover_radii);
    read_field(t, "training", "pool_points", c.training.pool_points);
    read_field(t, "training", "train_resolution", c.training.train_resolution);
    if (t.contains("dqn")) {
      const auto& d = t["dqn"];
      auto& q = c.training.dqn;
      detail::reject_unknown(d, "training.dqn",
                             {"hidden", "learning_rate", "final_learning_rate", "batch_size", "max_iterations", "check_every", "patience",
                              "min_improvement", "validation_size", "optimizer", "target_scale", "target_shift"});
      read_field(d, "training.dqn", "hidden", q.hidden);
      read_field(d, "training.dqn", "learning_rate", q.learning_rate);
      read_field(d, "training.dqn", "batch_size", q.batch_size);
      read_field(d, "training.dqn", "max_iterations", q.max_iterations);
      read_field(d, "training.dqn", "check_every", q.check_every);
      read_field(d, "training.dqn", "patience", q.patience);
      read_field(d, "training.dqn", "min_improvement", q.min_improvement);
      read_field(d, "training.dqn", "validation_size", q.validation_size);
      read_field(d, "training.dqn", "final_learning_rate", q.final_learning_rate);
      read_field(d, "training.dqn", "target_scale", q.target_scale);
      read_field(d, "training.dqn", "target_shift", q.target_shift);
      std::string opt = q.optimizer == Optimizer::Adam ? "adam" : "sgd";
      read_field(d, "training.dqn", "optimizer", opt);
      if (opt != "sgd" && opt != "adam") throw ConfigError("training.dqn.optimizer", "expected \"sgd\" or \"adam\"");
      q.optimizer = opt == "adam" ? Optimizer::Adam : Optimizer::Sgd;
    }
  }

  if (j.contains("inference")) {
    const auto& i = j["inference"];
    detail::reject_unknown(i, "inference", {"learning_rate", "theta0"});
    read_field(i, "inference", "learning_rate", c.inference.learning_rate);
    read_field(i, "inference", "theta0", c.inference.theta0);
  }

  if (j.contains("evaluation")) {
    const auto& v = j["evaluation"];
    detail::reject_unknown(v, "evaluation", {"resolution", "runs", "episodes", "steps", "jobs"});
    read_field(v, "evaluation", "resolution", c.evaluation.resolution);
    read_field(v, "evaluation", "runs", c.evaluation.runs);
    read_field(v, "evaluation", "episodes", c.evaluation.episodes);
    read_field(v, "evaluation", "steps", c.evaluation.steps);
    read_field(v, "evaluation", "jobs", c.evaluation.jobs);
  }
  return c;
}

/// Field-level validation of everything the modules would reject later.
inline void validate_config(const RunConfig& c) {
  if (c.environment.kind == "gathering") {
    try {
      c.environment.gathering.validate();
    } catch (const ModelError& e) {
      throw ConfigError("environment", e.what());
    }
  } else {
    if (!(c.environment.worstcase_gamma >= 0.0 && c.environment.worstcase_gamma < 1.0))
      throw ConfigError("environment.gamma", "must lie in [0, 1)");
    if (!(c.environment.worstcase_r_max > 0.0)) throw ConfigError("environment.r_max", "must be positive");
  }
  if (c.training.pool_points != "cover" && c.training.pool_points != "grid")
    throw ConfigError("training.pool_points", "expected \"cover\" or \"grid\"");
  if (c.training.cover_radii.empty()) throw ConfigError("training.cover_radii", "needs at least one radius");
  for (double r : c.training.cover_radii)
    if (!(r > 0.0)) throw ConfigError("training.cover_radii", "radii must be positive");
  if (!(c.training.train_resolution > 0.0)) throw ConfigError("training.train_resolution", "must be positive");
  const auto& d = c.training.dqn;
  if (!(d.learning_rate >= 0.0)) throw ConfigError("training.dqn.learning_rate", "must be nonnegative");
  if (d.final_learning_rate == 0.0) throw ConfigError("training.dqn.final_learning_rate", "must be nonzero");
  if (!(d.target_scale >= 0.0)) throw ConfigError("training.dqn.target_scale", "must be nonnegative");
  if (d.batch_size == 0) throw ConfigError("training.dqn.batch_size", "must be positive");
  if (d.check_every == 0) throw ConfigError("training.dqn.check_every", "must be positive");
  const std::size_t dim = c.environment.kind == "worstcase" ? 1 : 2;
  if (!c.inference.theta0.empty() && c.inference.theta0.size() != dim)
    throw ConfigError("inference.theta0", "expected " + std::to_string(dim) + " coordinates");
  if (!(c.inference.learning_rate > 0.0)) throw ConfigError("inference.learning_rate", "must be positive");
  if (!(c.evaluation.resolution > 0.0)) throw ConfigError("evaluation.resolution", "must be positive");
  if (c.evaluation.runs == 0) throw ConfigError("evaluation.runs", "must be positive");
  if (c.evaluation.episodes == 0) throw ConfigError("evaluation.episodes", "must be positive");
  if (c.evaluation.steps == 0) throw ConfigError("evaluation.steps", "must be positive");
}

inline MdpFamily build_family(const EnvironmentConfig& e) {
  if (e.kind == "worstcase") return build_worstcase_pair(e.worstcase_gamma, e.worstcase_r_max);
  return build_joint_family(e.gathering);
}

}  // namespace robustcoop
