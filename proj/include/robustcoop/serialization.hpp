#pragma once

// JSON layouts for models and artifacts, and the CSV report writers.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "robustcoop/adapt_dqn.hpp"
#include "robustcoop/adapt_pool.hpp"
#include "robustcoop/environments.hpp"
#include "robustcoop/errors.hpp"
#include "robustcoop/harness.hpp"
#include "robustcoop/mdp.hpp"

namespace robustcoop {

using Json = nlohmann::json;

inline constexpr const char* kArtifactVersion = "1";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// --- MDP and policies --------------------------------------------------------

inline Json to_json(const TabularMdp& m) {
  return {{"n_states", m.n_states()},       {"n_actions", m.n_actions()}, {"discount", m.discount()},
          {"transition", m.transitions()}, {"reward", m.rewards()},     {"initial_dist", m.initial_dist()}};
}

inline TabularMdp mdp_from_json(const Json& j) {
  return {j.at("n_states").get<std::size_t>(),         j.at("n_actions").get<std::size_t>(),
          j.at("transition").get<std::vector<double>>(), j.at("reward").get<std::vector<double>>(),
          j.at("discount").get<double>(),               j.at("initial_dist").get<std::vector<double>>()};
}

inline Json to_json(const StochasticPolicy& p) {
  return {{"n_states", p.n_states()}, {"n_actions", p.n_actions()}, {"probs", p.probs()}};
}

inline StochasticPolicy policy_from_json(const Json& j) {
  return {j.at("n_states").get<std::size_t>(), j.at("n_actions").get<std::size_t>(),
          j.at("probs").get<std::vector<double>>()};
}

inline Json to_json(const PolicyPool& pool) {
  Json entries = Json::array();
  for (const auto& e : pool.entries) entries.push_back({{"theta", e.theta}, {"policy", to_json(*e.policy)}});
  return {{"cover_radius", pool.cover_radius}, {"entries", entries}};
}

inline PolicyPool pool_from_json(const Json& j) {
  PolicyPool pool;
  pool.cover_radius = j.at("cover_radius").get<double>();
  for (const auto& e : j.at("entries"))
    pool.entries.push_back({e.at("theta").get<ThetaVector>(),
                            std::make_shared<const StochasticPolicy>(policy_from_json(e.at("policy")))});
  if (pool.entries.empty()) throw ModelError("pool artifact has no entries");
  return pool;
}

/// Layer sizes, then per layer the row-major weight matrix and the bias.
inline Json to_json(const MlpNetwork& net) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    const auto& w = net.weight(l);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    const auto& b = net.bias(l);
    layers.push_back({{"weights", flat}, {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  return {{"layer_sizes", net.layer_sizes()},
          {"activation", "leaky_relu"},
          {"negative_slope", kLeakySlope},
          {"output_scale", net.output_scale},
          {"output_shift", net.output_shift},
          {"layers", layers}};
}

inline MlpNetwork network_from_json(const Json& j) {
  MlpNetwork net(j.at("layer_sizes").get<std::vector<std::size_t>>());
  net.output_scale = j.value("output_scale", 1.0);
  net.output_shift = j.value("output_shift", 0.0);
  const auto& layers = j.at("layers");
  if (layers.size() != net.n_layers()) throw DimensionError("network artifact has the wrong number of layers");
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    auto& W = net.weight(l);
    if (w.size() != static_cast<std::size_t>(W.size()) || b.size() != static_cast<std::size_t>(net.bias(l).size()))
      throw DimensionError("network artifact layer has the wrong shape");
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[k++];
    for (std::size_t i = 0; i < b.size(); ++i) net.bias(l)(MlpNetwork::idx(i)) = b[i];
  }
  return net;
}

// --- files ---------------------------------------------------------------------

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ModelError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline void write_json_file(const std::string& path, const Json& j) { write_text_file(path, j.dump(1) + "\n"); }

/// Wraps an artifact payload with its provenance.
inline Json with_manifest(Json payload, const std::string& kind, const Json& config, const Json& environment,
                          std::uint64_t seed) {
  return {{"manifest",
           {{"kind", kind},
            {"version", kArtifactVersion},
            {"config_hash", hex64(fnv1a(config.dump()))},
            {"env_hash", hex64(fnv1a(environment.dump()))},
            {"seed", seed}}},
          {"payload", std::move(payload)}};
}

// --- CSV -------------------------------------------------------------------------

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void write_eval_grid_csv(std::ostream& out, const EvalGridReport& rep) {
  out << "theta1,theta2,algorithm,run,discounted_return,undiscounted_return,regret,final_inference_error\n";
  for (std::size_t c = 0; c < rep.cells.size(); ++c) {
    const auto& cell = rep.cells[c];
    const auto& t = rep.grid[c];
    for (std::size_t a = 0; a < cell.runs.size(); ++a)
      for (const auto& r : cell.runs[a])
        out << fmt_num(t[0]) << ',' << fmt_num(t.size() > 1 ? t[1] : 0.0) << ',' << rep.algorithms[a] << ','
            << r.run << ',' << fmt_num(r.discounted_return) << ',' << fmt_num(r.undiscounted_return) << ','
            << fmt_num(r.regret) << ',' << fmt_num(r.final_inference_error) << '\n';
  }
}

inline void write_inference_trace_csv(std::ostream& out, const EvalGridReport& rep) {
  out << "theta1_test,theta2_test,run,episode,theta1_est,theta2_est,error_norm\n";
  for (std::size_t c = 0; c < rep.cells.size(); ++c) {
    const auto& t = rep.grid[c];
    const double t2 = t.size() > 1 ? t[1] : 0.0;
    for (std::size_t r = 0; r < rep.cells[c].theta_trace.size(); ++r) {
      const auto& trace = rep.cells[c].theta_trace[r];
      for (std::size_t e = 0; e < trace.size(); ++e) {
        const double e2 = trace[e].size() > 1 ? trace[e][1] : 0.0;
        out << fmt_num(t[0]) << ',' << fmt_num(t2) << ',' << r << ',' << e + 1 << ',' << fmt_num(trace[e][0]) << ','
            << fmt_num(e2) << ',' << fmt_num(euclidean_distance(trace[e], t)) << '\n';
      }
    }
  }
}

/// Per episode and algorithm: mean and worst regret and return across cells
/// (each cell first averaged over runs), plus the inference error.
inline void write_eval_curves_csv(std::ostream& out, const EvalGridReport& rep) {
  out << "algorithm,episode,average_regret,worst_regret,average_return,worst_return,average_inference_error,"
         "worst_inference_error\n";
  std::size_t E = 0;
  for (const auto& c : rep.cells)
    if (c.error.empty()) E = c.episode_inference_error.size();
  for (std::size_t a = 0; a < rep.algorithms.size(); ++a)
    for (std::size_t e = 0; e < E; ++e) {
      double sr = 0.0, wr = -1e300, sj = 0.0, wj = 1e300, si = 0.0, wi = -1e300;
      std::size_t n = 0;
      for (const auto& c : rep.cells) {
        if (!c.error.empty()) continue;
        sr += c.episode_regret[a][e];
        wr = std::max(wr, c.episode_regret[a][e]);
        sj += c.episode_return[a][e];
        wj = std::min(wj, c.episode_return[a][e]);
        si += c.episode_inference_error[e];
        wi = std::max(wi, c.episode_inference_error[e]);
        ++n;
      }
      const double k = static_cast<double>(n);
      out << rep.algorithms[a] << ',' << e + 1 << ',' << fmt_num(sr / k) << ',' << fmt_num(wr) << ','
          << fmt_num(sj / k) << ',' << fmt_num(wj) << ',' << fmt_num(si / k) << ',' << fmt_num(wi) << '\n';
    }
}

inline void write_bounds_csv(std::ostream& out, const std::vector<BoundsRow>& rows) {
  out << "trial_id,eps_r,eps_p,measured_gap,bound,pass,check\n";
  for (const auto& r : rows)
    out << r.trial_id << ',' << fmt_num(r.eps_r) << ',' << fmt_num(r.eps_p) << ',' << fmt_num(r.measured_gap) << ','
        << fmt_num(r.bound) << ',' << (r.pass ? 1 : 0) << ',' << r.check << '\n';
}

inline void write_dqn_log_csv(std::ostream& out, const std::vector<DqnLogRow>& log) {
  out << "iteration,train_loss,validation_loss\n";
  for (const auto& r : log) out << r.iteration << ',' << fmt_num(r.train_loss) << ',' << fmt_num(r.validation_loss) << '\n';
}

inline std::string to_csv(const std::function<void(std::ostream&)>& writer) {
  std::ostringstream os;
  writer(os);
  return os.str();
}

}  // namespace robustcoop
