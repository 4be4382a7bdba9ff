#pragma once

// AdaptDQN: a fully connected Q-network over (state, theta), regressed on
// exact Q-values of the best responses at the training types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "robustcoop/errors.hpp"
#include "robustcoop/mdp.hpp"
#include "robustcoop/parametric.hpp"
#include "robustcoop/rng.hpp"

namespace robustcoop {

inline constexpr double kLeakySlope = 0.1;

/// Dense network with leaky-ReLU hidden layers and a linear output layer.
/// Outputs are mapped to Q units as raw * output_scale + output_shift.
class MlpNetwork {
 public:
  MlpNetwork() = default;

  explicit MlpNetwork(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw DimensionError("network needs an input and an output layer");
    for (std::size_t n : sizes_)
      if (n == 0) throw DimensionError("layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weights_.push_back(Eigen::MatrixXd::Zero(idx(sizes_[l + 1]), idx(sizes_[l])));
      biases_.push_back(Eigen::VectorXd::Zero(idx(sizes_[l + 1])));
    }
  }

  /// Glorot-uniform weights, zero biases.
  static MlpNetwork glorot(std::vector<std::size_t> layer_sizes, std::uint64_t seed) {
    MlpNetwork net(std::move(layer_sizes));
    Rng rng(seed);
    for (auto& w : net.weights_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    }
    return net;
  }

  const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t n_layers() const noexcept { return weights_.size(); }

  Eigen::MatrixXd& weight(std::size_t l) { return weights_.at(l); }
  const Eigen::MatrixXd& weight(std::size_t l) const { return weights_.at(l); }
  Eigen::VectorXd& bias(std::size_t l) { return biases_.at(l); }
  const Eigen::VectorXd& bias(std::size_t l) const { return biases_.at(l); }

  double output_scale = 1.0;
  double output_shift = 0.0;

  std::size_t n_parameters() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
      n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    return n;
  }

  /// Flat parameter access: per layer, weights row-major then biases.
  double& parameter(std::size_t k) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const auto nw = static_cast<std::size_t>(weights_[l].size());
      if (k < nw) {
        const auto cols = static_cast<std::size_t>(weights_[l].cols());
        return weights_[l](idx(k / cols), idx(k % cols));
      }
      k -= nw;
      const auto nb = static_cast<std::size_t>(biases_[l].size());
      if (k < nb) return biases_[l](idx(k));
      k -= nb;
    }
    throw DimensionError("parameter index out of range");
  }
  double parameter(std::size_t k) const { return const_cast<MlpNetwork*>(this)->parameter(k); }

  /// Raw network outputs for a batch given as columns.
  Eigen::MatrixXd forward_raw(const Eigen::MatrixXd& inputs) const {
    if (static_cast<std::size_t>(inputs.rows()) != input_size()) throw DimensionError("network input has wrong size");
    Eigen::MatrixXd h = inputs;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXd z = weights_[l] * h;
      z.colwise() += biases_[l];
      if (l + 1 < weights_.size()) leaky_inplace(z);
      h = std::move(z);
    }
    return h;
  }

  /// Q-values for one input.
  std::vector<double> forward(std::span<const double> input) const {
    Eigen::Map<const Eigen::VectorXd> x(input.data(), idx(input.size()));
    const Eigen::MatrixXd out = forward_raw(x);
    std::vector<double> q(output_size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = out(idx(i), 0) * output_scale + output_shift;
    return q;
  }

  friend bool operator==(const MlpNetwork& a, const MlpNetwork& b) {
    if (a.sizes_ != b.sizes_ || a.output_scale != b.output_scale || a.output_shift != b.output_shift) return false;
    for (std::size_t l = 0; l < a.weights_.size(); ++l)
      if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
    return true;
  }

  static Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

  static void leaky_inplace(Eigen::MatrixXd& z) {
    z = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
  }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

struct NetworkGradient {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  double flat(std::size_t k) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const auto nw = static_cast<std::size_t>(weights[l].size());
      if (k < nw) {
        const auto cols = static_cast<std::size_t>(weights[l].cols());
        return weights[l](MlpNetwork::idx(k / cols), MlpNetwork::idx(k % cols));
      }
      k -= nw;
      const auto nb = static_cast<std::size_t>(biases[l].size());
      if (k < nb) return biases[l](MlpNetwork::idx(k));
      k -= nb;
    }
    throw DimensionError("gradient index out of range");
  }
};

/// Mean squared error over every output coordinate of the batch (inputs and
/// targets as columns, targets in raw network units) and its gradient.
inline NetworkGradient gradient(const MlpNetwork& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  if (inputs.cols() == 0) throw DomainError("gradient needs a nonempty batch");
  if (inputs.cols() != targets.cols() || static_cast<std::size_t>(targets.rows()) != net.output_size())
    throw DimensionError("batch targets have wrong shape");
  const std::size_t L = net.n_layers();
  std::vector<Eigen::MatrixXd> pre(L), act(L + 1);
  act[0] = inputs;
  for (std::size_t l = 0; l < L; ++l) {
    pre[l] = net.weight(l) * act[l];
    pre[l].colwise() += net.bias(l);
    act[l + 1] = pre[l];
    if (l + 1 < L) MlpNetwork::leaky_inplace(act[l + 1]);
  }
  const double count = static_cast<double>(targets.size());
  Eigen::MatrixXd delta = act[L] - targets;
  NetworkGradient g;
  g.loss = delta.squaredNorm() / count;
  delta *= 2.0 / count;
  g.weights.resize(L);
  g.biases.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    g.weights[l] = delta * act[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    delta = net.weight(l).transpose() * delta;
    delta.array() *= pre[l - 1].unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }).array();
  }
  return g;
}

/// Network input for joint state s under type estimate theta.
inline std::vector<double> augmented_state(const MdpFamily& family, std::size_t s, std::span<const double> theta) {
  std::vector<double> v = family.encode_state(s);
  v.insert(v.end(), theta.begin(), theta.end());
  return v;
}

/// argmax of the network's Q-values; ties go to the lowest action index.
inline std::size_t act(const MlpNetwork& net, const MdpFamily& family, std::size_t s, std::span<const double> theta) {
  const auto q = net.forward(augmented_state(family, s, theta));
  return static_cast<std::size_t>(std::distance(q.begin(), std::max_element(q.begin(), q.end())));
}

/// Deterministic greedy policy of the network over every joint state.
inline StochasticPolicy greedy_policy(const MlpNetwork& net, const MdpFamily& family, std::span<const double> theta) {
  const std::size_t S = family.n_states;
  Eigen::MatrixXd inputs(MlpNetwork::idx(net.input_size()), MlpNetwork::idx(S));
  for (std::size_t s = 0; s < S; ++s) {
    const auto v = augmented_state(family, s, theta);
    if (v.size() != net.input_size()) throw DimensionError("network input size does not match the family encoding");
    for (std::size_t i = 0; i < v.size(); ++i) inputs(MlpNetwork::idx(i), MlpNetwork::idx(s)) = v[i];
  }
  const Eigen::MatrixXd raw = net.forward_raw(inputs);
  std::vector<std::size_t> actions(S);
  for (std::size_t s = 0; s < S; ++s) {
    // output_scale > 0, so the raw argmax is the Q argmax
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < raw.rows(); ++a)
      if (raw(a, MlpNetwork::idx(s)) > raw(best, MlpNetwork::idx(s))) best = a;
    actions[s] = static_cast<std::size_t>(best);
  }
  return StochasticPolicy::deterministic(actions, net.output_size());
}

enum class Optimizer { Sgd, Adam };

struct DqnTrainingConfig {
  std::vector<std::size_t> hidden{64, 32, 16};
  double learning_rate = 5e-3;
  /// Learning rate reached at max_iterations under geometric decay; a
  /// negative value keeps the rate constant.
  double final_learning_rate = 1e-5;
  std::size_t batch_size = 64;
  std::size_t max_iterations = 300'000;
  std::size_t check_every = 1'000;
  std::size_t patience = 100;
  double min_improvement = 1e-6;
  std::size_t validation_size = 2'048;
  Optimizer optimizer = Optimizer::Adam;
  /// Targets are regressed as (Q - shift) / scale. A scale of 0 standardizes
  /// with the mean and standard deviation of all training Q entries.
  double target_scale = 0.0;
  double target_shift = 0.0;
  std::uint64_t seed = 0;
};

/// Losses are mean squared errors in Q units.
struct DqnLogRow {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct DqnTrainingResult {
  MlpNetwork network;
  std::vector<DqnLogRow> log;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Exact best-response Q tables per training type, computed on first use.
class QTargetCache {
 public:
  QTargetCache(const MdpFamily& family, std::vector<ThetaVector> thetas)
      : family_(&family), thetas_(std::move(thetas)), tables_(thetas_.size()) {}

  const QFunction& operator[](std::size_t i) {
    if (!tables_[i]) {
      const TabularMdp mdp = family_->mdp(thetas_[i]);
      tables_[i] = q_from_policy(mdp, value_iteration(mdp).policy);
    }
    return *tables_[i];
  }
  const ThetaVector& theta(std::size_t i) const { return thetas_[i]; }
  std::size_t size() const noexcept { return thetas_.size(); }

 private:
  const MdpFamily* family_;
  std::vector<ThetaVector> thetas_;
  std::vector<std::optional<QFunction>> tables_;
};

namespace detail {

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  std::size_t t = 0;
};

inline void fill_column(Eigen::MatrixXd& m, Eigen::Index col, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) m(MlpNetwork::idx(i), col) = v[i];
}

}  // namespace detail

/// Supervised regression of the network on exact Q targets. Each iteration
/// draws one training type uniformly and a minibatch of states uniformly.
/// Stops when validation loss fails to improve by min_improvement for
/// `patience` consecutive checks, or at max_iterations. Returns the network
/// with the best validation loss seen.
inline DqnTrainingResult train_adaptdqn(const MdpFamily& family, const std::vector<ThetaVector>& train_points,
                                        const DqnTrainingConfig& config) {
  if (train_points.empty()) throw DomainError("train_adaptdqn needs at least one training type");
  if (config.batch_size == 0 || config.check_every == 0) throw DomainError("batch size and check interval must be positive");
  if (!(config.learning_rate >= 0.0)) throw DomainError("learning rate must be nonnegative");
  if (config.final_learning_rate == 0.0) throw DomainError("final learning rate must be positive (or negative for none)");
  for (const auto& t : train_points) family.space.require(t);

  std::vector<std::size_t> sizes{family.encoded_size + family.space.dim()};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(family.n_actions);

  Rng rng(derive_seed(config.seed, 0));
  DqnTrainingResult result{MlpNetwork::glorot(sizes, derive_seed(config.seed, 1)), {}, 0, false};
  MlpNetwork& net = result.network;
  QTargetCache cache(family, train_points);
  double scale = config.target_scale, shift = config.target_shift;
  if (!(scale > 0.0)) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (std::size_t i = 0; i < cache.size(); ++i)
      for (double q : cache[i].values) {
        sum += q;
        sq += q * q;
        n += 1.0;
      }
    shift = sum / n;
    scale = std::sqrt(std::max(sq / n - shift * shift, 0.0));
    if (!(scale > 0.0)) scale = 1.0;
  }
  net.output_scale = scale;
  net.output_shift = shift;

  const std::size_t S = family.n_states, A = family.n_actions;
  std::uniform_int_distribution<std::size_t> pick_theta(0, train_points.size() - 1), pick_state(0, S - 1);

  auto make_batch = [&](std::size_t n, bool one_theta, Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
    x.resize(MlpNetwork::idx(net.input_size()), MlpNetwork::idx(n));
    y.resize(MlpNetwork::idx(A), MlpNetwork::idx(n));
    std::size_t ti = pick_theta(rng);
    for (std::size_t k = 0; k < n; ++k) {
      if (!one_theta) ti = pick_theta(rng);
      const std::size_t s = pick_state(rng);
      detail::fill_column(x, MlpNetwork::idx(k), augmented_state(family, s, cache.theta(ti)));
      const QFunction& q = cache[ti];
      for (std::size_t a = 0; a < A; ++a) y(MlpNetwork::idx(a), MlpNetwork::idx(k)) = (q(s, a) - shift) / scale;
    }
  };

  Eigen::MatrixXd vx, vy;
  make_batch(config.validation_size, false, vx, vy);
  const double q_units = scale * scale;
  auto validation_loss = [&] {
    return q_units * (net.forward_raw(vx) - vy).squaredNorm() / static_cast<double>(vy.size());
  };
  const double decay = config.final_learning_rate < 0.0 || config.max_iterations == 0 || config.learning_rate == 0.0
                           ? 1.0
                           : std::pow(config.final_learning_rate / config.learning_rate,
                                      1.0 / static_cast<double>(config.max_iterations));
  double lr = config.learning_rate;

  detail::AdamState adam;
  if (config.optimizer == Optimizer::Adam) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
      adam.mw.push_back(Eigen::MatrixXd::Zero(net.weight(l).rows(), net.weight(l).cols()));
      adam.vw.push_back(adam.mw.back());
      adam.mb.push_back(Eigen::VectorXd::Zero(net.bias(l).size()));
      adam.vb.push_back(adam.mb.back());
    }
  }

  MlpNetwork best = net;
  double best_loss = validation_loss();
  double reference = best_loss;
  std::size_t stale = 0;
  double train_acc = 0.0;
  std::size_t train_n = 0;
  Eigen::MatrixXd bx, by;

  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    make_batch(config.batch_size, true, bx, by);
    NetworkGradient g = gradient(net, bx, by);
    if (!std::isfinite(g.loss)) throw TrainingDivergedError("AdaptDQN training loss became non-finite");
    train_acc += q_units * g.loss;
    ++train_n;

    if (config.optimizer == Optimizer::Sgd) {
      for (std::size_t l = 0; l < net.n_layers(); ++l) {
        net.weight(l) -= lr * g.weights[l];
        net.bias(l) -= lr * g.biases[l];
      }
    } else {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      ++adam.t;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
      auto step = [&](auto& param, auto& m, auto& v, const auto& grad) {
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      };
      for (std::size_t l = 0; l < net.n_layers(); ++l) {
        step(net.weight(l), adam.mw[l], adam.vw[l], g.weights[l]);
        step(net.bias(l), adam.mb[l], adam.vb[l], g.biases[l]);
      }
    }
    result.iterations = it;
    lr *= decay;

    if (it % config.check_every == 0) {
      const double vl = validation_loss();
      if (!std::isfinite(vl)) throw TrainingDivergedError("AdaptDQN validation loss became non-finite");
      result.log.push_back({it, train_acc / static_cast<double>(train_n), vl});
      train_acc = 0.0;
      train_n = 0;
      if (vl < best_loss) {
        best_loss = vl;
        best = net;
      }
      if (reference - vl > config.min_improvement) {
        reference = vl;
        stale = 0;
      } else if (++stale >= config.patience) {
        result.converged = true;
        break;
      }
    }
  }
  if (!result.log.empty()) net = best;
  return result;
}

/// Fraction of (state, training type) pairs where the network's greedy action
/// is optimal for the exact Q table. Actions whose exact Q is within `tie_tol`
/// (relative) of the maximum count as optimal.
inline double greedy_match_rate(const MlpNetwork& net, const MdpFamily& family, const std::vector<ThetaVector>& thetas,
                                double tie_tol = 1e-9) {
  if (thetas.empty()) throw DomainError("greedy_match_rate needs at least one type");
  QTargetCache cache(family, thetas);
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const QFunction& q = cache[i];
    const StochasticPolicy pi = greedy_policy(net, family, thetas[i]);
    for (std::size_t s = 0; s < family.n_states; ++s) {
      std::size_t chosen = 0;
      while (pi(s, chosen) != 1.0) ++chosen;
      const auto row = q.row(s);
      const double best = *std::max_element(row.begin(), row.end());
      hits += row[chosen] >= best - tie_tol * (1.0 + std::abs(best)) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace robustcoop
