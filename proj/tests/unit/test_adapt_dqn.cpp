#include <gtest/gtest.h>

#include <cmath>

#include "robustcoop/adapt_dqn.hpp"
#include "robustcoop/environments.hpp"
#include "robustcoop/serialization.hpp"

using namespace robustcoop;

namespace {

double mse(const MlpNetwork& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return (net.forward_raw(x) - y).squaredNorm() / static_cast<double>(y.size());
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = nd(rng);
  return m;
}

}  // namespace

TEST(MlpNetwork, HandComputedForward) {
  MlpNetwork net({2, 2, 1});
  net.weight(0) << 1.0, -1.0, 0.5, 0.5;
  net.bias(0) << 0.0, -2.0;
  net.weight(1) << 2.0, 3.0;
  net.bias(1) << 1.0;
  net.output_scale = 10.0;
  net.output_shift = -1.0;
  // hidden pre-activations (1, -0.5) -> (1, -0.05); output 2 - 0.15 + 1
  const std::vector<double> x{2.0, 1.0};
  const auto q = net.forward(x);
  EXPECT_NEAR(q[0], 10.0 * 2.85 - 1.0, 1e-12);
}

TEST(MlpNetwork, FlatParameterLayout) {
  auto net = MlpNetwork::glorot({3, 4, 2}, 9);
  EXPECT_EQ(net.n_parameters(), 3U * 4 + 4 + 4 * 2 + 2);
  EXPECT_EQ(net.parameter(0), net.weight(0)(0, 0));
  EXPECT_EQ(net.parameter(4), net.weight(0)(1, 1));
  net.parameter(12) = 7.0;
  EXPECT_EQ(net.bias(0)(0), 7.0);
  EXPECT_EQ(&net.parameter(16), &net.weight(1)(0, 0));
  EXPECT_THROW(net.parameter(26), DimensionError);
}

TEST(MlpNetwork, GlorotIsSeededAndBounded) {
  const auto a = MlpNetwork::glorot({10, 6, 3}, 4), b = MlpNetwork::glorot({10, 6, 3}, 4);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == MlpNetwork::glorot({10, 6, 3}, 5));
  EXPECT_LE(a.weight(0).cwiseAbs().maxCoeff(), std::sqrt(6.0 / 16.0));
  EXPECT_EQ(a.bias(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradient, MatchesCentralDifferences) {
  Rng rng(31);
  auto net = MlpNetwork::glorot({6, 7, 5, 3}, 12);
  for (std::size_t l = 0; l < net.n_layers(); ++l) net.bias(l) = gaussian(net.bias(l).size(), 1, rng) * 0.1;
  const Eigen::MatrixXd x = gaussian(6, 5, rng), y = gaussian(3, 5, rng);
  const auto g = gradient(net, x, y);
  EXPECT_NEAR(g.loss, mse(net, x, y), 1e-14);
  const double h = 1e-5;
  for (std::size_t k = 0; k < net.n_parameters(); ++k) {
    const double keep = net.parameter(k);
    net.parameter(k) = keep + h;
    const double up = mse(net, x, y);
    net.parameter(k) = keep - h;
    const double down = mse(net, x, y);
    net.parameter(k) = keep;
    const double numeric = (up - down) / (2.0 * h), analytic = g.flat(k);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-7});
    EXPECT_LE(std::abs(numeric - analytic) / denom, 1e-4) << "parameter " << k;
  }
}

TEST(Gradient, RejectsShapeMismatch) {
  const auto net = MlpNetwork::glorot({2, 3, 2}, 1);
  EXPECT_THROW(gradient(net, Eigen::MatrixXd::Zero(2, 0), Eigen::MatrixXd::Zero(2, 0)), DomainError);
  EXPECT_THROW(gradient(net, Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(3, 3)), DimensionError);
}

TEST(TrainAdaptDqn, ZeroIterationsReturnsInitialization) {
  const auto f = build_joint_family(GatheringConfig::square(3));
  DqnTrainingConfig cfg;
  cfg.max_iterations = 0;
  cfg.seed = 42;
  const auto res = train_adaptdqn(f, theta_grid(f.space, 1.0), cfg);
  EXPECT_EQ(res.iterations, 0U);
  EXPECT_TRUE(res.log.empty());
  auto expected = MlpNetwork::glorot({20, 64, 32, 16, 5}, derive_seed(42, 1));
  for (std::size_t l = 0; l < expected.n_layers(); ++l) {
    EXPECT_EQ(res.network.weight(l), expected.weight(l));
    EXPECT_EQ(res.network.bias(l), expected.bias(l));
  }
}

TEST(TrainAdaptDqn, LogHasOneRowPerCheckpointAndIsDeterministic) {
  const auto f = build_joint_family(GatheringConfig::square(3));
  DqnTrainingConfig cfg;
  cfg.max_iterations = 2500;
  cfg.check_every = 500;
  cfg.patience = 100;
  cfg.seed = 3;
  const auto train = theta_grid(f.space, 1.0);
  const auto a = train_adaptdqn(f, train, cfg), b = train_adaptdqn(f, train, cfg);
  EXPECT_EQ(a.log.size(), 5U);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].iteration, 500 * (i + 1));
  EXPECT_TRUE(a.network == b.network);
  EXPECT_LT(a.log.back().validation_loss, a.log.front().validation_loss);
}

TEST(TrainAdaptDqn, EarlyStopWithZeroLearningRate) {
  const auto f = build_worstcase_pair(0.9, 1.0);
  DqnTrainingConfig cfg;
  cfg.hidden = {4};
  cfg.learning_rate = 0.0;
  cfg.final_learning_rate = -1.0;
  cfg.check_every = 10;
  cfg.patience = 3;
  const auto res = train_adaptdqn(f, {{0.0}, {1.0}}, cfg);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 30U);
}

TEST(TrainAdaptDqn, ZeroLearningRateLeavesParametersBitIdentical) {
  const auto f = build_joint_family(GatheringConfig::square(3));
  for (Optimizer opt : {Optimizer::Sgd, Optimizer::Adam}) {
    DqnTrainingConfig cfg;
    cfg.optimizer = opt;
    cfg.learning_rate = 0.0;
    cfg.final_learning_rate = -1.0;
    cfg.max_iterations = 300;
    cfg.check_every = 100;
    cfg.seed = 8;
    const auto res = train_adaptdqn(f, theta_grid(f.space, 1.0), cfg);
    const auto init = MlpNetwork::glorot({20, 64, 32, 16, 5}, derive_seed(8, 1));
    EXPECT_EQ(res.iterations, 300U);
    for (std::size_t l = 0; l < init.n_layers(); ++l) {
      EXPECT_EQ(res.network.weight(l), init.weight(l));
      EXPECT_EQ(res.network.bias(l), init.bias(l));
    }
  }
}

TEST(TrainAdaptDqn, ValidationLossMostlyDecreases) {
  const auto f = build_joint_family(GatheringConfig::square(3));
  DqnTrainingConfig cfg;
  cfg.max_iterations = 20'000;
  cfg.check_every = 1'000;
  cfg.seed = 4;
  const auto res = train_adaptdqn(f, theta_grid(f.space, 0.5), cfg);
  ASSERT_EQ(res.log.size(), 20U);
  std::size_t down = 0;
  for (std::size_t i = 1; i < res.log.size(); ++i)
    down += res.log[i].validation_loss <= res.log[i - 1].validation_loss ? 1 : 0;
  EXPECT_GE(static_cast<double>(down), 0.8 * static_cast<double>(res.log.size() - 1));
}

TEST(TrainAdaptDqn, LearnsWorstCasePairExactly) {
  const auto f = build_worstcase_pair(0.9, 1.0);
  DqnTrainingConfig cfg;
  cfg.hidden = {16, 16};
  cfg.max_iterations = 4000;
  cfg.batch_size = 8;
  cfg.validation_size = 64;
  cfg.seed = 1;
  const std::vector<ThetaVector> types{{0.0}, {1.0}};
  const auto res = train_adaptdqn(f, types, cfg);
  EXPECT_DOUBLE_EQ(greedy_match_rate(res.network, f, types), 1.0);
  EXPECT_EQ(act(res.network, f, kGold, ThetaVector{0.0}), 0U);
  EXPECT_EQ(act(res.network, f, kGold, ThetaVector{1.0}), 1U);
}

TEST(TrainAdaptDqn, RejectsBadConfig) {
  const auto f = build_worstcase_pair(0.9, 1.0);
  DqnTrainingConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(train_adaptdqn(f, {{0.0}}, cfg), DomainError);
  cfg = {};
  cfg.final_learning_rate = 0.0;
  EXPECT_THROW(train_adaptdqn(f, {{0.0}}, cfg), DomainError);
  EXPECT_THROW(train_adaptdqn(f, {}, DqnTrainingConfig{}), DomainError);
  EXPECT_THROW(train_adaptdqn(f, {{2.0}}, DqnTrainingConfig{}), DomainError);
}

TEST(NetworkJson, RoundTripIsBitIdentical) {
  auto net = MlpNetwork::glorot({5, 4, 3}, 77);
  net.output_scale = 3.3;
  net.output_shift = -0.7;
  net.bias(0)(2) = 0.1 + 0.2;
  const auto back = network_from_json(Json::parse(to_json(net).dump()));
  EXPECT_TRUE(back == net);
  const std::vector<double> x{0.1, -0.2, 0.3, 0.4, -0.5};
  EXPECT_EQ(back.forward(x), net.forward(x));
}
