#pragma once

// Concrete families: the two-agent gathering gridworld and the two-state
// gold/end instance on which no fixed policy is robust.

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "robustcoop/errors.hpp"
#include "robustcoop/mdp.hpp"
#include "robustcoop/parametric.hpp"

namespace robustcoop {

enum class Move : std::size_t { Up = 0, Left = 1, Down = 2, Right = 3, Stay = 4 };
inline constexpr std::size_t kGridActions = 5;

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct GatheringConfig {
  int grid_w = 5;
  int grid_h = 5;
  std::array<Cell, 2> fruit_cells{Cell{1, 3}, Cell{3, 1}};
  double random_move_prob = 0.2;
  double collision_cost = -5.0;
  double proximity_cost = -2.0;
  double discount = 0.99;
  Cell x_start{0, 0};
  Cell y_start{4, 4};
  double soft_temperature = 1.0;

  /// Square grid of side n with fruit and start cells placed like the 5x5
  /// default: fruits on the anti-diagonal band, agents in opposite corners.
  static GatheringConfig square(int n) {
    if (n < 2) throw DomainError("gathering grid side must be at least 2");
    GatheringConfig c;
    c.grid_w = c.grid_h = n;
    const int k = (n - 1) / 4;
    c.fruit_cells = {Cell{k, n - 1 - k}, Cell{n - 1 - k, k}};
    c.x_start = {0, 0};
    c.y_start = {n - 1, n - 1};
    return c;
  }

  int n_cells() const noexcept { return grid_w * grid_h; }
  bool inside(Cell c) const noexcept { return c.row >= 0 && c.row < grid_h && c.col >= 0 && c.col < grid_w; }
  std::size_t index(Cell c) const noexcept { return static_cast<std::size_t>(c.row * grid_w + c.col); }
  Cell cell(std::size_t i) const noexcept {
    return {static_cast<int>(i) / grid_w, static_cast<int>(i) % grid_w};
  }

  void validate() const {
    if (grid_w < 1 || grid_h < 1) throw ModelError("grid dimensions must be positive");
    for (const Cell& f : fruit_cells)
      if (!inside(f)) throw ModelError("fruit cell outside grid");
    if (fruit_cells[0] == fruit_cells[1]) throw ModelError("fruit cells must be distinct");
    if (!inside(x_start) || !inside(y_start)) throw ModelError("start cell outside grid");
    if (!(random_move_prob >= 0.0 && random_move_prob <= 1.0)) throw ModelError("random_move_prob outside [0, 1]");
    if (!(discount >= 0.0 && discount < 1.0)) throw ModelError("discount must lie in [0, 1)");
    if (!(soft_temperature > 0.0)) throw ModelError("soft_temperature must be positive");
  }
};

struct JointState {
  std::size_t x_pos = 0;
  std::size_t y_pos = 0;

  static JointState decode(std::size_t s, std::size_t n_cells) { return {s / n_cells, s % n_cells}; }
  std::size_t encode(std::size_t n_cells) const { return x_pos * n_cells + y_pos; }
  friend bool operator==(const JointState&, const JointState&) = default;
};

/// Single-agent kinematics: the chosen move succeeds with probability
/// 1 - random_move_prob (moves into a wall stay put); otherwise the agent is
/// displaced to one of the four orthogonal neighbours uniformly, with the share
/// of a missing neighbour staying on the current cell.
inline SparseRow grid_move_row(const GatheringConfig& cfg, std::size_t cell, std::size_t action) {
  static constexpr std::array<std::array<int, 2>, 4> kDelta{{{-1, 0}, {0, -1}, {1, 0}, {0, 1}}};
  if (action >= kGridActions) throw DimensionError("grid action out of range");
  const Cell here = cfg.cell(cell);
  auto target = [&](std::size_t dir) {
    const Cell c{here.row + kDelta[dir][0], here.col + kDelta[dir][1]};
    return cfg.inside(c) ? cfg.index(c) : cell;
  };
  std::array<double, 5> mass{};  // four directions, then the current cell
  std::array<std::size_t, 5> where{target(0), target(1), target(2), target(3), cell};
  const double slip = cfg.random_move_prob / 4.0;
  for (std::size_t d = 0; d < 4; ++d) mass[d] += slip;
  mass[action == static_cast<std::size_t>(Move::Stay) ? 4 : action] += 1.0 - cfg.random_move_prob;

  SparseRow row;
  for (std::size_t k = 0; k < 5; ++k) {
    if (mass[k] == 0.0) continue;
    bool merged = false;
    for (auto& [n, p] : row)
      if (n == where[k]) {
        p += mass[k];
        merged = true;
      }
    if (!merged) row.emplace_back(where[k], mass[k]);
  }
  return row;
}

inline bool orthogonal_neighbours(Cell a, Cell b) {
  return std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1;
}

inline std::vector<double> fruit_features(const GatheringConfig& cfg, std::size_t cell) {
  return {cfg.index(cfg.fruit_cells[0]) == cell ? 1.0 : 0.0, cfg.index(cfg.fruit_cells[1]) == cell ? 1.0 : 0.0};
}

namespace detail {

inline void require_gathering_theta(const ThetaVector& theta) {
  if (theta.size() != 2) throw DimensionError("gathering theta must have two coordinates");
  if (!ParamSpace::cube(2, -1.0, 1.0).contains(theta)) throw DomainError("gathering theta outside [-1, 1]^2");
}

inline std::vector<double> point_mass(std::size_t n, std::size_t at) {
  std::vector<double> d(n, 0.0);
  d[at] = 1.0;
  return d;
}

}  // namespace detail

/// A^x's own MDP over its position: reward theta_i on fruit cell i.
inline TabularMdp build_x_mdp(const GatheringConfig& cfg, const ThetaVector& theta) {
  cfg.validate();
  detail::require_gathering_theta(theta);
  const std::size_t C = static_cast<std::size_t>(cfg.n_cells());
  std::vector<double> t(C * kGridActions * C, 0.0), r(C * kGridActions, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const auto phi = fruit_features(cfg, c);
    for (std::size_t a = 0; a < kGridActions; ++a) {
      for (auto [n, p] : grid_move_row(cfg, c, a)) t[(c * kGridActions + a) * C + n] += p;
      r[c * kGridActions + a] = theta[0] * phi[0] + theta[1] * phi[1];
    }
  }
  return {C, kGridActions, std::move(t), std::move(r), cfg.discount, detail::point_mass(C, cfg.index(cfg.x_start))};
}

/// Reward of A^y in joint state s: fruit reward at its cell plus collision
/// and proximity costs.
inline double joint_reward(const GatheringConfig& cfg, const ThetaVector& theta, std::size_t s) {
  const std::size_t C = static_cast<std::size_t>(cfg.n_cells());
  const JointState js = JointState::decode(s, C);
  const auto phi = fruit_features(cfg, js.y_pos);
  double r = theta[0] * phi[0] + theta[1] * phi[1];
  const Cell xc = cfg.cell(js.x_pos), yc = cfg.cell(js.y_pos);
  if (xc == yc) r += cfg.collision_cost;
  if (orthogonal_neighbours(xc, yc)) r += cfg.proximity_cost;
  return r;
}

inline MdpFamily build_joint_family(const GatheringConfig& config) {
  config.validate();
  auto cfg = std::make_shared<const GatheringConfig>(config);
  const std::size_t C = static_cast<std::size_t>(cfg->n_cells());
  const std::size_t S = C * C;

  // kinematics rows are theta-independent; tabulate once
  auto moves = std::make_shared<std::vector<SparseRow>>();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t a = 0; a < kGridActions; ++a) moves->push_back(grid_move_row(*cfg, c, a));

  MdpFamily f;
  f.name = "gathering-" + std::to_string(cfg->grid_h) + "x" + std::to_string(cfg->grid_w);
  f.space = ParamSpace::cube(2, -1.0, 1.0);
  f.n_states = S;
  f.n_actions = kGridActions;
  f.n_x_actions = kGridActions;
  f.discount = cfg->discount;
  f.x_start = cfg->index(cfg->x_start);
  f.x_temperature = cfg->soft_temperature;

  f.x_mdp = [cfg](const ThetaVector& theta) { return build_x_mdp(*cfg, theta); };
  f.x_state = [C](std::size_t s) { return s / C; };
  f.x_features = [cfg](std::size_t xs) { return fruit_features(*cfg, xs); };

  f.build = [cfg, moves, C, S](const ThetaVector& theta) {
    detail::require_gathering_theta(theta);
    const StochasticPolicy xp = soft_bellman_policy(build_x_mdp(*cfg, theta), cfg->soft_temperature);

    // marginal A^x move distribution per x cell
    std::vector<std::vector<double>> x_next(C, std::vector<double>(C, 0.0));
    for (std::size_t x = 0; x < C; ++x)
      for (std::size_t b = 0; b < kGridActions; ++b)
        for (auto [n, p] : (*moves)[x * kGridActions + b]) x_next[x][n] += xp(x, b) * p;

    std::vector<double> t(S * kGridActions * S, 0.0), r(S * kGridActions);
    for (std::size_t s = 0; s < S; ++s) {
      const std::size_t x = s / C, y = s % C;
      const double reward = joint_reward(*cfg, theta, s);
      for (std::size_t a = 0; a < kGridActions; ++a) {
        r[s * kGridActions + a] = reward;
        double* dst = t.data() + (s * kGridActions + a) * S;
        for (std::size_t xn = 0; xn < C; ++xn) {
          if (x_next[x][xn] == 0.0) continue;
          for (auto [yn, p] : (*moves)[y * kGridActions + a]) dst[xn * C + yn] += x_next[x][xn] * p;
        }
      }
    }
    std::vector<double> joint_policy(S * kGridActions);
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t b = 0; b < kGridActions; ++b) joint_policy[s * kGridActions + b] = xp(s / C, b);

    const std::size_t start = cfg->index(cfg->x_start) * C + cfg->index(cfg->y_start);
    return FamilyInstance{
        TabularMdp(S, kGridActions, std::move(t), std::move(r), cfg->discount, detail::point_mass(S, start)),
        StochasticPolicy(S, kGridActions, std::move(joint_policy))};
  };

  f.joint_row = [moves, C](std::size_t s, std::size_t a, std::size_t b) {
    SparseRow row;
    for (auto [xn, px] : (*moves)[(s / C) * kGridActions + b])
      for (auto [yn, py] : (*moves)[(s % C) * kGridActions + a]) row.emplace_back(xn * C + yn, px * py);
    return row;
  };

  FactoredKinematics fk;
  fk.n_x_states = C;
  fk.n_y_states = C;
  fk.x_row = [moves](std::size_t xs, std::size_t b) { return (*moves)[xs * kGridActions + b]; };
  fk.y_row = [moves](std::size_t ys, std::size_t a) { return (*moves)[ys * kGridActions + a]; };
  f.factored = std::move(fk);

  f.encoded_size = 2 * C;
  f.encode_state = [C](std::size_t s) {
    std::vector<double> v(2 * C, 0.0);
    v[s / C] = 1.0;
    v[C + s % C] = 1.0;
    return v;
  };

  calibrate_reward_range(f);
  return f;
}

/// Materialized two-agent tensor of the gathering game (S^2 * 25 entries).
inline TwoAgentDynamics joint_dynamics(const GatheringConfig& cfg) { return build_joint_family(cfg).dynamics(); }

inline constexpr std::size_t kGold = 0;
inline constexpr std::size_t kEnd = 1;

/// Two states {gold, end}, two actions per agent. From gold the pair stays in
/// gold when both agents pick the same action and falls to the absorbing end
/// state otherwise. Reward r_max at gold. theta in [0, 1] is the probability
/// that A^x plays a2 at gold, so theta = 0 and theta = 1 are the two
/// committed types.
inline MdpFamily build_worstcase_pair(double gamma, double r_max) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in [0, 1)");
  if (!(r_max > 0.0)) throw DomainError("r_max must be positive");

  MdpFamily f;
  f.name = "worstcase-pair";
  f.space = ParamSpace::cube(1, 0.0, 1.0);
  f.n_states = 2;
  f.n_actions = 2;
  f.n_x_actions = 2;
  f.discount = gamma;
  f.reward_offset = 0.0;
  f.r_max = r_max;

  f.joint_row = [](std::size_t s, std::size_t a, std::size_t b) {
    if (s == kGold && a == b) return SparseRow{{kGold, 1.0}};
    return SparseRow{{kEnd, 1.0}};
  };
  f.build = [gamma, r_max](const ThetaVector& theta) {
    if (theta.size() != 1 || !(theta[0] >= 0.0 && theta[0] <= 1.0))
      throw DomainError("worst-case pair theta must lie in [0, 1]");
    const double q = theta[0];
    const StochasticPolicy xp(2, 2, {1.0 - q, q, 0.5, 0.5});
    // T(gold | gold, a) is the chance that A^x matches a
    std::vector<double> t{1.0 - q, q, q, 1.0 - q, 0.0, 1.0, 0.0, 1.0};
    std::vector<double> r{r_max, r_max, 0.0, 0.0};
    return FamilyInstance{TabularMdp(2, 2, std::move(t), std::move(r), gamma, {1.0, 0.0}), xp};
  };
  f.encoded_size = 2;
  f.encode_state = [](std::size_t s) {
    std::vector<double> v(2, 0.0);
    v[s] = 1.0;
    return v;
  };
  return f;
}

}  // namespace robustcoop
