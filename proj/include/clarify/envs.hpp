// Synthetic environments with known ground-truth rewards, and offline
// dataset generation from noisy optimal behavior policies.
#pragma once

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "clarify/core.hpp"

namespace clarify {

// Deterministic N x N grid. Actions move one cell (+x, -x, +y, -y); moves
// into a wall leave the agent in place. The reward of (s, a) is goal_reward
// when the move lands on the goal and step_reward otherwise.
class GridNavEnv {
 public:
  struct Params {
    int size = 6;
    int goal_x = 5;
    int goal_y = 5;
    double step_reward = 0.0;
    double goal_reward = 1.0;
    double gamma = 0.99;
    int max_episode_len = 100;

    bool operator==(const Params&) const = default;
  };

  static constexpr int kNumActions = 4;

  GridNavEnv() : GridNavEnv(Params{}) {}
  explicit GridNavEnv(Params params);

  const Params& params() const { return params_; }
  int size() const { return params_.size; }
  int num_states() const { return params_.size * params_.size; }
  int goal_state() const { return state_index(params_.goal_x, params_.goal_y); }
  int state_index(int x, int y) const { return y * params_.size + x; }
  int x_of(int s) const { return s % params_.size; }
  int y_of(int s) const { return s / params_.size; }

  int next_state(int s, int a) const;
  double reward(int s, int a) const;
  int manhattan_to_goal(int s) const;
  // S x A table of ground-truth rewards.
  Eigen::MatrixXd reward_table() const;

  // One-hot cell followed by (x, y) normalized to [0, 1].
  int state_dim() const { return num_states() + 2; }
  int action_dim() const { return kNumActions; }
  Eigen::VectorXd encode_state(int s) const;
  Eigen::VectorXd encode_action(int a) const;
  int decode_state(const Eigen::Ref<const Eigen::VectorXd>& state) const;
  int decode_action(const Eigen::Ref<const Eigen::VectorXd>& action) const;
  // Ground-truth reward on encoded vectors.
  RewardFn reward_fn() const;
  // Grid coordinates of an encoded state, for rendering.
  Eigen::Vector2d position(const Eigen::Ref<const Eigen::VectorXd>& state) const;

 private:
  Params params_;
};

// Point in a 2-D box with velocity-bounded moves. State is (x, y, vx, vy)
// where v is the last applied velocity; reward is the negative distance from
// the post-move position to the goal.
class PointMassEnv {
 public:
  struct Params {
    double lo = 0.0;
    double hi = 1.0;
    double goal_x = 0.8;
    double goal_y = 0.8;
    double goal_radius = 0.05;
    double max_speed = 0.05;
    int max_episode_len = 100;

    bool operator==(const Params&) const = default;
  };

  PointMassEnv() : PointMassEnv(Params{}) {}
  explicit PointMassEnv(Params params);

  const Params& params() const { return params_; }
  int state_dim() const { return 4; }
  int action_dim() const { return 2; }
  Eigen::Vector4d step(const Eigen::Vector4d& state, const Eigen::Vector2d& action) const;
  double reward(const Eigen::Ref<const Eigen::VectorXd>& state,
                const Eigen::Ref<const Eigen::VectorXd>& action) const;
  Eigen::Vector2d optimal_action(const Eigen::Ref<const Eigen::VectorXd>& state) const;
  RewardFn reward_fn() const;
  Eigen::Vector2d goal() const { return {params_.goal_x, params_.goal_y}; }

 private:
  Eigen::Vector2d clamp_action(const Eigen::Vector2d& a) const;
  Params params_;
};

using Environment = std::variant<GridNavEnv, PointMassEnv>;

// Mixture of behavior-noise levels: each episode draws a noise level eps_b
// with the given probability, then acts uniformly at random with
// probability eps_b and optimally otherwise.
class QualityMix {
 public:
  struct Component {
    double noise = 0.0;
    double fraction = 0.0;

    bool operator==(const Component&) const = default;
  };

  QualityMix() = default;
  explicit QualityMix(std::vector<Component> components);

  const std::vector<Component>& components() const { return components_; }
  bool empty() const { return components_.empty(); }
  double sample_noise(Rng& rng) const;

 private:
  std::vector<Component> components_;
};

struct TabularPolicy {
  std::vector<int> action;   // greedy action per state
  Eigen::VectorXd values;    // state values
  std::vector<double> residuals;  // sup-norm Bellman residual per sweep
};

// Optimal policy for a reward table; forwards to value_iteration.
TabularPolicy optimal_tabular_policy(const GridNavEnv& env, const Eigen::MatrixXd& reward_table);

OfflineDataset generate_offline_dataset(const Environment& env, const QualityMix& mix,
                                        int n_episodes, std::uint64_t seed);

// Undiscounted return of a greedy tabular policy, evaluated under the env's
// true reward, averaged over every start cell for max_episode_len steps.
double evaluate_tabular_policy(const GridNavEnv& env, const std::vector<int>& policy);

int state_dim(const Environment& env);
int action_dim(const Environment& env);
RewardFn reward_fn(const Environment& env);

}  // namespace clarify
