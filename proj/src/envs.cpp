#include "clarify/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "clarify/reward.hpp"

namespace clarify {

// ---------------------------------------------------------------------------
// GridNav

GridNavEnv::GridNavEnv(Params params) : params_(params) {
  if (params_.size < 2) throw std::invalid_argument("grid size must be >= 2");
  if (params_.goal_x < 0 || params_.goal_x >= params_.size || params_.goal_y < 0 ||
      params_.goal_y >= params_.size)
    throw std::invalid_argument("goal outside grid");
  if (!(params_.gamma > 0.0 && params_.gamma < 1.0))
    throw std::invalid_argument("gamma must lie in (0, 1)");
  if (params_.max_episode_len < 1) throw std::invalid_argument("max_episode_len must be >= 1");
}

int GridNavEnv::next_state(int s, int a) const {
  int x = x_of(s);
  int y = y_of(s);
  switch (a) {
    case 0: x = std::min(x + 1, params_.size - 1); break;
    case 1: x = std::max(x - 1, 0); break;
    case 2: y = std::min(y + 1, params_.size - 1); break;
    case 3: y = std::max(y - 1, 0); break;
    default: throw std::out_of_range("action out of range");
  }
  return state_index(x, y);
}

double GridNavEnv::reward(int s, int a) const {
  return next_state(s, a) == goal_state() ? params_.goal_reward : params_.step_reward;
}

int GridNavEnv::manhattan_to_goal(int s) const {
  return std::abs(x_of(s) - params_.goal_x) + std::abs(y_of(s) - params_.goal_y);
}

Eigen::MatrixXd GridNavEnv::reward_table() const {
  Eigen::MatrixXd table(num_states(), kNumActions);
  for (int s = 0; s < num_states(); ++s)
    for (int a = 0; a < kNumActions; ++a) table(s, a) = reward(s, a);
  return table;
}

Eigen::VectorXd GridNavEnv::encode_state(int s) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(state_dim());
  v(s) = 1.0;
  const double scale = 1.0 / (params_.size - 1);
  v(num_states()) = x_of(s) * scale;
  v(num_states() + 1) = y_of(s) * scale;
  return v;
}

Eigen::VectorXd GridNavEnv::encode_action(int a) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kNumActions);
  v(a) = 1.0;
  return v;
}

int GridNavEnv::decode_state(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  if (state.size() != state_dim()) throw std::invalid_argument("state has wrong dimension");
  Eigen::Index s;
  state.head(num_states()).maxCoeff(&s);
  return static_cast<int>(s);
}

int GridNavEnv::decode_action(const Eigen::Ref<const Eigen::VectorXd>& action) const {
  if (action.size() != kNumActions) throw std::invalid_argument("action has wrong dimension");
  Eigen::Index a;
  action.maxCoeff(&a);
  return static_cast<int>(a);
}

RewardFn GridNavEnv::reward_fn() const {
  return [env = *this](const Eigen::Ref<const Eigen::VectorXd>& s,
                       const Eigen::Ref<const Eigen::VectorXd>& a) {
    return env.reward(env.decode_state(s), env.decode_action(a));
  };
}

Eigen::Vector2d GridNavEnv::position(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  const int s = decode_state(state);
  return {static_cast<double>(x_of(s)), static_cast<double>(y_of(s))};
}

// ---------------------------------------------------------------------------
// PointMass

PointMassEnv::PointMassEnv(Params params) : params_(params) {
  if (!(params_.hi > params_.lo)) throw std::invalid_argument("arena bounds are empty");
  if (params_.max_speed <= 0.0) throw std::invalid_argument("max_speed must be positive");
  if (params_.max_episode_len < 1) throw std::invalid_argument("max_episode_len must be >= 1");
}

Eigen::Vector2d PointMassEnv::clamp_action(const Eigen::Vector2d& a) const {
  return a.cwiseMax(-params_.max_speed).cwiseMin(params_.max_speed);
}

Eigen::Vector4d PointMassEnv::step(const Eigen::Vector4d& state, const Eigen::Vector2d& action) const {
  const Eigen::Vector2d v = clamp_action(action);
  Eigen::Vector2d p = (state.head<2>() + v).cwiseMax(params_.lo).cwiseMin(params_.hi);
  Eigen::Vector4d next;
  next << p, v;
  return next;
}

double PointMassEnv::reward(const Eigen::Ref<const Eigen::VectorXd>& state,
                            const Eigen::Ref<const Eigen::VectorXd>& action) const {
  const Eigen::Vector4d next = step(state.head<4>(), action.head<2>());
  return -(next.head<2>() - goal()).norm();
}

Eigen::Vector2d PointMassEnv::optimal_action(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  return clamp_action(goal() - state.head<2>());
}

RewardFn PointMassEnv::reward_fn() const {
  return [env = *this](const Eigen::Ref<const Eigen::VectorXd>& s,
                       const Eigen::Ref<const Eigen::VectorXd>& a) { return env.reward(s, a); };
}

// ---------------------------------------------------------------------------

QualityMix::QualityMix(std::vector<Component> components) : components_(std::move(components)) {
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.noise < 0.0 || c.noise > 1.0) throw std::invalid_argument("behavior noise must lie in [0, 1]");
    if (c.fraction < 0.0) throw std::invalid_argument("mix fractions must be >= 0");
    total += c.fraction;
  }
  if (!components_.empty() && std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("mix fractions must sum to 1");
}

double QualityMix::sample_noise(Rng& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  for (const auto& c : components_) {
    if (x < c.fraction) return c.noise;
    x -= c.fraction;
  }
  return components_.back().noise;
}

TabularPolicy optimal_tabular_policy(const GridNavEnv& env, const Eigen::MatrixXd& reward_table) {
  return value_iteration(env, reward_table, env.params().gamma, 1e-10);
}

namespace {

Episode rollout(const GridNavEnv& env, const std::vector<int>& policy, double noise, Rng& rng) {
  const int T = env.params().max_episode_len;
  Episode ep;
  ep.states.resize(T, env.state_dim());
  ep.actions.resize(T, env.action_dim());
  ep.rewards.resize(T);
  std::uniform_int_distribution<int> start(0, env.num_states() - 1);
  std::uniform_int_distribution<int> any_action(0, GridNavEnv::kNumActions - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int s = start(rng);
  for (int t = 0; t < T; ++t) {
    const int a = u(rng) < noise ? any_action(rng) : policy[s];
    ep.states.row(t) = env.encode_state(s).transpose();
    ep.actions.row(t) = env.encode_action(a).transpose();
    ep.rewards(t) = env.reward(s, a);
    s = env.next_state(s, a);
  }
  return ep;
}

Episode rollout(const PointMassEnv& env, double noise, Rng& rng) {
  const auto& p = env.params();
  const int T = p.max_episode_len;
  Episode ep;
  ep.states.resize(T, env.state_dim());
  ep.actions.resize(T, env.action_dim());
  ep.rewards.resize(T);
  std::uniform_real_distribution<double> pos(p.lo, p.hi);
  std::uniform_real_distribution<double> vel(-p.max_speed, p.max_speed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::Vector4d s(pos(rng), pos(rng), 0.0, 0.0);
  for (int t = 0; t < T; ++t) {
    Eigen::Vector2d a;
    if (u(rng) < noise) {
      a = Eigen::Vector2d(vel(rng), vel(rng));
    } else {
      a = env.optimal_action(s);
    }
    ep.states.row(t) = s.transpose();
    ep.actions.row(t) = a.transpose();
    ep.rewards(t) = env.reward(s, a);
    s = env.step(s, a);
  }
  return ep;
}

}  // namespace

OfflineDataset generate_offline_dataset(const Environment& env, const QualityMix& mix,
                                        int n_episodes, std::uint64_t seed) {
  if (mix.empty()) throw std::invalid_argument("quality mix is empty");
  if (n_episodes < 1) throw std::invalid_argument("n_episodes must be >= 1");
  std::vector<Episode> episodes;
  episodes.reserve(n_episodes);
  std::visit(
      [&](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        std::vector<int> policy;
        if constexpr (std::is_same_v<E, GridNavEnv>)
          policy = optimal_tabular_policy(e, e.reward_table()).action;
        for (int i = 0; i < n_episodes; ++i) {
          Rng rng(derive_seed(seed, 0x6570, static_cast<std::uint64_t>(i)));
          const double noise = mix.sample_noise(rng);
          if constexpr (std::is_same_v<E, GridNavEnv>) {
            episodes.push_back(rollout(e, policy, noise, rng));
          } else {
            episodes.push_back(rollout(e, noise, rng));
          }
        }
      },
      env);
  return OfflineDataset(std::move(episodes));
}

double evaluate_tabular_policy(const GridNavEnv& env, const std::vector<int>& policy) {
  double total = 0.0;
  for (int start = 0; start < env.num_states(); ++start) {
    int s = start;
    for (int t = 0; t < env.params().max_episode_len; ++t) {
      total += env.reward(s, policy[s]);
      s = env.next_state(s, policy[s]);
    }
  }
  return total / env.num_states();
}

int state_dim(const Environment& env) {
  return std::visit([](const auto& e) { return e.state_dim(); }, env);
}

int action_dim(const Environment& env) {
  return std::visit([](const auto& e) { return e.action_dim(); }, env);
}

RewardFn reward_fn(const Environment& env) {
  return std::visit([](const auto& e) { return e.reward_fn(); }, env);
}

}  // namespace clarify
