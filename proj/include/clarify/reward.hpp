// Bradley-Terry reward ensemble, preference cross-entropy training, min-max
// relabeling, tabular value iteration and the evaluation metrics.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "clarify/core.hpp"
#include "clarify/embedding.hpp"
#include "clarify/envs.hpp"
#include "clarify/mlp.hpp"
#include "clarify/teacher.hpp"

namespace clarify {

struct RewardNetOptions {
  int hidden = 256;
  int layers = 3;
};

// K networks (state||action) -> hidden ReLU layers -> tanh scalar, sharing
// one shape. The aggregate reward is the member mean.
class RewardEnsemble {
 public:
  RewardEnsemble(int state_dim, int action_dim, int members, std::uint64_t seed,
                 RewardNetOptions options = {});

  int size() const { return static_cast<int>(params_.size()); }
  const MlpShape& shape() const { return shape_; }
  Eigen::VectorXd& params(int member) { return params_.at(member); }
  const Eigen::VectorXd& params(int member) const { return params_.at(member); }

  // Per-column rewards of inputs (state||action stacked, one column each).
  Eigen::RowVectorXd member_rewards(int member, const Eigen::Ref<const Eigen::MatrixXd>& inputs) const;
  Eigen::RowVectorXd mean_rewards(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const;

  double segment_return(int member, const Segment& segment) const;
  double mean_segment_return(const Segment& segment) const;
  // Returns of many segments at once; member -1 means the ensemble mean.
  Eigen::VectorXd segment_returns(int member, std::span<const Segment* const> segments) const;

  RewardFn reward_fn() const;

 private:
  MlpShape shape_;
  std::vector<Eigen::VectorXd> params_;
};

// P[seg1 > seg0] from the two return sums, evaluated without overflow.
double bt_probability(double return0, double return1);
double bt_probability(const RewardEnsemble& ensemble, int member, const Segment& seg0, const Segment& seg1);
// Uses the ensemble-mean reward.
double bt_probability(const RewardEnsemble& ensemble, const Segment& seg0, const Segment& seg1);

// Mean preference cross-entropy over the clear triples of `batch` for one
// network given by (shape, params). Skipped triples are dropped.
LossResult ce_loss(const MlpShape& shape, std::span<const double> params,
                   std::span<const PreferenceTriple* const> batch);
LossResult ce_loss(const RewardEnsemble& ensemble, int member,
                   std::span<const PreferenceTriple* const> batch);

struct RewardTrainOptions {
  int updates = 50;
  int batch_size = 128;
  OptimizerOptions optimizer{OptimizerKind::kAdam, 3e-4};
  std::uint64_t seed = 0;
};

// Trains every member on its own shuffled batch order. Returns the per-update
// loss of each member.
std::vector<std::vector<double>> train_reward(RewardEnsemble& ensemble, const PreferenceDataset& prefs,
                                              const RewardTrainOptions& options);

// Ensemble-mean reward of every transition, min-max normalized over the whole
// dataset. One vector per episode.
std::vector<Eigen::VectorXd> relabel_dataset(const RewardEnsemble& ensemble, const OfflineDataset& dataset);

// S x A table of the learned reward on a grid, normalized with the same
// affine map relabel_dataset applies to `dataset`.
Eigen::MatrixXd learned_reward_table(const RewardEnsemble& ensemble, const GridNavEnv& env,
                                     const OfflineDataset& dataset);

TabularPolicy value_iteration(const GridNavEnv& env, const Eigen::MatrixXd& reward_table, double gamma,
                              double tol);
// Throws for environments without a finite state space.
TabularPolicy value_iteration(const Environment& env, const Eigen::MatrixXd& reward_table, double gamma,
                              double tol);

struct MetricsRecord {
  int round = 0;
  double clarity_ratio = 0.0;
  double pref_accuracy = 0.0;
  double spearman = 0.0;
  std::optional<double> normalized_return;  // undefined off-grid or for a zero optimum
};

double clarity_ratio(std::span<const PreferenceTriple> triples);

// clarity_ratio is measured on `issued`; accuracy on the clear triples of
// `heldout`; rank correlation on `heldout_segments`.
MetricsRecord evaluate_reward(const RewardEnsemble& ensemble, const OfflineDataset& dataset,
                              const Environment& env, std::span<const PreferenceTriple> issued,
                              std::span<const PreferenceTriple> heldout,
                              std::span<const SegmentPtr> heldout_segments, int round);

}  // namespace clarify
