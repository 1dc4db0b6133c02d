// Experiment configuration, stored as an INI file with one section per stage.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clarify/embedding.hpp"
#include "clarify/envs.hpp"
#include "clarify/mlp.hpp"

namespace clarify {

// Raised for configurations that parse but cannot be run.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TeacherMode { kScripted, kPerfect, kHuman };
enum class Selector { kClarify, kRandom, kDisagreement };

struct ExperimentConfig {
  std::string experiment_id = "clarify";
  std::uint64_t seed = 0;

  // [env]
  std::string env = "gridnav";  // gridnav | pointmass
  GridNavEnv::Params grid;
  PointMassEnv::Params point;

  // [dataset]
  int n_episodes = 200;
  std::vector<QualityMix::Component> quality{{0.1, 0.3}, {0.5, 0.4}, {1.0, 0.3}};

  // [teacher]
  TeacherMode teacher = TeacherMode::kScripted;
  double epsilon = 0.5;
  double human_timeout_s = 3600.0;

  // [query]
  int H = 50;
  int N_total = 500;
  int M = 50;
  Selector selector = Selector::kClarify;
  int pool_size = 1000;
  int intermediate = 200;
  int n_bin = 32;
  double eps_d = 1e-6;
  bool count_skips_toward_budget = true;
  int heldout_pairs = 500;
  int heldout_segments = 500;

  // [embedding]
  int d = 16;
  int emb_hidden = 64;
  int emb_layers = 2;
  int n_init = 20000;
  int n_emb = 2000;
  OptimizerOptions emb_optimizer{OptimizerKind::kGradientDescent, 3e-4};
  LossWeights weights;
  DistanceMetric metric = DistanceMetric::kL2;
  int quad_batch = 64;
  int pair_batch = 0;
  int norm_batch = 0;
  int recon_batch = 64;
  int pool_segments = 500;

  // [reward]
  int n_reward = 50;
  int reward_batch = 128;
  int members = 3;
  int reward_hidden = 256;
  int reward_layers = 3;
  OptimizerOptions reward_optimizer{OptimizerKind::kAdam, 3e-4};

  // Throws ConfigError on the first violated constraint.
  void validate() const;
  Environment make_env() const;
  QualityMix make_mix() const { return QualityMix(quality); }

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);
std::string format_config(const ExperimentConfig& config);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

}  // namespace clarify
