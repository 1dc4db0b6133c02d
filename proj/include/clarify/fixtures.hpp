// Synthetic item sets for checking embedding geometry without an environment.
// Each item is a one-step segment whose true return is its scalar value.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "clarify/core.hpp"
#include "clarify/embedding.hpp"

namespace clarify {

struct ItemFixture {
  std::vector<SegmentPtr> items;
  Eigen::VectorXd values;
  PreferenceDataset prefs;
};

// Builds items from `values` and labels pairs: ambiguous when `ambiguous`
// says so, otherwise the higher value is preferred. n_pairs = 0 labels every
// unordered pair once; otherwise pairs are drawn uniformly (self-pairs dropped).
ItemFixture make_item_fixture(const Eigen::VectorXd& values,
                              const std::function<bool(int, int)>& ambiguous, int n_pairs,
                              std::uint64_t seed);

// Values uniform on [0, 1]; ambiguous when |v_i - v_j| < threshold.
ItemFixture uniform_fixture(int n, int n_pairs, double threshold, std::uint64_t seed);
// Values in [0, 0.2] or [0.8, 1]; ambiguous when |v_i - v_j| < threshold.
ItemFixture two_band_fixture(int n, int n_pairs, double threshold, std::uint64_t seed);
// Uniform values split into two random groups; pairs within a group are
// ambiguous regardless of value.
ItemFixture context_group_fixture(int n, int n_pairs, std::uint64_t seed);

// Table embedding of every item, trained on the fixture.
EmbeddingModel train_table_embedding(const ItemFixture& fixture, int dim, const TrainOptions& options);

// Mean metric distance over the ambiguous labeled pairs.
double mean_ambiguous_distance(const EmbeddingModel& model, const PreferenceDataset& prefs,
                               DistanceMetric metric);

struct DemoQuadOptions {
  int items = 1000;
  int pairs = 20000;
  double threshold = 0.3;
  int dim = 2;
  int steps = 2000;
  int quad_batch = 64;
  OptimizerOptions optimizer{OptimizerKind::kAdam, 0.1};
  LossWeights weights{0.0, 1.0, 0.1};
};

struct DemoQuadResult {
  double spearman = 0.0;
  EmbeddingModel model;
  ItemFixture fixture;
};

// Quadrilateral-loss demo on uniform items: Spearman between the values and
// the first principal axis of the trained embedding. Writes the export CSV
// when `csv` is given.
DemoQuadResult run_demo_quad(std::uint64_t seed, const DemoQuadOptions& options = {},
                             const std::optional<std::filesystem::path>& csv = std::nullopt);

}  // namespace clarify
