// Trajectory embedding model: a per-segment table or a feedforward encoder
// over mean-pooled segment features with a paired action decoder, the four
// training objectives, and the geometry diagnostics of the learned space.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "clarify/contrastive.hpp"
#include "clarify/core.hpp"
#include "clarify/metric.hpp"
#include "clarify/mlp.hpp"

namespace clarify {

enum class EmbeddingMode { kTable, kEncoder };

class EmbeddingModel {
 public:
  // TABLE mode: entries are added explicitly and start as a seeded standard
  // normal draw that depends only on (seed, segment id).
  static EmbeddingModel table(int dim, std::uint64_t seed);
  // ENCODER mode: encoder [features -> hidden x layers -> dim] with tanh
  // hidden units; decoder [(state, z) -> hidden x layers -> action].
  static EmbeddingModel encoder(int dim, int state_dim, int action_dim, std::uint64_t seed,
                                int hidden = 64, int layers = 2);

  EmbeddingMode mode() const { return mode_; }
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  void add_segment(const SegmentId& id);
  bool contains(const SegmentId& id) const { return table_index_.count(id) > 0; }
  int table_column(const SegmentId& id) const;
  const std::vector<SegmentId>& table_ids() const { return table_ids_; }

  // All trainable parameters. TABLE: dim x n column-major; ENCODER: encoder
  // parameters followed by decoder parameters.
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  const MlpShape& encoder_shape() const { return encoder_; }
  const MlpShape& decoder_shape() const { return decoder_; }
  std::span<const double> encoder_params() const;
  std::span<const double> decoder_params() const;
  Eigen::Index decoder_offset() const { return encoder_.num_params(); }

  Eigen::VectorXd encode(const Segment& segment) const;
  // ENCODER mode only: encodes precomputed pooled features.
  Eigen::VectorXd encode_features(const Eigen::Ref<const Eigen::VectorXd>& pooled) const;
  // Columns of `segments` encoded side by side.
  Eigen::MatrixXd encode_all(std::span<const SegmentPtr> segments) const;

  void save(const std::filesystem::path& path) const;
  static EmbeddingModel load(const std::filesystem::path& path);

 private:
  EmbeddingMode mode_ = EmbeddingMode::kTable;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  Eigen::VectorXd params_;
  std::vector<SegmentId> table_ids_;
  std::unordered_map<SegmentId, int, SegmentIdHash> table_index_;
  MlpShape encoder_;
  MlpShape decoder_;
};

struct LossWeights {
  double lambda_amb = 0.1;
  double lambda_quad = 1.0;
  double lambda_norm = 0.1;

  bool operator==(const LossWeights&) const = default;
};

struct LossResult {
  double value = 0.0;
  Eigen::VectorXd grad;  // same layout as EmbeddingModel::params()
};

using TriplePtrs = std::vector<const PreferenceTriple*>;
using TriplePairs = std::vector<std::pair<const PreferenceTriple*, const PreferenceTriple*>>;

struct TransitionSample {
  const Segment* segment = nullptr;
  int t = 0;
};

LossResult loss_amb(const EmbeddingModel& model, const TriplePtrs& batch, DistanceMetric metric);
// Every triple must be clear; within each triple the preferred segment is z+.
LossResult loss_quad(const EmbeddingModel& model, const TriplePairs& batch, DistanceMetric metric);
LossResult loss_norm(const EmbeddingModel& model, std::span<const Segment* const> segments);
// mean || decoder(s, f(tau)) - a ||_2 ; ENCODER mode only.
LossResult loss_recon(const EmbeddingModel& model, std::span<const TransitionSample> samples);

struct LossBatches {
  TriplePtrs pairs;   // clear and ambiguous triples for the ambiguity loss
  TriplePairs quads;  // pairs of clear triples
  std::vector<const Segment*> norm;
  std::vector<TransitionSample> recon;
};

struct TotalLoss {
  double value = 0.0;
  double amb = 0.0;
  double quad = 0.0;
  double norm = 0.0;
  double recon = 0.0;
  Eigen::VectorXd grad;
};

// recon + l_amb * amb + l_quad * quad + l_norm * norm. TABLE mode has no
// reconstruction term. Components with zero weight are skipped.
TotalLoss total_loss(const EmbeddingModel& model, const LossBatches& batches,
                     const LossWeights& weights, DistanceMetric metric);

struct TrainOptions {
  int steps = 2000;
  OptimizerOptions optimizer{OptimizerKind::kGradientDescent, 0.1};
  LossWeights weights;
  DistanceMetric metric = DistanceMetric::kL2;
  int quad_batch = 64;
  int pair_batch = 0;   // 0: every labeled triple each step
  int norm_batch = 0;   // 0: whole pool each step
  int recon_batch = 64;
  int trace_every = 100;
  std::uint64_t seed = 0;
};

struct TracePoint {
  int step = 0;
  double total = 0.0;
  double amb = 0.0;
  double quad = 0.0;
  double norm = 0.0;
  double recon = 0.0;
};

struct TrainResult {
  std::vector<TracePoint> trace;
  bool quad_skipped = false;
};

// Runs `steps` optimizer updates. `pool` supplies the segments for the norm
// and reconstruction terms.
TrainResult train_embedding(EmbeddingModel& model, std::span<const SegmentPtr> pool,
                            const PreferenceDataset& prefs, const TrainOptions& options);

struct GradCheckReport {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  bool finite = true;
  bool passed = false;
  std::string location;  // set when a non-finite gradient is found
};

// Central finite differences against the analytic gradient of `loss` at
// `params`. Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
GradCheckReport gradient_check(const std::function<LossResult(const Eigen::VectorXd&)>& loss,
                               const Eigen::VectorXd& params, double tolerance,
                               double step = 1e-5, double floor = 1e-4);

struct SeparationReport {
  // Margin part (needs clear and ambiguous pairs).
  bool margin_applicable = false;
  double d_plus_min = 0.0;
  double d_minus_max = 0.0;
  double margin = 0.0;
  // Centroid hyperplane part (needs preferred and rejected segments).
  bool hyperplane_applicable = false;
  Eigen::VectorXd mu_plus;
  Eigen::VectorXd mu_minus;
  Eigen::VectorXd w;
  double b = 0.0;
  double eta = 0.0;
  double train_accuracy = 0.0;

  double signed_distance(const Eigen::Ref<const Eigen::VectorXd>& z) const;
};

// Geometry from raw numbers: clear/ambiguous pair distances and the
// preferred/rejected embeddings (columns, one per clear-triple occurrence).
SeparationReport separation_report(std::span<const double> clear_distances,
                                   std::span<const double> ambiguous_distances,
                                   const Eigen::MatrixXd& preferred, const Eigen::MatrixXd& rejected);
SeparationReport separation_report(const EmbeddingModel& model, const PreferenceDataset& prefs,
                                   DistanceMetric metric);

// 2-D PCA of embedding columns. pc1 is oriented to correlate non-negatively
// with `returns`; pc2 has its largest loading positive.
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& z, const Eigen::VectorXd& returns);

struct ReferenceSegment {
  SegmentId id;
  double true_return = 0.0;
  Eigen::VectorXd pooled;  // empty for TABLE models
};

// CSV columns segment_id, pc1, pc2, true_return_normalized.
void write_embedding_csv(const std::filesystem::path& path, std::span<const SegmentId> ids,
                         const Eigen::MatrixXd& z, const Eigen::VectorXd& returns);
void export_embeddings(const EmbeddingModel& model, std::span<const SegmentPtr> segments,
                       const std::filesystem::path& path);

// Model plus the reference segments needed to re-export it later.
void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model,
                     std::span<const SegmentPtr> references);
std::pair<EmbeddingModel, std::vector<ReferenceSegment>> load_checkpoint(
    const std::filesystem::path& path);
void export_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& csv);

}  // namespace clarify
