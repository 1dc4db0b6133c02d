// Domain types shared by every stage of the preference-learning pipeline:
// trajectory segments, preference triples, offline datasets, and the
// newline-delimited JSON files they are stored in.
#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace clarify {

inline constexpr int kSchemaVersion = 1;

// Raised when a dataset or preference file cannot be read back. The message
// always names the offending record (1-based line number).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Segments are keyed by the window they were cut from, so drawing the same
// window twice yields the same identity.
struct SegmentId {
  int episode = 0;
  int start = 0;

  auto operator<=>(const SegmentId&) const = default;
  std::string str() const;
  static SegmentId parse(std::string_view text);
};

struct SegmentIdHash {
  std::size_t operator()(const SegmentId& id) const noexcept {
    return std::hash<std::uint64_t>{}(
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(id.episode)) << 32) |
        static_cast<std::uint32_t>(id.start));
  }
};

// A length-H window of (state, action) pairs. Rows are time steps.
struct Segment {
  SegmentId id;
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  double true_return = 0.0;
  int source_episode = 0;

  int length() const { return static_cast<int>(states.rows()); }
  // Per-step [state; action] averaged over the window.
  Eigen::VectorXd pooled_features() const;
};

using SegmentPtr = std::shared_ptr<const Segment>;

enum class PreferenceLabel { kPreferFirst, kPreferSecond, kNoComparison };

// "first" / "second" / "skip", the spelling used on disk and over HTTP.
std::string_view label_name(PreferenceLabel label);
PreferenceLabel parse_label(std::string_view text);
// PREFER_FIRST -> 0, PREFER_SECOND -> 1, NO_COMP -> nullopt.
std::optional<int> label_to_p(PreferenceLabel label);

struct PreferenceTriple {
  SegmentPtr seg0;
  SegmentPtr seg1;
  PreferenceLabel label = PreferenceLabel::kNoComparison;
  int round = 0;

  bool is_clear() const { return label != PreferenceLabel::kNoComparison; }
  // Only valid for clear triples.
  const Segment& preferred() const;
  const Segment& rejected() const;
};

struct Episode {
  Eigen::MatrixXd states;   // T x state_dim
  Eigen::MatrixXd actions;  // T x action_dim
  Eigen::VectorXd rewards;  // hidden ground truth, length T

  int length() const { return static_cast<int>(rewards.size()); }
};

class OfflineDataset {
 public:
  OfflineDataset() = default;
  explicit OfflineDataset(std::vector<Episode> episodes);

  const std::vector<Episode>& episodes() const { return episodes_; }
  double r_avg() const { return r_avg_; }
  double recompute_r_avg() const;
  int state_dim() const;
  int action_dim() const;
  std::size_t num_transitions() const;

 private:
  std::vector<Episode> episodes_;
  double r_avg_ = 0.0;
};

class PreferenceDataset {
 public:
  void add(PreferenceTriple triple);
  const std::vector<PreferenceTriple>& triples() const { return triples_; }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }

  std::vector<const PreferenceTriple*> clear() const;
  std::vector<const PreferenceTriple*> ambiguous() const;
  std::size_t num_clear() const;
  std::size_t num_ambiguous() const { return size() - num_clear(); }
  // Unordered pair membership.
  bool contains_pair(const SegmentId& a, const SegmentId& b) const;

 private:
  std::vector<PreferenceTriple> triples_;
};

using RewardFn = std::function<double(const Eigen::Ref<const Eigen::VectorXd>& state,
                                      const Eigen::Ref<const Eigen::VectorXd>& action)>;

// Cuts the window [start, start + H) out of an episode.
SegmentPtr make_segment(const OfflineDataset& dataset, int episode, int start, int H);

// Uniform over every (episode, start) window of eligible episodes.
std::vector<SegmentPtr> sample_segments(const OfflineDataset& dataset, int H, int count,
                                        std::uint64_t seed);

double segment_return(const Segment& segment, const RewardFn& reward);

// splitmix64-based seed derivation so every stage owns an independent stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag_a, std::uint64_t tag_b = 0);

using Rng = std::mt19937_64;

void save_dataset(const OfflineDataset& dataset, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

void save_preferences(const PreferenceDataset& prefs, const std::filesystem::path& path);
// Segment references are resolved against `dataset`.
PreferenceDataset load_preferences(const std::filesystem::path& path,
                                   const OfflineDataset& dataset);

}  // namespace clarify
