// Round-based experiment driver: random warm-up queries, embedding and reward
// training, embedding-guided query selection, evaluation and artifacts.
#pragma once

#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "clarify/config.hpp"
#include "clarify/reward.hpp"
#include "clarify/teacher.hpp"

namespace clarify {

struct RoundLog {
  int round = 0;
  int queries = 0;
  int prefer_first = 0;
  int prefer_second = 0;
  int skipped = 0;
  double clarity_ratio = 0.0;
  int pool = 0;
  int accepted = 0;
  int topped_up = 0;
  bool density_fallback = false;  // uniform density used: no clear or no skipped labels yet
  std::string density_file;
  std::string embedding_file;
  std::vector<TracePoint> embedding_trace;
  double reward_loss = 0.0;  // member mean of the last update
  MetricsRecord metrics;
};

// Shared state between a running experiment and the labeling service.
class ExperimentSession {
 public:
  explicit ExperimentSession(std::string experiment_id, int labels_needed)
      : experiment_id_(std::move(experiment_id)), labels_needed_(labels_needed) {}

  HumanLabelQueue& queue() { return queue_; }
  const std::string& experiment_id() const { return experiment_id_; }
  int labels_needed() const { return labels_needed_; }
  int round() const { return round_.load(); }
  int labels_done() const { return labels_done_.load(); }
  void set_round(int r) { round_.store(r); }
  void add_labels(int n) { labels_done_.fetch_add(n); }
  void set_labels(int n) { labels_done_.store(n); }

 private:
  std::string experiment_id_;
  int labels_needed_ = 0;
  std::atomic<int> round_{0};
  std::atomic<int> labels_done_{0};
  HumanLabelQueue queue_;
};

struct RunOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  ExperimentSession* session = nullptr;  // required in human mode
  bool quiet = false;
};

struct ExperimentResult {
  std::vector<RoundLog> rounds;
  MetricsRecord final_metrics;
  double heldout_clarity = 0.0;   // clarity of uniformly drawn query pairs
  double selected_clarity = 0.0;  // clarity of queries chosen after round 0
  int labels_spent = 0;
  int clear_labels = 0;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

// One CSV row per RoundLog found under `dir`.
void write_report(const std::filesystem::path& dir, const std::filesystem::path& csv);

}  // namespace clarify
