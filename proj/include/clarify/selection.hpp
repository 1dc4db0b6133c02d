// Query selection in embedding space: distance histograms of labeled pairs,
// the acceptance density built from them, rejection sampling of candidate
// pairs, and the ensemble-disagreement ranking.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "clarify/core.hpp"
#include "clarify/embedding.hpp"
#include "clarify/reward.hpp"

namespace clarify {

// Equal-width bins over [0, support]; values past the support land in the
// last bin.
struct DistanceHistogram {
  Eigen::VectorXd edges;  // n_bin + 1
  Eigen::VectorXd mass;   // n_bin, sums to 1 (all zero for an empty sample)

  static DistanceHistogram build(std::span<const double> distances, double support, int n_bin);
  int n_bin() const { return static_cast<int>(mass.size()); }
  int bin_of(double d) const;
};

struct DensityModel {
  Eigen::VectorXd edges;
  Eigen::VectorXd rho_clr;
  Eigen::VectorXd rho_amb;
  Eigen::VectorXd rho1;
  Eigen::VectorXd rho2;
  Eigen::VectorXd rho;
  double eps_d = 1e-6;
  bool rho1_fallback = false;  // rho_clr <= rho_amb everywhere; rho1 set uniform

  // rho1 = norm(max(0, clr - amb)), rho2 = norm((clr + eps) / (amb + eps)),
  // rho = (rho1 + rho2) / 2.
  static DensityModel from_masses(Eigen::VectorXd edges, Eigen::VectorXd rho_clr, Eigen::VectorXd rho_amb,
                                  double eps_d = 1e-6);
  // Every distance equally acceptable.
  static DensityModel uniform(int n_bin, double support = 1.0);

  int n_bin() const { return static_cast<int>(rho.size()); }
  int bin_of(double d) const;
  double acceptance(double d) const { return rho[bin_of(d)] / rho.maxCoeff(); }
  void write_csv(const std::filesystem::path& path) const;
};

double pair_distance(const EmbeddingModel& model, const Segment& seg0, const Segment& seg1,
                     DistanceMetric metric);

// Histograms of labeled-pair distances, clear versus skipped.
DensityModel estimate_densities(const PreferenceDataset& prefs, const EmbeddingModel& model,
                                DistanceMetric metric, int n_bin = 32, double eps_d = 1e-6);

struct Candidate {
  SegmentPtr seg0;
  SegmentPtr seg1;
  double distance = 0.0;
};

// One Bernoulli(acceptance) draw per candidate.
std::vector<bool> accept_candidates(std::span<const double> distances, const DensityModel& density, Rng& rng);

struct RejectionResult {
  std::vector<int> selected;  // candidate indices, ascending
  int accepted = 0;
  int topped_up = 0;
};

// Accepted candidates are subsampled to M uniformly; a shortfall is filled
// from the remaining candidates in the highest-rho bins.
RejectionResult rejection_sample(std::span<const double> distances, const DensityModel& density, int M,
                                 std::uint64_t seed);

// Population standard deviation of P[seg1 > seg0] across ensemble members.
double disagreement_score(const RewardEnsemble& ensemble, const Segment& seg0, const Segment& seg1);
Eigen::VectorXd disagreement_scores(const RewardEnsemble& ensemble, std::span<const Candidate> candidates);

// Uniform candidate pairs from `dataset`, skipping self-pairs, repeats and
// pairs already in `prefs`.
std::vector<Candidate> sample_candidates(const OfflineDataset& dataset, const PreferenceDataset& prefs, int H,
                                         int pool_size, std::uint64_t seed);

struct SelectionOptions {
  int M = 50;
  int pool_size = 1000;      // candidate pairs drawn per round
  int intermediate = 200;    // kept by rejection sampling before ranking
  DistanceMetric metric = DistanceMetric::kL2;
};

struct SelectionResult {
  std::vector<Candidate> queries;
  int pool = 0;
  int accepted = 0;
  int topped_up = 0;
};

SelectionResult select_queries(const OfflineDataset& dataset, const PreferenceDataset& prefs,
                               const EmbeddingModel& model, const RewardEnsemble& ensemble,
                               const DensityModel& density, int H, const SelectionOptions& options,
                               std::uint64_t seed);

}  // namespace clarify
