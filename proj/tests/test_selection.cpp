#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "clarify/selection.hpp"
#include "helpers.hpp"

using namespace clarify;
using clarify::test::constant_segment;
using clarify::test::ramp_episode;
using clarify::test::valued_segment;

namespace {

EmbeddingModel table_with(const std::vector<std::pair<SegmentPtr, Eigen::Vector2d>>& entries) {
  auto m = EmbeddingModel::table(2, 0);
  for (const auto& [s, z] : entries) {
    m.add_segment(s->id);
    m.params().segment(2 * m.table_column(s->id), 2) = z;
  }
  return m;
}

// Two-bin density with rho = [1/34, 33/34] in the eps_d -> 0 limit.
DensityModel two_bin_density(double eps_d = 1e-15) {
  return DensityModel::from_masses(Eigen::Vector3d(0.0, 0.5, 1.0), Eigen::Vector2d(0.2, 0.8),
                                   Eigen::Vector2d(0.8, 0.2), eps_d);
}

// Ensemble of 1-layer tanh nets on (state, action) whose member k has state
// weight w[k] and everything else zero.
RewardEnsemble linear_ensemble(const std::vector<double>& w) {
  RewardEnsemble e(1, 1, static_cast<int>(w.size()), 0, RewardNetOptions{1, 0});
  for (int k = 0; k < e.size(); ++k) {
    e.params(k).setZero();
    e.params(k)[0] = w[static_cast<std::size_t>(k)];
  }
  return e;
}

}  // namespace

TEST_CASE("pair distance hand values") {
  const auto a = valued_segment(0, 0);
  const auto b = valued_segment(1, 0);
  const auto c = valued_segment(2, 0);
  const auto m = table_with({{a, {0, 0}}, {b, {3, 4}}, {c, {0, 0}}});
  CHECK(pair_distance(m, *a, *b, DistanceMetric::kL2) == doctest::Approx(5.0));
  CHECK(pair_distance(m, *b, *a, DistanceMetric::kL2) == pair_distance(m, *a, *b, DistanceMetric::kL2));
  CHECK(pair_distance(m, *a, *b, DistanceMetric::kSquaredL2) == doctest::Approx(25.0));
  CHECK(pair_distance(m, *a, *c, DistanceMetric::kL2) == 0.0);
  CHECK(pair_distance(m, *a, *a, DistanceMetric::kL2) == 0.0);
}

TEST_CASE("density formulas on two bins") {
  const auto d = two_bin_density();
  CHECK(d.rho1[0] == doctest::Approx(0.0));
  CHECK(d.rho1[1] == doctest::Approx(1.0));
  CHECK(d.rho2[0] == doctest::Approx(1.0 / 17));
  CHECK(d.rho2[1] == doctest::Approx(16.0 / 17));
  CHECK(d.rho[0] == doctest::Approx(1.0 / 34));
  CHECK(d.rho[1] == doctest::Approx(33.0 / 34));
  CHECK(!d.rho1_fallback);
  CHECK((d.rho - 0.5 * (d.rho1 + d.rho2)).cwiseAbs().maxCoeff() == 0.0);
  for (const auto* v : {&d.rho1, &d.rho2, &d.rho}) {
    CHECK(std::abs(v->sum() - 1.0) < 1e-9);
    CHECK(v->minCoeff() >= 0.0);
  }
}

TEST_CASE("equal densities fall back to uniform") {
  const Eigen::Vector3d m(0.5, 0.3, 0.2);
  const auto d = DensityModel::from_masses(Eigen::Vector4d(0, 1, 2, 3), m, m);
  CHECK(d.rho1_fallback);
  const Eigen::Vector3d u = Eigen::Vector3d::Constant(1.0 / 3);
  CHECK(d.rho1.isApprox(u));
  CHECK(d.rho2.isApprox(u));
  CHECK(d.rho.isApprox(u));
}

TEST_CASE("density estimation from labeled pairs") {
  const auto a = valued_segment(0, 0);
  const auto b = valued_segment(1, 0);
  const auto c = valued_segment(2, 0);
  const auto dd = valued_segment(3, 0);
  const auto m = table_with({{a, {0, 0}}, {b, {4, 0}}, {c, {0, 1}}, {dd, {0, 0}}});
  PreferenceDataset prefs;
  prefs.add({a, b, PreferenceLabel::kPreferFirst, 0});  // distance 4
  CHECK_THROWS_WITH(estimate_densities(prefs, m, DistanceMetric::kL2, 2),
                    doctest::Contains("insufficient labeled data for density estimation"));
  prefs.add({c, dd, PreferenceLabel::kNoComparison, 0});  // distance 1
  const auto d = estimate_densities(prefs, m, DistanceMetric::kL2, 2);
  CHECK(d.edges.isApprox(Eigen::Vector3d(0, 2, 4)));
  CHECK(d.rho_clr.isApprox(Eigen::Vector2d(0, 1)));
  CHECK(d.rho_amb.isApprox(Eigen::Vector2d(1, 0)));
  CHECK(d.rho[1] > d.rho[0]);
  CHECK(d.bin_of(9.0) == 1);
}

TEST_CASE("density dump has one row per bin") {
  clarify::test::TempDir dir("sel");
  two_bin_density().write_csv(dir / "rho.csv");
  std::ifstream in(dir / "rho.csv");
  std::string line;
  int rows = 0;
  std::getline(in, line);
  CHECK(line == "bin_left,bin_right,rho_clr,rho_amb,rho1,rho2,rho");
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("uniform density accepts every candidate") {
  const auto u = DensityModel::uniform(8, 2.0);
  std::vector<double> dist;
  for (int i = 0; i < 100; ++i) dist.push_back(0.02 * i);
  const auto r = rejection_sample(dist, u, 100, 5);
  CHECK(r.accepted == 100);
  CHECK(r.topped_up == 0);
  CHECK(r.selected.size() == 100);
  const auto sub = rejection_sample(dist, u, 10, 5);
  CHECK(sub.selected.size() == 10);
  CHECK(std::is_sorted(sub.selected.begin(), sub.selected.end()));
}

TEST_CASE("rejection sampling matches the closed-form accepted law") {
  const auto density = two_bin_density();
  std::vector<double> dist;
  for (int i = 0; i < 10000; ++i) dist.push_back(i % 2 ? 0.75 : 0.25);
  Rng rng(11);
  const auto acc = accept_candidates(dist, density, rng);
  int n = 0;
  int high = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    n += acc[i];
    high += acc[i] && dist[i] > 0.5;
  }
  const double q = 33.0 / 34.0;
  const double frac = static_cast<double>(high) / n;
  CHECK(std::abs(frac - q) <= 3.0 * std::sqrt(q * (1 - q) / n));
}

TEST_CASE("rejection sampling tops up a shortfall from the highest bins") {
  const auto density = DensityModel::from_masses(Eigen::Vector3d(0, 0.5, 1), Eigen::Vector2d(0, 1),
                                                 Eigen::Vector2d(1, 0), 1e-15);
  const std::vector<double> dist{0.1, 0.2, 0.9, 0.3, 0.8};
  const auto r = rejection_sample(dist, density, 4, 0);
  CHECK(r.accepted == 2);
  CHECK(r.topped_up == 2);
  CHECK(r.selected == std::vector<int>{0, 1, 2, 4});
  CHECK(rejection_sample(dist, density, 4, 0).selected == r.selected);
  CHECK_THROWS(rejection_sample({}, density, 4, 0));
  CHECK_THROWS(rejection_sample(dist, density, 0, 0));
}

TEST_CASE("disagreement score hand values") {
  const auto lo = constant_segment(0, 4, 0.0);
  const auto hi = constant_segment(1, 4, 1.0);
  // Member returns for hi are 4 tanh(w), lo returns 0: P = sigmoid(4 tanh(w)).
  const double w02 = std::atanh(std::log(0.25) / 4);
  const double w08 = std::atanh(std::log(4.0) / 4);
  const auto e = linear_ensemble({w02, w08});
  CHECK(bt_probability(e, 0, *lo, *hi) == doctest::Approx(0.2));
  CHECK(bt_probability(e, 1, *lo, *hi) == doctest::Approx(0.8));
  CHECK(disagreement_score(e, *lo, *hi) == doctest::Approx(0.3));
  CHECK(disagreement_score(e, *hi, *lo) == doctest::Approx(0.3));
  const std::vector<Candidate> cands{{lo, hi, 0.0}, {hi, lo, 0.0}};
  const auto batch = disagreement_scores(e, cands);
  CHECK(batch[0] == doctest::Approx(0.3));
  CHECK(batch[1] == doctest::Approx(0.3));

  const auto same = linear_ensemble({0.7, 0.7, 0.7});
  CHECK(disagreement_score(same, *lo, *hi) == 0.0);
  CHECK_THROWS(disagreement_score(linear_ensemble({0.7}), *lo, *hi));
}

TEST_CASE("candidate sampling excludes self pairs, repeats and labeled pairs") {
  const OfflineDataset data({ramp_episode(12), ramp_episode(12)});
  PreferenceDataset prefs;
  const auto first = sample_candidates(data, prefs, 3, 200, 1);
  std::set<std::pair<SegmentId, SegmentId>> seen;
  for (const auto& c : first) {
    CHECK(c.seg0->id != c.seg1->id);
    CHECK(seen.insert(std::minmax(c.seg0->id, c.seg1->id)).second);
  }
  for (const auto& c : first) prefs.add({c.seg0, c.seg1, PreferenceLabel::kNoComparison, 0});
  for (const auto& c : sample_candidates(data, prefs, 3, 200, 2))
    CHECK(!seen.count(std::minmax(c.seg0->id, c.seg1->id)));
}

TEST_CASE("selection with every pair labeled has no fresh candidates") {
  // One episode of length 2 with H = 1 has a single distinct pair.
  const OfflineDataset data({ramp_episode(2)});
  PreferenceDataset prefs;
  prefs.add({make_segment(data, 0, 0, 1), make_segment(data, 0, 1, 1), PreferenceLabel::kPreferFirst, 0});
  auto m = EmbeddingModel::encoder(2, 2, 1, 0, 4, 1);
  const RewardEnsemble e(2, 1, 2, 0, RewardNetOptions{4, 1});
  SelectionOptions o;
  o.M = 1;
  o.pool_size = 10;
  CHECK_THROWS_WITH(select_queries(data, prefs, m, e, DensityModel::uniform(4), 1, o, 0),
                    doctest::Contains("no fresh candidates"));
}

TEST_CASE("inert filters reduce selection to the first M candidates") {
  const OfflineDataset data({ramp_episode(30), ramp_episode(30), ramp_episode(30)});
  PreferenceDataset prefs;
  const auto m = EmbeddingModel::encoder(2, 2, 1, 0, 4, 1);
  RewardEnsemble e(2, 1, 3, 0, RewardNetOptions{4, 1});
  e.params(1) = e.params(0);
  e.params(2) = e.params(0);
  SelectionOptions o;
  o.M = 10;
  o.pool_size = 40;
  o.intermediate = 40;
  const auto r = select_queries(data, prefs, m, e, DensityModel::uniform(4, 100.0), 5, o, 3);
  REQUIRE(r.queries.size() == 10);
  CHECK(r.topped_up == 0);
  // The pool is drawn from the stream select_queries derives for it.
  const auto pool = sample_candidates(data, prefs, 5, 40, derive_seed(3, 1));
  CHECK(r.pool == static_cast<int>(pool.size()));
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(r.queries[i].seg0->id == pool[i].seg0->id);
    CHECK(r.queries[i].seg1->id == pool[i].seg1->id);
  }
}

TEST_CASE("selected queries are never already labeled") {
  const OfflineDataset data({ramp_episode(8), ramp_episode(8)});
  PreferenceDataset prefs;
  for (const auto& c : sample_candidates(data, prefs, 2, 30, 4))
    prefs.add({c.seg0, c.seg1, PreferenceLabel::kPreferSecond, 0});
  const auto m = EmbeddingModel::encoder(2, 2, 1, 0, 4, 1);
  const RewardEnsemble e(2, 1, 2, 0, RewardNetOptions{4, 1});
  SelectionOptions o;
  o.M = 5;
  o.pool_size = 50;
  o.intermediate = 20;
  const auto r = select_queries(data, prefs, m, e, DensityModel::uniform(4), 2, o, 9);
  for (const auto& q : r.queries) CHECK(!prefs.contains_pair(q.seg0->id, q.seg1->id));
}
