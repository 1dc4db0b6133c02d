#include <cmath>
#include <queue>

#include "doctest.h"
#include "clarify/reward.hpp"
#include "clarify/stats.hpp"
#include "helpers.hpp"

using namespace clarify;
using clarify::test::constant_segment;

namespace {

// One-layer tanh nets on (state, action) with state weight w and all else 0,
// so a constant-state segment of length L returns L tanh(w s).
RewardEnsemble linear_ensemble(int members, double w) {
  RewardEnsemble e(1, 1, members, 0, RewardNetOptions{1, 0});
  for (int k = 0; k < members; ++k) {
    e.params(k).setZero();
    e.params(k)[0] = w;
  }
  return e;
}

std::vector<const PreferenceTriple*> ptrs(const std::vector<PreferenceTriple>& v) {
  std::vector<const PreferenceTriple*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

}  // namespace

TEST_CASE("Bradley-Terry probability") {
  CHECK(bt_probability(2.0, 2.0) == 0.5);
  CHECK(bt_probability(0.0, std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(bt_probability(1.0, 1.0 + std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(std::abs(bt_probability(0.0, 100.0) - 1.0) < 1e-6);
  CHECK(bt_probability(0.0, 1e6) == 1.0);
  CHECK(bt_probability(1e6, 0.0) == 0.0);
  CHECK(std::isfinite(bt_probability(-1e308, 1e308)));
  for (double x : {-30.0, -2.0, 0.3, 5.0, 40.0})
    CHECK(std::abs(bt_probability(0.0, x) + bt_probability(x, 0.0) - 1.0) <= 1e-12);
}

TEST_CASE("Bradley-Terry probability is shift invariant for equal lengths") {
  const auto e = linear_ensemble(1, 0.4);
  const auto a = constant_segment(0, 5, 0.2);
  const auto b = constant_segment(1, 5, -1.0);
  // Shift at the return level: both returns move by the same amount.
  const double r0 = e.segment_return(0, *a);
  const double r1 = e.segment_return(0, *b);
  CHECK(bt_probability(r0 + 7.5, r1 + 7.5) == doctest::Approx(bt_probability(r0, r1)).epsilon(1e-12));
  CHECK(bt_probability(e, *a, *b) == doctest::Approx(bt_probability(r0, r1)).epsilon(1e-14));
}

TEST_CASE("preference cross-entropy hand values") {
  const auto lo = constant_segment(0, 4, 0.0);
  const auto hi = constant_segment(1, 4, 1.0);
  auto flat = linear_ensemble(1, 0.0);
  const std::vector<PreferenceTriple> batch{{lo, hi, PreferenceLabel::kPreferFirst, 0},
                                            {hi, lo, PreferenceLabel::kPreferFirst, 0},
                                            {lo, hi, PreferenceLabel::kNoComparison, 0}};
  CHECK(ce_loss(flat, 0, ptrs(batch)).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // 4 tanh(w) = ln 3 gives P[hi > lo] = 0.75.
  const auto e = linear_ensemble(1, std::atanh(std::log(3.0) / 4));
  const std::vector<PreferenceTriple> one{{lo, hi, PreferenceLabel::kPreferSecond, 0}};
  CHECK(ce_loss(e, 0, ptrs(one)).value == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(ce_loss(e, 0, ptrs(one)).value == doctest::Approx(0.287682).epsilon(1e-6));
  CHECK(ce_loss(e.shape(), as_span(e.params(0)), ptrs(one)).value == ce_loss(e, 0, ptrs(one)).value);

  const std::vector<PreferenceTriple> skips{{lo, hi, PreferenceLabel::kNoComparison, 0}};
  CHECK_THROWS_WITH(ce_loss(e, 0, ptrs(skips)), doctest::Contains("no trainable labels"));
}

TEST_CASE("preference cross-entropy gradient matches finite differences") {
  RewardEnsemble e(2, 1, 1, 4, RewardNetOptions{2, 1});  // 9 parameters
  Rng rng(8);
  std::normal_distribution<double> g(0.0, 0.5);
  for (auto& x : e.params(0)) x = g(rng);
  std::vector<SegmentPtr> segs;
  for (int i = 0; i < 4; ++i) {
    auto s = std::make_shared<Segment>();
    s->id = {i, 0};
    s->states = Eigen::MatrixXd::NullaryExpr(3, 2, [&] { return g(rng); });
    s->actions = Eigen::MatrixXd::NullaryExpr(3, 1, [&] { return g(rng); });
    segs.push_back(s);
  }
  const std::vector<PreferenceTriple> batch{{segs[0], segs[1], PreferenceLabel::kPreferFirst, 0},
                                            {segs[2], segs[3], PreferenceLabel::kPreferSecond, 0},
                                            {segs[1], segs[2], PreferenceLabel::kPreferSecond, 0}};
  const auto p = ptrs(batch);
  auto loss = [&](const Eigen::VectorXd& x) { return ce_loss(e.shape(), as_span(x), p); };
  const auto r = gradient_check(loss, e.params(0), 1e-4);
  CHECK(r.passed);
}

TEST_CASE("zero reward updates leave the ensemble unchanged") {
  RewardEnsemble e(1, 1, 2, 3, RewardNetOptions{8, 2});
  const auto before = e;
  PreferenceDataset prefs;
  prefs.add({constant_segment(0, 3, 0.0), constant_segment(1, 3, 1.0), PreferenceLabel::kPreferSecond, 0});
  RewardTrainOptions o;
  o.updates = 0;
  train_reward(e, prefs, o);
  for (int k = 0; k < e.size(); ++k) CHECK(e.params(k) == before.params(k));
}

TEST_CASE("a single separable preference is fit") {
  RewardEnsemble e(1, 1, 3, 1);
  PreferenceDataset prefs;
  prefs.add({constant_segment(0, 10, -1.0), constant_segment(1, 10, 1.0), PreferenceLabel::kPreferSecond, 0});
  RewardTrainOptions o;
  o.updates = 200;
  const auto trace = train_reward(e, prefs, o);
  REQUIRE(trace.size() == 3);
  for (int k = 0; k < e.size(); ++k) {
    CHECK(trace[static_cast<std::size_t>(k)].size() == 200);
    CHECK(ce_loss(e, k, prefs.clear()).value < 0.1);
  }
}

TEST_CASE("reward training is deterministic per seed") {
  PreferenceDataset prefs;
  for (int i = 0; i < 6; ++i)
    prefs.add({constant_segment(i, 3, 0.1 * i), constant_segment(10 + i, 3, -0.2 * i),
               i % 2 ? PreferenceLabel::kPreferFirst : PreferenceLabel::kPreferSecond, 0});
  RewardTrainOptions o;
  o.updates = 20;
  o.batch_size = 4;
  o.seed = 7;
  RewardEnsemble a(1, 1, 2, 5, RewardNetOptions{16, 2});
  RewardEnsemble b(1, 1, 2, 5, RewardNetOptions{16, 2});
  train_reward(a, prefs, o);
  train_reward(b, prefs, o);
  for (int k = 0; k < 2; ++k) CHECK(a.params(k) == b.params(k));
  CHECK(a.params(0) != a.params(1));
}

TEST_CASE("reward net outputs stay inside (-1, 1)") {
  const RewardEnsemble e(3, 2, 3, 2);
  const Eigen::MatrixXd x = 50.0 * Eigen::MatrixXd::Random(5, 100);
  for (int k = 0; k < 3; ++k) CHECK(e.member_rewards(k, x).cwiseAbs().maxCoeff() <= 1.0);
  CHECK(e.mean_rewards(x).isApprox((e.member_rewards(0, x) + e.member_rewards(1, x) + e.member_rewards(2, x)) / 3));
}

TEST_CASE("min-max normalization") {
  CHECK(minmax_normalize(Eigen::Vector3d(-1, 0, 3)).isApprox(Eigen::Vector3d(0, 0.25, 1)));
  CHECK(minmax_normalize(Eigen::Vector3d(2, 2, 2)) == Eigen::Vector3d::Constant(0.5));
}

TEST_CASE("relabeling is the min-max normalized ensemble mean") {
  Episode ep;
  ep.states = Eigen::Vector4d(-1, 0, 3, 0.5);
  ep.actions = Eigen::MatrixXd::Zero(4, 1);
  ep.rewards = Eigen::VectorXd::Zero(4);
  Episode ep2 = ep;
  ep2.states = Eigen::Vector4d(2, 2, -0.5, 1);
  const OfflineDataset data({ep, ep2});
  const auto e = linear_ensemble(2, 1.0);
  const auto r = relabel_dataset(e, data);
  REQUIRE(r.size() == 2);
  const double lo = std::tanh(-1.0);
  const double hi = std::tanh(3.0);
  for (int i = 0; i < 4; ++i) {
    CHECK(r[0][i] == doctest::Approx((std::tanh(ep.states(i, 0)) - lo) / (hi - lo)));
    CHECK(r[1][i] == doctest::Approx((std::tanh(ep2.states(i, 0)) - lo) / (hi - lo)));
  }
  CHECK(spearman(r[0], ep.states.col(0)) == doctest::Approx(1.0));

  const auto flat = linear_ensemble(2, 0.0);
  for (const auto& v : relabel_dataset(flat, data)) CHECK(v == Eigen::VectorXd::Constant(4, 0.5));
}

TEST_CASE("value iteration reaches the goal along shortest paths") {
  GridNavEnv::Params p;
  p.size = 3;
  p.goal_x = 2;
  p.goal_y = 2;
  const GridNavEnv env(p);
  const auto pol = value_iteration(env, env.reward_table(), 0.99, 1e-10);
  for (int s = 0; s < env.num_states(); ++s) {
    if (s == env.goal_state()) continue;
    // Manhattan distance is the BFS distance on an open grid.
    const int manhattan = std::abs(env.x_of(s) - 2) + std::abs(env.y_of(s) - 2);
    int cur = s;
    int steps = 0;
    while (cur != env.goal_state() && steps < 20) {
      cur = env.next_state(cur, pol.action[static_cast<std::size_t>(cur)]);
      ++steps;
    }
    CHECK(steps == manhattan);
  }
  CHECK(pol.residuals.back() <= 1e-10);
  for (std::size_t i = 1; i < pol.residuals.size(); ++i) CHECK(pol.residuals[i] <= pol.residuals[i - 1] + 1e-15);
}

TEST_CASE("value iteration with gamma 0 is myopic") {
  const GridNavEnv env;
  Rng rng(2);
  std::uniform_real_distribution<double> u;
  const Eigen::MatrixXd table = Eigen::MatrixXd::NullaryExpr(env.num_states(), 4, [&] { return u(rng); });
  const auto pol = value_iteration(env, table, 0.0, 1e-12);
  for (int s = 0; s < env.num_states(); ++s) {
    Eigen::Index best;
    table.row(s).maxCoeff(&best);
    CHECK(pol.action[static_cast<std::size_t>(s)] == best);
    CHECK(pol.values[s] == doctest::Approx(table(s, best)));
  }
}

TEST_CASE("value iteration with zero reward") {
  const GridNavEnv env;
  const auto pol = value_iteration(env, Eigen::MatrixXd::Zero(env.num_states(), 4), 0.9, 1e-9);
  CHECK(pol.values.isZero(0.0));
  for (int a : pol.action) CHECK(a == 0);
  CHECK_THROWS(value_iteration(Environment(PointMassEnv()), Eigen::MatrixXd::Zero(1, 4), 0.9, 1e-9));
  CHECK_THROWS(value_iteration(env, Eigen::MatrixXd::Zero(env.num_states(), 4), 0.9, 0.0));
}

TEST_CASE("clarity ratio") {
  const auto a = constant_segment(0, 1, 0);
  const auto b = constant_segment(1, 1, 0);
  const std::vector<PreferenceTriple> t{{a, b, PreferenceLabel::kPreferFirst, 0},
                                        {a, b, PreferenceLabel::kNoComparison, 0},
                                        {a, b, PreferenceLabel::kPreferSecond, 0},
                                        {a, b, PreferenceLabel::kNoComparison, 0}};
  CHECK(clarity_ratio(t) == 0.5);
}

TEST_CASE("the true reward scores perfect preference accuracy") {
  // Reward tanh(s) on 1-D states; true returns are computed independently.
  const auto e = linear_ensemble(2, 1.0);
  Rng rng(5);
  std::normal_distribution<double> g;
  std::vector<SegmentPtr> segs;
  for (int i = 0; i < 60; ++i) {
    auto s = std::make_shared<Segment>();
    s->id = {i, 0};
    s->states = Eigen::MatrixXd::NullaryExpr(5, 1, [&] { return g(rng); });
    s->actions = Eigen::MatrixXd::Zero(5, 1);
    s->true_return = s->states.array().tanh().sum();
    segs.push_back(s);
  }
  std::vector<PreferenceTriple> heldout;
  for (int i = 0; i + 1 < 60; i += 2) {
    const auto& a = segs[static_cast<std::size_t>(i)];
    const auto& b = segs[static_cast<std::size_t>(i) + 1];
    const auto label = std::abs(a->true_return - b->true_return) < 0.5 ? PreferenceLabel::kNoComparison
                       : a->true_return > b->true_return              ? PreferenceLabel::kPreferFirst
                                                                      : PreferenceLabel::kPreferSecond;
    heldout.push_back({a, b, label, 0});
  }
  const auto m = evaluate_reward(e, OfflineDataset(), PointMassEnv(), heldout, heldout, segs, 2);
  CHECK(m.round == 2);
  CHECK(m.pref_accuracy == 1.0);
  CHECK(m.spearman == doctest::Approx(1.0));
  CHECK(!m.normalized_return.has_value());
  CHECK(m.clarity_ratio == clarity_ratio(heldout));
  CHECK_THROWS(evaluate_reward(e, OfflineDataset(), PointMassEnv(), heldout, {}, segs, 0));
}

TEST_CASE("an untrained ensemble does not rank segments with unrelated returns") {
  // True returns are drawn independently of the segment contents, so any
  // correlation is sampling noise with standard deviation about 1/sqrt(499).
  Rng rng(6);
  std::normal_distribution<double> g;
  std::vector<SegmentPtr> segs;
  std::vector<const Segment*> raw;
  Eigen::VectorXd truth(500);
  for (int i = 0; i < 500; ++i) {
    auto s = std::make_shared<Segment>();
    s->id = {i, 0};
    s->states = Eigen::MatrixXd::NullaryExpr(10, 4, [&] { return g(rng); });
    s->actions = Eigen::MatrixXd::NullaryExpr(10, 2, [&] { return g(rng); });
    truth[i] = g(rng);
    segs.push_back(s);
    raw.push_back(s.get());
  }
  for (std::uint64_t seed : {0, 1, 2}) {
    const RewardEnsemble e(4, 2, 3, seed);
    CHECK(std::abs(spearman(e.segment_returns(-1, raw), truth)) < 0.3);
  }
}

TEST_CASE("a constant learned reward falls short of the optimum on GridNav") {
  const GridNavEnv env;
  const auto data = generate_offline_dataset(env, QualityMix({{0.5, 1.0}}), 50, 0);
  const auto segs = sample_segments(data, 20, 50, 1);
  const std::vector<PreferenceTriple> heldout{{segs[0], segs[1], PreferenceLabel::kNoComparison, 0}};
  RewardEnsemble e(env.state_dim(), env.action_dim(), 2, 0, RewardNetOptions{1, 0});
  for (int k = 0; k < 2; ++k) e.params(k).setZero();
  // Every action ties, so the greedy policy always moves +x and reaches the
  // goal only from the top row.
  const auto m = evaluate_reward(e, data, env, heldout, heldout, segs, 0);
  REQUIRE(m.normalized_return.has_value());
  CHECK(*m.normalized_return < 0.5);
  CHECK(m.pref_accuracy == 0.0);
}
