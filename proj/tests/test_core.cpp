#include <fstream>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "clarify/core.hpp"
#include "clarify/envs.hpp"
#include "helpers.hpp"

using namespace clarify;
using clarify::test::ramp_episode;
using clarify::test::TempDir;

TEST_CASE("sample_segments returns the only window of a single episode") {
  const OfflineDataset d({ramp_episode(50)});
  const auto segs = sample_segments(d, 50, 1, 0);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0]->id == SegmentId{0, 0});
  CHECK(segs[0]->length() == 50);
  CHECK(segs[0]->states(49, 0) == 49.0);
}

TEST_CASE("sample_segments rejects windows longer than every episode") {
  const OfflineDataset d({ramp_episode(50)});
  CHECK_THROWS_WITH(sample_segments(d, 51, 1, 0), doctest::Contains("no eligible episodes"));
}

TEST_CASE("sample_segments window starts are uniform") {
  const OfflineDataset d({ramp_episode(100), ramp_episode(100), ramp_episode(100)});
  const int count = 10000;
  const auto segs = sample_segments(d, 50, count, 1);
  std::map<SegmentId, int> freq;
  for (const auto& s : segs) {
    CHECK(s->id.start >= 0);
    CHECK(s->id.start <= 50);
    ++freq[s->id];
  }
  const int cells = 3 * 51;
  const double expected = static_cast<double>(count) / cells;
  double chi2 = 0.0;
  for (int e = 0; e < 3; ++e)
    for (int t = 0; t <= 50; ++t) {
      const double o = freq.count({e, t}) ? freq[{e, t}] : 0;
      chi2 += (o - expected) * (o - expected) / expected;
    }
  const boost::math::chi_squared law(cells - 1);
  CHECK(chi2 < boost::math::quantile(law, 0.999));
}

TEST_CASE("segment_return sums the reward function") {
  const OfflineDataset d({ramp_episode(60)});
  const auto seg = make_segment(d, 0, 5, 50);
  CHECK(segment_return(*seg, [](const auto&, const auto&) { return 1.0; }) == 50.0);
  CHECK(segment_return(*seg, [](const auto&, const auto&) { return 0.0; }) == 0.0);
}

TEST_CASE("segment_return on a five-step grid path that ends on the goal") {
  GridNavEnv::Params p;
  p.size = 3;
  p.goal_x = 2;
  p.goal_y = 2;
  const GridNavEnv env(p);
  // From (0,0): bump the -x wall, then +x, +x, +y, +y. Rewards by hand: 0,0,0,0,1.
  const int moves[] = {1, 0, 0, 2, 2};
  Segment seg;
  seg.states = Eigen::MatrixXd(5, env.state_dim());
  seg.actions = Eigen::MatrixXd(5, env.action_dim());
  int s = env.state_index(0, 0);
  for (int t = 0; t < 5; ++t) {
    seg.states.row(t) = env.encode_state(s).transpose();
    seg.actions.row(t) = env.encode_action(moves[t]).transpose();
    s = env.next_state(s, moves[t]);
  }
  CHECK(s == env.goal_state());
  CHECK(segment_return(seg, env.reward_fn()) == doctest::Approx(1.0));
}

TEST_CASE("dataset save/load round trip") {
  TempDir dir("core");
  const OfflineDataset d({ramp_episode(7, 0.5), ramp_episode(4, -1.0)});
  save_dataset(d, dir / "d.ndjson");
  const OfflineDataset back = load_dataset(dir / "d.ndjson");
  REQUIRE(back.episodes().size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(back.episodes()[e].states == d.episodes()[e].states);
    CHECK(back.episodes()[e].actions == d.episodes()[e].actions);
    CHECK(back.episodes()[e].rewards == d.episodes()[e].rewards);
  }
  CHECK(back.r_avg() == doctest::Approx(d.r_avg()));
}

TEST_CASE("truncated dataset file is a parse error") {
  TempDir dir("core");
  save_dataset(OfflineDataset({ramp_episode(7)}), dir / "d.ndjson");
  std::ifstream in(dir / "d.ndjson");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  std::ofstream(dir / "cut.ndjson") << text.substr(0, text.size() / 2);
  CHECK_THROWS_AS(load_dataset(dir / "cut.ndjson"), ParseError);
}

TEST_CASE("preference file round trip and label validation") {
  TempDir dir("core");
  const OfflineDataset d({ramp_episode(60), ramp_episode(60)});
  PreferenceDataset prefs;
  prefs.add({make_segment(d, 0, 0, 50), make_segment(d, 1, 3, 50), PreferenceLabel::kPreferSecond, 2});
  prefs.add({make_segment(d, 1, 10, 50), make_segment(d, 0, 7, 50), PreferenceLabel::kNoComparison, 3});
  save_preferences(prefs, dir / "p.ndjson");
  const auto back = load_preferences(dir / "p.ndjson", d);
  REQUIRE(back.size() == 2);
  CHECK(back.triples()[0].label == PreferenceLabel::kPreferSecond);
  CHECK(back.triples()[1].label == PreferenceLabel::kNoComparison);
  CHECK(back.triples()[1].seg0->id == SegmentId{1, 10});
  CHECK(back.triples()[0].round == 2);

  std::ofstream(dir / "bad.ndjson")
      << R"({"schema_version":1,"seg0":"e0:0","seg1":"e1:0","length":50,"label":"maybe","round":0})" << '\n';
  CHECK_THROWS_WITH_AS(load_preferences(dir / "bad.ndjson", d), doctest::Contains("label"), ParseError);
}

TEST_CASE("label conventions") {
  CHECK(label_to_p(PreferenceLabel::kPreferFirst) == 0);
  CHECK(label_to_p(PreferenceLabel::kPreferSecond) == 1);
  CHECK(!label_to_p(PreferenceLabel::kNoComparison));
  CHECK(parse_label("skip") == PreferenceLabel::kNoComparison);
  CHECK(SegmentId::parse("e12:34") == SegmentId{12, 34});
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2, 0) != derive_seed(1, 2, 1));
  CHECK(derive_seed(5, 6, 7) == derive_seed(5, 6, 7));
}
