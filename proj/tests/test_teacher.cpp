#include <atomic>
#include <thread>

#include "doctest.h"
#include "clarify/teacher.hpp"
#include "helpers.hpp"

using namespace clarify;
using clarify::test::valued_segment;

TEST_CASE("scripted teacher threshold") {
  // One-step segments, so the H * |r_avg| scale is carried by r_avg.
  const TeacherConfig cfg{0.5, 1, 50.0};
  CHECK(cfg.threshold() == doctest::Approx(25.0));
  CHECK(TeacherConfig{0.5, 50, 1.0}.threshold() == doctest::Approx(25.0));
  CHECK(scripted_label(*valued_segment(0, 100), *valued_segment(1, 130), cfg) == PreferenceLabel::kPreferSecond);
  CHECK(scripted_label(*valued_segment(0, 100), *valued_segment(1, 120), cfg) == PreferenceLabel::kNoComparison);
  CHECK(scripted_label(*valued_segment(0, 100), *valued_segment(1, 125), cfg) == PreferenceLabel::kPreferSecond);
  CHECK(scripted_label(*valued_segment(0, 130), *valued_segment(1, 100), cfg) == PreferenceLabel::kPreferFirst);
}

TEST_CASE("scripted teacher uses the magnitude of a negative average reward") {
  const TeacherConfig cfg{0.5, 1, -50.0};
  CHECK(scripted_label(*valued_segment(0, -100), *valued_segment(1, -120), cfg) == PreferenceLabel::kNoComparison);
}

TEST_CASE("teacher config validation") {
  CHECK_THROWS(TeacherConfig{0.0, 50, 1.0}.validate());
  CHECK_THROWS(TeacherConfig{1.0, 50, 1.0}.validate());
  CHECK_NOTHROW(TeacherConfig{0.5, 50, 1.0}.validate());
}

TEST_CASE("perfect teacher") {
  CHECK(perfect_label(*valued_segment(0, 1), *valued_segment(1, 2)) == PreferenceLabel::kPreferSecond);
  CHECK(perfect_label(*valued_segment(0, 2), *valued_segment(1, 1)) == PreferenceLabel::kPreferFirst);
  CHECK(perfect_label(*valued_segment(0, 1), *valued_segment(1, 1)) == PreferenceLabel::kNoComparison);
}

TEST_CASE("human queue maps answers and closes tickets") {
  HumanLabelQueue q;
  const auto a = q.request({valued_segment(0, 1), valued_segment(1, 2), 4});
  const auto b = q.request({valued_segment(2, 1), valued_segment(3, 2), 4});
  CHECK(q.front()->first == a);
  CHECK(q.resolve(a, "skip").label == PreferenceLabel::kNoComparison);
  const auto t = q.resolve(b, "first");
  CHECK(t.label == PreferenceLabel::kPreferFirst);
  CHECK(t.round == 4);
  CHECK_THROWS_WITH(q.resolve(a, "first"), "ticket closed");
  try {
    q.resolve(99, "first");
    FAIL("expected an unknown-ticket error");
  } catch (const TicketError& e) {
    CHECK(e.kind() == TicketError::Kind::kUnknown);
  }
  CHECK_THROWS_AS(q.resolve(a, "left"), std::invalid_argument);
  CHECK(!q.front());
  CHECK(q.history().size() == 2);
}

TEST_CASE("concurrent resolves of one ticket succeed exactly once") {
  HumanLabelQueue q;
  const auto ticket = q.request({valued_segment(0, 1), valued_segment(1, 2), 0});
  std::atomic<int> ok{0};
  std::atomic<int> closed{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&] {
      try {
        q.resolve(ticket, "second");
        ++ok;
      } catch (const TicketError&) {
        ++closed;
      }
    });
  for (auto& t : threads) t.join();
  CHECK(ok == 1);
  CHECK(closed == 7);
}

TEST_CASE("wait_for times out and then returns labels in ticket order") {
  HumanLabelQueue q;
  const auto a = q.request({valued_segment(0, 1), valued_segment(1, 2), 0});
  const auto b = q.request({valued_segment(2, 1), valued_segment(3, 2), 0});
  CHECK(!q.wait_for({a, b}, std::chrono::milliseconds(10)));
  std::thread labeler([&] {
    q.resolve(b, "second");
    q.resolve(a, "first");
  });
  const auto got = q.wait_for({a, b}, std::chrono::seconds(10));
  labeler.join();
  REQUIRE(got);
  CHECK((*got)[0].label == PreferenceLabel::kPreferFirst);
  CHECK((*got)[1].label == PreferenceLabel::kPreferSecond);
}
