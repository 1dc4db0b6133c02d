#include <atomic>
#include <thread>

#include "doctest.h"
// Eigen before httplib: <resolv.h> defines a _res macro that breaks Eigen.
#include "clarify/service.hpp"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"

using namespace clarify;
using json = nlohmann::json;

namespace {

// A service on a free local port with two pending GridNav queries.
struct Fixture {
  GridNavEnv env;
  ExperimentSession session{"svc", 5};
  LabelService service{session, env};
  std::thread thread;
  int port = -1;
  std::vector<HumanLabelQueue::Ticket> tickets;

  Fixture() {
    port = service.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    thread = std::thread([this] { service.listen(); });
    service.wait_until_ready();
  }
  ~Fixture() {
    service.stop();
    thread.join();
  }

  SegmentPtr grid_segment(int index, std::vector<int> cells) {
    auto s = std::make_shared<Segment>();
    s->id = {index, 2};
    s->states.resize(static_cast<Eigen::Index>(cells.size()), env.state_dim());
    s->actions = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cells.size()), env.action_dim());
    for (std::size_t t = 0; t < cells.size(); ++t)
      s->states.row(static_cast<Eigen::Index>(t)) = env.encode_state(cells[t]).transpose();
    return s;
  }

  void enqueue() {
    tickets.push_back(session.queue().request({grid_segment(0, {0, 1, 7}), grid_segment(1, {35, 34}), 3}));
    tickets.push_back(session.queue().request({grid_segment(2, {5}), grid_segment(3, {6}), 3}));
  }

  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }

  httplib::Result label(HumanLabelQueue::Ticket t, const std::string& answer) const {
    return client().Post("/api/label", json{{"ticket_id", t}, {"answer", answer}}.dump(), "application/json");
  }
};

}  // namespace

TEST_CASE("status reports session progress") {
  Fixture f;
  f.session.set_round(2);
  f.session.add_labels(1);
  auto res = f.client().Get("/api/status");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto j = json::parse(res->body);
  CHECK(j.at("round") == 2);
  CHECK(j.at("labels_done") == 1);
  CHECK(j.at("labels_needed") == 5);
  CHECK(j.at("experiment_id") == "svc");
}

TEST_CASE("query is 204 when idle and idempotent while pending") {
  Fixture f;
  auto idle = f.client().Get("/api/query");
  REQUIRE(idle);
  CHECK(idle->status == 204);

  f.enqueue();
  auto a = f.client().Get("/api/query");
  auto b = f.client().Get("/api/query");
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a->status == 200);
  const auto ja = json::parse(a->body);
  CHECK(ja.at("ticket_id") == f.tickets[0]);
  CHECK(json::parse(b->body).at("ticket_id") == f.tickets[0]);
  CHECK(ja.at("round") == 3);
  const auto& seg0 = ja.at("seg0");
  CHECK(seg0.at("id") == "e0:2");
  CHECK(seg0.at("start") == json::parse("[0,0]"));
  // Cells 0, 1, 7 on a 6x6 grid are (0,0), (1,0), (1,1).
  CHECK(seg0.at("points") == json::parse("[[0,0],[1,0],[1,1]]"));
  CHECK(seg0.at("goal") == json::parse("[5,5]"));
}

TEST_CASE("labels resolve tickets and advance the queue") {
  Fixture f;
  f.enqueue();
  auto r = f.label(f.tickets[0], "skip");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body).at("label") == "skip");
  CHECK(f.session.labels_done() == 1);
  CHECK(json::parse(f.client().Get("/api/query")->body).at("ticket_id") == f.tickets[1]);
  CHECK(f.label(f.tickets[1], "second")->status == 200);
  CHECK(f.client().Get("/api/query")->status == 204);

  const auto hist = json::parse(f.client().Get("/api/history")->body);
  REQUIRE(hist.size() == 2);
  CHECK(hist[0].at("label") == "skip");
  CHECK(hist[0].at("seg0") == "e0:2");
  CHECK(hist[1].at("label") == "second");
  CHECK(hist[1].at("round") == 3);
  const auto triples = f.session.queue().history();
  CHECK(triples[0].label == PreferenceLabel::kNoComparison);
  CHECK(triples[1].label == PreferenceLabel::kPreferSecond);
}

TEST_CASE("label errors map to status codes") {
  Fixture f;
  f.enqueue();
  CHECK(f.label(f.tickets[0], "first")->status == 200);
  CHECK(f.label(f.tickets[0], "second")->status == 409);
  CHECK(f.label(999, "first")->status == 404);
  CHECK(f.label(f.tickets[1], "maybe")->status == 400);
  auto bad = f.client().Post("/api/label", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body).contains("error"));
  auto missing = f.client().Post("/api/label", R"({"answer": "first"})", "application/json");
  CHECK(missing->status == 400);
  CHECK(f.session.labels_done() == 1);
}

TEST_CASE("concurrent labels for one ticket resolve once") {
  Fixture f;
  f.enqueue();
  std::atomic<int> ok{0};
  std::atomic<int> conflict{0};
  std::vector<std::thread> posters;
  for (int i = 0; i < 8; ++i)
    posters.emplace_back([&, i] {
      auto r = f.label(f.tickets[0], i % 2 ? "first" : "second");
      if (r && r->status == 200) ++ok;
      if (r && r->status == 409) ++conflict;
    });
  for (auto& t : posters) t.join();
  CHECK(ok == 1);
  CHECK(conflict == 7);
  CHECK(f.session.labels_done() == 1);
}
