#include "clarify/service.hpp"

#include "httplib.h"
#include "json.hpp"

namespace clarify {

using nlohmann::json;

namespace {

json point(const Eigen::Vector2d& p) { return json::array({p.x(), p.y()}); }

json segment_json(const Environment& env, const Segment& segment) {
  json points = json::array();
  Eigen::Vector2d goal;
  if (const auto* grid = std::get_if<GridNavEnv>(&env)) {
    for (Eigen::Index t = 0; t < segment.states.rows(); ++t)
      points.push_back(point(grid->position(segment.states.row(t).transpose())));
    goal = {grid->params().goal_x, grid->params().goal_y};
  } else {
    for (Eigen::Index t = 0; t < segment.states.rows(); ++t)
      points.push_back(point(segment.states.row(t).head<2>().transpose()));
    goal = std::get<PointMassEnv>(env).goal();
  }
  json j;
  j["id"] = segment.id.str();
  j["start"] = points.empty() ? json(nullptr) : points.front();
  j["points"] = std::move(points);
  j["goal"] = point(goal);
  return j;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, json{{"error", message}});
}

}  // namespace

LabelService::LabelService(ExperimentSession& session, Environment env)
    : session_(session), env_(std::move(env)), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;

  srv.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200,
          json{{"round", session_.round()},
               {"labels_done", session_.labels_done()},
               {"labels_needed", session_.labels_needed()},
               {"experiment_id", session_.experiment_id()}});
  });

  srv.Get("/api/query", [this](const httplib::Request&, httplib::Response& res) {
    const auto pending = session_.queue().front();
    if (!pending) {
      res.status = 204;
      return;
    }
    const auto& [ticket, query] = *pending;
    reply(res, 200,
          json{{"ticket_id", ticket},
               {"round", query.round},
               {"seg0", segment_json(env_, *query.seg0)},
               {"seg1", segment_json(env_, *query.seg1)}});
  });

  srv.Post("/api/label", [this](const httplib::Request& req, httplib::Response& res) {
    HumanLabelQueue::Ticket ticket = 0;
    std::string answer;
    try {
      const json body = json::parse(req.body);
      ticket = body.at("ticket_id").get<HumanLabelQueue::Ticket>();
      answer = body.at("answer").get<std::string>();
      parse_label(answer);
    } catch (const std::exception& e) {
      fail(res, 400, std::string("bad request: ") + e.what());
      return;
    }
    try {
      const PreferenceTriple triple = session_.queue().resolve(ticket, answer);
      session_.add_labels(1);
      reply(res, 200, json{{"ticket_id", ticket}, {"label", label_name(triple.label)}});
    } catch (const TicketError& e) {
      fail(res, e.kind() == TicketError::Kind::kUnknown ? 404 : 409, e.what());
    }
  });

  srv.Get("/api/history", [this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& t : session_.queue().history())
      out.push_back({{"seg0", t.seg0->id.str()},
                     {"seg1", t.seg1->id.str()},
                     {"label", label_name(t.label)},
                     {"round", t.round}});
    reply(res, 200, out);
  });
}

LabelService::~LabelService() { stop(); }

void LabelService::set_static_dir(const std::filesystem::path& dir) {
  if (!server_->set_mount_point("/", dir.string()))
    throw std::invalid_argument("static directory not found: " + dir.string());
}

int LabelService::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool LabelService::listen() { return server_->listen_after_bind(); }

void LabelService::stop() {
  if (server_) server_->stop();
}

void LabelService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace clarify
