// Preference label sources: the scripted skip-rate teacher, the perfect
// teacher, and the ticket queue that hands queries to a human.
#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "clarify/core.hpp"

namespace clarify {

struct TeacherConfig {
  double epsilon = 0.5;  // skip rate, in (0, 1)
  int H = 50;
  double r_avg = 1.0;

  void validate() const;
  // |r_avg| keeps the threshold meaningful on negative-reward environments.
  double threshold() const;
};

// Skips (NO_COMP) when the true-return gap is strictly below eps * H * |r_avg|;
// otherwise the higher-return segment is preferred.
PreferenceLabel scripted_label(const Segment& seg0, const Segment& seg1, const TeacherConfig& cfg);

// Higher return wins; an exact tie is NO_COMP.
PreferenceLabel perfect_label(const Segment& seg0, const Segment& seg1);

class TicketError : public std::runtime_error {
 public:
  enum class Kind { kUnknown, kClosed };
  TicketError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct HumanQuery {
  SegmentPtr seg0;
  SegmentPtr seg1;
  int round = 0;
};

// Single-session table of outstanding human queries. All members are safe to
// call from several threads; each ticket resolves exactly once.
class HumanLabelQueue {
 public:
  using Ticket = std::uint64_t;

  Ticket request(HumanQuery query);
  // answer is "first", "second" or "skip".
  PreferenceTriple resolve(Ticket ticket, std::string_view answer);

  // Oldest unresolved ticket, if any.
  std::optional<std::pair<Ticket, HumanQuery>> front() const;
  std::vector<PreferenceTriple> history() const;
  std::size_t num_resolved() const;

  // Blocks until every ticket in `tickets` is resolved. Returns the triples
  // in ticket order, or nullopt on timeout.
  std::optional<std::vector<PreferenceTriple>> wait_for(const std::vector<Ticket>& tickets,
                                                        std::chrono::milliseconds timeout);

 private:
  mutable std::mutex mu_;
  std::condition_variable resolved_cv_;
  Ticket next_ticket_ = 1;
  std::map<Ticket, HumanQuery> pending_;
  std::map<Ticket, PreferenceTriple> resolved_;
  std::vector<Ticket> resolution_order_;
};

}  // namespace clarify
