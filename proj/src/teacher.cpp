#include "clarify/teacher.hpp"

#include <cmath>
#include <string>

namespace clarify {

void TeacherConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("skip rate must lie in (0, 1)");
  if (H < 1) throw std::invalid_argument("teacher H must be >= 1");
  if (!std::isfinite(r_avg)) throw std::invalid_argument("r_avg must be finite");
}

double TeacherConfig::threshold() const { return epsilon * H * std::abs(r_avg); }

PreferenceLabel scripted_label(const Segment& seg0, const Segment& seg1, const TeacherConfig& cfg) {
  if (seg0.length() != cfg.H || seg1.length() != cfg.H)
    throw std::invalid_argument("segment length differs from teacher H=" + std::to_string(cfg.H));
  const double gap = seg0.true_return - seg1.true_return;
  if (std::abs(gap) < cfg.threshold() || gap == 0.0) return PreferenceLabel::kNoComparison;
  return gap > 0.0 ? PreferenceLabel::kPreferFirst : PreferenceLabel::kPreferSecond;
}

PreferenceLabel perfect_label(const Segment& seg0, const Segment& seg1) {
  if (seg0.true_return == seg1.true_return) return PreferenceLabel::kNoComparison;
  return seg0.true_return > seg1.true_return ? PreferenceLabel::kPreferFirst
                                             : PreferenceLabel::kPreferSecond;
}

HumanLabelQueue::Ticket HumanLabelQueue::request(HumanQuery query) {
  if (!query.seg0 || !query.seg1) throw std::invalid_argument("human query needs two segments");
  std::lock_guard lock(mu_);
  const Ticket t = next_ticket_++;
  pending_.emplace(t, std::move(query));
  return t;
}

PreferenceTriple HumanLabelQueue::resolve(Ticket ticket, std::string_view answer) {
  const PreferenceLabel label = parse_label(answer);
  PreferenceTriple triple;
  {
    std::lock_guard lock(mu_);
    if (resolved_.count(ticket)) throw TicketError(TicketError::Kind::kClosed, "ticket closed");
    auto it = pending_.find(ticket);
    if (it == pending_.end()) throw TicketError(TicketError::Kind::kUnknown, "unknown ticket");
    triple.seg0 = it->second.seg0;
    triple.seg1 = it->second.seg1;
    triple.round = it->second.round;
    triple.label = label;
    pending_.erase(it);
    resolved_.emplace(ticket, triple);
    resolution_order_.push_back(ticket);
  }
  resolved_cv_.notify_all();
  return triple;
}

std::optional<std::pair<HumanLabelQueue::Ticket, HumanQuery>> HumanLabelQueue::front() const {
  std::lock_guard lock(mu_);
  if (pending_.empty()) return std::nullopt;
  return *pending_.begin();
}

std::vector<PreferenceTriple> HumanLabelQueue::history() const {
  std::lock_guard lock(mu_);
  std::vector<PreferenceTriple> out;
  out.reserve(resolution_order_.size());
  for (Ticket t : resolution_order_) out.push_back(resolved_.at(t));
  return out;
}

std::size_t HumanLabelQueue::num_resolved() const {
  std::lock_guard lock(mu_);
  return resolved_.size();
}

std::optional<std::vector<PreferenceTriple>> HumanLabelQueue::wait_for(
    const std::vector<Ticket>& tickets, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  const bool done = resolved_cv_.wait_for(lock, timeout, [&] {
    for (Ticket t : tickets)
      if (!resolved_.count(t)) return false;
    return true;
  });
  if (!done) return std::nullopt;
  std::vector<PreferenceTriple> out;
  out.reserve(tickets.size());
  for (Ticket t : tickets) out.push_back(resolved_.at(t));
  return out;
}

}  // namespace clarify
