#include "clarify/core.hpp"

#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace clarify {

using nlohmann::json;

std::string SegmentId::str() const {
  return "e" + std::to_string(episode) + ":" + std::to_string(start);
}

SegmentId SegmentId::parse(std::string_view text) {
  auto fail = [&] { return std::invalid_argument("bad segment id '" + std::string(text) + "'"); };
  if (text.size() < 4 || text.front() != 'e') throw fail();
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw fail();
  SegmentId id;
  auto parse_int = [&](std::string_view s, int& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw fail();
  };
  parse_int(text.substr(1, colon - 1), id.episode);
  parse_int(text.substr(colon + 1), id.start);
  return id;
}

Eigen::VectorXd Segment::pooled_features() const {
  Eigen::VectorXd out(states.cols() + actions.cols());
  out.head(states.cols()) = states.colwise().mean().transpose();
  out.tail(actions.cols()) = actions.colwise().mean().transpose();
  return out;
}

std::string_view label_name(PreferenceLabel label) {
  switch (label) {
    case PreferenceLabel::kPreferFirst: return "first";
    case PreferenceLabel::kPreferSecond: return "second";
    case PreferenceLabel::kNoComparison: return "skip";
  }
  return "skip";
}

PreferenceLabel parse_label(std::string_view text) {
  if (text == "first") return PreferenceLabel::kPreferFirst;
  if (text == "second") return PreferenceLabel::kPreferSecond;
  if (text == "skip") return PreferenceLabel::kNoComparison;
  throw std::invalid_argument("label must be one of first/second/skip, got '" +
                              std::string(text) + "'");
}

std::optional<int> label_to_p(PreferenceLabel label) {
  switch (label) {
    case PreferenceLabel::kPreferFirst: return 0;
    case PreferenceLabel::kPreferSecond: return 1;
    case PreferenceLabel::kNoComparison: return std::nullopt;
  }
  return std::nullopt;
}

const Segment& PreferenceTriple::preferred() const {
  if (!is_clear()) throw std::logic_error("no preferred segment in a skipped triple");
  return label == PreferenceLabel::kPreferFirst ? *seg0 : *seg1;
}

const Segment& PreferenceTriple::rejected() const {
  if (!is_clear()) throw std::logic_error("no rejected segment in a skipped triple");
  return label == PreferenceLabel::kPreferFirst ? *seg1 : *seg0;
}

OfflineDataset::OfflineDataset(std::vector<Episode> episodes) : episodes_(std::move(episodes)) {
  if (episodes_.empty()) throw std::invalid_argument("offline dataset needs at least one episode");
  for (const auto& ep : episodes_) {
    if (ep.states.rows() != ep.length() || ep.actions.rows() != ep.length())
      throw std::invalid_argument("episode states/actions/rewards length mismatch");
    if (ep.states.cols() != episodes_.front().states.cols() ||
        ep.actions.cols() != episodes_.front().actions.cols())
      throw std::invalid_argument("episodes disagree on state/action dimensions");
  }
  r_avg_ = recompute_r_avg();
}

double OfflineDataset::recompute_r_avg() const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& ep : episodes_) {
    total += ep.rewards.sum();
    n += ep.rewards.size();
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

int OfflineDataset::state_dim() const {
  return episodes_.empty() ? 0 : static_cast<int>(episodes_.front().states.cols());
}

int OfflineDataset::action_dim() const {
  return episodes_.empty() ? 0 : static_cast<int>(episodes_.front().actions.cols());
}

std::size_t OfflineDataset::num_transitions() const {
  std::size_t n = 0;
  for (const auto& ep : episodes_) n += ep.rewards.size();
  return n;
}

void PreferenceDataset::add(PreferenceTriple triple) {
  if (!triple.seg0 || !triple.seg1) throw std::invalid_argument("triple with null segment");
  if (triple.seg0->id == triple.seg1->id)
    throw std::invalid_argument("triple compares segment " + triple.seg0->id.str() + " with itself");
  if (triple.round < 0) throw std::invalid_argument("triple round must be >= 0");
  triples_.push_back(std::move(triple));
}

std::vector<const PreferenceTriple*> PreferenceDataset::clear() const {
  std::vector<const PreferenceTriple*> out;
  for (const auto& t : triples_)
    if (t.is_clear()) out.push_back(&t);
  return out;
}

std::vector<const PreferenceTriple*> PreferenceDataset::ambiguous() const {
  std::vector<const PreferenceTriple*> out;
  for (const auto& t : triples_)
    if (!t.is_clear()) out.push_back(&t);
  return out;
}

std::size_t PreferenceDataset::num_clear() const {
  return static_cast<std::size_t>(
      std::count_if(triples_.begin(), triples_.end(), [](const auto& t) { return t.is_clear(); }));
}

bool PreferenceDataset::contains_pair(const SegmentId& a, const SegmentId& b) const {
  return std::any_of(triples_.begin(), triples_.end(), [&](const auto& t) {
    return (t.seg0->id == a && t.seg1->id == b) || (t.seg0->id == b && t.seg1->id == a);
  });
}

SegmentPtr make_segment(const OfflineDataset& dataset, int episode, int start, int H) {
  if (episode < 0 || episode >= static_cast<int>(dataset.episodes().size()))
    throw std::out_of_range("episode index out of range");
  const auto& ep = dataset.episodes()[episode];
  if (H < 1 || start < 0 || start + H > ep.length())
    throw std::out_of_range("window does not fit inside episode " + std::to_string(episode));
  auto seg = std::make_shared<Segment>();
  seg->id = {episode, start};
  seg->states = ep.states.middleRows(start, H);
  seg->actions = ep.actions.middleRows(start, H);
  seg->true_return = ep.rewards.segment(start, H).sum();
  seg->source_episode = episode;
  return seg;
}

std::vector<SegmentPtr> sample_segments(const OfflineDataset& dataset, int H, int count,
                                        std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_segments: count must be >= 1");
  if (H < 1) throw std::invalid_argument("sample_segments: H must be >= 1");
  // Cumulative window counts over eligible episodes.
  std::vector<int> episode_index;
  std::vector<std::int64_t> cumulative;
  std::int64_t total = 0;
  for (int e = 0; e < static_cast<int>(dataset.episodes().size()); ++e) {
    const int len = dataset.episodes()[e].length();
    if (len < H) continue;
    total += len - H + 1;
    episode_index.push_back(e);
    cumulative.push_back(total);
  }
  if (total == 0) throw std::invalid_argument("no eligible episodes");

  Rng rng(seed);
  std::uniform_int_distribution<std::int64_t> pick(0, total - 1);
  std::vector<SegmentPtr> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const std::int64_t w = pick(rng);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), w);
    const auto k = static_cast<std::size_t>(it - cumulative.begin());
    const std::int64_t before = k == 0 ? 0 : cumulative[k - 1];
    out.push_back(make_segment(dataset, episode_index[k], static_cast<int>(w - before), H));
  }
  return out;
}

double segment_return(const Segment& segment, const RewardFn& reward) {
  double total = 0.0;
  for (int t = 0; t < segment.length(); ++t)
    total += reward(segment.states.row(t).transpose(), segment.actions.row(t).transpose());
  return total;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag_a, std::uint64_t tag_b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ tag_a) ^ (tag_b * 0x632be59bd9b4e019ULL));
}

// ---------------------------------------------------------------------------
// NDJSON files

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd json_to_matrix(const json& rows, std::string_view field) {
  if (!rows.is_array()) throw std::invalid_argument(std::string(field) + " must be an array");
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  const auto cols = rows.front().size();
  Eigen::MatrixXd m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r].is_array() || rows[r].size() != cols)
      throw std::invalid_argument(std::string(field) + " rows are ragged");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json record = json::parse(line);
      if (record.value("schema_version", -1) != kSchemaVersion)
        throw std::invalid_argument("unsupported schema_version");
      fn(record);
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ": record " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

void save_dataset(const OfflineDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& ep : dataset.episodes()) {
    json record;
    record["schema_version"] = kSchemaVersion;
    record["states"] = matrix_to_json(ep.states);
    record["actions"] = matrix_to_json(ep.actions);
    record["rewards_hidden"] = std::vector<double>(ep.rewards.data(), ep.rewards.data() + ep.rewards.size());
    out << record.dump() << '\n';
  }
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  std::vector<Episode> episodes;
  for_each_record(path, [&](const json& record) {
    Episode ep;
    ep.states = json_to_matrix(record.at("states"), "states");
    ep.actions = json_to_matrix(record.at("actions"), "actions");
    const auto rewards = record.at("rewards_hidden").get<std::vector<double>>();
    ep.rewards = Eigen::Map<const Eigen::VectorXd>(rewards.data(), rewards.size());
    if (ep.states.rows() != ep.length() || ep.actions.rows() != ep.length())
      throw std::invalid_argument("states/actions/rewards_hidden lengths differ");
    episodes.push_back(std::move(ep));
  });
  if (episodes.empty()) throw ParseError(path.string() + ": no episode records");
  return OfflineDataset(std::move(episodes));
}

void save_preferences(const PreferenceDataset& prefs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : prefs.triples()) {
    json record;
    record["schema_version"] = kSchemaVersion;
    record["seg0"] = t.seg0->id.str();
    record["seg1"] = t.seg1->id.str();
    record["length"] = t.seg0->length();
    record["label"] = label_name(t.label);
    record["round"] = t.round;
    out << record.dump() << '\n';
  }
}

PreferenceDataset load_preferences(const std::filesystem::path& path,
                                   const OfflineDataset& dataset) {
  PreferenceDataset prefs;
  for_each_record(path, [&](const json& record) {
    const int H = record.at("length").get<int>();
    const auto id0 = SegmentId::parse(record.at("seg0").get<std::string>());
    const auto id1 = SegmentId::parse(record.at("seg1").get<std::string>());
    PreferenceTriple t;
    t.seg0 = make_segment(dataset, id0.episode, id0.start, H);
    t.seg1 = make_segment(dataset, id1.episode, id1.start, H);
    t.label = parse_label(record.at("label").get<std::string>());
    t.round = record.at("round").get<int>();
    prefs.add(std::move(t));
  });
  return prefs;
}

}  // namespace clarify
