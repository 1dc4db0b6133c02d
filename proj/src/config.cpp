#include "clarify/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace clarify {

namespace {

namespace pt = boost::property_tree;

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError(key + ": cannot parse '" + text + "'");
  return v;
}

struct Field {
  std::string key;  // section.name
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T>
Field number(std::string key, T ExperimentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt(c.*member);
            else return std::to_string(c.*member);
          },
          [member, key](ExperimentConfig& c, const std::string& s) { c.*member = parse_number<T>(key, s); }};
}

template <typename T>
Field nested(std::string key, std::function<T&(ExperimentConfig&)> ref) {
  return {key, [ref](const ExperimentConfig& c) {
            ExperimentConfig copy = c;
            const T v = ref(copy);
            if constexpr (std::is_floating_point_v<T>) return fmt(v);
            else return std::to_string(v);
          },
          [ref, key](ExperimentConfig& c, const std::string& s) { ref(c) = parse_number<T>(key, s); }};
}

template <typename E>
Field choice(std::string key, E ExperimentConfig::*member, std::vector<std::pair<E, std::string>> names) {
  return {key, [member, names](const ExperimentConfig& c) {
            for (const auto& [e, n] : names)
              if (e == c.*member) return n;
            return std::string();
          },
          [member, names, key](ExperimentConfig& c, const std::string& s) {
            for (const auto& [e, n] : names)
              if (n == s) {
                c.*member = e;
                return;
              }
            throw ConfigError(key + ": unknown value '" + s + "'");
          }};
}

Field optimizer(std::string prefix, OptimizerOptions ExperimentConfig::*member) {
  return {prefix + "optimizer",
          [member](const ExperimentConfig& c) {
            return std::string((c.*member).kind == OptimizerKind::kAdam ? "adam" : "gd");
          },
          [member, prefix](ExperimentConfig& c, const std::string& s) {
            if (s == "adam") (c.*member).kind = OptimizerKind::kAdam;
            else if (s == "gd") (c.*member).kind = OptimizerKind::kGradientDescent;
            else throw ConfigError(prefix + "optimizer: expected gd or adam, got '" + s + "'");
          }};
}

std::string format_quality(const std::vector<QualityMix::Component>& q) {
  std::string out;
  for (const auto& c : q) {
    if (!out.empty()) out += ',';
    out += fmt(c.noise) + ':' + fmt(c.fraction);
  }
  return out;
}

std::vector<QualityMix::Component> parse_quality(const std::string& text) {
  std::vector<QualityMix::Component> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("dataset.quality: expected noise:fraction, got '" + item + "'");
    out.push_back({parse_number<double>("dataset.quality", item.substr(0, colon)),
                   parse_number<double>("dataset.quality", item.substr(colon + 1))});
  }
  return out;
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back({"experiment.id", [](const C& c) { return c.experiment_id; },
                 [](C& c, const std::string& s) { c.experiment_id = s; }});
    v.push_back(number("experiment.seed", &C::seed));
    v.push_back({"env.kind", [](const C& c) { return c.env; }, [](C& c, const std::string& s) { c.env = s; }});
    v.push_back(nested<int>("env.size", [](C& c) -> int& { return c.grid.size; }));
    v.push_back(nested<int>("env.grid_goal_x", [](C& c) -> int& { return c.grid.goal_x; }));
    v.push_back(nested<int>("env.grid_goal_y", [](C& c) -> int& { return c.grid.goal_y; }));
    v.push_back(nested<double>("env.step_reward", [](C& c) -> double& { return c.grid.step_reward; }));
    v.push_back(nested<double>("env.goal_reward", [](C& c) -> double& { return c.grid.goal_reward; }));
    v.push_back(nested<double>("env.gamma", [](C& c) -> double& { return c.grid.gamma; }));
    v.push_back(nested<int>("env.grid_max_episode_len", [](C& c) -> int& { return c.grid.max_episode_len; }));
    v.push_back(nested<double>("env.point_goal_x", [](C& c) -> double& { return c.point.goal_x; }));
    v.push_back(nested<double>("env.point_goal_y", [](C& c) -> double& { return c.point.goal_y; }));
    v.push_back(nested<double>("env.point_goal_radius", [](C& c) -> double& { return c.point.goal_radius; }));
    v.push_back(nested<double>("env.point_max_speed", [](C& c) -> double& { return c.point.max_speed; }));
    v.push_back(nested<int>("env.point_max_episode_len", [](C& c) -> int& { return c.point.max_episode_len; }));
    v.push_back(number("dataset.n_episodes", &C::n_episodes));
    v.push_back({"dataset.quality", [](const C& c) { return format_quality(c.quality); },
                 [](C& c, const std::string& s) { c.quality = parse_quality(s); }});
    v.push_back(choice("teacher.mode", &C::teacher,
                       {{TeacherMode::kScripted, "scripted"}, {TeacherMode::kPerfect, "perfect"},
                        {TeacherMode::kHuman, "human"}}));
    v.push_back(number("teacher.epsilon", &C::epsilon));
    v.push_back(number("teacher.human_timeout_s", &C::human_timeout_s));
    v.push_back(number("query.H", &C::H));
    v.push_back(number("query.N_total", &C::N_total));
    v.push_back(number("query.M", &C::M));
    v.push_back(choice("query.selector", &C::selector,
                       {{Selector::kClarify, "clarify"}, {Selector::kRandom, "random"},
                        {Selector::kDisagreement, "disagreement"}}));
    v.push_back(number("query.pool_size", &C::pool_size));
    v.push_back(number("query.intermediate", &C::intermediate));
    v.push_back(number("query.n_bin", &C::n_bin));
    v.push_back(number("query.eps_d", &C::eps_d));
    v.push_back({"query.count_skips_toward_budget",
                 [](const C& c) { return std::string(c.count_skips_toward_budget ? "true" : "false"); },
                 [](C& c, const std::string& s) {
                   if (s != "true" && s != "false")
                     throw ConfigError("query.count_skips_toward_budget: expected true or false");
                   c.count_skips_toward_budget = s == "true";
                 }});
    v.push_back(number("query.heldout_pairs", &C::heldout_pairs));
    v.push_back(number("query.heldout_segments", &C::heldout_segments));
    v.push_back(number("embedding.d", &C::d));
    v.push_back(number("embedding.hidden", &C::emb_hidden));
    v.push_back(number("embedding.layers", &C::emb_layers));
    v.push_back(number("embedding.n_init", &C::n_init));
    v.push_back(number("embedding.n_emb", &C::n_emb));
    v.push_back(optimizer("embedding.", &C::emb_optimizer));
    v.push_back(nested<double>("embedding.lr", [](C& c) -> double& { return c.emb_optimizer.lr; }));
    v.push_back(nested<double>("embedding.lambda_amb", [](C& c) -> double& { return c.weights.lambda_amb; }));
    v.push_back(nested<double>("embedding.lambda_quad", [](C& c) -> double& { return c.weights.lambda_quad; }));
    v.push_back(nested<double>("embedding.lambda_norm", [](C& c) -> double& { return c.weights.lambda_norm; }));
    v.push_back(choice("embedding.metric", &C::metric,
                       {{DistanceMetric::kL2, "l2"}, {DistanceMetric::kSquaredL2, "squared_l2"}}));
    v.push_back(number("embedding.quad_batch", &C::quad_batch));
    v.push_back(number("embedding.pair_batch", &C::pair_batch));
    v.push_back(number("embedding.norm_batch", &C::norm_batch));
    v.push_back(number("embedding.recon_batch", &C::recon_batch));
    v.push_back(number("embedding.pool_segments", &C::pool_segments));
    v.push_back(number("reward.n_reward", &C::n_reward));
    v.push_back(number("reward.batch_size", &C::reward_batch));
    v.push_back(number("reward.members", &C::members));
    v.push_back(number("reward.hidden", &C::reward_hidden));
    v.push_back(number("reward.layers", &C::reward_layers));
    v.push_back(optimizer("reward.", &C::reward_optimizer));
    v.push_back(nested<double>("reward.lr", [](C& c) -> double& { return c.reward_optimizer.lr; }));
    return v;
  }();
  return f;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(env == "gridnav" || env == "pointmass", "env.kind must be gridnav or pointmass");
  require(n_episodes >= 1, "dataset.n_episodes must be >= 1");
  require(H >= 1, "query.H must be >= 1");
  require(N_total >= 1, "query.N_total must be >= 1");
  require(M >= 1, "query.M must be >= 1");
  require(M <= N_total, "query.M (" + std::to_string(M) + ") exceeds query.N_total (" + std::to_string(N_total) + ")");
  require(pool_size >= 1 && intermediate >= 1 && n_bin >= 1, "query pool sizes and n_bin must be >= 1");
  require(eps_d > 0, "query.eps_d must be > 0");
  require(heldout_pairs >= 1 && heldout_segments >= 2, "held-out sets must be non-empty");
  require(epsilon > 0 && epsilon < 1, "teacher.epsilon must be in (0, 1)");
  require(human_timeout_s > 0, "teacher.human_timeout_s must be > 0");
  require(d >= 1 && emb_hidden >= 1 && emb_layers >= 0, "embedding layout must be positive");
  require(n_init >= 0 && n_emb >= 0 && n_reward >= 0, "step counts must be >= 0");
  require(emb_optimizer.lr > 0 && reward_optimizer.lr > 0, "learning rates must be > 0");
  require(weights.lambda_amb >= 0 && weights.lambda_quad >= 0 && weights.lambda_norm >= 0,
          "loss weights must be >= 0");
  require(quad_batch >= 1 && recon_batch >= 1 && pair_batch >= 0 && norm_batch >= 0, "bad embedding batch sizes");
  require(pool_segments >= 1, "embedding.pool_segments must be >= 1");
  require(reward_batch >= 1 && reward_hidden >= 1 && reward_layers >= 0, "bad reward network settings");
  require(members >= 1, "reward.members must be >= 1");
  require(selector == Selector::kRandom || members >= 2, "query selection by disagreement needs >= 2 members");
  try {
    make_env();
    make_mix();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  const int len = env == "gridnav" ? grid.max_episode_len : point.max_episode_len;
  require(len >= H, "episodes are shorter than query.H");
}

Environment ExperimentConfig::make_env() const {
  if (env == "gridnav") return GridNavEnv(grid);
  if (env == "pointmass") return PointMassEnv(point);
  throw ConfigError("env.kind must be gridnav or pointmass");
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const int version = tree.get<int>("experiment.schema_version", -1);
  if (version != kSchemaVersion) throw ConfigError("config: unsupported experiment.schema_version");

  std::set<std::string> known{"experiment.schema_version"};
  ExperimentConfig c;
  for (const auto& f : fields()) {
    known.insert(f.key);
    if (const auto v = tree.get_optional<std::string>(f.key)) f.set(c, *v);
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' outside any section");
    for (const auto& [name, value] : body)
      if (!known.count(section + "." + name)) throw ConfigError("config: unknown key " + section + "." + name);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + s + "]\n";
      if (s == "experiment") out += "schema_version = " + std::to_string(kSchemaVersion) + "\n";
      section = s;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(config) + "\n";
  }
  return out;
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_config(config);
}

}  // namespace clarify
