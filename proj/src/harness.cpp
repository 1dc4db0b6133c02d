#include "clarify/harness.hpp"

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>

#include "clarify/selection.hpp"
#include "json.hpp"

namespace clarify {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
  kTagData = 1,
  kTagHeldoutPairs,
  kTagHeldoutSegments,
  kTagPool,
  kTagEmbedding,
  kTagReward,
  kTagQueries,
  kTagEmbeddingTrain,
  kTagRewardTrain,
};

json metrics_json(const MetricsRecord& m) {
  json j;
  j["round"] = m.round;
  j["clarity_ratio"] = m.clarity_ratio;
  j["pref_accuracy"] = m.pref_accuracy;
  j["spearman"] = m.spearman;
  j["normalized_return"] = m.normalized_return ? json(*m.normalized_return) : json(nullptr);
  return j;
}

MetricsRecord metrics_from_json(const json& j) {
  MetricsRecord m;
  m.round = j.at("round").get<int>();
  m.clarity_ratio = j.at("clarity_ratio").get<double>();
  m.pref_accuracy = j.at("pref_accuracy").get<double>();
  m.spearman = j.at("spearman").get<double>();
  if (!j.at("normalized_return").is_null()) m.normalized_return = j.at("normalized_return").get<double>();
  return m;
}

json round_json(const RoundLog& r) {
  json j = metrics_json(r.metrics);
  j["schema_version"] = kSchemaVersion;
  j["queries"] = r.queries;
  j["labels"] = {{"first", r.prefer_first}, {"second", r.prefer_second}, {"skip", r.skipped}};
  j["selection"] = {{"pool", r.pool}, {"accepted", r.accepted}, {"topped_up", r.topped_up},
                    {"density_fallback", r.density_fallback}};
  j["density_file"] = r.density_file;
  j["embedding_file"] = r.embedding_file;
  json trace = json::array();
  for (const auto& t : r.embedding_trace)
    trace.push_back({{"step", t.step}, {"total", t.total}, {"amb", t.amb}, {"quad", t.quad}, {"norm", t.norm},
                     {"recon", t.recon}});
  j["embedding_trace"] = std::move(trace);
  j["reward_loss"] = r.reward_loss;
  return j;
}

RoundLog round_from_json(const json& j) {
  RoundLog r;
  r.metrics = metrics_from_json(j);
  r.round = r.metrics.round;
  r.clarity_ratio = r.metrics.clarity_ratio;
  r.queries = j.at("queries").get<int>();
  r.prefer_first = j.at("labels").at("first").get<int>();
  r.prefer_second = j.at("labels").at("second").get<int>();
  r.skipped = j.at("labels").at("skip").get<int>();
  r.pool = j.at("selection").at("pool").get<int>();
  r.accepted = j.at("selection").at("accepted").get<int>();
  r.topped_up = j.at("selection").at("topped_up").get<int>();
  r.density_fallback = j.at("selection").at("density_fallback").get<bool>();
  r.density_file = j.at("density_file").get<std::string>();
  r.embedding_file = j.at("embedding_file").get<std::string>();
  for (const auto& t : j.at("embedding_trace"))
    r.embedding_trace.push_back({t.at("step").get<int>(), t.at("total").get<double>(), t.at("amb").get<double>(),
                                 t.at("quad").get<double>(), t.at("norm").get<double>(), t.at("recon").get<double>()});
  r.reward_loss = j.at("reward_loss").get<double>();
  return r;
}

// Reads at most `limit` records; anything after them is not parsed.
std::vector<RoundLog> read_rounds(const fs::path& metrics, std::size_t limit = SIZE_MAX) {
  std::vector<RoundLog> rounds;
  std::ifstream in(metrics);
  std::string line;
  int line_no = 0;
  while (rounds.size() < limit && std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rounds.push_back(round_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(metrics.string() + ": record " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rounds;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void save_ensemble(const RewardEnsemble& ensemble, const fs::path& path) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["members"] = json::array();
  for (int k = 0; k < ensemble.size(); ++k) {
    const auto& p = ensemble.params(k);
    j["members"].push_back(std::vector<double>(p.data(), p.data() + p.size()));
  }
  write_text(path, j.dump() + "\n");
}

void load_ensemble(RewardEnsemble& ensemble, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const json j = json::parse(in);
  const auto& members = j.at("members");
  if (static_cast<int>(members.size()) != ensemble.size())
    throw ParseError(path.string() + ": ensemble size does not match the config");
  for (int k = 0; k < ensemble.size(); ++k) {
    const auto v = members[static_cast<std::size_t>(k)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != ensemble.params(k).size())
      throw ParseError(path.string() + ": reward network layout does not match the config");
    ensemble.params(k) = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
}

PreferenceLabel label_pair(const ExperimentConfig& config, const TeacherConfig& teacher, const Segment& a,
                           const Segment& b) {
  return config.teacher == TeacherMode::kPerfect ? perfect_label(a, b) : scripted_label(a, b, teacher);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (config.teacher == TeacherMode::kHuman && !options.session)
    throw std::invalid_argument("human teacher mode needs a labeling session");
  if (options.out_dir.empty()) throw std::invalid_argument("artifacts directory not set");
  const fs::path out = options.out_dir;
  fs::create_directories(out / "densities");
  fs::create_directories(out / "embeddings");
  fs::create_directories(out / "state");
  const fs::path metrics_path = out / "metrics.jsonl";
  const fs::path progress_path = out / "state" / "progress.json";
  auto log = [&](const std::string& msg) {
    if (!options.quiet) std::cerr << "[" << config.experiment_id << "] " << msg << '\n';
  };

  const std::uint64_t seed = config.seed;
  const Environment env = config.make_env();
  const OfflineDataset dataset =
      generate_offline_dataset(env, config.make_mix(), config.n_episodes, derive_seed(seed, kTagData));
  TeacherConfig teacher{config.epsilon, config.H, dataset.r_avg()};
  teacher.validate();

  // Evaluation material, never shown to the learner.
  std::vector<PreferenceTriple> heldout;
  {
    const auto segs = sample_segments(dataset, config.H, 2 * config.heldout_pairs, derive_seed(seed, kTagHeldoutPairs));
    for (int i = 0; i < config.heldout_pairs; ++i) {
      const auto& a = segs[2 * static_cast<std::size_t>(i)];
      const auto& b = segs[2 * static_cast<std::size_t>(i) + 1];
      if (a->id == b->id) continue;
      heldout.push_back({a, b, label_pair(config, teacher, *a, *b), 0});
    }
  }
  const auto heldout_segments =
      sample_segments(dataset, config.H, config.heldout_segments, derive_seed(seed, kTagHeldoutSegments));
  const auto pool = sample_segments(dataset, config.H, config.pool_segments, derive_seed(seed, kTagPool));

  EmbeddingModel model = EmbeddingModel::encoder(config.d, dataset.state_dim(), dataset.action_dim(),
                                                 derive_seed(seed, kTagEmbedding), config.emb_hidden,
                                                 config.emb_layers);
  RewardEnsemble ensemble(dataset.state_dim(), dataset.action_dim(), config.members, derive_seed(seed, kTagReward),
                          {config.reward_hidden, config.reward_layers});
  PreferenceDataset prefs;
  ExperimentResult result;
  result.heldout_clarity = clarity_ratio(heldout);

  int next_round = 0;
  if (options.resume && fs::exists(progress_path)) {
    std::ifstream in(progress_path);
    const json progress = json::parse(in);
    next_round = progress.at("next_round").get<int>();
    result.labels_spent = progress.at("labels_spent").get<int>();
    prefs = load_preferences(out / "state" / "prefs.ndjson", dataset);
    model = EmbeddingModel::load(out / "state" / "embedding.json");
    load_ensemble(ensemble, out / "state" / "reward.json");
    result.rounds = read_rounds(metrics_path, static_cast<std::size_t>(next_round));
    // Drop any partially written round.
    std::string text;
    for (const auto& r : result.rounds) text += round_json(r).dump() + "\n";
    write_text(metrics_path, text);
    log("resuming at round " + std::to_string(next_round));
  } else {
    write_text(metrics_path, "");
  }
  save_config(config, out / "config.ini");
  result.clear_labels = static_cast<int>(prefs.num_clear());

  auto budget_left = [&] {
    const int spent = config.count_skips_toward_budget ? result.labels_spent : result.clear_labels;
    return config.N_total - spent;
  };
  const int max_rounds = 10 * ((config.N_total + config.M - 1) / config.M) + 10;

  if (options.session) {
    options.session->set_labels(result.labels_spent);
    options.session->set_round(next_round);
  }

  for (int round = next_round; budget_left() > 0; ++round) {
    if (round >= max_rounds) {
      log("stopping: round limit reached before the clear-label budget was spent");
      break;
    }
    if (options.session) options.session->set_round(round);
    const int n = std::min(config.M, budget_left());
    const std::uint64_t round_seed = derive_seed(seed, kTagQueries, static_cast<std::uint64_t>(round));
    RoundLog rl;
    rl.round = round;

    std::vector<Candidate> queries;
    if (round == 0 || config.selector == Selector::kRandom) {
      auto cands = sample_candidates(dataset, prefs, config.H, std::max(config.pool_size, n), round_seed);
      if (cands.empty()) throw std::invalid_argument("no fresh candidates");
      rl.pool = static_cast<int>(cands.size());
      cands.resize(std::min<std::size_t>(cands.size(), static_cast<std::size_t>(n)));
      queries = std::move(cands);
    } else {
      DensityModel density = DensityModel::uniform(config.n_bin);
      SelectionOptions sel{n, config.pool_size, config.intermediate, config.metric};
      if (config.selector == Selector::kDisagreement) {
        sel.intermediate = config.pool_size;
        rl.density_fallback = true;
      } else if (prefs.num_clear() > 0 && prefs.num_ambiguous() > 0) {
        density = estimate_densities(prefs, model, config.metric, config.n_bin, config.eps_d);
      } else {
        rl.density_fallback = true;
      }
      rl.density_file = "densities/round_" + std::to_string(round) + ".csv";
      density.write_csv(out / rl.density_file);
      auto sel_result = select_queries(dataset, prefs, model, ensemble, density, config.H, sel, round_seed);
      rl.pool = sel_result.pool;
      rl.accepted = sel_result.accepted;
      rl.topped_up = sel_result.topped_up;
      if (rl.topped_up > 0)
        log("rejection sampling accepted " + std::to_string(rl.accepted) + " of " + std::to_string(rl.pool) +
            " candidates; filled " + std::to_string(rl.topped_up) + " from the highest-density bins");
      queries = std::move(sel_result.queries);
    }

    std::vector<PreferenceTriple> issued;
    if (config.teacher == TeacherMode::kHuman) {
      auto& queue = options.session->queue();
      std::vector<HumanLabelQueue::Ticket> tickets;
      for (const auto& q : queries) tickets.push_back(queue.request({q.seg0, q.seg1, round}));
      log("waiting for " + std::to_string(tickets.size()) + " human labels");
      const auto labeled = queue.wait_for(
          tickets, std::chrono::milliseconds(static_cast<long long>(config.human_timeout_s * 1000.0)));
      if (!labeled) throw std::runtime_error("timed out waiting for human labels");
      issued = *labeled;
    } else {
      for (const auto& q : queries) issued.push_back({q.seg0, q.seg1, label_pair(config, teacher, *q.seg0, *q.seg1), round});
    }
    for (const auto& t : issued) {
      prefs.add(t);
      rl.prefer_first += t.label == PreferenceLabel::kPreferFirst;
      rl.prefer_second += t.label == PreferenceLabel::kPreferSecond;
      rl.skipped += t.label == PreferenceLabel::kNoComparison;
    }
    rl.queries = static_cast<int>(issued.size());
    rl.clarity_ratio = clarity_ratio(issued);
    result.labels_spent += rl.queries;
    result.clear_labels += rl.prefer_first + rl.prefer_second;
    if (options.session && config.teacher != TeacherMode::kHuman) options.session->set_labels(result.labels_spent);

    TrainOptions emb;
    emb.steps = round == 0 ? config.n_init : config.n_emb;
    emb.optimizer = config.emb_optimizer;
    emb.weights = config.weights;
    emb.metric = config.metric;
    emb.quad_batch = config.quad_batch;
    emb.pair_batch = config.pair_batch;
    emb.norm_batch = config.norm_batch;
    emb.recon_batch = config.recon_batch;
    emb.seed = derive_seed(seed, kTagEmbeddingTrain, static_cast<std::uint64_t>(round));
    rl.embedding_trace = train_embedding(model, pool, prefs, emb).trace;

    if (prefs.num_clear() > 0) {
      RewardTrainOptions rw;
      rw.updates = config.n_reward;
      rw.batch_size = config.reward_batch;
      rw.optimizer = config.reward_optimizer;
      rw.seed = derive_seed(seed, kTagRewardTrain, static_cast<std::uint64_t>(round));
      const auto traces = train_reward(ensemble, prefs, rw);
      double last = 0.0;
      for (const auto& t : traces) last += t.empty() ? 0.0 : t.back();
      rl.reward_loss = last / static_cast<double>(traces.size());
    }

    rl.metrics = evaluate_reward(ensemble, dataset, env, issued, heldout, heldout_segments, round);
    rl.embedding_file = "embeddings/round_" + std::to_string(round) + ".csv";
    export_embeddings(model, heldout_segments, out / rl.embedding_file);

    save_preferences(prefs, out / "state" / "prefs.ndjson");
    save_checkpoint(out / "state" / "embedding.json", model, heldout_segments);
    save_ensemble(ensemble, out / "state" / "reward.json");
    {
      std::ofstream m(metrics_path, std::ios::app);
      m << round_json(rl).dump() << '\n';
    }
    write_text(progress_path, json({{"next_round", round + 1}, {"labels_spent", result.labels_spent}}).dump() + "\n");
    std::ostringstream msg;
    msg << "round " << round << ": " << rl.queries << " queries, clarity " << rl.clarity_ratio << ", spearman "
        << rl.metrics.spearman;
    if (rl.metrics.normalized_return) msg << ", normalized return " << *rl.metrics.normalized_return;
    log(msg.str());
    result.rounds.push_back(std::move(rl));
  }

  int selected = 0;
  int selected_clear = 0;
  for (const auto& r : result.rounds) {
    if (r.round == 0) continue;
    selected += r.queries;
    selected_clear += r.prefer_first + r.prefer_second;
  }
  result.selected_clarity = selected > 0 ? static_cast<double>(selected_clear) / selected : 0.0;
  if (!result.rounds.empty()) result.final_metrics = result.rounds.back().metrics;

  json final_json = metrics_json(result.final_metrics);
  final_json["schema_version"] = kSchemaVersion;
  final_json["experiment_id"] = config.experiment_id;
  final_json["seed"] = config.seed;
  final_json["labels_spent"] = result.labels_spent;
  final_json["clear_labels"] = result.clear_labels;
  final_json["heldout_clarity"] = result.heldout_clarity;
  final_json["selected_clarity"] = result.selected_clarity;
  write_text(out / "final_metrics.json", final_json.dump(2) + "\n");
  return result;
}

void write_report(const fs::path& dir, const fs::path& csv) {
  const fs::path metrics = dir / "metrics.jsonl";
  if (!fs::exists(metrics)) throw std::runtime_error("no metrics.jsonl in " + dir.string());
  const auto rounds = read_rounds(metrics);
  std::ofstream out(csv);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  out << "round,queries,prefer_first,prefer_second,skipped,clarity_ratio,pref_accuracy,spearman,normalized_return,"
         "pool,accepted,topped_up,density_fallback,reward_loss\n";
  out.precision(17);
  for (const auto& r : rounds) {
    out << r.round << ',' << r.queries << ',' << r.prefer_first << ',' << r.prefer_second << ',' << r.skipped << ','
        << r.clarity_ratio << ',' << r.metrics.pref_accuracy << ',' << r.metrics.spearman << ',';
    if (r.metrics.normalized_return) out << *r.metrics.normalized_return;
    out << ',' << r.pool << ',' << r.accepted << ',' << r.topped_up << ',' << (r.density_fallback ? 1 : 0) << ','
        << r.reward_loss << '\n';
  }
}

}  // namespace clarify
