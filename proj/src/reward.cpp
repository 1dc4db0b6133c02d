#include "clarify/reward.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "clarify/stats.hpp"

namespace clarify {

namespace {

// Distinct (state||action) rows across a set of segments. GridNav has only
// S x A distinct rows, so networks run once per row instead of once per step.
struct CompressedRows {
  Eigen::MatrixXd inputs;                              // in x m
  std::vector<std::vector<std::pair<int, int>>> uses;  // per segment: (row, count)

  CompressedRows() = default;
  CompressedRows(std::span<const Segment* const> segments, int input_dim) {
    std::unordered_map<std::string, int> index;
    std::vector<Eigen::VectorXd> rows;
    std::string key;
    Eigen::VectorXd row(input_dim);
    for (const Segment* s : segments) {
      const auto ds = s->states.cols();
      if (ds + s->actions.cols() != input_dim)
        throw std::invalid_argument("segment dimensions do not match the reward network");
      std::unordered_map<int, int> counts;
      for (int t = 0; t < s->length(); ++t) {
        row.head(ds) = s->states.row(t).transpose();
        row.tail(s->actions.cols()) = s->actions.row(t).transpose();
        key.assign(reinterpret_cast<const char*>(row.data()), sizeof(double) * input_dim);
        const auto [it, inserted] = index.emplace(key, static_cast<int>(rows.size()));
        if (inserted) rows.push_back(row);
        ++counts[it->second];
      }
      std::vector<std::pair<int, int>> u(counts.begin(), counts.end());
      std::sort(u.begin(), u.end());
      uses.push_back(std::move(u));
    }
    inputs.resize(input_dim, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) inputs.col(static_cast<Eigen::Index>(i)) = rows[i];
  }

  Eigen::VectorXd sums(const Eigen::RowVectorXd& r) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(uses.size()));
    for (std::size_t s = 0; s < uses.size(); ++s) {
      double total = 0.0;
      for (const auto& [row, count] : uses[s]) total += count * r[row];
      out[static_cast<Eigen::Index>(s)] = total;
    }
    return out;
  }
};

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<const PreferenceTriple*> clear_only(std::span<const PreferenceTriple* const> batch) {
  std::vector<const PreferenceTriple*> out;
  for (const auto* t : batch)
    if (t->is_clear()) out.push_back(t);
  if (out.empty()) throw std::invalid_argument("no trainable labels");
  return out;
}

// Loss over `clear` triples whose segments 2i, 2i+1 in `rows` are seg0, seg1.
LossResult ce_from_rows(const MlpShape& shape, std::span<const double> params, const CompressedRows& rows,
                        std::span<const PreferenceTriple* const> clear) {
  MlpShape::Cache cache;
  const Eigen::RowVectorXd r = shape.forward(params, rows.inputs, &cache);
  const Eigen::VectorXd R = rows.sums(r);
  const double inv = 1.0 / static_cast<double>(clear.size());
  LossResult out;
  out.grad = Eigen::VectorXd::Zero(shape.num_params());
  Eigen::RowVectorXd dr = Eigen::RowVectorXd::Zero(r.size());
  for (std::size_t i = 0; i < clear.size(); ++i) {
    const double p = *label_to_p(clear[i]->label);
    const double x = R[2 * i + 1] - R[2 * i];
    out.value -= inv * ((1.0 - p) * log_sigmoid(-x) + p * log_sigmoid(x));
    const double g = inv * (sigmoid(x) - p);
    for (const auto& [row, count] : rows.uses[2 * i + 1]) dr[row] += g * count;
    for (const auto& [row, count] : rows.uses[2 * i]) dr[row] -= g * count;
  }
  shape.backward(params, cache, dr, as_span(out.grad));
  return out;
}

std::vector<const Segment*> triple_segments(std::span<const PreferenceTriple* const> triples) {
  std::vector<const Segment*> segs;
  for (const auto* t : triples) {
    segs.push_back(t->seg0.get());
    segs.push_back(t->seg1.get());
  }
  return segs;
}

}  // namespace

RewardEnsemble::RewardEnsemble(int state_dim, int action_dim, int members, std::uint64_t seed,
                               RewardNetOptions options) {
  if (members < 1) throw std::invalid_argument("ensemble needs at least one member");
  if (options.hidden < 1 || options.layers < 0) throw std::invalid_argument("bad reward network layout");
  std::vector<int> widths{state_dim + action_dim};
  for (int i = 0; i < options.layers; ++i) widths.push_back(options.hidden);
  widths.push_back(1);
  shape_ = MlpShape(widths, Activation::kRelu, Activation::kTanh);
  for (int k = 0; k < members; ++k) {
    Eigen::VectorXd p(shape_.num_params());
    Rng rng(derive_seed(seed, 0x72657764, static_cast<std::uint64_t>(k)));
    shape_.init(as_span(p), rng);
    params_.push_back(std::move(p));
  }
}

Eigen::RowVectorXd RewardEnsemble::member_rewards(int member, const Eigen::Ref<const Eigen::MatrixXd>& inputs) const {
  return shape_.forward(as_span(params(member)), inputs);
}

Eigen::RowVectorXd RewardEnsemble::mean_rewards(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const {
  Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(inputs.cols());
  for (int k = 0; k < size(); ++k) total += member_rewards(k, inputs);
  return total / static_cast<double>(size());
}

Eigen::VectorXd RewardEnsemble::segment_returns(int member, std::span<const Segment* const> segments) const {
  if (segments.empty()) return {};
  const CompressedRows rows(segments, shape_.input_dim());
  const Eigen::RowVectorXd r = member < 0 ? mean_rewards(rows.inputs) : member_rewards(member, rows.inputs);
  return rows.sums(r);
}

double RewardEnsemble::segment_return(int member, const Segment& segment) const {
  const Segment* s = &segment;
  return segment_returns(member, std::span<const Segment* const>(&s, 1))[0];
}

double RewardEnsemble::mean_segment_return(const Segment& segment) const { return segment_return(-1, segment); }

RewardFn RewardEnsemble::reward_fn() const {
  return [this](const Eigen::Ref<const Eigen::VectorXd>& s, const Eigen::Ref<const Eigen::VectorXd>& a) {
    Eigen::VectorXd x(s.size() + a.size());
    x << s, a;
    return mean_rewards(x)[0];
  };
}

double bt_probability(double return0, double return1) { return sigmoid(return1 - return0); }

double bt_probability(const RewardEnsemble& ensemble, int member, const Segment& seg0, const Segment& seg1) {
  const Segment* segs[] = {&seg0, &seg1};
  const Eigen::VectorXd R = ensemble.segment_returns(member, segs);
  return bt_probability(R[0], R[1]);
}

double bt_probability(const RewardEnsemble& ensemble, const Segment& seg0, const Segment& seg1) {
  return bt_probability(ensemble, -1, seg0, seg1);
}

LossResult ce_loss(const MlpShape& shape, std::span<const double> params,
                   std::span<const PreferenceTriple* const> batch) {
  const auto clear = clear_only(batch);
  const CompressedRows rows(triple_segments(clear), shape.input_dim());
  return ce_from_rows(shape, params, rows, clear);
}

LossResult ce_loss(const RewardEnsemble& ensemble, int member, std::span<const PreferenceTriple* const> batch) {
  return ce_loss(ensemble.shape(), as_span(ensemble.params(member)), batch);
}

std::vector<std::vector<double>> train_reward(RewardEnsemble& ensemble, const PreferenceDataset& prefs,
                                              const RewardTrainOptions& options) {
  if (options.updates < 0) throw std::invalid_argument("updates must be >= 0");
  if (options.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::vector<double>> traces(static_cast<std::size_t>(ensemble.size()));
  if (options.updates == 0) return traces;
  const auto labeled = prefs.clear();
  const auto clear = clear_only(labeled);
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(options.batch_size), clear.size());

  // Row compression over every labeled segment, shared by all batches.
  const CompressedRows all(triple_segments(clear), ensemble.shape().input_dim());

  for (int k = 0; k < ensemble.size(); ++k) {
    Rng rng(derive_seed(options.seed, 0x74726e, static_cast<std::uint64_t>(k)));
    std::vector<std::size_t> order(clear.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    Optimizer optimizer(ensemble.shape().num_params(), options.optimizer);
    for (int u = 0; u < options.updates; ++u) {
      std::vector<const PreferenceTriple*> picked;
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < batch; ++i) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        ids.push_back(order[cursor]);
        picked.push_back(clear[order[cursor++]]);
      }
      // Restrict the shared rows to this batch.
      std::vector<int> local(static_cast<std::size_t>(all.inputs.cols()), -1);
      CompressedRows sub;
      std::vector<Eigen::Index> cols;
      for (std::size_t id : ids) {
        for (int side = 0; side < 2; ++side) {
          std::vector<std::pair<int, int>> u2;
          for (const auto& [row, count] : all.uses[2 * id + side]) {
            if (local[row] < 0) {
              local[row] = static_cast<int>(cols.size());
              cols.push_back(row);
            }
            u2.emplace_back(local[row], count);
          }
          sub.uses.push_back(std::move(u2));
        }
      }
      sub.inputs.resize(all.inputs.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) sub.inputs.col(static_cast<Eigen::Index>(c)) = all.inputs.col(cols[c]);
      const LossResult loss = ce_from_rows(ensemble.shape(), as_span(ensemble.params(k)), sub, picked);
      traces[static_cast<std::size_t>(k)].push_back(loss.value);
      optimizer.step(ensemble.params(k), loss.grad);
    }
  }
  return traces;
}

namespace {

struct DatasetRewards {
  std::vector<Eigen::VectorXd> raw;
  double lo = 0.0;
  double hi = 0.0;
};

DatasetRewards raw_dataset_rewards(const RewardEnsemble& ensemble, const OfflineDataset& dataset) {
  DatasetRewards out;
  const auto& steps = dataset.episodes();
  std::unordered_map<std::string, int> index;
  std::vector<Eigen::VectorXd> rows;
  std::vector<std::vector<int>> row_of(steps.size());
  const int in = ensemble.shape().input_dim();
  Eigen::VectorXd row(in);
  std::string key;
  for (std::size_t e = 0; e < steps.size(); ++e) {
    const auto& s = steps[e];
    if (s.states.cols() + s.actions.cols() != in)
      throw std::invalid_argument("dataset dimensions do not match the reward network");
    for (Eigen::Index t = 0; t < s.states.rows(); ++t) {
      row << s.states.row(t).transpose(), s.actions.row(t).transpose();
      key.assign(reinterpret_cast<const char*>(row.data()), sizeof(double) * in);
      const auto [it, inserted] = index.emplace(key, static_cast<int>(rows.size()));
      if (inserted) rows.push_back(row);
      row_of[e].push_back(it->second);
    }
  }
  Eigen::MatrixXd inputs(in, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) inputs.col(static_cast<Eigen::Index>(i)) = rows[i];
  const Eigen::RowVectorXd r = rows.empty() ? Eigen::RowVectorXd() : ensemble.mean_rewards(inputs);
  for (const auto& ids : row_of) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t t = 0; t < ids.size(); ++t) v[static_cast<Eigen::Index>(t)] = r[ids[t]];
    out.raw.push_back(std::move(v));
  }
  if (r.size() > 0) {
    out.lo = r.minCoeff();
    out.hi = r.maxCoeff();
  }
  return out;
}

double normalize(double x, double lo, double hi) { return hi > lo ? (x - lo) / (hi - lo) : 0.5; }

}  // namespace

std::vector<Eigen::VectorXd> relabel_dataset(const RewardEnsemble& ensemble, const OfflineDataset& dataset) {
  DatasetRewards d = raw_dataset_rewards(ensemble, dataset);
  for (auto& v : d.raw) v = v.unaryExpr([&](double x) { return normalize(x, d.lo, d.hi); });
  return d.raw;
}

Eigen::MatrixXd learned_reward_table(const RewardEnsemble& ensemble, const GridNavEnv& env,
                                     const OfflineDataset& dataset) {
  const DatasetRewards d = raw_dataset_rewards(ensemble, dataset);
  Eigen::MatrixXd inputs(env.state_dim() + env.action_dim(), env.num_states() * GridNavEnv::kNumActions);
  for (int s = 0; s < env.num_states(); ++s)
    for (int a = 0; a < GridNavEnv::kNumActions; ++a)
      inputs.col(s * GridNavEnv::kNumActions + a) << env.encode_state(s), env.encode_action(a);
  const Eigen::RowVectorXd r = ensemble.mean_rewards(inputs);
  Eigen::MatrixXd table(env.num_states(), GridNavEnv::kNumActions);
  for (int s = 0; s < env.num_states(); ++s)
    for (int a = 0; a < GridNavEnv::kNumActions; ++a)
      table(s, a) = normalize(r[s * GridNavEnv::kNumActions + a], d.lo, d.hi);
  return table;
}

TabularPolicy value_iteration(const GridNavEnv& env, const Eigen::MatrixXd& reward_table, double gamma,
                              double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("value iteration tolerance must be > 0");
  if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("gamma must be in [0, 1)");
  const int S = env.num_states();
  const int A = GridNavEnv::kNumActions;
  if (reward_table.rows() != S || reward_table.cols() != A)
    throw std::invalid_argument("reward table must be states x actions");
  TabularPolicy out;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(S);
  Eigen::MatrixXd q(S, A);
  auto backup = [&] {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) q(s, a) = reward_table(s, a) + gamma * v[env.next_state(s, a)];
  };
  for (int sweep = 0; sweep < 1000000; ++sweep) {
    backup();
    const Eigen::VectorXd next = q.rowwise().maxCoeff();
    const double residual = (next - v).cwiseAbs().maxCoeff();
    v = next;
    out.residuals.push_back(residual);
    if (residual <= tol) break;
  }
  backup();
  out.values = v;
  out.action.resize(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    int best = 0;
    for (int a = 1; a < A; ++a)
      if (q(s, a) > q(s, best)) best = a;
    out.action[static_cast<std::size_t>(s)] = best;
  }
  return out;
}

TabularPolicy value_iteration(const Environment& env, const Eigen::MatrixXd& reward_table, double gamma,
                              double tol) {
  const auto* grid = std::get_if<GridNavEnv>(&env);
  if (!grid) throw std::invalid_argument("value iteration needs a tabular environment");
  return value_iteration(*grid, reward_table, gamma, tol);
}

double clarity_ratio(std::span<const PreferenceTriple> triples) {
  if (triples.empty()) return 0.0;
  const auto clear = std::count_if(triples.begin(), triples.end(), [](const auto& t) { return t.is_clear(); });
  return static_cast<double>(clear) / static_cast<double>(triples.size());
}

MetricsRecord evaluate_reward(const RewardEnsemble& ensemble, const OfflineDataset& dataset,
                              const Environment& env, std::span<const PreferenceTriple> issued,
                              std::span<const PreferenceTriple> heldout,
                              std::span<const SegmentPtr> heldout_segments, int round) {
  if (heldout.empty() || heldout_segments.empty()) throw std::invalid_argument("empty held-out set");
  MetricsRecord m;
  m.round = round;
  m.clarity_ratio = clarity_ratio(issued);

  std::vector<const PreferenceTriple*> clear;
  for (const auto& t : heldout)
    if (t.is_clear()) clear.push_back(&t);
  if (!clear.empty()) {
    const Eigen::VectorXd R = ensemble.segment_returns(-1, triple_segments(clear));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < clear.size(); ++i) {
      const double x = R[2 * i + 1] - R[2 * i];
      const auto predicted = x > 0.0 ? PreferenceLabel::kPreferSecond
                             : x < 0.0 ? PreferenceLabel::kPreferFirst
                                       : PreferenceLabel::kNoComparison;
      correct += predicted == clear[i]->label;
    }
    m.pref_accuracy = static_cast<double>(correct) / static_cast<double>(clear.size());
  }

  std::vector<const Segment*> segs;
  Eigen::VectorXd truth(static_cast<Eigen::Index>(heldout_segments.size()));
  for (std::size_t i = 0; i < heldout_segments.size(); ++i) {
    segs.push_back(heldout_segments[i].get());
    truth[static_cast<Eigen::Index>(i)] = heldout_segments[i]->true_return;
  }
  m.spearman = heldout_segments.size() >= 2 ? spearman(ensemble.segment_returns(-1, segs), truth) : 0.0;

  if (const auto* grid = std::get_if<GridNavEnv>(&env)) {
    const auto learned = value_iteration(*grid, learned_reward_table(ensemble, *grid, dataset),
                                         grid->params().gamma, 1e-8);
    const auto optimal = optimal_tabular_policy(*grid, grid->reward_table());
    const double best = evaluate_tabular_policy(*grid, optimal.action);
    if (best != 0.0) m.normalized_return = evaluate_tabular_policy(*grid, learned.action) / best;
  }
  return m;
}

}  // namespace clarify
