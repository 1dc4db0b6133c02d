#include "clarify/fixtures.hpp"

#include <random>

#include "clarify/metric.hpp"
#include "clarify/stats.hpp"

namespace clarify {

namespace {

SegmentPtr item(int index, double value) {
  auto s = std::make_shared<Segment>();
  s->id = {index, 0};
  s->states = Eigen::MatrixXd::Zero(1, 1);
  s->actions = Eigen::MatrixXd::Zero(1, 1);
  s->true_return = value;
  s->source_episode = index;
  return s;
}

}  // namespace

ItemFixture make_item_fixture(const Eigen::VectorXd& values, const std::function<bool(int, int)>& ambiguous,
                              int n_pairs, std::uint64_t seed) {
  const int n = static_cast<int>(values.size());
  if (n < 2) throw std::invalid_argument("fixture needs at least 2 items");
  ItemFixture f;
  f.values = values;
  for (int i = 0; i < n; ++i) f.items.push_back(item(i, values[i]));
  auto add = [&](int i, int j) {
    PreferenceLabel label = PreferenceLabel::kNoComparison;
    if (!ambiguous(i, j))
      label = values[i] > values[j] ? PreferenceLabel::kPreferFirst : PreferenceLabel::kPreferSecond;
    f.prefs.add({f.items[static_cast<std::size_t>(i)], f.items[static_cast<std::size_t>(j)], label, 0});
  };
  if (n_pairs == 0) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) add(i, j);
    return f;
  }
  Rng rng(derive_seed(seed, 2));
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int k = 0; k < n_pairs; ++k) {
    const int i = pick(rng);
    const int j = pick(rng);
    if (i != j) add(i, j);
  }
  return f;
}

ItemFixture uniform_fixture(int n, int n_pairs, double threshold, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = u(rng);
  return make_item_fixture(
      v, [&](int i, int j) { return std::abs(v[i] - v[j]) < threshold; }, n_pairs, seed);
}

ItemFixture two_band_fixture(int n, int n_pairs, double threshold, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> u(0.0, 0.2);
  std::bernoulli_distribution high(0.5);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = (high(rng) ? 0.8 : 0.0) + u(rng);
  return make_item_fixture(
      v, [&](int i, int j) { return std::abs(v[i] - v[j]) < threshold; }, n_pairs, seed);
}

ItemFixture context_group_fixture(int n, int n_pairs, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd v(n);
  std::vector<int> group(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    v[i] = u(rng);
    group[static_cast<std::size_t>(i)] = coin(rng) ? 1 : 0;
  }
  return make_item_fixture(
      v, [&](int i, int j) { return group[static_cast<std::size_t>(i)] == group[static_cast<std::size_t>(j)]; },
      n_pairs, seed);
}

EmbeddingModel train_table_embedding(const ItemFixture& fixture, int dim, const TrainOptions& options) {
  EmbeddingModel model = EmbeddingModel::table(dim, derive_seed(options.seed, 3));
  for (const auto& s : fixture.items) model.add_segment(s->id);
  train_embedding(model, fixture.items, fixture.prefs, options);
  return model;
}

double mean_ambiguous_distance(const EmbeddingModel& model, const PreferenceDataset& prefs, DistanceMetric metric) {
  double sum = 0.0;
  int count = 0;
  for (const auto& t : prefs.triples()) {
    if (t.is_clear()) continue;
    sum += distance(model.encode(*t.seg0), model.encode(*t.seg1), metric);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("no ambiguous pairs");
  return sum / count;
}

DemoQuadResult run_demo_quad(std::uint64_t seed, const DemoQuadOptions& options,
                             const std::optional<std::filesystem::path>& csv) {
  DemoQuadResult r{0.0, EmbeddingModel::table(options.dim, 0),
                   uniform_fixture(options.items, options.pairs, options.threshold, seed)};
  TrainOptions train;
  train.steps = options.steps;
  train.optimizer = options.optimizer;
  train.weights = options.weights;
  train.quad_batch = options.quad_batch;
  train.trace_every = 0;
  train.seed = seed;
  r.model = train_table_embedding(r.fixture, options.dim, train);
  const Eigen::MatrixXd z = r.model.encode_all(r.fixture.items);
  const Eigen::MatrixXd proj = pca_project(z, r.fixture.values);
  r.spearman = spearman(r.fixture.values, proj.col(0));
  if (csv) export_embeddings(r.model, r.fixture.items, *csv);
  return r;
}

}  // namespace clarify
