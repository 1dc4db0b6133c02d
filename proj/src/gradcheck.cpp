#include "clarify/gradcheck.hpp"

#include <functional>
#include <random>

#include "clarify/embedding.hpp"
#include "clarify/reward.hpp"

namespace clarify {

namespace {

constexpr int kStateDim = 3;
constexpr int kActionDim = 2;
constexpr int kLength = 4;

struct Fixture {
  std::vector<SegmentPtr> segments;
  std::vector<PreferenceTriple> triples;
};

Fixture random_fixture(Rng& rng, int n_segments, int n_triples, bool allow_skip) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> pick(0, n_segments - 1);
  Fixture f;
  for (int i = 0; i < n_segments; ++i) {
    auto s = std::make_shared<Segment>();
    s->id = {i, 0};
    s->states = Eigen::MatrixXd::NullaryExpr(kLength, kStateDim, [&] { return normal(rng); });
    s->actions = Eigen::MatrixXd::NullaryExpr(kLength, kActionDim, [&] { return normal(rng); });
    s->true_return = normal(rng);
    f.segments.push_back(std::move(s));
  }
  const PreferenceLabel labels[] = {PreferenceLabel::kPreferFirst, PreferenceLabel::kPreferSecond,
                                    PreferenceLabel::kNoComparison};
  std::uniform_int_distribution<int> pick_label(0, allow_skip ? 2 : 1);
  while (static_cast<int>(f.triples.size()) < n_triples) {
    const int i = pick(rng);
    const int j = pick(rng);
    if (i == j) continue;
    f.triples.push_back({f.segments[static_cast<std::size_t>(i)], f.segments[static_cast<std::size_t>(j)],
                         labels[pick_label(rng)], 0});
  }
  // Make sure both roles are present.
  if (allow_skip) {
    f.triples[0].label = PreferenceLabel::kPreferFirst;
    f.triples[1].label = PreferenceLabel::kNoComparison;
  }
  return f;
}

EmbeddingModel random_model(bool encoder, const Fixture& f, std::uint64_t seed) {
  if (encoder) return EmbeddingModel::encoder(3, kStateDim, kActionDim, seed, 5, 2);
  EmbeddingModel m = EmbeddingModel::table(3, seed);
  for (const auto& s : f.segments) m.add_segment(s->id);
  return m;
}

using ModelLoss = std::function<LossResult(const EmbeddingModel&)>;

std::function<LossResult(const Eigen::VectorXd&)> at_params(const EmbeddingModel& model, ModelLoss loss) {
  return [m = model, loss](const Eigen::VectorXd& p) mutable {
    m.params() = p;
    return loss(m);
  };
}

struct SuiteRunner {
  GradSuiteResult result;

  void record(const GradCheckReport& r, int fixture) {
    ++result.fixtures;
    result.max_rel_error = std::max(result.max_rel_error, r.max_rel_error);
    if (!r.passed && result.detail.empty()) {
      result.detail = "fixture " + std::to_string(fixture) + ": relative error " + std::to_string(r.max_rel_error) +
                      " at parameter " + std::to_string(r.worst_index);
      if (!r.location.empty()) result.detail += " (" + r.location + ")";
    }
  }
  GradSuiteResult finish() {
    result.passed = result.detail.empty();
    return result;
  }
};

TriplePtrs pointers(const Fixture& f) {
  TriplePtrs out;
  for (const auto& t : f.triples) out.push_back(&t);
  return out;
}

TriplePairs clear_pairs(const Fixture& f, Rng& rng, int count) {
  TriplePtrs clear;
  for (const auto& t : f.triples)
    if (t.is_clear()) clear.push_back(&t);
  std::uniform_int_distribution<std::size_t> pick(0, clear.size() - 1);
  TriplePairs out;
  while (static_cast<int>(out.size()) < count) {
    const auto a = pick(rng);
    const auto b = pick(rng);
    if (a != b) out.emplace_back(clear[a], clear[b]);
  }
  return out;
}

std::vector<const Segment*> raw(const Fixture& f) {
  std::vector<const Segment*> out;
  for (const auto& s : f.segments) out.push_back(s.get());
  return out;
}

std::vector<TransitionSample> transitions(const Fixture& f) {
  std::vector<TransitionSample> out;
  for (const auto& s : f.segments)
    for (int t = 0; t < kLength; t += 2) out.push_back({s.get(), t});
  return out;
}

GradSuiteResult embedding_suite(const std::string& name, bool encoder, std::uint64_t seed, int fixtures,
                                const std::function<ModelLoss(const Fixture&, Rng&)>& make_loss) {
  SuiteRunner runner;
  runner.result.name = name;
  runner.result.tolerance = kEmbeddingGradTol;
  for (int k = 0; k < fixtures; ++k) {
    Rng rng(derive_seed(seed, std::hash<std::string>{}(name), static_cast<std::uint64_t>(k)));
    const Fixture f = random_fixture(rng, 6, 10, true);
    const EmbeddingModel model = random_model(encoder, f, derive_seed(seed, 7, static_cast<std::uint64_t>(k)));
    const ModelLoss loss = make_loss(f, rng);
    runner.record(gradient_check(at_params(model, loss), model.params(), kEmbeddingGradTol), k);
  }
  return runner.finish();
}

}  // namespace

std::vector<GradSuiteResult> run_gradient_suites(std::uint64_t seed, int fixtures) {
  std::vector<GradSuiteResult> out;
  for (const bool encoder : {false, true}) {
    const std::string mode = encoder ? "encoder" : "table";
    for (const DistanceMetric metric : {DistanceMetric::kL2, DistanceMetric::kSquaredL2}) {
      const std::string tag = mode + "/" + std::string(metric_name(metric));
      out.push_back(embedding_suite("ambiguity " + tag, encoder, seed, fixtures, [metric](const Fixture& f, Rng&) {
        return [&f, metric](const EmbeddingModel& m) { return loss_amb(m, pointers(f), metric); };
      }));
      out.push_back(
          embedding_suite("quadrilateral " + tag, encoder, seed, fixtures, [metric](const Fixture& f, Rng& rng) {
            auto batch = clear_pairs(f, rng, 6);
            return [batch, metric](const EmbeddingModel& m) { return loss_quad(m, batch, metric); };
          }));
    }
    out.push_back(embedding_suite("norm " + mode, encoder, seed, fixtures, [](const Fixture& f, Rng&) {
      return [&f](const EmbeddingModel& m) { return loss_norm(m, raw(f)); };
    }));
  }
  out.push_back(embedding_suite("reconstruction encoder", true, seed, fixtures, [](const Fixture& f, Rng&) {
    return [&f](const EmbeddingModel& m) { return loss_recon(m, transitions(f)); };
  }));
  out.push_back(embedding_suite("total encoder", true, seed, fixtures, [](const Fixture& f, Rng& rng) {
    LossBatches batches{pointers(f), clear_pairs(f, rng, 6), raw(f), transitions(f)};
    return [batches](const EmbeddingModel& m) {
      const TotalLoss t = total_loss(m, batches, LossWeights{0.3, 1.0, 0.2}, DistanceMetric::kL2);
      return LossResult{t.value, t.grad};
    };
  }));

  SuiteRunner reward;
  reward.result.name = "preference cross-entropy";
  reward.result.tolerance = kRewardGradTol;
  for (int k = 0; k < fixtures; ++k) {
    Rng rng(derive_seed(seed, 0x6365, static_cast<std::uint64_t>(k)));
    const Fixture f = random_fixture(rng, 6, 10, true);
    const RewardEnsemble ensemble(kStateDim, kActionDim, 1, derive_seed(seed, 0x6366, static_cast<std::uint64_t>(k)),
                                  {8, 2});
    std::vector<const PreferenceTriple*> batch;
    for (const auto& t : f.triples) batch.push_back(&t);
    const MlpShape shape = ensemble.shape();
    auto loss = [&](const Eigen::VectorXd& p) {
      return ce_loss(shape, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), batch);
    };
    // Zero-initialized biases put ReLU units exactly on their kink for
    // inputs that silence the previous layer.
    std::normal_distribution<double> jitter(0.0, 0.1);
    const Eigen::VectorXd p = ensemble.params(0).unaryExpr([&](double v) { return v + jitter(rng); });
    reward.record(gradient_check(loss, p, kRewardGradTol), k);
  }
  out.push_back(reward.finish());
  return out;
}

}  // namespace clarify
