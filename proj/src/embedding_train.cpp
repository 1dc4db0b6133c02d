#include <algorithm>
#include <iostream>

#include "clarify/embedding.hpp"

namespace clarify {

namespace {

// Distinct segments referenced by a set of loss batches, each with a stable
// index. Batches below refer to segments by these indices.
struct Universe {
  std::vector<const Segment*> segments;
  std::unordered_map<SegmentId, int, SegmentIdHash> index;
  mutable std::vector<Eigen::VectorXd> pooled;  // filled on first use

  int add(const Segment& s) {
    const auto [it, inserted] = index.emplace(s.id, static_cast<int>(segments.size()));
    if (inserted) segments.push_back(&s);
    return it->second;
  }

  const Eigen::VectorXd& features(int i) const {
    if (pooled.size() < segments.size()) pooled.resize(segments.size());
    auto& f = pooled[static_cast<std::size_t>(i)];
    if (f.size() == 0) f = segments[static_cast<std::size_t>(i)]->pooled_features();
    return f;
  }
};

struct IndexedBatches {
  std::vector<IndexPair> clear;
  std::vector<IndexPair> ambiguous;
  std::vector<IndexQuad> quads;
  std::vector<int> norm;
  std::vector<std::pair<int, int>> recon;  // (segment, time step)
};

struct Terms {
  bool amb = false;
  bool quad = false;
  bool norm = false;
  bool recon = false;
  double w_amb = 1.0;
  double w_quad = 1.0;
  double w_norm = 1.0;
};

IndexQuad quad_indices(Universe& u, const PreferenceTriple& a, const PreferenceTriple& b) {
  if (!a.is_clear() || !b.is_clear())
    throw std::invalid_argument("quadrilateral loss needs clear triples, got a skipped one");
  return {u.add(a.preferred()), u.add(a.rejected()), u.add(b.preferred()), u.add(b.rejected())};
}

void add_pair(Universe& u, IndexedBatches& b, const PreferenceTriple& t) {
  const IndexPair p{u.add(*t.seg0), u.add(*t.seg1)};
  (t.is_clear() ? b.clear : b.ambiguous).push_back(p);
}

template <typename Fn>
void remap(IndexedBatches& b, Fn&& f) {
  for (auto& p : b.clear) p = {f(p.first), f(p.second)};
  for (auto& p : b.ambiguous) p = {f(p.first), f(p.second)};
  for (auto& q : b.quads) q = {f(q.pos), f(q.neg), f(q.pos2), f(q.neg2)};
  for (auto& n : b.norm) n = f(n);
  for (auto& r : b.recon) r.first = f(r.first);
}

// Reconstruction term on already-encoded columns; adds dLoss/dz into dz and
// the decoder gradient into grad.
double recon_term(const EmbeddingModel& model, std::span<const Segment* const> columns,
                  const Eigen::MatrixXd& z, std::span<const std::pair<int, int>> samples,
                  Eigen::MatrixXd& dz, Eigen::VectorXd& grad) {
  if (samples.empty()) return 0.0;
  const MlpShape& dec = model.decoder_shape();
  const int d = model.dim();
  const int ds = dec.input_dim() - d;
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd x(dec.input_dim(), n);
  Eigen::MatrixXd a(dec.output_dim(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [col, t] = samples[i];
    const Segment& s = *columns[col];
    if (s.states.cols() != ds || s.actions.cols() != dec.output_dim())
      throw std::invalid_argument("segment dimensions do not match the decoder");
    if (t < 0 || t >= s.length()) throw std::out_of_range("transition index outside segment");
    x.col(i).head(ds) = s.states.row(t).transpose();
    x.col(i).tail(d) = z.col(col);
    a.col(i) = s.actions.row(t).transpose();
  }
  MlpShape::Cache cache;
  const Eigen::MatrixXd err = dec.forward(model.decoder_params(), x, &cache) - a;
  const Eigen::RowVectorXd norms = err.colwise().norm();
  const double inv = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd dy(err.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i)
    dy.col(i) = norms[i] > 0.0 ? Eigen::VectorXd(err.col(i) * (inv / norms[i]))
                               : Eigen::VectorXd::Zero(err.rows());
  auto dec_grad = as_span(grad).subspan(model.decoder_offset());
  const Eigen::MatrixXd dx = dec.backward(model.decoder_params(), cache, dy, dec_grad);
  for (Eigen::Index i = 0; i < n; ++i) dz.col(samples[i].first) += dx.col(i).tail(d);
  return norms.sum() * inv;
}

TotalLoss evaluate(const EmbeddingModel& model, const Universe& u, IndexedBatches b, const Terms& terms,
                   DistanceMetric metric) {
  TotalLoss out;
  out.grad = Eigen::VectorXd::Zero(model.params().size());
  if (!terms.amb) b.clear.clear(), b.ambiguous.clear();
  if (!terms.quad) b.quads.clear();
  if (!terms.norm) b.norm.clear();
  if (!terms.recon) b.recon.clear();
  const int d = model.dim();

  Eigen::MatrixXd z;
  Eigen::MatrixXd dz;
  if (model.mode() == EmbeddingMode::kTable) {
    if (!b.recon.empty()) throw std::logic_error("reconstruction undefined for table embeddings");
    std::vector<int> column(u.segments.size());
    for (std::size_t i = 0; i < u.segments.size(); ++i) column[i] = model.table_column(u.segments[i]->id);
    remap(b, [&](int i) { return column[i]; });
    z = Eigen::Map<const Eigen::MatrixXd>(model.params().data(), d, model.params().size() / d);
    dz = Eigen::MatrixXd::Zero(z.rows(), z.cols());
    if (terms.amb) out.amb = ambiguity_loss(z, b.clear, b.ambiguous, metric, &dz, terms.w_amb);
    if (terms.quad) out.quad = quadrilateral_loss(z, std::span<const IndexQuad>(b.quads), metric, &dz, terms.w_quad);
    if (terms.norm) out.norm = norm_loss(z, std::span<const int>(b.norm), &dz, terms.w_norm);
    out.grad = Eigen::Map<const Eigen::VectorXd>(dz.data(), dz.size());
  } else {
    // Encode only the segments an active term touches.
    std::vector<int> local(u.segments.size(), -1);
    std::vector<const Segment*> used;
    std::vector<int> used_index;
    remap(b, [&](int i) {
      if (local[i] < 0) {
        local[i] = static_cast<int>(used.size());
        used.push_back(u.segments[i]);
        used_index.push_back(i);
      }
      return local[i];
    });
    if (used.empty()) return out;
    Eigen::MatrixXd features(model.encoder_shape().input_dim(), static_cast<Eigen::Index>(used.size()));
    for (std::size_t i = 0; i < used.size(); ++i) {
      const Eigen::VectorXd& f = u.features(used_index[i]);
      if (f.size() != features.rows()) throw std::invalid_argument("segment features have wrong dimension");
      features.col(static_cast<Eigen::Index>(i)) = f;
    }
    MlpShape::Cache cache;
    z = model.encoder_shape().forward(model.encoder_params(), features, &cache);
    dz = Eigen::MatrixXd::Zero(z.rows(), z.cols());
    if (terms.amb) out.amb = ambiguity_loss(z, b.clear, b.ambiguous, metric, &dz, terms.w_amb);
    if (terms.quad) out.quad = quadrilateral_loss(z, std::span<const IndexQuad>(b.quads), metric, &dz, terms.w_quad);
    if (terms.norm) out.norm = norm_loss(z, std::span<const int>(b.norm), &dz, terms.w_norm);
    if (terms.recon) out.recon = recon_term(model, used, z, b.recon, dz, out.grad);
    auto enc_grad = as_span(out.grad).subspan(0, model.encoder_shape().num_params());
    model.encoder_shape().backward(model.encoder_params(), cache, dz, enc_grad);
  }
  out.value = out.recon + (terms.amb ? terms.w_amb * out.amb : 0.0) +
              (terms.quad ? terms.w_quad * out.quad : 0.0) + (terms.norm ? terms.w_norm * out.norm : 0.0);
  return out;
}

LossResult as_result(TotalLoss&& t, double value) { return {value, std::move(t.grad)}; }

}  // namespace

LossResult loss_amb(const EmbeddingModel& model, const TriplePtrs& batch, DistanceMetric metric) {
  if (batch.empty()) throw std::invalid_argument("ambiguity loss needs at least one triple");
  Universe u;
  IndexedBatches b;
  for (const auto* t : batch) add_pair(u, b, *t);
  Terms terms;
  terms.amb = true;
  auto t = evaluate(model, u, std::move(b), terms, metric);
  return as_result(std::move(t), t.amb);
}

LossResult loss_quad(const EmbeddingModel& model, const TriplePairs& batch, DistanceMetric metric) {
  Universe u;
  IndexedBatches b;
  for (const auto& [x, y] : batch) b.quads.push_back(quad_indices(u, *x, *y));
  Terms terms;
  terms.quad = true;
  auto t = evaluate(model, u, std::move(b), terms, metric);
  return as_result(std::move(t), t.quad);
}

LossResult loss_norm(const EmbeddingModel& model, std::span<const Segment* const> segments) {
  Universe u;
  IndexedBatches b;
  for (const auto* s : segments) b.norm.push_back(u.add(*s));
  Terms terms;
  terms.norm = true;
  auto t = evaluate(model, u, std::move(b), terms, DistanceMetric::kL2);
  return as_result(std::move(t), t.norm);
}

LossResult loss_recon(const EmbeddingModel& model, std::span<const TransitionSample> samples) {
  if (model.mode() == EmbeddingMode::kTable)
    throw std::logic_error("reconstruction undefined for table embeddings");
  Universe u;
  IndexedBatches b;
  for (const auto& s : samples) b.recon.emplace_back(u.add(*s.segment), s.t);
  Terms terms;
  terms.recon = true;
  auto t = evaluate(model, u, std::move(b), terms, DistanceMetric::kL2);
  return as_result(std::move(t), t.recon);
}

TotalLoss total_loss(const EmbeddingModel& model, const LossBatches& batches, const LossWeights& weights,
                     DistanceMetric metric) {
  if (weights.lambda_amb < 0 || weights.lambda_quad < 0 || weights.lambda_norm < 0)
    throw std::invalid_argument("loss weights must be >= 0");
  Universe u;
  IndexedBatches b;
  for (const auto* t : batches.pairs) add_pair(u, b, *t);
  for (const auto& [x, y] : batches.quads) b.quads.push_back(quad_indices(u, *x, *y));
  for (const auto* s : batches.norm) b.norm.push_back(u.add(*s));
  for (const auto& s : batches.recon) b.recon.emplace_back(u.add(*s.segment), s.t);
  Terms terms;
  terms.amb = weights.lambda_amb > 0;
  terms.quad = weights.lambda_quad > 0;
  terms.norm = weights.lambda_norm > 0;
  terms.recon = model.mode() == EmbeddingMode::kEncoder;
  terms.w_amb = weights.lambda_amb;
  terms.w_quad = weights.lambda_quad;
  terms.w_norm = weights.lambda_norm;
  return evaluate(model, u, std::move(b), terms, metric);
}

TrainResult train_embedding(EmbeddingModel& model, std::span<const SegmentPtr> pool,
                            const PreferenceDataset& prefs, const TrainOptions& options) {
  if (options.steps < 0) throw std::invalid_argument("steps must be >= 0");
  TrainResult result;
  if (model.mode() == EmbeddingMode::kTable) {
    for (const auto& s : pool) model.add_segment(s->id);
    for (const auto& t : prefs.triples()) {
      model.add_segment(t.seg0->id);
      model.add_segment(t.seg1->id);
    }
  }
  if (options.steps == 0) return result;

  Universe u;
  std::vector<IndexPair> pairs;
  std::vector<bool> pair_clear;
  for (const auto& t : prefs.triples()) {
    pairs.push_back({u.add(*t.seg0), u.add(*t.seg1)});
    pair_clear.push_back(t.is_clear());
  }
  std::vector<IndexPair> roles;  // (preferred, rejected) per clear triple
  for (const auto* t : prefs.clear()) roles.push_back({u.add(t->preferred()), u.add(t->rejected())});
  std::vector<int> pool_index;
  for (const auto& s : pool) pool_index.push_back(u.add(*s));

  const LossWeights& w = options.weights;
  Terms terms;
  terms.amb = w.lambda_amb > 0 && !pairs.empty();
  terms.quad = w.lambda_quad > 0;
  terms.norm = w.lambda_norm > 0 && !pool_index.empty();
  terms.recon = model.mode() == EmbeddingMode::kEncoder && !pool_index.empty();
  terms.w_amb = w.lambda_amb;
  terms.w_quad = w.lambda_quad;
  terms.w_norm = w.lambda_norm;
  if (terms.quad && roles.size() < 2) {
    std::cerr << "warning: fewer than two clear triples, skipping the quadrilateral term\n";
    terms.quad = false;
    result.quad_skipped = true;
  }

  Rng rng(options.seed);
  Optimizer optimizer(model.params().size(), options.optimizer);
  auto pick = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };

  for (int step = 0; step < options.steps; ++step) {
    IndexedBatches b;
    if (terms.amb) {
      auto push = [&](std::size_t i) { (pair_clear[i] ? b.clear : b.ambiguous).push_back(pairs[i]); };
      if (options.pair_batch <= 0) {
        for (std::size_t i = 0; i < pairs.size(); ++i) push(i);
      } else {
        for (int i = 0; i < options.pair_batch; ++i) push(pick(pairs.size()));
      }
    }
    if (terms.quad) {
      for (int i = 0; i < options.quad_batch; ++i) {
        const std::size_t x = pick(roles.size());
        std::size_t y = pick(roles.size() - 1);
        if (y >= x) ++y;
        b.quads.push_back({roles[x].first, roles[x].second, roles[y].first, roles[y].second});
      }
    }
    if (terms.norm) {
      if (options.norm_batch <= 0 || options.norm_batch >= static_cast<int>(pool_index.size())) {
        b.norm = pool_index;
      } else {
        for (int i = 0; i < options.norm_batch; ++i) b.norm.push_back(pool_index[pick(pool_index.size())]);
      }
    }
    if (terms.recon) {
      for (int i = 0; i < options.recon_batch; ++i) {
        const int s = pool_index[pick(pool_index.size())];
        b.recon.emplace_back(s, static_cast<int>(pick(static_cast<std::size_t>(u.segments[s]->length()))));
      }
    }
    TotalLoss loss = evaluate(model, u, std::move(b), terms, options.metric);
    if (options.trace_every > 0 && step % options.trace_every == 0)
      result.trace.push_back({step, loss.value, loss.amb, loss.quad, loss.norm, loss.recon});
    optimizer.step(model.params(), loss.grad);
  }
  return result;
}

}  // namespace clarify
