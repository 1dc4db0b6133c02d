#include "clarify/embedding.hpp"

#include <fstream>

#include "json.hpp"

namespace clarify {

using nlohmann::json;

namespace {

std::vector<int> layer_widths(int in, int hidden, int layers, int out) {
  std::vector<int> w{in};
  for (int i = 0; i < layers; ++i) w.push_back(hidden);
  w.push_back(out);
  return w;
}

}  // namespace

EmbeddingModel EmbeddingModel::table(int dim, std::uint64_t seed) {
  if (dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
  EmbeddingModel m;
  m.mode_ = EmbeddingMode::kTable;
  m.dim_ = dim;
  m.seed_ = seed;
  return m;
}

EmbeddingModel EmbeddingModel::encoder(int dim, int state_dim, int action_dim, std::uint64_t seed,
                                       int hidden, int layers) {
  if (dim < 1) throw std::invalid_argument("embedding dim must be >= 1");
  if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("state/action dims must be >= 1");
  if (hidden < 1 || layers < 0) throw std::invalid_argument("bad encoder hidden layout");
  EmbeddingModel m;
  m.mode_ = EmbeddingMode::kEncoder;
  m.dim_ = dim;
  m.seed_ = seed;
  m.encoder_ = MlpShape(layer_widths(state_dim + action_dim, hidden, layers, dim), Activation::kTanh,
                        Activation::kIdentity);
  m.decoder_ = MlpShape(layer_widths(state_dim + dim, hidden, layers, action_dim), Activation::kTanh,
                        Activation::kIdentity);
  m.params_.setZero(m.encoder_.num_params() + m.decoder_.num_params());
  Rng rng(seed);
  m.encoder_.init(as_span(m.params_).subspan(0, m.encoder_.num_params()), rng);
  m.decoder_.init(as_span(m.params_).subspan(m.encoder_.num_params()), rng);
  return m;
}

void EmbeddingModel::add_segment(const SegmentId& id) {
  if (mode_ != EmbeddingMode::kTable) throw std::logic_error("add_segment is only for table embeddings");
  if (contains(id)) return;
  Rng rng(derive_seed(seed_, static_cast<std::uint32_t>(id.episode), static_cast<std::uint32_t>(id.start)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index old = params_.size();
  params_.conservativeResize(old + dim_);
  for (int i = 0; i < dim_; ++i) params_[old + i] = gauss(rng);
  table_index_.emplace(id, static_cast<int>(table_ids_.size()));
  table_ids_.push_back(id);
}

int EmbeddingModel::table_column(const SegmentId& id) const {
  const auto it = table_index_.find(id);
  if (it == table_index_.end()) throw std::out_of_range("unknown segment id " + id.str());
  return it->second;
}

std::span<const double> EmbeddingModel::encoder_params() const {
  return as_span(params_).subspan(0, encoder_.num_params());
}

std::span<const double> EmbeddingModel::decoder_params() const {
  return as_span(params_).subspan(encoder_.num_params());
}

Eigen::VectorXd EmbeddingModel::encode(const Segment& segment) const {
  if (mode_ == EmbeddingMode::kTable) return params_.segment(Eigen::Index(table_column(segment.id)) * dim_, dim_);
  return encode_features(segment.pooled_features());
}

Eigen::VectorXd EmbeddingModel::encode_features(const Eigen::Ref<const Eigen::VectorXd>& pooled) const {
  if (mode_ != EmbeddingMode::kEncoder) throw std::logic_error("table embeddings have no feature encoder");
  if (pooled.size() != encoder_.input_dim())
    throw std::invalid_argument("segment features have dimension " + std::to_string(pooled.size()) +
                                ", encoder expects " + std::to_string(encoder_.input_dim()));
  return encoder_.forward(encoder_params(), pooled);
}

Eigen::MatrixXd EmbeddingModel::encode_all(std::span<const SegmentPtr> segments) const {
  Eigen::MatrixXd z(dim_, static_cast<Eigen::Index>(segments.size()));
  if (mode_ == EmbeddingMode::kTable) {
    for (std::size_t i = 0; i < segments.size(); ++i) z.col(i) = encode(*segments[i]);
    return z;
  }
  if (segments.empty()) return z;
  Eigen::MatrixXd features(encoder_.input_dim(), z.cols());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Eigen::VectorXd f = segments[i]->pooled_features();
    if (f.size() != features.rows()) throw std::invalid_argument("segment features have wrong dimension");
    features.col(i) = f;
  }
  return encoder_.forward(encoder_params(), features);
}

namespace {

json model_to_json(const EmbeddingModel& model) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["mode"] = model.mode() == EmbeddingMode::kTable ? "table" : "encoder";
  j["dim"] = model.dim();
  j["seed"] = model.seed();
  j["params"] = std::vector<double>(model.params().data(), model.params().data() + model.params().size());
  if (model.mode() == EmbeddingMode::kTable) {
    json ids = json::array();
    for (const auto& id : model.table_ids()) ids.push_back(id.str());
    j["table_ids"] = std::move(ids);
  } else {
    j["encoder_widths"] = model.encoder_shape().widths();
    j["decoder_widths"] = model.decoder_shape().widths();
  }
  return j;
}

EmbeddingModel model_from_json(const json& j) {
  if (j.value("schema_version", -1) != kSchemaVersion)
    throw ParseError("embedding checkpoint: unsupported schema_version");
  const auto mode = j.at("mode").get<std::string>();
  const int dim = j.at("dim").get<int>();
  const auto seed = j.at("seed").get<std::uint64_t>();
  const auto params = j.at("params").get<std::vector<double>>();
  EmbeddingModel m;
  if (mode == "table") {
    m = EmbeddingModel::table(dim, seed);
    for (const auto& s : j.at("table_ids")) m.add_segment(SegmentId::parse(s.get<std::string>()));
  } else if (mode == "encoder") {
    const auto enc = j.at("encoder_widths").get<std::vector<int>>();
    const auto dec = j.at("decoder_widths").get<std::vector<int>>();
    if (enc.size() < 2 || dec.size() != enc.size() || enc.back() != dim)
      throw ParseError("embedding checkpoint: inconsistent network widths");
    const int state_dim = dec.front() - dim;
    m = EmbeddingModel::encoder(dim, state_dim, enc.front() - state_dim, seed, enc.size() > 2 ? enc[1] : 1,
                                static_cast<int>(enc.size()) - 2);
    if (m.encoder_shape().widths() != enc || m.decoder_shape().widths() != dec)
      throw ParseError("embedding checkpoint: unsupported network layout");
  } else {
    throw ParseError("embedding checkpoint: unknown mode '" + mode + "'");
  }
  if (static_cast<Eigen::Index>(params.size()) != m.params().size())
    throw ParseError("embedding checkpoint: parameter count mismatch");
  m.params() = Eigen::Map<const Eigen::VectorXd>(params.data(), static_cast<Eigen::Index>(params.size()));
  return m;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace

void EmbeddingModel::save(const std::filesystem::path& path) const { write_json(path, model_to_json(*this)); }

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path) {
  return model_from_json(read_json(path));
}

void save_checkpoint(const std::filesystem::path& path, const EmbeddingModel& model,
                     std::span<const SegmentPtr> references) {
  json j = model_to_json(model);
  json refs = json::array();
  for (const auto& seg : references) {
    json r;
    r["id"] = seg->id.str();
    r["true_return"] = seg->true_return;
    if (model.mode() == EmbeddingMode::kEncoder) {
      const Eigen::VectorXd f = seg->pooled_features();
      r["pooled"] = std::vector<double>(f.data(), f.data() + f.size());
    }
    refs.push_back(std::move(r));
  }
  j["references"] = std::move(refs);
  write_json(path, j);
}

std::pair<EmbeddingModel, std::vector<ReferenceSegment>> load_checkpoint(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    auto model = model_from_json(j);
    std::vector<ReferenceSegment> refs;
    for (const auto& r : j.value("references", json::array())) {
      ReferenceSegment ref;
      ref.id = SegmentId::parse(r.at("id").get<std::string>());
      ref.true_return = r.at("true_return").get<double>();
      if (r.contains("pooled")) {
        const auto v = r.at("pooled").get<std::vector<double>>();
        ref.pooled = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      refs.push_back(std::move(ref));
    }
    return {std::move(model), std::move(refs)};
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace clarify
