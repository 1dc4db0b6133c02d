#include <fstream>
#include <iomanip>
#include <limits>

#include <Eigen/Eigenvalues>

#include "clarify/embedding.hpp"

namespace clarify {

double SeparationReport::signed_distance(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  const double n = w.norm();
  const double raw = w.dot(z) + b;
  return n > 0.0 ? raw / n : raw;
}

SeparationReport separation_report(std::span<const double> clear_distances,
                                   std::span<const double> ambiguous_distances,
                                   const Eigen::MatrixXd& preferred, const Eigen::MatrixXd& rejected) {
  SeparationReport r;
  if (!clear_distances.empty() && !ambiguous_distances.empty()) {
    r.margin_applicable = true;
    r.d_plus_min = *std::min_element(clear_distances.begin(), clear_distances.end());
    r.d_minus_max = *std::max_element(ambiguous_distances.begin(), ambiguous_distances.end());
    r.margin = r.d_plus_min - r.d_minus_max;
  }
  if (preferred.cols() > 0 && rejected.cols() > 0) {
    if (preferred.rows() != rejected.rows()) throw std::invalid_argument("embedding dimensions differ");
    r.hyperplane_applicable = true;
    r.mu_plus = preferred.rowwise().mean();
    r.mu_minus = rejected.rowwise().mean();
    r.w = r.mu_plus - r.mu_minus;
    r.b = -0.5 * (r.mu_plus.squaredNorm() - r.mu_minus.squaredNorm());
    r.eta = 0.5 * r.w.norm();
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < preferred.cols(); ++i) correct += r.signed_distance(preferred.col(i)) > 0.0;
    for (Eigen::Index i = 0; i < rejected.cols(); ++i) correct += r.signed_distance(rejected.col(i)) < 0.0;
    r.train_accuracy = static_cast<double>(correct) / static_cast<double>(preferred.cols() + rejected.cols());
  }
  return r;
}

SeparationReport separation_report(const EmbeddingModel& model, const PreferenceDataset& prefs,
                                   DistanceMetric metric) {
  std::vector<double> clear_d;
  std::vector<double> amb_d;
  const auto clear = prefs.clear();
  Eigen::MatrixXd pos(model.dim(), static_cast<Eigen::Index>(clear.size()));
  Eigen::MatrixXd neg(model.dim(), static_cast<Eigen::Index>(clear.size()));
  for (std::size_t i = 0; i < clear.size(); ++i) {
    pos.col(i) = model.encode(clear[i]->preferred());
    neg.col(i) = model.encode(clear[i]->rejected());
    clear_d.push_back(distance(pos.col(i), neg.col(i), metric));
  }
  for (const auto* t : prefs.ambiguous())
    amb_d.push_back(distance(model.encode(*t->seg0), model.encode(*t->seg1), metric));
  return separation_report(clear_d, amb_d, pos, neg);
}

Eigen::MatrixXd pca_project(const Eigen::MatrixXd& z, const Eigen::VectorXd& returns) {
  if (z.cols() < 2) throw std::invalid_argument("projection needs at least 2 segments");
  if (returns.size() != z.cols()) throw std::invalid_argument("one return per segment expected");
  const Eigen::MatrixXd centered = z.colwise() - z.rowwise().mean();
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(z.cols());
  if (cov.trace() <= 0.0) throw std::invalid_argument("zero variance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index d = z.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(z.cols(), 2);
  // Eigenvalues come in ascending order.
  Eigen::VectorXd pc1 = solver.eigenvectors().col(d - 1);
  out.col(0) = centered.transpose() * pc1;
  const Eigen::VectorXd r = returns.array() - returns.mean();
  if (out.col(0).dot(r) < 0.0) out.col(0) = -out.col(0);
  if (d > 1) {
    Eigen::VectorXd pc2 = solver.eigenvectors().col(d - 2);
    Eigen::Index k = 0;
    pc2.cwiseAbs().maxCoeff(&k);
    if (pc2[k] < 0.0) pc2 = -pc2;
    out.col(1) = centered.transpose() * pc2;
  }
  return out;
}

void write_embedding_csv(const std::filesystem::path& path, std::span<const SegmentId> ids,
                         const Eigen::MatrixXd& z, const Eigen::VectorXd& returns) {
  if (static_cast<Eigen::Index>(ids.size()) != z.cols()) throw std::invalid_argument("one id per embedding expected");
  const Eigen::MatrixXd proj = pca_project(z, returns);
  const double lo = returns.minCoeff();
  const double hi = returns.maxCoeff();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "segment_id,pc1,pc2,true_return_normalized\n" << std::setprecision(17);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double norm = hi > lo ? (returns[i] - lo) / (hi - lo) : 0.5;
    out << ids[i].str() << ',' << proj(i, 0) << ',' << proj(i, 1) << ',' << norm << '\n';
  }
}

void export_embeddings(const EmbeddingModel& model, std::span<const SegmentPtr> segments,
                       const std::filesystem::path& path) {
  if (segments.size() < 2) throw std::invalid_argument("projection needs at least 2 segments");
  std::vector<SegmentId> ids;
  Eigen::VectorXd returns(static_cast<Eigen::Index>(segments.size()));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    ids.push_back(segments[i]->id);
    returns[i] = segments[i]->true_return;
  }
  write_embedding_csv(path, ids, model.encode_all(segments), returns);
}

void export_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& csv) {
  const auto [model, refs] = load_checkpoint(checkpoint);
  if (refs.size() < 2) throw std::invalid_argument("checkpoint holds fewer than 2 reference segments");
  std::vector<SegmentId> ids;
  Eigen::VectorXd returns(static_cast<Eigen::Index>(refs.size()));
  Eigen::MatrixXd z(model.dim(), static_cast<Eigen::Index>(refs.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    ids.push_back(refs[i].id);
    returns[i] = refs[i].true_return;
    if (model.mode() == EmbeddingMode::kTable) {
      z.col(i) = model.params().segment(Eigen::Index(model.table_column(refs[i].id)) * model.dim(), model.dim());
    } else {
      z.col(i) = model.encode_features(refs[i].pooled);
    }
  }
  write_embedding_csv(csv, ids, z, returns);
}

GradCheckReport gradient_check(const std::function<LossResult(const Eigen::VectorXd&)>& loss,
                               const Eigen::VectorXd& params, double tolerance, double step, double floor) {
  GradCheckReport report;
  const LossResult at = loss(params);
  if (at.grad.size() != params.size()) throw std::invalid_argument("gradient has wrong size");
  Eigen::VectorXd x = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    x[i] = params[i] + step;
    const double up = loss(x).value;
    x[i] = params[i] - step;
    const double down = loss(x).value;
    x[i] = params[i];
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = at.grad[i];
    if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
      report.finite = false;
      report.worst_index = i;
      report.max_rel_error = std::numeric_limits<double>::infinity();
      report.location = "parameter " + std::to_string(i) + (std::isfinite(analytic) ? " (numeric)" : " (analytic)");
      return report;
    }
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace clarify
