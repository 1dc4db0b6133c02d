#include "clarify/selection.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>

namespace clarify {

namespace {

Eigen::VectorXd uniform_edges(int n_bin, double support) {
  if (n_bin < 1) throw std::invalid_argument("n_bin must be >= 1");
  if (!(support > 0.0)) support = 1.0;
  return Eigen::VectorXd::LinSpaced(n_bin + 1, 0.0, support);
}

int bin_index(const Eigen::VectorXd& edges, double d) {
  const int n = static_cast<int>(edges.size()) - 1;
  const double width = edges[n] / n;
  const int b = static_cast<int>(std::floor(d / width));
  return std::clamp(b, 0, n - 1);
}

Eigen::VectorXd normalized(const Eigen::VectorXd& v) {
  const double total = v.sum();
  return total > 0.0 ? Eigen::VectorXd(v / total) : Eigen::VectorXd::Constant(v.size(), 1.0 / v.size());
}

}  // namespace

DistanceHistogram DistanceHistogram::build(std::span<const double> distances, double support, int n_bin) {
  DistanceHistogram h;
  h.edges = uniform_edges(n_bin, support);
  h.mass = Eigen::VectorXd::Zero(n_bin);
  for (double d : distances) h.mass[bin_index(h.edges, d)] += 1.0;
  if (!distances.empty()) h.mass /= static_cast<double>(distances.size());
  return h;
}

int DistanceHistogram::bin_of(double d) const { return bin_index(edges, d); }

DensityModel DensityModel::from_masses(Eigen::VectorXd edges, Eigen::VectorXd rho_clr, Eigen::VectorXd rho_amb,
                                       double eps_d) {
  if (rho_clr.size() != rho_amb.size() || edges.size() != rho_clr.size() + 1)
    throw std::invalid_argument("density bins disagree");
  DensityModel m;
  m.edges = std::move(edges);
  m.rho_clr = std::move(rho_clr);
  m.rho_amb = std::move(rho_amb);
  m.eps_d = eps_d;
  const Eigen::VectorXd diff = (m.rho_clr - m.rho_amb).cwiseMax(0.0);
  m.rho1_fallback = !(diff.sum() > 0.0);
  m.rho1 = normalized(diff);
  m.rho2 = normalized((m.rho_clr.array() + eps_d) / (m.rho_amb.array() + eps_d));
  m.rho = 0.5 * (m.rho1 + m.rho2);
  return m;
}

DensityModel DensityModel::uniform(int n_bin, double support) {
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(n_bin, 1.0 / n_bin);
  return from_masses(uniform_edges(n_bin, support), u, u);
}

int DensityModel::bin_of(double d) const { return bin_index(edges, d); }

void DensityModel::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "bin_left,bin_right,rho_clr,rho_amb,rho1,rho2,rho\n" << std::setprecision(17);
  for (int b = 0; b < n_bin(); ++b)
    out << edges[b] << ',' << edges[b + 1] << ',' << rho_clr[b] << ',' << rho_amb[b] << ',' << rho1[b] << ','
        << rho2[b] << ',' << rho[b] << '\n';
}

double pair_distance(const EmbeddingModel& model, const Segment& seg0, const Segment& seg1,
                     DistanceMetric metric) {
  return distance(model.encode(seg0), model.encode(seg1), metric);
}

DensityModel estimate_densities(const PreferenceDataset& prefs, const EmbeddingModel& model,
                                DistanceMetric metric, int n_bin, double eps_d) {
  if (prefs.num_clear() == 0 || prefs.num_ambiguous() == 0)
    throw std::invalid_argument("insufficient labeled data for density estimation");
  std::vector<double> clr;
  std::vector<double> amb;
  for (const auto& t : prefs.triples())
    (t.is_clear() ? clr : amb).push_back(pair_distance(model, *t.seg0, *t.seg1, metric));
  const double support = std::max(*std::max_element(clr.begin(), clr.end()), *std::max_element(amb.begin(), amb.end()));
  auto hc = DistanceHistogram::build(clr, support, n_bin);
  auto ha = DistanceHistogram::build(amb, support, n_bin);
  return DensityModel::from_masses(hc.edges, hc.mass, ha.mass, eps_d);
}

std::vector<bool> accept_candidates(std::span<const double> distances, const DensityModel& density, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<bool> out;
  out.reserve(distances.size());
  for (double d : distances) out.push_back(u(rng) < density.acceptance(d));
  return out;
}

RejectionResult rejection_sample(std::span<const double> distances, const DensityModel& density, int M,
                                 std::uint64_t seed) {
  if (M < 1) throw std::invalid_argument("M must be >= 1");
  if (distances.empty()) throw std::invalid_argument("empty candidate pool");
  Rng rng(seed);
  const auto accepted = accept_candidates(distances, density, rng);
  std::vector<int> in;
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(distances.size()); ++i) (accepted[i] ? in : out).push_back(i);

  RejectionResult r;
  r.accepted = static_cast<int>(in.size());
  if (static_cast<int>(in.size()) > M) {
    std::shuffle(in.begin(), in.end(), rng);
    in.resize(static_cast<std::size_t>(M));
  } else if (static_cast<int>(in.size()) < M && !out.empty()) {
    std::stable_sort(out.begin(), out.end(), [&](int a, int b) {
      return density.rho[density.bin_of(distances[a])] > density.rho[density.bin_of(distances[b])];
    });
    const auto extra = std::min<std::size_t>(static_cast<std::size_t>(M) - in.size(), out.size());
    in.insert(in.end(), out.begin(), out.begin() + static_cast<std::ptrdiff_t>(extra));
    r.topped_up = static_cast<int>(extra);
  }
  std::sort(in.begin(), in.end());
  r.selected = std::move(in);
  return r;
}

double disagreement_score(const RewardEnsemble& ensemble, const Segment& seg0, const Segment& seg1) {
  if (ensemble.size() < 2) throw std::invalid_argument("disagreement needs at least 2 ensemble members");
  Eigen::VectorXd p(ensemble.size());
  for (int k = 0; k < ensemble.size(); ++k) p[k] = bt_probability(ensemble, k, seg0, seg1);
  // Shifted by the first member so identical members score exactly 0.
  const Eigen::ArrayXd x = p.array() - p[0];
  return std::sqrt(std::max(0.0, x.square().mean() - x.mean() * x.mean()));
}

Eigen::VectorXd disagreement_scores(const RewardEnsemble& ensemble, std::span<const Candidate> candidates) {
  if (ensemble.size() < 2) throw std::invalid_argument("disagreement needs at least 2 ensemble members");
  std::vector<const Segment*> segs;
  for (const auto& c : candidates) {
    segs.push_back(c.seg0.get());
    segs.push_back(c.seg1.get());
  }
  const auto n = static_cast<Eigen::Index>(candidates.size());
  Eigen::MatrixXd p(ensemble.size(), n);
  for (int k = 0; k < ensemble.size(); ++k) {
    const Eigen::VectorXd R = ensemble.segment_returns(k, segs);
    for (Eigen::Index i = 0; i < n; ++i) p(k, i) = bt_probability(R[2 * i], R[2 * i + 1]);
  }
  const Eigen::ArrayXXd x = (p.rowwise() - p.row(0)).array();
  const Eigen::ArrayXd mean = x.colwise().mean().transpose();
  const Eigen::ArrayXd sq = x.square().colwise().mean().transpose();
  return (sq - mean.square()).max(0.0).sqrt().matrix();
}

std::vector<Candidate> sample_candidates(const OfflineDataset& dataset, const PreferenceDataset& prefs, int H,
                                         int pool_size, std::uint64_t seed) {
  if (pool_size < 1) throw std::invalid_argument("pool size must be >= 1");
  const auto segs = sample_segments(dataset, H, 2 * pool_size, seed);
  std::set<std::pair<SegmentId, SegmentId>> labeled;
  for (const auto& t : prefs.triples()) labeled.insert(std::minmax(t.seg0->id, t.seg1->id));
  std::set<std::pair<SegmentId, SegmentId>> seen;
  std::vector<Candidate> out;
  for (int i = 0; i < pool_size; ++i) {
    const auto& a = segs[2 * static_cast<std::size_t>(i)];
    const auto& b = segs[2 * static_cast<std::size_t>(i) + 1];
    if (a->id == b->id) continue;
    const auto key = std::minmax(a->id, b->id);
    if (labeled.count(key) || !seen.insert(key).second) continue;
    out.push_back({a, b, 0.0});
  }
  return out;
}

SelectionResult select_queries(const OfflineDataset& dataset, const PreferenceDataset& prefs,
                               const EmbeddingModel& model, const RewardEnsemble& ensemble,
                               const DensityModel& density, int H, const SelectionOptions& options,
                               std::uint64_t seed) {
  if (options.M < 1) throw std::invalid_argument("M must be >= 1");
  auto pool = sample_candidates(dataset, prefs, H, options.pool_size, derive_seed(seed, 1));
  if (pool.empty()) throw std::invalid_argument("no fresh candidates");

  std::vector<SegmentPtr> segs;
  for (const auto& c : pool) {
    segs.push_back(c.seg0);
    segs.push_back(c.seg1);
  }
  const Eigen::MatrixXd z = model.encode_all(segs);
  std::vector<double> distances;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    pool[i].distance = distance(z.col(2 * i), z.col(2 * i + 1), options.metric);
    distances.push_back(pool[i].distance);
  }

  const auto kept = rejection_sample(distances, density, std::max(options.intermediate, options.M),
                                     derive_seed(seed, 2));
  std::vector<Candidate> shortlist;
  for (int i : kept.selected) shortlist.push_back(pool[static_cast<std::size_t>(i)]);
  const Eigen::VectorXd score = disagreement_scores(ensemble, shortlist);
  std::vector<std::size_t> order(shortlist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] > score[b]; });

  SelectionResult r;
  r.pool = static_cast<int>(pool.size());
  r.accepted = kept.accepted;
  r.topped_up = kept.topped_up;
  for (std::size_t i = 0; i < std::min<std::size_t>(order.size(), static_cast<std::size_t>(options.M)); ++i)
    r.queries.push_back(shortlist[order[i]]);
  return r;
}

}  // namespace clarify
