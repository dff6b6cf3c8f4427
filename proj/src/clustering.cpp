#include "overlap/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <tuple>

namespace overlap {

std::vector<FrameRange> make_subsequences(int frame_count, int subseq_len) {
  if (frame_count < 2) throw std::invalid_argument("need at least 2 frames");
  if (subseq_len < 2 || subseq_len > 8) throw std::invalid_argument("sub-sequence length must lie in [2, 8]");
  std::vector<FrameRange> ranges;
  int begin = 0;
  while (true) {
    const int end = std::min(begin + subseq_len, frame_count);
    ranges.push_back({begin, end});
    if (end == frame_count) break;
    begin = end - 1;
  }
  return ranges;
}

namespace {

std::vector<int> renumber(const std::vector<int>& labels) {
  std::vector<int> map;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l >= static_cast<int>(map.size())) map.resize(l + 1, -1);
    if (map[l] < 0) map[l] = *std::max_element(map.begin(), map.end()) + 1;
    out[i] = map[l];
  }
  return out;
}

std::vector<int> singleton_labels(Eigen::Index n) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) labels[i] = static_cast<int>(i);
  return labels;
}

struct KMeansRun {
  std::vector<int> labels;
  double inertia = 0.0;
};

KMeansRun kmeans_once(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng, int max_iterations) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());

  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = x.row(first(rng));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2[pick];
        if (r < 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    centers.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  KMeansRun run;
  run.labels.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    Eigen::VectorXd best(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      best[i] = (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&arg);
      if (run.labels[i] != static_cast<int>(arg)) {
        run.labels[i] = static_cast<int>(arg);
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(run.labels[i]) += x.row(i);
      ++counts[run.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
        continue;
      }
      // Empty cluster: move it to the point farthest from its center.
      Eigen::Index far = 0;
      best.maxCoeff(&far);
      centers.row(c) = x.row(far);
      best[far] = 0.0;
      changed = true;
    }
    if (!changed) break;
  }
  run.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) run.inertia += (x.row(i) - centers.row(run.labels[i])).squaredNorm();
  return run;
}

void check_affinity(const Eigen::MatrixXd& w) {
  if (w.rows() != w.cols()) throw std::invalid_argument("affinity matrix must be square");
  if ((w.array() < 0.0).any() || !w.allFinite()) {
    throw std::invalid_argument("affinity matrix must be finite and non-negative");
  }
  const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
  if (((w - w.transpose()).cwiseAbs().array() > 1e-9 * scale).any()) {
    throw std::invalid_argument("affinity matrix must be symmetric");
  }
}

struct Embedding {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // matching columns
};

Embedding normalized_embedding(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  Eigen::VectorXd deg = a.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (deg[i] <= 0.0) {
      a(i, i) = 1.0;
      deg[i] = 1.0;
    }
  }
  const Eigen::VectorXd inv_sqrt = deg.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd m = inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  return {eig.eigenvalues().reverse(), eig.eigenvectors().rowwise().reverse()};
}

std::vector<int> cluster_embedding(const Embedding& e, int k, const KMeansParams& params) {
  Eigen::MatrixXd u = e.eigenvectors.leftCols(k);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double norm = u.row(i).norm();
    if (norm > 0.0) u.row(i) /= norm;
  }
  return kmeans(u, k, params);
}

}  // namespace

std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, const KMeansParams& params) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  const Eigen::Index n = points.rows();
  if (n == 0) return {};
  if (n <= k) return singleton_labels(n);
  std::mt19937_64 rng(params.seed);
  KMeansRun best;
  for (int r = 0; r < std::max(1, params.restarts); ++r) {
    KMeansRun run = kmeans_once(points, k, rng, params.max_iterations);
    if (best.labels.empty() || run.inertia < best.inertia - 1e-12 * std::max(1.0, best.inertia)) {
      best = std::move(run);
    }
  }
  return renumber(best.labels);
}

std::vector<int> spectral_cluster_fixed(const Eigen::MatrixXd& w, int k, const KMeansParams& params) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  check_affinity(w);
  const Eigen::Index n = w.rows();
  if (n <= k) return singleton_labels(n);
  return cluster_embedding(normalized_embedding(w), k, params);
}

std::vector<int> spectral_cluster_selftune_distances(const Eigen::MatrixXd& distances,
                                                     const SelfTuneParams& params) {
  if (distances.rows() != distances.cols()) throw std::invalid_argument("distance matrix must be square");
  const Eigen::Index n = distances.rows();
  if (n == 0) return {};
  if (n == 1) return {0};

  const int neighbor = std::max(1, std::min<int>(params.neighbor, static_cast<int>(n) - 1));
  Eigen::VectorXd sigma(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> finite;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && std::isfinite(distances(i, j))) finite.push_back(distances(i, j));
    }
    std::sort(finite.begin(), finite.end());
    double s = 1.0;
    if (!finite.empty()) s = finite[std::min<std::size_t>(neighbor, finite.size()) - 1];
    sigma[i] = std::max(s, 1e-12);
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || !std::isfinite(distances(i, j))) continue;
      a(i, j) = std::exp(-distances(i, j) * distances(i, j) / (sigma[i] * sigma[j]));
    }
  }
  a = 0.5 * (a + a.transpose());

  const Embedding e = normalized_embedding(a);
  const int kmax = std::min<int>(params.max_clusters, static_cast<int>(n) - 1);
  int k = 1;
  double best_gap = -1.0;
  for (int c = 1; c <= kmax; ++c) {
    const double gap = e.eigenvalues[c - 1] - e.eigenvalues[c];
    if (gap > best_gap + 1e-12) {
      best_gap = gap;
      k = c;
    }
  }
  if (k == 1) return std::vector<int>(static_cast<std::size_t>(n), 0);
  return cluster_embedding(e, k, params.kmeans);
}

std::vector<int> spectral_cluster_selftune(const Eigen::MatrixXd& w, const SelfTuneParams& params) {
  check_affinity(w);
  const Eigen::Index n = w.rows();
  const double wmax = w.maxCoeff();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        d(i, j) = 0.0;
      } else if (w(i, j) > 0.0) {
        d(i, j) = std::sqrt(std::max(0.0, std::log(wmax) - std::log(w(i, j))));
      } else {
        d(i, j) = std::numeric_limits<double>::infinity();
      }
    }
  }
  return spectral_cluster_selftune_distances(d, params);
}

std::vector<int> spectral_cluster_selftune_points(const Eigen::MatrixXd& points, const SelfTuneParams& params) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (points.row(i) - points.row(j)).norm();
  }
  return spectral_cluster_selftune_distances(d, params);
}

namespace {

double epanechnikov(double t) { return t * t < 1.0 ? 0.75 * (1.0 - t * t) : 0.0; }

Eigen::VectorXd kde_bandwidth(const Eigen::MatrixXd& samples, const Eigen::VectorXd& weights) {
  const double m = 1.0 / weights.squaredNorm();
  const auto dims = static_cast<double>(samples.rows());
  const double shrink = std::pow(m, -1.0 / (4.0 + dims));
  Eigen::VectorXd h(samples.rows());
  for (Eigen::Index d = 0; d < samples.rows(); ++d) {
    const double mean = samples.row(d).dot(weights);
    const double var = (samples.row(d).array() - mean).square().matrix().dot(weights);
    h[d] = std::max(kDescriptorBandwidthScale * 2.34 * std::sqrt(std::max(0.0, var)) * shrink,
                    kDescriptorMinBandwidth);
  }
  return h;
}

double kde(const Eigen::MatrixXd& samples, const Eigen::VectorXd& weights, const Eigen::VectorXd& h,
           const Eigen::VectorXd& x) {
  double norm = 1.0;
  for (Eigen::Index d = 0; d < h.size(); ++d) norm *= h[d];
  double total = 0.0;
  for (Eigen::Index k = 0; k < samples.cols(); ++k) {
    double prod = weights[k];
    for (Eigen::Index d = 0; d < h.size() && prod > 0.0; ++d) {
      prod *= epanechnikov((x[d] - samples(d, k)) / h[d]);
    }
    total += prod;
  }
  return total / norm;
}

}  // namespace

Eigen::MatrixXd ClusterDescriptor::reduce(const Eigen::MatrixXd& scaled) const {
  const Eigen::MatrixXd centered = scaled.colwise() - mean;
  if (basis.cols() == 0) return centered.colwise().norm();
  return basis.transpose() * centered;
}

double ClusterDescriptor::density(const Eigen::VectorXd& x) const { return kde(samples, weights, bandwidth, x); }

ClusterDescriptor cluster_descriptor(const std::vector<FeatureVector>& members, std::vector<int> member_ids,
                                     const std::vector<double>& weights) {
  if (members.empty()) throw std::invalid_argument("cluster descriptor needs at least one member");
  const auto m = static_cast<Eigen::Index>(members.size());
  ClusterDescriptor desc;
  if (weights.empty()) {
    desc.weights = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  } else {
    if (weights.size() != members.size()) throw std::invalid_argument("one weight per member expected");
    desc.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), m);
    if (desc.weights.minCoeff() < 0.0 || !(desc.weights.sum() > 0.0)) {
      throw std::invalid_argument("member weights must be non-negative with a positive sum");
    }
    desc.weights /= desc.weights.sum();
  }
  desc.raw.resize(kFeatureDims, m);
  for (Eigen::Index j = 0; j < m; ++j) desc.raw.col(j) = members[j].scaled();
  desc.mean = desc.raw * desc.weights;

  const int r = static_cast<int>(std::min<Eigen::Index>(kDescriptorMaxDims, m - 1));
  desc.basis.resize(kFeatureDims, r);
  if (r > 0) {
    const Eigen::MatrixXd centered = desc.raw.colwise() - desc.mean;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered * desc.weights.asDiagonal() * centered.transpose());
    for (int c = 0; c < r; ++c) {
      Eigen::VectorXd v = eig.eigenvectors().col(kFeatureDims - 1 - c);
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v[arg] < 0.0) v = -v;
      desc.basis.col(c) = v;
    }
  }
  desc.samples = desc.reduce(desc.raw);
  desc.bandwidth = kde_bandwidth(desc.samples, desc.weights);
  if (member_ids.empty()) {
    member_ids.resize(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) member_ids[i] = static_cast<int>(i);
  }
  desc.members = std::move(member_ids);
  return desc;
}

double kl_divergence(const ClusterDescriptor& p, const ClusterDescriptor& q) {
  if (p.raw.cols() == 0 || q.raw.cols() == 0) throw std::invalid_argument("empty cluster descriptor");
  const Eigen::MatrixXd y = q.reduce(p.raw);
  const Eigen::VectorXd hp = kde_bandwidth(y, p.weights);
  double total = 0.0;
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    const Eigen::VectorXd x = y.col(k);
    const double pd = std::max(kde(y, p.weights, hp, x), kDensityFloor);
    const double qd = std::max(q.density(x), kDensityFloor);
    total += p.weights[k] * (std::log(pd) - std::log(qd));
  }
  return std::max(0.0, total);
}

int ClusterRegistry::create(ClusterDescriptor descriptor, int subsequence) {
  RegistryEntry e;
  e.id = next_id_++;
  e.descriptor = std::move(descriptor);
  e.first_seen = subsequence;
  e.last_seen = subsequence;
  const int id = e.id;
  entries_.emplace(id, std::move(e));
  return id;
}

RegistryEntry& ClusterRegistry::at(int id) {
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw std::out_of_range("unknown cluster id " + std::to_string(id));
  return it->second;
}

const RegistryEntry& ClusterRegistry::at(int id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end()) throw std::out_of_range("unknown cluster id " + std::to_string(id));
  return it->second;
}

std::vector<int> ClusterRegistry::seen_in(int subsequence) const {
  std::vector<int> ids;
  for (const auto& [id, e] : entries_) {
    if (e.last_seen == subsequence) ids.push_back(id);
  }
  return ids;
}

double association_cost(const ClusterDescriptor& current, const ClusterDescriptor& previous) {
  return 0.5 * (kl_divergence(current, previous) + kl_divergence(previous, current));
}

Association associate_clusters(std::vector<ClusterDescriptor> current, ClusterRegistry& registry,
                               double tau_kl, int subsequence) {
  const std::size_t n = current.size();
  Association out;
  out.global_ids.assign(n, -1);
  out.is_new.assign(n, true);
  out.kl.assign(n, std::numeric_limits<double>::infinity());

  const std::vector<int> previous = registry.seen_in(subsequence - 1);
  std::vector<std::tuple<double, int, std::size_t>> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    for (const int id : previous) {
      const double kl = association_cost(current[i], registry.at(id).descriptor);
      out.kl[i] = std::min(out.kl[i], kl);
      candidates.emplace_back(kl, id, i);
    }
  }
  std::sort(candidates.begin(), candidates.end());

  std::vector<bool> taken_current(n, false);
  std::vector<int> taken_ids;
  for (const auto& [kl, id, i] : candidates) {
    if (!(kl < tau_kl)) break;
    if (taken_current[i] || std::find(taken_ids.begin(), taken_ids.end(), id) != taken_ids.end()) continue;
    taken_current[i] = true;
    taken_ids.push_back(id);
    out.global_ids[i] = id;
    out.is_new[i] = false;
    out.kl[i] = kl;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (out.is_new[i]) {
      out.global_ids[i] = registry.create(std::move(current[i]), subsequence);
    } else {
      RegistryEntry& e = registry.at(out.global_ids[i]);
      e.descriptor = std::move(current[i]);
      e.last_seen = subsequence;
    }
  }
  return out;
}

}  // namespace overlap
