#include "overlap/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace overlap {

Eigen::VectorXd FeatureVector::scaled() const {
  Eigen::VectorXd v(kFeatureDims);
  for (int i = 0; i < kHistDims; ++i) v[i] = color_hist[i] * kHistScale;
  for (int i = 0; i < kLocationDims; ++i) v[kHistDims + i] = location[i];
  return v;
}

FeatureVector extract_features(const Image& frame, const Box& box) {
  if (!within_frame(box, frame.width(), frame.height())) {
    throw std::out_of_range("feature box outside frame");
  }
  FeatureVector f;
  for (int y = box.y; y < box.bottom(); ++y) {
    for (int x = box.x; x < box.right(); ++x) {
      for (int c = 0; c < 3; ++c) {
        f.color_hist[c * kHistBins + frame.at(x, y, c) * kHistBins / 256] += 1.0;
      }
    }
  }
  const double n = static_cast<double>(box.area());
  for (double& v : f.color_hist) v /= n;
  const BoxQuad q = to_quad(box);
  f.location = {q.cx / frame.width(), q.cy / frame.height(), q.h / frame.height(), q.w / frame.width()};
  return f;
}

std::vector<PairSample> collect_pairs(const std::vector<Box>& boxes, int bins) {
  if (bins < 1) throw std::invalid_argument("bin count must be positive");
  std::vector<PairSample> pairs;
  const int n = static_cast<int>(boxes.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double u = iou(boxes[i], boxes[j]);
      if (u <= 0.0) continue;
      const int bin = std::min(bins - 1, static_cast<int>(u * bins));
      pairs.push_back({i, j, u, bin});
      pairs.push_back({j, i, u, bin});
    }
  }
  return pairs;
}

FeatureProjector::FeatureProjector(Eigen::VectorXd mean, Eigen::MatrixXd basis)
    : mean_(std::move(mean)), basis_(std::move(basis)) {
  if (mean_.size() != kHistDims || basis_.rows() != kHistDims) {
    throw std::invalid_argument("projector shape mismatch");
  }
}

Eigen::VectorXd FeatureProjector::project(const FeatureVector& f) const {
  Eigen::VectorXd out(dims());
  for (int i = 0; i < kLocationDims; ++i) out[i] = f.location[i];
  if (basis_.cols() > 0) {
    Eigen::VectorXd h(kHistDims);
    for (int i = 0; i < kHistDims; ++i) h[i] = f.color_hist[i] * kHistScale;
    out.tail(basis_.cols()) = basis_.transpose() * (h - mean_);
  }
  return out;
}

FeatureProjector fit_projector(const std::vector<FeatureVector>& features, int color_dims) {
  if (color_dims < 0 || color_dims > kHistDims) throw std::invalid_argument("color_dims out of range");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(kHistDims);
  if (features.empty()) return {mean, Eigen::MatrixXd::Zero(kHistDims, color_dims)};
  Eigen::MatrixXd x(kHistDims, static_cast<Eigen::Index>(features.size()));
  for (std::size_t j = 0; j < features.size(); ++j) {
    for (int i = 0; i < kHistDims; ++i) x(i, j) = features[j].color_hist[i] * kHistScale;
  }
  mean = x.rowwise().mean();
  x.colwise() -= mean;
  const Eigen::MatrixXd cov = x * x.transpose() / static_cast<double>(features.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::MatrixXd basis(kHistDims, color_dims);
  for (int c = 0; c < color_dims; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(kHistDims - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    basis.col(c) = v;
  }
  return {mean, basis};
}

namespace {

double epanechnikov(double t) { return t * t < 1.0 ? 0.75 * (1.0 - t * t) : 0.0; }

std::vector<std::size_t> capped_indices(std::size_t n, int cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (cap <= 0 || n <= static_cast<std::size_t>(cap)) return idx;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < static_cast<std::size_t>(cap); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(static_cast<std::size_t>(cap));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::uint64_t pair_key(int a, int b) {
  const auto lo = static_cast<std::uint32_t>(std::min(a, b));
  const auto hi = static_cast<std::uint32_t>(std::max(a, b));
  return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

bool lexicographic_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace

DensityModel DensityModel::fit(const std::vector<std::vector<Eigen::VectorXd>>& samples, int side_dims,
                               const DensityParams& params, const std::vector<std::vector<Source>>* sources) {
  if (side_dims < 1) throw std::invalid_argument("side_dims must be positive");
  if (sources && sources->size() != samples.size()) throw std::invalid_argument("sources and samples differ in shape");
  DensityModel model;
  model.side_dims_ = side_dims;
  const int dims = 2 * side_dims;
  for (std::size_t bin = 0; bin < samples.size(); ++bin) {
    const auto& s = samples[bin];
    if (s.empty()) continue;
    const auto keep = capped_indices(s.size(), params.max_samples_per_bin, params.seed + bin);
    const auto n = static_cast<Eigen::Index>(keep.size());

    for (const std::size_t i : keep) {
      if (s[i].size() != dims) throw std::invalid_argument("joint sample has wrong dimension");
    }
    if (sources && (*sources)[bin].size() != s.size()) {
      throw std::invalid_argument("sources and samples differ in shape");
    }
    Component c;

    // One bandwidth per side dimension, pooled over both halves so the
    // joint stays exchange-symmetric.
    c.bandwidth.resize(dims);
    const double shrink = std::pow(static_cast<double>(n), -1.0 / (4.0 + dims));
    for (int d = 0; d < side_dims; ++d) {
      double sum = 0.0, sq = 0.0;
      for (const std::size_t i : keep) {
        sum += s[i][d] + s[i][side_dims + d];
        sq += s[i][d] * s[i][d] + s[i][side_dims + d] * s[i][side_dims + d];
      }
      const double mean = sum / (2.0 * n);
      const double sd = std::sqrt(std::max(0.0, sq / (2.0 * n) - mean * mean));
      const double h = std::max(2.34 * sd * shrink, params.min_bandwidth);
      c.bandwidth[d] = h;
      c.bandwidth[side_dims + d] = h;
    }

    // Kernel centres are bucketed into rows of one bandwidth along the
    // second coordinate and sorted by the first coordinate inside a row.
    c.row_dim = side_dims >= 2 ? 1 : -1;
    auto row_of = [&](const Eigen::VectorXd& v) {
      return c.row_dim < 0 ? 0L : static_cast<long>(std::floor(v[c.row_dim] / c.bandwidth[c.row_dim]));
    };
    std::vector<std::size_t> order = keep;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
      const long ri = row_of(s[i]), rj = row_of(s[j]);
      return ri != rj ? ri < rj : s[i][0] < s[j][0];
    });
    c.points.resize(dims, n);
    c.first.resize(keep.size());
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& v = s[order[k]];
      c.points.col(k) = v;
      c.first[k] = v[0];
      if (sources) {
        const Source src = (*sources)[bin][order[k]];
        c.source.push_back(src);
        ++c.item_count[src.first];
        if (src.second != src.first) ++c.item_count[src.second];
        ++c.pair_count[pair_key(src.first, src.second)];
      }
      const long r = row_of(v);
      if (c.rows.empty() || c.rows.back() != r) {
        c.rows.push_back(r);
        c.row_start.push_back(static_cast<std::size_t>(k));
      }
    }
    c.row_start.push_back(keep.size());
    model.z_ += c.weight;
    model.components_.push_back(std::move(c));
  }
  if (model.components_.empty()) throw std::invalid_argument("no samples to fit");
  return model;
}

std::size_t DensityModel::sample_count() const {
  std::size_t n = 0;
  for (const auto& c : components_) n += c.first.size();
  return n;
}

double DensityModel::component_sum(const Component& c, const Eigen::VectorXd& a, const Eigen::VectorXd* b,
                                   int skip_a, int skip_b) const {
  const bool skipping = !c.source.empty() && (skip_a >= 0 || skip_b >= 0);
  double count = static_cast<double>(c.first.size());
  if (skipping) {
    auto items = [&](int i) {
      const auto it = c.item_count.find(i);
      return i < 0 || it == c.item_count.end() ? 0 : it->second;
    };
    int dropped = items(skip_a) + (skip_b != skip_a ? items(skip_b) : 0);
    if (skip_a >= 0 && skip_b >= 0 && skip_a != skip_b) {
      const auto it = c.pair_count.find(pair_key(skip_a, skip_b));
      if (it != c.pair_count.end()) dropped -= it->second;
    }
    count -= dropped;
    if (count <= 0.0) return 0.0;
  }

  const double h0 = c.bandwidth[0];
  double norm = 1.0;
  const int dims = b ? 2 * side_dims_ : side_dims_;
  for (int d = 0; d < dims; ++d) norm *= c.bandwidth[d];

  long row_lo = 0, row_hi = 0;
  if (c.row_dim >= 0) {
    const double hr = c.bandwidth[c.row_dim];
    row_lo = static_cast<long>(std::floor((a[c.row_dim] - hr) / hr));
    row_hi = static_cast<long>(std::floor((a[c.row_dim] + hr) / hr));
  }
  double total = 0.0;
  auto row = std::lower_bound(c.rows.begin(), c.rows.end(), row_lo);
  for (; row != c.rows.end() && *row <= row_hi; ++row) {
    const auto r = static_cast<std::size_t>(row - c.rows.begin());
    const auto begin = c.first.begin() + static_cast<std::ptrdiff_t>(c.row_start[r]);
    const auto end = c.first.begin() + static_cast<std::ptrdiff_t>(c.row_start[r + 1]);
    const auto lo = std::lower_bound(begin, end, a[0] - h0);
    const auto hi = std::upper_bound(lo, end, a[0] + h0);
    for (auto it = lo; it != hi; ++it) {
      const auto k = static_cast<Eigen::Index>(it - c.first.begin());
      if (skipping) {
        const Source& src = c.source[static_cast<std::size_t>(k)];
        if (src.first == skip_a || src.first == skip_b || src.second == skip_a || src.second == skip_b) continue;
      }
      const double* p = c.points.col(k).data();
      double prod = 1.0;
      for (int d = 0; d < side_dims_ && prod > 0.0; ++d) prod *= epanechnikov((a[d] - p[d]) / c.bandwidth[d]);
      if (b) {
        for (int d = 0; d < side_dims_ && prod > 0.0; ++d) {
          prod *= epanechnikov(((*b)[d] - p[side_dims_ + d]) / c.bandwidth[side_dims_ + d]);
        }
      }
      total += prod;
    }
  }
  return total / (norm * count);
}

double DensityModel::joint(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return joint(a, b, -1, -1); }

double DensityModel::marginal(const Eigen::VectorXd& a) const { return marginal(a, -1); }

double DensityModel::joint(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int skip_a, int skip_b) const {
  if (a.size() != side_dims_ || b.size() != side_dims_) throw std::invalid_argument("dimension mismatch");
  // Canonical argument order makes the result exactly symmetric.
  const bool swap = lexicographic_less(b, a);
  const Eigen::VectorXd& first = swap ? b : a;
  const Eigen::VectorXd& second = swap ? a : b;
  const int skip_first = swap ? skip_b : skip_a;
  const int skip_second = swap ? skip_a : skip_b;
  double total = 0.0;
  for (const auto& c : components_) total += c.weight * component_sum(c, first, &second, skip_first, skip_second);
  return total / z_;
}

double DensityModel::marginal(const Eigen::VectorXd& a, int skip) const {
  if (a.size() != side_dims_) throw std::invalid_argument("dimension mismatch");
  double total = 0.0;
  for (const auto& c : components_) total += c.weight * component_sum(c, a, nullptr, skip, -1);
  return total / z_;
}

double DensityModel::joint(const FeatureVector& a, const FeatureVector& b) const {
  return joint(projector_.project(a), projector_.project(b));
}

double DensityModel::marginal(const FeatureVector& a) const { return marginal(projector_.project(a)); }

DensityModel fit_density(const std::vector<PairSample>& pairs, const std::vector<FeatureVector>& features,
                         int color_dims, const DensityParams& params) {
  if (pairs.size() < 2) {
    throw std::invalid_argument("fewer than two overlapping pairs; use uniform affinity");
  }
  FeatureProjector projector = fit_projector(features, color_dims);
  std::vector<Eigen::VectorXd> projected;
  projected.reserve(features.size());
  for (const auto& f : features) projected.push_back(projector.project(f));
  const int side = projector.dims();

  int bins = 0;
  for (const auto& p : pairs) bins = std::max(bins, p.bin + 1);
  std::vector<std::vector<std::pair<int, int>>> unordered(static_cast<std::size_t>(bins));
  for (const auto& p : pairs) {
    if (p.a < 0 || p.b < 0 || p.a >= static_cast<int>(features.size()) ||
        p.b >= static_cast<int>(features.size())) {
      throw std::out_of_range("pair index outside feature list");
    }
    unordered[p.bin].emplace_back(std::min(p.a, p.b), std::max(p.a, p.b));
  }

  // Both orders of each kept unordered pair, so the sample set is symmetric.
  std::vector<std::vector<Eigen::VectorXd>> samples(static_cast<std::size_t>(bins));
  std::vector<std::vector<DensityModel::Source>> sources(static_cast<std::size_t>(bins));
  const int cap = params.max_samples_per_bin > 0 ? std::max(1, params.max_samples_per_bin / 2) : 0;
  for (int bin = 0; bin < bins; ++bin) {
    auto& u = unordered[bin];
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    for (const std::size_t k : capped_indices(u.size(), cap, params.seed + 7919u * bin)) {
      const auto [i, j] = u[k];
      Eigen::VectorXd ab(2 * side), ba(2 * side);
      ab << projected[i], projected[j];
      ba << projected[j], projected[i];
      samples[bin].push_back(std::move(ab));
      samples[bin].push_back(std::move(ba));
      sources[bin].emplace_back(i, j);
      sources[bin].emplace_back(j, i);
    }
  }
  DensityParams inner = params;
  inner.max_samples_per_bin = 0;
  DensityModel model = DensityModel::fit(samples, side, inner, &sources);
  model.set_projector(std::move(projector));
  return model;
}

double pmi(const DensityModel& model, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double rho) {
  const double joint = std::max(model.joint(a, b), kDensityFloor);
  const double pa = std::max(model.marginal(a), kDensityFloor);
  const double pb = std::max(model.marginal(b), kDensityFloor);
  return rho * std::log(joint) - (std::log(pa) + std::log(pb));
}

double pmi(const DensityModel& model, const FeatureVector& a, const FeatureVector& b, double rho) {
  return pmi(model, model.projector().project(a), model.projector().project(b), rho);
}

Eigen::MatrixXd affinity_matrix(const std::vector<FeatureVector>& features, const std::vector<Box>& boxes,
                                const DensityModel& model, double rho) {
  if (features.size() != boxes.size()) throw std::invalid_argument("features and boxes differ in count");
  const auto n = static_cast<Eigen::Index>(features.size());
  std::vector<Eigen::VectorXd> projected;
  projected.reserve(features.size());
  for (const auto& f : features) projected.push_back(model.projector().project(f));
  std::vector<double> marginals(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    marginals[i] = std::log(std::max(model.marginal(projected[i], static_cast<int>(i)), kDensityFloor));
  }

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (intersection_area(boxes[i], boxes[j]) <= 0) continue;
      const double joint = std::max(
          model.joint(projected[i], projected[j], static_cast<int>(i), static_cast<int>(j)), kDensityFloor);
      const double value = std::exp(rho * std::log(joint) - marginals[i] - marginals[j]);
      w(i, j) = value;
      w(j, i) = value;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) w(i, i) = w.row(i).maxCoeff();
  return w;
}

Eigen::MatrixXd uniform_affinity(const std::vector<Box>& boxes) {
  const auto n = static_cast<Eigen::Index>(boxes.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      if (intersection_area(boxes[i], boxes[j]) > 0) {
        w(i, j) = 1.0;
        w(j, i) = 1.0;
      }
    }
  }
  return w;
}

}  // namespace overlap
