#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "overlap/core.hpp"

namespace overlap {

inline constexpr int kHistBins = 15;
inline constexpr int kHistDims = 3 * kHistBins;
inline constexpr int kLocationDims = 4;
inline constexpr int kFeatureDims = kHistDims + kLocationDims;
/// Histogram entries are multiplied by this before density estimation so one
/// bin spans a range comparable to the location coordinates.
inline constexpr double kHistScale = 15.0;
inline constexpr double kDensityFloor = 1e-12;

/// 45-bin RGB histogram (15 per channel, each summing to 1) and the box
/// location (cx / W, cy / H, h / H, w / W).
struct FeatureVector {
  std::array<double, kHistDims> color_hist{};
  std::array<double, kLocationDims> location{};

  /// Concatenation [hist * kHistScale, location].
  Eigen::VectorXd scaled() const;
};

/// Throws std::out_of_range when the box leaves the frame.
FeatureVector extract_features(const Image& frame, const Box& box);

/// An overlapping pair of windows, by index into the sub-sequence's proposal list.
struct PairSample {
  int a = 0;
  int b = 0;
  double u = 0.0;
  int bin = 0;
};

inline constexpr int kOverlapBins = 10;

/// Every ordered pair (i, j), i != j, with IoU > 0; each unordered pair
/// appears in both orders.
std::vector<PairSample> collect_pairs(const std::vector<Box>& boxes, int bins = kOverlapBins);

/// Location plus the leading principal components of the scaled histograms.
class FeatureProjector {
 public:
  FeatureProjector() = default;
  FeatureProjector(Eigen::VectorXd mean, Eigen::MatrixXd basis);

  int dims() const { return kLocationDims + static_cast<int>(basis_.cols()); }
  Eigen::VectorXd project(const FeatureVector& f) const;

 private:
  Eigen::VectorXd mean_ = Eigen::VectorXd::Zero(kHistDims);
  Eigen::MatrixXd basis_ = Eigen::MatrixXd::Zero(kHistDims, 0);
};

FeatureProjector fit_projector(const std::vector<FeatureVector>& features, int color_dims = 1);

struct DensityParams {
  /// Largest number of kernel centres kept per overlap bin; 0 keeps all.
  int max_samples_per_bin = 400;
  double min_bandwidth = 0.01;
  std::uint64_t seed = 0;
};

/// Mixture over overlap bins of product-Epanechnikov kernel estimates on
/// joint samples [A, B]. Each non-empty bin carries unit weight and
/// Z is the total weight, so the mixture integrates to 1. The marginal is
/// the exact marginal of the same mixture.
///
/// Samples may carry the indices of the two items they were built from.
/// Evaluations can then leave out every sample built from given items, which
/// removes the bias of a kernel sitting on its own evaluation point.
class DensityModel {
 public:
  using Source = std::pair<int, int>;

  /// samples[bin] holds joint vectors of length 2 * side_dims; sources, when
  /// given, has the same shape.
  static DensityModel fit(const std::vector<std::vector<Eigen::VectorXd>>& samples, int side_dims,
                          const DensityParams& params = {},
                          const std::vector<std::vector<Source>>* sources = nullptr);

  int side_dims() const { return side_dims_; }
  double normalizer() const { return z_; }
  std::size_t sample_count() const;
  const FeatureProjector& projector() const { return projector_; }
  void set_projector(FeatureProjector p) { projector_ = std::move(p); }

  double joint(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  double marginal(const Eigen::VectorXd& a) const;

  /// Leave-out evaluation: samples built from item skip_a or skip_b (or
  /// skip) are dropped and each bin is renormalized over the rest.
  double joint(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int skip_a, int skip_b) const;
  double marginal(const Eigen::VectorXd& a, int skip) const;

  double joint(const FeatureVector& a, const FeatureVector& b) const;
  double marginal(const FeatureVector& a) const;

 private:
  struct Component {
    double weight = 1.0;
    Eigen::VectorXd bandwidth;
    // Joint samples as columns, grouped into rows along row_dim and sorted
    // by first coordinate within a row.
    Eigen::MatrixXd points;
    std::vector<double> first;
    int row_dim = -1;
    std::vector<long> rows;
    std::vector<std::size_t> row_start;
    // Empty when the model was fitted without sources.
    std::vector<Source> source;
    std::unordered_map<int, int> item_count;
    std::unordered_map<std::uint64_t, int> pair_count;
  };

  double component_sum(const Component& c, const Eigen::VectorXd& a, const Eigen::VectorXd* b, int skip_a,
                       int skip_b) const;

  int side_dims_ = 0;
  double z_ = 0.0;
  std::vector<Component> components_;
  FeatureProjector projector_;
};

/// Projects features (projector fitted on this set) and fits the mixture.
/// Throws std::invalid_argument with fewer than two pairs; callers fall back
/// to uniform_affinity.
DensityModel fit_density(const std::vector<PairSample>& pairs, const std::vector<FeatureVector>& features,
                         int color_dims = 1, const DensityParams& params = {});

/// log(max(P(A,B), eps)^rho / (max(P(A), eps) max(P(B), eps))); symmetric in A and B.
double pmi(const DensityModel& model, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double rho);
double pmi(const DensityModel& model, const FeatureVector& a, const FeatureVector& b, double rho);

/// W_ij = exp(PMI) where boxes i and j overlap, 0 otherwise; W_ii = max_j W_ij.
Eigen::MatrixXd affinity_matrix(const std::vector<FeatureVector>& features, const std::vector<Box>& boxes,
                                const DensityModel& model, double rho);

/// 1 where boxes overlap (including the diagonal), 0 elsewhere.
Eigen::MatrixXd uniform_affinity(const std::vector<Box>& boxes);

}  // namespace overlap
