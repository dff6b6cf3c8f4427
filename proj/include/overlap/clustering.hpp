#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "overlap/affinity.hpp"

namespace overlap {

/// Half-open frame range [begin, end).
struct FrameRange {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool operator==(const FrameRange&) const = default;
};

/// Ranges of length L where each one starts on the last frame of the
/// previous one; the final range is cut at frame_count and always spans at
/// least 2 frames. A video shorter than L is a single range.
std::vector<FrameRange> make_subsequences(int frame_count, int subseq_len);

struct KMeansParams {
  std::uint64_t seed = 0;
  int restarts = 8;
  int max_iterations = 100;
};

/// k-means with k-means++ seeding on the rows of points. Labels are
/// renumbered in order of first appearance; the best of the restarts by
/// inertia wins.
std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, const KMeansParams& params = {});

/// Normalized spectral embedding: row-normalized leading k eigenvectors of
/// D^-1/2 W D^-1/2, then k-means. With fewer than k points each point gets
/// its own label.
std::vector<int> spectral_cluster_fixed(const Eigen::MatrixXd& w, int k, const KMeansParams& params = {});

struct SelfTuneParams {
  int neighbor = 7;
  int max_clusters = 5;
  KMeansParams kmeans;
};

/// Local-scaling spectral clustering on a pairwise distance matrix
/// (infinite entries mean no affinity). The cluster count in
/// [1, max_clusters] maximizes the eigengap.
std::vector<int> spectral_cluster_selftune_distances(const Eigen::MatrixXd& distances,
                                                     const SelfTuneParams& params = {});
/// Distances d_ij^2 = log(max W) - log(W_ij) from an affinity matrix.
std::vector<int> spectral_cluster_selftune(const Eigen::MatrixXd& w, const SelfTuneParams& params = {});
/// Euclidean distances between the rows of points.
std::vector<int> spectral_cluster_selftune_points(const Eigen::MatrixXd& points,
                                                  const SelfTuneParams& params = {});

inline constexpr int kDescriptorMaxDims = 8;
inline constexpr double kDescriptorMinBandwidth = 0.05;
inline constexpr double kDescriptorBandwidthScale = 2.0;

/// Kernel density over a cluster's scaled 49-D features, reduced by PCA to
/// min(8, members - 1) principal axes. A singleton keeps one coordinate,
/// the distance to its only member.
struct ClusterDescriptor {
  Eigen::VectorXd mean;
  /// Columns are principal axes in the scaled feature space.
  Eigen::MatrixXd basis;
  /// One column per member, reduced coordinates.
  Eigen::MatrixXd samples;
  /// Member weights summing to 1.
  Eigen::VectorXd weights;
  Eigen::VectorXd bandwidth;
  /// Scaled 49-D members, kept for projection into another basis.
  Eigen::MatrixXd raw;
  std::vector<int> members;

  int dims() const { return static_cast<int>(samples.rows()); }
  int size() const { return static_cast<int>(samples.cols()); }
  /// A single member gives a point mass (zero principal axes).
  bool degenerate() const { return basis.cols() == 0; }

  Eigen::MatrixXd reduce(const Eigen::MatrixXd& scaled) const;
  double density(const Eigen::VectorXd& x) const;
};

/// Weights (uniform when empty) scale each member's kernel; they also weight
/// the mean, the principal axes and the bandwidth.
ClusterDescriptor cluster_descriptor(const std::vector<FeatureVector>& members,
                                     std::vector<int> member_ids = {}, const std::vector<double>& weights = {});

/// Monte Carlo KL(p || q) over p's members (weighted as in p), both
/// densities taken in q's reduced basis. Clamped at 0.
double kl_divergence(const ClusterDescriptor& p, const ClusterDescriptor& q);

struct RegistryEntry {
  int id = -1;
  ClusterDescriptor descriptor;
  /// Class index once classified; 0 is background.
  std::optional<int> label;
  double confidence = 0.0;
  /// Detected box quadruple minus the location mean (cx, cy, h, w).
  std::optional<std::array<double, 4>> offset;
  int first_seen = -1;
  int last_seen = -1;
};

/// Global cluster identities for one video. Ids are issued in increasing
/// order and never reused.
class ClusterRegistry {
 public:
  int create(ClusterDescriptor descriptor, int subsequence);
  bool contains(int id) const { return entries_.count(id) != 0; }
  RegistryEntry& at(int id);
  const RegistryEntry& at(int id) const;
  /// Ids last seen in the given sub-sequence, ascending.
  std::vector<int> seen_in(int subsequence) const;
  int next_id() const { return next_id_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<int, RegistryEntry> entries_;
  int next_id_ = 0;
};

struct Association {
  std::vector<int> global_ids;
  std::vector<bool> is_new;
  /// KL to the matched cluster, or the smallest KL seen for new clusters
  /// (infinity when there was nothing to compare with).
  std::vector<double> kl;
};

/// Mean of the two KL directions.
double association_cost(const ClusterDescriptor& current, const ClusterDescriptor& previous);

/// Greedy one-to-one matching of the current clusters against the clusters
/// seen in the previous sub-sequence, in ascending (cost, global id) order.
/// Matches below tau_kl keep their id; the rest get fresh ids. The registry
/// is updated with the current descriptors.
Association associate_clusters(std::vector<ClusterDescriptor> current, ClusterRegistry& registry,
                               double tau_kl, int subsequence);

}  // namespace overlap
