#pragma once

#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "overlap/core.hpp"
#include "overlap/edges.hpp"

namespace overlap {

struct Proposal {
  Box box;
  double score = 0.0;
  int frame = 0;

  bool operator==(const Proposal&) const = default;
};

struct ProposalParams {
  int max_proposals = 500;
  /// IoU between neighboring sliding-window candidates.
  double step_iou = 0.65;
  double nms_beta = 0.75;
  double kappa = 1.5;
  double min_box_area = 1000.0;
  double max_aspect_ratio = 3.0;
  double edge_threshold = 0.1;
  /// Exponent on the collinearity affinity between neighboring groups.
  double affinity_gamma = 2.0;
  double min_score = 1e-4;
  /// Only this many of the best initial candidates are locally refined.
  int refine_limit = 2000;
};

/// Path weights from a straddling group below this are dropped.
inline constexpr double kMinPathWeight = 0.05;

/// Affinity-weighted adjacency between edge groups within 2 pixels of each
/// other: a = |cos(t_i - t_ij) cos(t_j - t_ij)|^gamma.
struct GroupGraph {
  std::vector<std::vector<std::pair<int, double>>> neighbors;
};

GroupGraph group_affinities(const std::vector<EdgeGroup>& groups, int width, int height,
                            double gamma);

/// Group g is inside box b when its bounding box avoids b's 1-pixel border.
bool group_inside(const Box& group_bounds, const Box& b);
/// Group bounding box meets b but is not inside it.
bool group_straddles(const Box& group_bounds, const Box& b);

/// Integral-image box scorer over one combined edge map.
///
/// score(b) = max(0, sum_inside (1 - s_b(g)) m_g - sum_center E) / (2 (w + h))^kappa
///
/// where s_b(g) is the strongest affinity-path product from a straddling
/// group to g through groups inside b, and the center term sums thresholded
/// edge magnitude over the centered box of half width and height.
///
/// Holds scratch state: one scorer per thread.
class BoxScorer {
 public:
  BoxScorer(const Field2D& edges, std::vector<EdgeGroup> groups, const ProposalParams& params);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<EdgeGroup>& groups() const { return groups_; }
  const GroupGraph& graph() const { return graph_; }
  double kappa() const { return kappa_; }
  double edge_threshold() const { return threshold_; }

  /// Throws std::out_of_range for boxes outside the frame.
  double score(const Box& b) const;
  /// Score without straddling subtraction; never below score(b).
  double upper_bound(const Box& b) const;

 private:
  double center_sum(const Box& b) const;
  double normalizer(const Box& b) const;

  int width_;
  int height_;
  double kappa_;
  double threshold_;
  std::vector<EdgeGroup> groups_;
  GroupGraph graph_;
  IntegralImage seed_mass_;
  IntegralImage magnitude_;
  std::vector<std::vector<int>> row_groups_;
  std::vector<std::vector<int>> col_groups_;

  mutable std::vector<std::uint32_t> stamp_;
  mutable std::vector<double> weight_;
  mutable std::uint32_t stamp_id_ = 0;
};

double score_box(const Box& b, const BoxScorer& scorer);

/// Candidate windows covering scales from min_box_area to the frame and
/// aspect ratios up to max_aspect_ratio, spaced at step_iou.
std::vector<Box> sliding_windows(int width, int height, const ProposalParams& params);

/// Greedy NMS: keeps the best remaining proposal and drops any with IoU > beta
/// against a kept one. Output is sorted by descending score (stable).
std::vector<Proposal> nms(std::vector<Proposal> proposals, double beta,
                          std::size_t limit = std::numeric_limits<std::size_t>::max());

std::vector<Proposal> generate_proposals(const BoxScorer& scorer, const ProposalParams& params,
                                         int frame_index);
std::vector<Proposal> generate_proposals(const Field2D& edges, const std::vector<EdgeGroup>& groups,
                                         const ProposalParams& params, int frame_index);

}  // namespace overlap
