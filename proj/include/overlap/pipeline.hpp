#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "overlap/affinity.hpp"
#include "overlap/clustering.hpp"
#include "overlap/config.hpp"
#include "overlap/edges.hpp"
#include "overlap/motion.hpp"
#include "overlap/proposals.hpp"

namespace overlap {

/// Frames at processing resolution plus the forward flow between them.
struct Video {
  std::vector<Image> frames;
  /// flows[t] maps frame t to frame t + 1; size is frames.size() - 1.
  std::vector<FlowField> flows;
  std::vector<std::filesystem::path> frame_paths;
  /// Precomputed spatial edges replacing the built-in detector, one per frame.
  std::vector<EdgeResponse> external_edges;
  int original_width = 0;
  int original_height = 0;

  int width() const { return frames.empty() ? 0 : frames.front().width(); }
  int height() const { return frames.empty() ? 0 : frames.front().height(); }
  int size() const { return static_cast<int>(frames.size()); }
};

/// Resizes frames (and any supplied flow) to the configured target and
/// fills in block-matching flow when none is given.
Video make_video(std::vector<Image> frames, std::vector<FlowField> flows, const PipelineConfig& config);

/// Frames are the sorted *.ppm files of frames_dir; flow_dir, when given,
/// holds the sorted *.flo files (one per consecutive frame pair, a trailing
/// extra file is ignored) matching the original frame size.
Video load_video(const std::filesystem::path& frames_dir, const std::optional<std::filesystem::path>& flow_dir,
                 const PipelineConfig& config);

/// Reads one *.pgm edge map per frame; maps must match the original frame size.
void attach_edge_maps(Video& video, const std::filesystem::path& edges_dir);

/// Maps a box at processing resolution back to original frame coordinates.
Box to_original(const Video& video, const Box& b);

struct FrameEdges {
  EdgeResponse spatial;
  EdgeResponse temporal;
  EdgeResponse combined;
  Field2D inside;
};

/// Inside-outside map of every frame from its motion boundary.
std::vector<Field2D> inside_outside_maps(const Video& video, const PipelineConfig& config);

/// Spatial, temporal and combined edges of frame t, given all inside maps.
FrameEdges frame_edges(const Video& video, const std::vector<Field2D>& inside, int t,
                       const PipelineConfig& config);

/// Ranked video object proposals for every frame.
std::vector<std::vector<Proposal>> video_proposals(const Video& video, const PipelineConfig& config);

struct SubsequenceClusters {
  int index = 0;
  FrameRange range;
  /// Proposals of every frame in the range, frame by frame.
  std::vector<Proposal> proposals;
  std::vector<FeatureVector> features;
  Eigen::MatrixXd affinity;
  bool uniform_affinity = false;
  /// Local cluster label per proposal.
  std::vector<int> labels;
  int cluster_count = 0;
  /// Per local cluster.
  std::vector<int> global_ids;
  std::vector<bool> is_new;
  std::vector<double> kl;

  std::vector<int> members(int cluster) const;
  std::vector<int> members(int cluster, int frame) const;
  /// Frames this sub-sequence reports; the shared first frame belongs to the
  /// previous one.
  int first_output_frame() const { return index == 0 ? range.begin : range.begin + 1; }
};

/// Clusters one sub-sequence after another and keeps cluster identities in a
/// registry across them.
class StreamingClusterer {
 public:
  explicit StreamingClusterer(PipelineConfig config);

  SubsequenceClusters process(int index, FrameRange range, const std::vector<std::vector<Proposal>>& proposals,
                              const Video& video);

  ClusterRegistry& registry() { return registry_; }
  const ClusterRegistry& registry() const { return registry_; }

 private:
  PipelineConfig config_;
  ClusterRegistry registry_;
};

/// Local cluster labels for one affinity matrix under the configured mode.
std::vector<int> cluster_affinity(const Eigen::MatrixXd& w, const PipelineConfig& config);

}  // namespace overlap
