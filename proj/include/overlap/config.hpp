#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "overlap/motion.hpp"
#include "overlap/proposals.hpp"

namespace overlap {

/// Every knob of the pipeline. Validated ranges are enforced by validate().
struct PipelineConfig {
  double lambda = 0.3;
  int subseq_len = 3;
  /// Fixed cluster count; ignored when self_tune is set.
  int k = 5;
  bool self_tune = false;
  double rho = 1.2;
  double tau_kl = 3.0;
  int max_proposals = 500;
  double nms_beta = 0.75;
  /// "oracle", "always" or "cmd:PATH".
  std::string classifier = "oracle";
  std::uint64_t seed = 0;
  /// Frames are resized to this before processing; 0 keeps the input size.
  int resize_width = 500;
  int resize_height = 500;

  double edge_sigma = 1.5;
  double edge_threshold = 0.1;
  double kappa = 1.5;
  double min_box_area = 1000.0;
  double max_aspect_ratio = 3.0;
  double step_iou = 0.65;
  MotionParams motion;
  /// Inside-outside maps averaged per frame, centered on it.
  int prior_frames = 3;
  int flow_search_radius = 6;
  int flow_block = 7;
  /// Threads for per-frame preprocessing; 0 picks the hardware count, capped at 8.
  int workers = 0;

  int color_dims = 1;
  int overlap_bins = 10;
  int max_density_samples = 400;
  int selftune_neighbor = 7;
  int max_clusters = 5;

  double confidence_threshold = 0.5;
  /// Class-aware suppression between detections of one frame.
  double detection_nms = 0.5;
  std::vector<std::string> classes = {"red", "green", "blue", "yellow", "magenta", "cyan"};

  double mask_threshold = 0.5;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  ProposalParams proposal_params() const;
};

/// Reads a JSON object; unknown keys are rejected. Missing keys keep defaults.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const PipelineConfig& c);

}  // namespace overlap
