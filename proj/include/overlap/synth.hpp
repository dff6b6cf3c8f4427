#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "overlap/core.hpp"
#include "overlap/motion.hpp"

namespace overlap {

struct SynthObject {
  /// Palette color name; also the ground-truth class.
  std::string color = "red";
  /// "rect" or "ellipse".
  std::string shape = "rect";
  int width = 30;
  int height = 30;
  /// Top-left corner at the entry frame.
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  int enter = 0;
  /// First frame without the object; -1 keeps it to the end.
  int exit = -1;
};

struct SyntheticSpec {
  int frames = 9;
  int width = 160;
  int height = 120;
  std::uint64_t seed = 1;
  /// Peak deviation of the background texture from mid gray.
  int texture = 20;
  std::vector<SynthObject> objects;

  /// Throws ConfigError on an invalid spec.
  void validate() const;
};

SyntheticSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json synth_spec_to_json(const SyntheticSpec& spec);

struct GtObject {
  int id = 0;
  std::string class_name;
  Box box;
};

struct GroundTruth {
  int width = 0;
  int height = 0;
  /// Visible objects per frame.
  std::vector<std::vector<GtObject>> frames;
};

nlohmann::json ground_truth_to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const nlohmann::json& j);
GroundTruth load_ground_truth(const std::filesystem::path& path);

struct SyntheticVideo {
  std::vector<Image> frames;
  /// flows[t] is the exact forward motion from frame t to t + 1.
  std::vector<FlowField> flows;
  GroundTruth truth;
  /// masks[t][k] is the visible mask of truth.frames[t][k].
  std::vector<std::vector<Field2D>> masks;
};

/// Textured static background with moving, textured palette-colored objects.
/// Objects are drawn in spec order, later ones on top; positions are the
/// rounded linear trajectories.
SyntheticVideo render_synthetic(const SyntheticSpec& spec);

/// frames/frame_NNNN.ppm, flow/flow_NNNN.flo, masks/mask_NNNN_ID.pgm and gt.json.
void write_synthetic(const SyntheticVideo& video, const std::filesystem::path& dir);

}  // namespace overlap
