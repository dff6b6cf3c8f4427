#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "overlap/clustering.hpp"
#include "overlap/config.hpp"
#include "overlap/pipeline.hpp"

namespace overlap {

struct PaletteColor {
  std::string name;
  std::array<std::uint8_t, 3> rgb;
};

/// Saturated object colors used by the synthetic generator and the
/// color-rule classifier. Class index i + 1 is palette()[i].
const std::vector<PaletteColor>& palette();

struct ClassifyRequest {
  int frame = 0;
  const Image* image = nullptr;
  std::filesystem::path frame_path;
  /// Boxes at processing resolution and in original frame coordinates.
  std::vector<Box> boxes;
  std::vector<Box> original_boxes;
};

/// Scores C object classes plus background (index 0) for every box.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int class_count() const = 0;
  virtual std::vector<std::vector<double>> classify(const ClassifyRequest& request) = 0;
};

/// Dominant-color rule: with n_c pixels of palette color c inside the box,
/// A its area and N_c the frame's pixels of color c,
/// score_c = (n_c / A) (n_c / N_c); background = 1 - max_c score_c.
class ColorRuleClassifier : public Classifier {
 public:
  explicit ColorRuleClassifier(int tolerance = 48);
  int class_count() const override { return static_cast<int>(palette().size()); }
  std::vector<std::vector<double>> classify(const ClassifyRequest& request) override;

 private:
  int tolerance_;
};

/// External process speaking JSON lines: one request
/// {"frame", "frame_path", "boxes": [[x, y, w, h], ...]} per line on its stdin,
/// one response {"scores": [[...], ...]} per line on its stdout. Boxes are in
/// original frame coordinates. Failures raise ProtocolError.
class CommandClassifier : public Classifier {
 public:
  CommandClassifier(const std::string& command, int class_count);
  ~CommandClassifier() override;
  CommandClassifier(const CommandClassifier&) = delete;
  CommandClassifier& operator=(const CommandClassifier&) = delete;

  int class_count() const override { return class_count_; }
  std::vector<std::vector<double>> classify(const ClassifyRequest& request) override;

 private:
  void shutdown();

  int class_count_;
  int pid_ = -1;
  int to_child_ = -1;
  std::FILE* from_child_ = nullptr;
};

/// Resolves "oracle", "always" (oracle) or "cmd:PATH".
std::unique_ptr<Classifier> make_classifier(const PipelineConfig& config);

/// 4-D Gaussian over (cx, cy, h, w).
struct LocationModel {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
};

using Offset = std::array<double, 4>;

/// Sample mean and covariance of the box quadruples plus sigma^2 I.
LocationModel fit_location_gaussian(const std::vector<Box>& boxes, double sigma = 1.0);

/// d = quad(detected) - mean, stored on the registry entry. Throws
/// std::out_of_range for unknown ids.
Offset record_offset(ClusterRegistry& registry, int global_id, const Box& detected, const LocationModel& model);

/// Box of quadruple mean + d, clamped to the frame.
Box propagate_localization(const LocationModel& model, const Offset& d, int width, int height,
                           bool* clamped = nullptr);

enum class Provenance { Classified, Propagated };

const char* to_string(Provenance p);

struct Detection {
  int frame = 0;
  /// Original frame coordinates.
  Box box;
  int class_index = 0;
  std::string class_name;
  double confidence = 0.0;
  Provenance provenance = Provenance::Classified;
  int global_id = -1;
};

struct DetectStats {
  long long total_windows = 0;
  long long classified_windows = 0;
  int clusters_created = 0;
};

/// Throws std::invalid_argument when no windows were counted.
double classification_fraction(const DetectStats& stats);

struct ClassifierCall {
  int subsequence = 0;
  int frame = 0;
  int global_id = -1;
  int windows = 0;
};

struct DetectResult {
  std::vector<std::vector<Detection>> per_frame;
  DetectStats stats;
  std::vector<ClassifierCall> calls;
  std::vector<SubsequenceClusters> subsequences;
};

struct DetectOptions {
  /// Classify every cluster of every sub-sequence instead of new ones only.
  bool classify_all = false;
  /// Receives each sub-sequence's detections as soon as they are final.
  std::function<void(const std::vector<Detection>&)> sink;
};

/// The streaming detection loop over precomputed per-frame proposals.
DetectResult detect_stream(const Video& video, const std::vector<std::vector<Proposal>>& proposals,
                           const PipelineConfig& config, Classifier& classifier, const DetectOptions& options = {});

DetectResult detect_stream(const Video& video, const PipelineConfig& config, Classifier& classifier,
                           const DetectOptions& options = {});

}  // namespace overlap
