#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "overlap/core.hpp"

namespace overlap {

/// Dense forward flow: frame t pixel p moves to p + (u, v) in frame t + 1.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  float u(int x, int y) const { return u_[index(x, y)]; }
  float v(int x, int y) const { return v_[index(x, y)]; }
  void set(int x, int y, float u, float v) {
    u_[index(x, y)] = u;
    v_[index(x, y)] = v;
  }

  bool operator==(const FlowField&) const = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> u_;
  std::vector<float> v_;
};

/// Middlebury .flo magic tag ("PIEH" read as a little-endian float).
inline constexpr float kFloMagic = 202021.25f;

FlowField load_flow(const std::filesystem::path& path);
/// Also checks the flow dimensions against the frame it belongs to.
FlowField load_flow(const std::filesystem::path& path, int expected_width, int expected_height);
void save_flow(const std::filesystem::path& path, const FlowField& flow);

/// Exhaustive integer block matching minimizing the SAD over a block x block
/// window. Ties go to the smallest displacement, then lexicographic (u, v).
FlowField block_matching_flow(const Field2D& first, const Field2D& second, int search_radius,
                              int block);

/// Nearest-neighbor resample; vectors are rescaled to the new pixel grid.
FlowField resize_flow(const FlowField& flow, int width, int height);

struct MotionParams {
  double alpha_magnitude = 1.0;
  double alpha_direction = 0.5;
  double boundary_threshold = 0.5;
  /// Vectors shorter than this carry no reliable direction.
  double min_direction_magnitude = 0.5;
};

/// b(p) = 1 - exp(-(a_m |grad u| + a_d dtheta)), rescaled so the maximum is 1.
Field2D motion_boundary(const FlowField& flow, const MotionParams& params = {});

/// 1 inside, 0 outside. A pixel is inside when at least 5 of 8 rays cross the
/// thresholded boundary an odd number of times; boundary pixels are outside.
Field2D inside_outside_map(const Field2D& boundary, double threshold);

struct LocationPrior {
  Field2D values;
  int frame_index = 0;
  int accumulated_frames = 0;
};

LocationPrior accumulate_prior(std::span<const Field2D> masks, int frame_index = 0);

/// Normalized central-difference gradient magnitude of the prior.
Field2D temporal_edge(const LocationPrior& prior);

}  // namespace overlap
