#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace overlap {

// Error families surfaced by the command-line front end as distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Axis-aligned integer box. (x, y) is the top-left pixel; the box covers
/// columns [x, x + w) and rows [y, y + h).
struct Box {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  Box() = default;
  Box(int x_, int y_, int w_, int h_);

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  long long area() const { return static_cast<long long>(w) * h; }

  bool operator==(const Box&) const = default;
};

/// Real-valued (center_x, center_y, h, w) location used by Gaussian fits.
struct BoxQuad {
  double cx = 0.0;
  double cy = 0.0;
  double h = 0.0;
  double w = 0.0;
};

BoxQuad to_quad(const Box& b);
/// Rounds to the nearest integer box; w and h are floored at 1 pixel.
Box from_quad(const BoxQuad& q);

long long intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
bool contains(const Box& outer, const Box& inner);
bool within_frame(const Box& b, int width, int height);
/// Intersection of b with the frame, keeping at least one pixel in each
/// dimension. Sets *clamped when the box changed.
Box clamp_to_frame(const Box& b, int width, int height, bool* clamped = nullptr);

/// Dense row-major float field (edge maps, priors, masks).
class Field2D {
 public:
  Field2D() = default;
  Field2D(int width, int height, float fill = 0.0f);
  Field2D(int width, int height, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float operator()(int x, int y) const { return data_[index(x, y)]; }
  float& operator()(int x, int y) { return data_[index(x, y)]; }
  float clamped(int x, int y) const;

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  float max_value() const;
  double sum() const;
  bool same_shape(const Field2D& o) const { return width_ == o.width_ && height_ == o.height_; }

  bool operator==(const Field2D&) const = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

/// 8-bit RGB frame, row-major interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t at(int x, int y, int c) const { return pixels_[offset(x, y) + c]; }
  std::uint8_t& at(int x, int y, int c) { return pixels_[offset(x, y) + c]; }
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  std::span<const std::uint8_t> bytes() const { return pixels_; }
  std::span<std::uint8_t> bytes() { return pixels_; }

  /// Luma in [0, 1].
  Field2D gray() const;
  Field2D channel(int c) const;

  bool operator==(const Image&) const = default;

 private:
  std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width_ + x) * 3; }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Summed-area table with a zero first row and column, accumulated in double.
class IntegralImage {
 public:
  explicit IntegralImage(const Field2D& f);
  /// Row-major values, width * height of them.
  IntegralImage(int width, int height, const std::vector<double>& values);

  int width() const { return width_; }
  int height() const { return height_; }

  /// Sum over the half-open pixel rectangle [x0, x1) x [y0, y1).
  double sum(int x0, int y0, int x1, int y1) const {
    const auto s = static_cast<std::size_t>(width_ + 1);
    return table_[y1 * s + x1] - table_[y0 * s + x1] - table_[y1 * s + x0] + table_[y0 * s + x0];
  }

  double at(int x, int y) const { return table_[static_cast<std::size_t>(y) * (width_ + 1) + x]; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> table_;
};

IntegralImage integral_image(const Field2D& f);
/// Throws std::out_of_range when b is not inside the source field.
double box_sum(const IntegralImage& ii, const Box& b);

}  // namespace overlap
