#include "overlap/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace overlap {

Box::Box(int x_, int y_, int w_, int h_) : x(x_), y(y_), w(w_), h(h_) {
  if (w_ <= 0 || h_ <= 0) {
    throw std::invalid_argument("box must have positive width and height");
  }
}

BoxQuad to_quad(const Box& b) {
  return {b.x + b.w / 2.0, b.y + b.h / 2.0, static_cast<double>(b.h), static_cast<double>(b.w)};
}

Box from_quad(const BoxQuad& q) {
  const int w = std::max(1, static_cast<int>(std::lround(q.w)));
  const int h = std::max(1, static_cast<int>(std::lround(q.h)));
  const int x = static_cast<int>(std::lround(q.cx - w / 2.0));
  const int y = static_cast<int>(std::lround(q.cy - h / 2.0));
  return {x, y, w, h};
}

long long intersection_area(const Box& a, const Box& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return 0;
  return static_cast<long long>(x1 - x0) * (y1 - y0);
}

double iou(const Box& a, const Box& b) {
  const long long inter = intersection_area(a, b);
  if (inter == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(a.area() + b.area() - inter);
}

bool contains(const Box& outer, const Box& inner) {
  return inner.x >= outer.x && inner.y >= outer.y && inner.right() <= outer.right() &&
         inner.bottom() <= outer.bottom();
}

bool within_frame(const Box& b, int width, int height) {
  return b.x >= 0 && b.y >= 0 && b.right() <= width && b.bottom() <= height;
}

Box clamp_to_frame(const Box& b, int width, int height, bool* clamped) {
  int x0 = std::clamp(b.x, 0, width - 1);
  int y0 = std::clamp(b.y, 0, height - 1);
  int x1 = std::clamp(b.right(), x0 + 1, width);
  int y1 = std::clamp(b.bottom(), y0 + 1, height);
  Box out{x0, y0, x1 - x0, y1 - y0};
  if (clamped) *clamped = !(out == b);
  return out;
}

Field2D::Field2D(int width, int height, float fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw std::invalid_argument("negative field dimensions");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

Field2D::Field2D(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 0 || height < 0 || data_.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("field data length does not match dimensions");
  }
}

float Field2D::clamped(int x, int y) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return data_[index(x, y)];
}

float Field2D::max_value() const {
  if (data_.empty()) return 0.0f;
  return *std::max_element(data_.begin(), data_.end());
}

double Field2D::sum() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0,
                         [](double acc, float v) { return acc + static_cast<double>(v); });
}

Image::Image(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
  pixels_.assign(static_cast<std::size_t>(width) * height * 3, 0);
}

void Image::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const auto o = offset(x, y);
  pixels_[o] = r;
  pixels_[o + 1] = g;
  pixels_[o + 2] = b;
}

Field2D Image::gray() const {
  Field2D out(width_, height_);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const auto o = offset(x, y);
      out(x, y) = static_cast<float>((0.299 * pixels_[o] + 0.587 * pixels_[o + 1] +
                                      0.114 * pixels_[o + 2]) / 255.0);
    }
  }
  return out;
}

Field2D Image::channel(int c) const {
  Field2D out(width_, height_);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) out(x, y) = pixels_[offset(x, y) + c] / 255.0f;
  }
  return out;
}

IntegralImage::IntegralImage(const Field2D& f)
    : IntegralImage(f.width(), f.height(), std::vector<double>(f.data().begin(), f.data().end())) {}

IntegralImage::IntegralImage(int width, int height, const std::vector<double>& values)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("integral image of an empty field");
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("integral image values do not match the dimensions");
  }
  const auto s = static_cast<std::size_t>(width_ + 1);
  table_.assign(s * (height_ + 1), 0.0);
  for (int y = 0; y < height_; ++y) {
    double row = 0.0;
    for (int x = 0; x < width_; ++x) {
      row += values[static_cast<std::size_t>(y) * width_ + x];
      table_[(y + 1) * s + x + 1] = table_[y * s + x + 1] + row;
    }
  }
}

IntegralImage integral_image(const Field2D& f) { return IntegralImage(f); }

double box_sum(const IntegralImage& ii, const Box& b) {
  if (!within_frame(b, ii.width(), ii.height())) {
    throw std::out_of_range("box outside integral image bounds");
  }
  return ii.sum(b.x, b.y, b.right(), b.bottom());
}

}  // namespace overlap
