#include "overlap/motion.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace overlap {

namespace {

static_assert(std::endian::native == std::endian::little, "flow I/O assumes a little-endian host");

template <typename T>
bool read_pod(std::istream& in, T& value) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&value), sizeof(T)));
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

double angle_between(double ux, double uy, double vx, double vy) {
  const double dot = ux * vx + uy * vy;
  const double cross = ux * vy - uy * vx;
  return std::abs(std::atan2(cross, dot));
}

}  // namespace

FlowField::FlowField(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("flow dimensions must be positive");
  u_.assign(static_cast<std::size_t>(width) * height, 0.0f);
  v_.assign(static_cast<std::size_t>(width) * height, 0.0f);
}

FlowField load_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open flow file " + path.string());
  float magic = 0.0f;
  std::int32_t width = 0;
  std::int32_t height = 0;
  if (!read_pod(in, magic) || !read_pod(in, width) || !read_pod(in, height)) {
    throw IoError("truncated flow header in " + path.string());
  }
  if (magic != kFloMagic) throw IoError("bad flow magic number in " + path.string());
  if (width <= 0 || height <= 0 || width > 100000 || height > 100000) {
    throw IoError("implausible flow dimensions in " + path.string());
  }
  FlowField flow(width, height);
  std::vector<float> row(static_cast<std::size_t>(width) * 2);
  for (int y = 0; y < height; ++y) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(float)))) {
      throw IoError("truncated flow data in " + path.string());
    }
    for (int x = 0; x < width; ++x) flow.set(x, y, row[2 * x], row[2 * x + 1]);
  }
  return flow;
}

FlowField load_flow(const std::filesystem::path& path, int expected_width, int expected_height) {
  FlowField flow = load_flow(path);
  if (flow.width() != expected_width || flow.height() != expected_height) {
    throw IoError("flow " + path.string() + " is " + std::to_string(flow.width()) + "x" +
                  std::to_string(flow.height()) + ", frame is " + std::to_string(expected_width) +
                  "x" + std::to_string(expected_height));
  }
  return flow;
}

void save_flow(const std::filesystem::path& path, const FlowField& flow) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write flow file " + path.string());
  write_pod(out, kFloMagic);
  write_pod(out, static_cast<std::int32_t>(flow.width()));
  write_pod(out, static_cast<std::int32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      write_pod(out, flow.u(x, y));
      write_pod(out, flow.v(x, y));
    }
  }
  if (!out) throw IoError("failed writing flow file " + path.string());
}

FlowField block_matching_flow(const Field2D& first, const Field2D& second, int search_radius,
                              int block) {
  if (!first.same_shape(second)) throw std::invalid_argument("block matching needs equal-size frames");
  if (search_radius < 0 || block < 1) throw std::invalid_argument("invalid block matching parameters");
  const int w = first.width();
  const int h = first.height();
  const int half = block / 2;

  // Candidate displacements in tie-break order.
  std::vector<std::array<int, 2>> candidates;
  for (int dy = -search_radius; dy <= search_radius; ++dy) {
    for (int dx = -search_radius; dx <= search_radius; ++dx) candidates.push_back({dx, dy});
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    const int ma = a[0] * a[0] + a[1] * a[1];
    const int mb = b[0] * b[0] + b[1] * b[1];
    if (ma != mb) return ma < mb;
    return a < b;
  });

  // Quantized intensities keep the SAD integral exact.
  auto quantize = [](float v) { return static_cast<std::int64_t>(std::lround(v * 1024.0f)); };
  std::vector<std::int64_t> q1(first.size());
  std::vector<std::int64_t> q2(second.size());
  for (std::size_t i = 0; i < q1.size(); ++i) {
    q1[i] = quantize(first.data()[i]);
    q2[i] = quantize(second.data()[i]);
  }

  const auto stride = static_cast<std::size_t>(w + 1);
  std::vector<std::int64_t> table(stride * (h + 1));
  std::vector<std::int64_t> best_cost(static_cast<std::size_t>(w) * h,
                                      std::numeric_limits<std::int64_t>::max());
  FlowField flow(w, h);

  for (const auto& [dx, dy] : candidates) {
    for (int y = 0; y < h; ++y) {
      std::int64_t row = 0;
      const int sy = std::clamp(y + dy, 0, h - 1);
      for (int x = 0; x < w; ++x) {
        const int sx = std::clamp(x + dx, 0, w - 1);
        row += std::abs(q1[static_cast<std::size_t>(y) * w + x] - q2[static_cast<std::size_t>(sy) * w + sx]);
        table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
      }
    }
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - half);
      const int y1 = std::min(h, y + half + 1);
      for (int x = 0; x < w; ++x) {
        const int x0 = std::max(0, x - half);
        const int x1 = std::min(w, x + half + 1);
        const std::int64_t cost = table[y1 * stride + x1] - table[y0 * stride + x1] -
                                  table[y1 * stride + x0] + table[y0 * stride + x0];
        auto& best = best_cost[static_cast<std::size_t>(y) * w + x];
        if (cost < best) {
          best = cost;
          flow.set(x, y, static_cast<float>(dx), static_cast<float>(dy));
        }
      }
    }
  }
  return flow;
}

FlowField resize_flow(const FlowField& flow, int width, int height) {
  if (flow.width() == width && flow.height() == height) return flow;
  FlowField out(width, height);
  const double sx = static_cast<double>(width) / flow.width();
  const double sy = static_cast<double>(height) / flow.height();
  for (int y = 0; y < height; ++y) {
    const int src_y = std::min(flow.height() - 1, static_cast<int>((y + 0.5) / sy));
    for (int x = 0; x < width; ++x) {
      const int src_x = std::min(flow.width() - 1, static_cast<int>((x + 0.5) / sx));
      out.set(x, y, static_cast<float>(flow.u(src_x, src_y) * sx),
              static_cast<float>(flow.v(src_x, src_y) * sy));
    }
  }
  return out;
}

Field2D motion_boundary(const FlowField& flow, const MotionParams& params) {
  const int w = flow.width();
  const int h = flow.height();
  Field2D out(w, h);
  auto clamp_x = [w](int x) { return std::clamp(x, 0, w - 1); };
  auto clamp_y = [h](int y) { return std::clamp(y, 0, h - 1); };
  constexpr std::array<std::array<int, 2>, 4> kNeighbors{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = clamp_x(x - 1), xr = clamp_x(x + 1);
      const int yu = clamp_y(y - 1), yd = clamp_y(y + 1);
      const double gx_span = std::max(1, xr - xl);
      const double gy_span = std::max(1, yd - yu);
      const double dux = (flow.u(xr, y) - flow.u(xl, y)) / gx_span;
      const double duy = (flow.u(x, yd) - flow.u(x, yu)) / gy_span;
      const double dvx = (flow.v(xr, y) - flow.v(xl, y)) / gx_span;
      const double dvy = (flow.v(x, yd) - flow.v(x, yu)) / gy_span;
      const double grad = std::sqrt(dux * dux + duy * duy + dvx * dvx + dvy * dvy);

      double dtheta = 0.0;
      const double ux = flow.u(x, y), uy = flow.v(x, y);
      if (std::hypot(ux, uy) >= params.min_direction_magnitude) {
        for (const auto& [ox, oy] : kNeighbors) {
          const int nx = x + ox, ny = y + oy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const double vx = flow.u(nx, ny), vy = flow.v(nx, ny);
          if (std::hypot(vx, vy) < params.min_direction_magnitude) continue;
          dtheta = std::max(dtheta, angle_between(ux, uy, vx, vy));
        }
      }
      out(x, y) = static_cast<float>(
          1.0 - std::exp(-(params.alpha_magnitude * grad + params.alpha_direction * dtheta)));
    }
  }
  const float peak = out.max_value();
  if (peak > 0.0f) {
    for (float& v : out.data()) v /= peak;
  }
  return out;
}

Field2D inside_outside_map(const Field2D& boundary, double threshold) {
  const int w = boundary.width();
  const int h = boundary.height();
  Field2D result(w, h);
  if (boundary.empty()) return result;

  std::vector<std::uint8_t> edge(boundary.size());
  for (std::size_t i = 0; i < edge.size(); ++i) edge[i] = boundary.data()[i] >= threshold ? 1 : 0;
  auto is_edge = [&](int x, int y) -> bool {
    if (x < 0 || y < 0 || x >= w || y >= h) return false;
    return edge[static_cast<std::size_t>(y) * w + x] != 0;
  };

  constexpr std::array<std::array<int, 2>, 8> kDirs{
      {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}}};
  std::vector<std::uint8_t> votes(boundary.size(), 0);
  std::vector<std::uint8_t> parity(boundary.size(), 0);
  std::vector<std::uint8_t> hit(boundary.size(), 0);

  for (const auto& [dx, dy] : kDirs) {
    // hit(q): stepping into q along (dx, dy) touches the boundary. Diagonal
    // steps also test the two pixels they cut past so thin curves can't leak.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        bool touch = is_edge(x, y);
        if (!touch && dx != 0 && dy != 0) touch = is_edge(x - dx, y) || is_edge(x, y - dy);
        hit[static_cast<std::size_t>(y) * w + x] = touch ? 1 : 0;
      }
    }
    auto hit_at = [&](int x, int y) -> std::uint8_t {
      if (x < 0 || y < 0 || x >= w || y >= h) return 0;
      return hit[static_cast<std::size_t>(y) * w + x];
    };
    // parity(p) = parity(p + d) xor [hit(p + d) and not hit(p + 2d)]: the
    // number of boundary runs met walking out from p.
    const int y_begin = dy > 0 ? h - 1 : 0, y_end = dy > 0 ? -1 : h, y_step = dy > 0 ? -1 : 1;
    const int x_begin = dx > 0 ? w - 1 : 0, x_end = dx > 0 ? -1 : w, x_step = dx > 0 ? -1 : 1;
    for (int y = y_begin; y != y_end; y += y_step) {
      for (int x = x_begin; x != x_end; x += x_step) {
        const int nx = x + dx, ny = y + dy;
        std::uint8_t p = 0;
        if (nx >= 0 && ny >= 0 && nx < w && ny < h) {
          p = parity[static_cast<std::size_t>(ny) * w + nx];
          if (hit_at(nx, ny) && !hit_at(nx + dx, ny + dy)) p ^= 1;
        }
        parity[static_cast<std::size_t>(y) * w + x] = p;
      }
    }
    for (std::size_t i = 0; i < votes.size(); ++i) votes[i] += parity[i];
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * w + x;
      result(x, y) = (!edge[i] && votes[i] >= 5) ? 1.0f : 0.0f;
    }
  }
  return result;
}

LocationPrior accumulate_prior(std::span<const Field2D> masks, int frame_index) {
  if (masks.empty()) throw std::invalid_argument("accumulate_prior needs at least one mask");
  const int w = masks.front().width();
  const int h = masks.front().height();
  std::vector<double> acc(static_cast<std::size_t>(w) * h, 0.0);
  for (const auto& m : masks) {
    if (m.width() != w || m.height() != h) throw std::invalid_argument("mask size mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m.data()[i];
  }
  LocationPrior prior{Field2D(w, h), frame_index, static_cast<int>(masks.size())};
  const double n = static_cast<double>(masks.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    prior.values.data()[i] = static_cast<float>(std::clamp(acc[i] / n, 0.0, 1.0));
  }
  return prior;
}

Field2D temporal_edge(const LocationPrior& prior) {
  const Field2D& p = prior.values;
  const int w = p.width();
  const int h = p.height();
  Field2D out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(0, x - 1), xr = std::min(w - 1, x + 1);
      const int yu = std::max(0, y - 1), yd = std::min(h - 1, y + 1);
      const double gx = (p(xr, y) - p(xl, y)) / std::max(1, xr - xl);
      const double gy = (p(x, yd) - p(x, yu)) / std::max(1, yd - yu);
      out(x, y) = static_cast<float>(std::hypot(gx, gy));
    }
  }
  const float peak = out.max_value();
  if (peak > 0.0f) {
    for (float& v : out.data()) v /= peak;
  }
  return out;
}

}  // namespace overlap
