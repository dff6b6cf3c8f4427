#include "overlap/edges.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <queue>
#include <tuple>

#include "overlap/io.hpp"

namespace overlap {

namespace {

constexpr double kPi = std::numbers::pi;

double fold_orientation(double angle) {
  double o = std::fmod(angle, kPi);
  if (o < 0.0) o += kPi;
  if (o >= kPi) o -= kPi;
  return o;
}

struct Gradient {
  Field2D gx;
  Field2D gy;
};

Gradient scharr(const Field2D& f) {
  const int w = f.width();
  const int h = f.height();
  Gradient g{Field2D(w, h), Field2D(w, h)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float tl = f.clamped(x - 1, y - 1), tc = f.clamped(x, y - 1), tr = f.clamped(x + 1, y - 1);
      const float ml = f.clamped(x - 1, y), mr = f.clamped(x + 1, y);
      const float bl = f.clamped(x - 1, y + 1), bc = f.clamped(x, y + 1), br = f.clamped(x + 1, y + 1);
      g.gx(x, y) = (3.0f * (tr - tl) + 10.0f * (mr - ml) + 3.0f * (br - bl)) / 32.0f;
      g.gy(x, y) = (3.0f * (bl - tl) + 10.0f * (bc - tc) + 3.0f * (br - tr)) / 32.0f;
    }
  }
  return g;
}

void normalize_in_place(Field2D& f) {
  const float peak = f.max_value();
  if (peak > 0.0f) {
    for (float& v : f.data()) v /= peak;
  }
}

}  // namespace

Field2D gaussian_blur(const Field2D& f, double sigma) {
  if (sigma <= 0.0 || f.empty()) return f;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  const int w = f.width();
  const int h = f.height();
  Field2D tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * f.clamped(x + i, y);
      tmp(x, y) = static_cast<float>(acc);
    }
  }
  Field2D out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.clamped(x, y + i);
      out(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

EdgeResponse spatial_edge(const Field2D& gray, double sigma) {
  const Gradient g = scharr(gaussian_blur(gray, sigma));
  EdgeResponse r{Field2D(gray.width(), gray.height()), Field2D(gray.width(), gray.height())};
  for (int y = 0; y < gray.height(); ++y) {
    for (int x = 0; x < gray.width(); ++x) {
      r.magnitude(x, y) = std::hypot(g.gx(x, y), g.gy(x, y));
      r.orientation(x, y) = static_cast<float>(fold_orientation(std::atan2(g.gy(x, y), g.gx(x, y))));
    }
  }
  normalize_in_place(r.magnitude);
  return r;
}

EdgeResponse spatial_edge(const Image& frame, double sigma) {
  const int w = frame.width();
  const int h = frame.height();
  EdgeResponse r{Field2D(w, h), Field2D(w, h)};
  for (int c = 0; c < 3; ++c) {
    const Gradient g = scharr(gaussian_blur(frame.channel(c), sigma));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float m = std::hypot(g.gx(x, y), g.gy(x, y));
        if (c == 0 || m > r.magnitude(x, y)) {
          r.magnitude(x, y) = m;
          r.orientation(x, y) = static_cast<float>(fold_orientation(std::atan2(g.gy(x, y), g.gx(x, y))));
        }
      }
    }
  }
  normalize_in_place(r.magnitude);
  return r;
}

EdgeResponse load_edge_map(const std::filesystem::path& path) {
  Field2D magnitude = read_pgm(path);
  Field2D orientation = gradient_orientation(magnitude);
  return {std::move(magnitude), std::move(orientation)};
}

Field2D gradient_orientation(const Field2D& f) {
  const int w = f.width();
  const int h = f.height();
  Field2D out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = f.clamped(x + 1, y) - f.clamped(x - 1, y);
      const double gy = f.clamped(x, y + 1) - f.clamped(x, y - 1);
      out(x, y) = static_cast<float>(fold_orientation(std::atan2(gy, gx)));
    }
  }
  return out;
}

Field2D combine_edges(const Field2D& spatial, const Field2D& temporal, double lambda) {
  if (!spatial.same_shape(temporal)) throw std::invalid_argument("edge maps differ in size");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  Field2D out(spatial.width(), spatial.height());
  const auto es = spatial.data();
  const auto et = temporal.data();
  auto e = out.data();
  for (std::size_t i = 0; i < e.size(); ++i) {
    // Endpoints are copied so lambda in {0, 1} reproduces the input exactly.
    if (lambda == 0.0) {
      e[i] = es[i];
    } else if (lambda == 1.0) {
      e[i] = et[i];
    } else {
      e[i] = static_cast<float>(lambda * et[i] + (1.0 - lambda) * es[i]);
    }
    e[i] = std::max(e[i], 0.0f);
  }
  return out;
}

EdgeResponse combine_edge_responses(const EdgeResponse& spatial, const EdgeResponse& temporal,
                                    double lambda) {
  EdgeResponse out{combine_edges(spatial.magnitude, temporal.magnitude, lambda),
                   Field2D(spatial.magnitude.width(), spatial.magnitude.height())};
  const auto es = spatial.magnitude.data();
  const auto et = temporal.magnitude.data();
  const auto os = spatial.orientation.data();
  const auto ot = temporal.orientation.data();
  auto o = out.orientation.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = lambda * et[i] > (1.0 - lambda) * es[i] ? ot[i] : os[i];
  }
  return out;
}

EdgeResponse thin_edges(const EdgeResponse& edges) {
  const Field2D& m = edges.magnitude;
  if (!m.same_shape(edges.orientation)) throw std::invalid_argument("magnitude and orientation differ in size");
  auto sample = [&](double x, double y) {
    x = std::clamp(x, 0.0, m.width() - 1.0);
    y = std::clamp(y, 0.0, m.height() - 1.0);
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, m.width() - 1), y1 = std::min(y0 + 1, m.height() - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fy) * ((1 - fx) * m(x0, y0) + fx * m(x1, y0)) + fy * ((1 - fx) * m(x0, y1) + fx * m(x1, y1));
  };
  EdgeResponse out{Field2D(m.width(), m.height()), edges.orientation};
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      const double v = m(x, y);
      if (v <= 0.0) continue;
      const double dx = std::cos(edges.orientation(x, y));
      const double dy = std::sin(edges.orientation(x, y));
      if (v >= sample(x + dx, y + dy) && v >= sample(x - dx, y - dy)) out.magnitude(x, y) = static_cast<float>(v);
    }
  }
  return out;
}

double orientation_difference(double a, double b) {
  double d = std::fmod(std::abs(a - b), kPi);
  return std::min(d, kPi - d);
}

std::vector<EdgeGroup> edge_groups(const Field2D& edges, const Field2D& orientation,
                                   double magnitude_threshold) {
  if (!edges.same_shape(orientation)) throw std::invalid_argument("orientation map size mismatch");
  const int w = edges.width();
  const int h = edges.height();
  const auto e = edges.data();
  const auto o = orientation.data();
  std::vector<int> label(e.size(), -1);
  std::vector<EdgeGroup> groups;
  constexpr double kMaxTurn = kPi / 2.0;

  // (orientation change, insertion sequence, pixel)
  using Candidate = std::tuple<double, std::uint64_t, int>;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;

  for (int seed = 0; seed < static_cast<int>(e.size()); ++seed) {
    if (label[seed] >= 0 || !(e[seed] > magnitude_threshold)) continue;
    const int id = static_cast<int>(groups.size());
    EdgeGroup group;
    frontier = {};
    std::uint64_t sequence = 0;
    double turned = 0.0;
    int current = seed;
    while (true) {
      label[current] = id;
      group.pixels.push_back(current);
      const int cx = current % w;
      const int cy = current / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = cx + dx, ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int n = ny * w + nx;
          if (label[n] >= 0 || !(e[n] > magnitude_threshold)) continue;
          frontier.emplace(orientation_difference(o[current], o[n]), sequence++, n);
        }
      }
      int next = -1;
      double change = 0.0;
      while (!frontier.empty()) {
        const auto [d, s, n] = frontier.top();
        frontier.pop();
        if (label[n] >= 0) continue;
        next = n;
        change = d;
        break;
      }
      if (next < 0 || turned + change >= kMaxTurn) break;
      turned += change;
      current = next;
    }

    double sum_sin = 0.0, sum_cos = 0.0, sum_x = 0.0, sum_y = 0.0;
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    for (const int p : group.pixels) {
      const double m = e[p];
      const int px = p % w, py = p / w;
      group.magnitude += m;
      sum_sin += m * std::sin(2.0 * o[p]);
      sum_cos += m * std::cos(2.0 * o[p]);
      sum_x += m * px;
      sum_y += m * py;
      x0 = std::min(x0, px);
      y0 = std::min(y0, py);
      x1 = std::max(x1, px);
      y1 = std::max(y1, py);
    }
    group.orientation = fold_orientation(std::atan2(sum_sin, sum_cos) / 2.0);
    group.mean_x = sum_x / group.magnitude;
    group.mean_y = sum_y / group.magnitude;
    group.bounds = Box(x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    groups.push_back(std::move(group));
  }
  return groups;
}

}  // namespace overlap
