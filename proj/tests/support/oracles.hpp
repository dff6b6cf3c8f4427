#pragma once

// Brute-force reference implementations used to cross-check the library.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "overlap/core.hpp"
#include "overlap/edges.hpp"
#include "overlap/proposals.hpp"

namespace oracle {

using overlap::Box;
using overlap::EdgeGroup;
using overlap::Field2D;

inline double box_sum(const Field2D& f, const Box& b) {
  double s = 0.0;
  for (int y = b.y; y < b.bottom(); ++y) {
    for (int x = b.x; x < b.right(); ++x) s += f(x, y);
  }
  return s;
}

inline Field2D random_field(std::mt19937_64& rng, int w, int h, double sparsity = 0.0) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Field2D f(w, h);
  for (float& v : f.data()) v = u(rng) < sparsity ? 0.0f : u(rng);
  return f;
}

inline Box random_box(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> px(0, w - 1);
  std::uniform_int_distribution<int> py(0, h - 1);
  int x0 = px(rng), x1 = px(rng), y0 = py(rng), y1 = py(rng);
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

inline bool rect_overlap(const Box& a, const Box& b) {
  return a.x < b.right() && b.x < a.right() && a.y < b.bottom() && b.y < a.bottom();
}

// Box score by direct scans: every group is classified against the box from
// its pixels and bounds, path weights come from Bellman-Ford relaxation.
inline double box_score(const Field2D& edges, const std::vector<EdgeGroup>& groups, const overlap::GroupGraph& graph,
                        const overlap::ProposalParams& params, const Box& b) {
  const int w = edges.width();
  const std::size_t n = groups.size();
  const Box interior(b.x + 1, b.y + 1, std::max(1, b.w - 2), std::max(1, b.h - 2));
  auto inside = [&](const EdgeGroup& g) {
    if (b.w < 3 || b.h < 3) return false;
    return g.bounds.x >= interior.x && g.bounds.right() <= interior.right() && g.bounds.y >= interior.y &&
           g.bounds.bottom() <= interior.bottom();
  };
  auto seed_inside = [&](const EdgeGroup& g) {
    const int p = g.pixels.front();
    const int x = p % w, y = p / w;
    return x >= b.x && x < b.right() && y >= b.y && y < b.bottom();
  };

  double v = 0.0;
  for (const auto& g : groups) {
    if (seed_inside(g)) v += g.magnitude;
  }
  const int iw = b.w / 2, ih = b.h / 2;
  if (iw > 0 && ih > 0) {
    const int ix = b.x + (b.w - iw) / 2, iy = b.y + (b.h - ih) / 2;
    for (int y = iy; y < iy + ih; ++y) {
      for (int x = ix; x < ix + iw; ++x) {
        if (edges(x, y) > params.edge_threshold) v -= edges(x, y);
      }
    }
  }

  std::vector<double> weight(n, 0.0);
  std::vector<bool> straddler(n, false);
  for (std::size_t g = 0; g < n; ++g) {
    straddler[g] = rect_overlap(groups[g].bounds, b) && !inside(groups[g]);
    if (straddler[g]) weight[g] = 1.0;
  }
  for (std::size_t it = 0; it < n + 1; ++it) {
    bool changed = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (weight[j] <= 0.0) continue;
      for (const auto& [q, aff] : graph.neighbors[j]) {
        if (straddler[q] || !inside(groups[q])) continue;
        const double c = weight[j] * aff;
        if (c >= overlap::kMinPathWeight && c > weight[q]) {
          weight[q] = c;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  for (std::size_t g = 0; g < n; ++g) {
    if (straddler[g] && seed_inside(groups[g])) v -= groups[g].magnitude;
    if (!straddler[g] && weight[g] > 0.0) v -= weight[g] * groups[g].magnitude;
  }
  return std::max(0.0, v) / std::pow(2.0 * (b.w + b.h), params.kappa);
}

// Even-odd parity of crossings along one ray over a binary boundary; runs of
// boundary pixels count once.
inline int ray_crossings(const Field2D& boundary, double threshold, int x, int y, int dx, int dy) {
  int crossings = 0;
  bool on = false;
  for (int cx = x + dx, cy = y + dy; cx >= 0 && cy >= 0 && cx < boundary.width() && cy < boundary.height();
       cx += dx, cy += dy) {
    const bool b = boundary(cx, cy) > threshold;
    if (b && !on) ++crossings;
    on = b;
  }
  return crossings;
}

// Closed one-pixel contour of an axis-aligned square or an ellipse, plus the
// true interior (strictly inside the contour).
struct Contour {
  Field2D boundary;
  Field2D interior;
};

inline Contour square_contour(int frame, int x0, int y0, int side) {
  Contour c{Field2D(frame, frame), Field2D(frame, frame)};
  for (int y = y0; y < y0 + side; ++y) {
    for (int x = x0; x < x0 + side; ++x) {
      const bool edge = x == x0 || y == y0 || x == x0 + side - 1 || y == y0 + side - 1;
      (edge ? c.boundary : c.interior)(x, y) = 1.0f;
    }
  }
  return c;
}

inline Contour ellipse_contour(int frame, double cx, double cy, double rx, double ry) {
  Contour c{Field2D(frame, frame), Field2D(frame, frame)};
  auto in = [&](int x, int y) {
    const double u = (x - cx) / rx, v = (y - cy) / ry;
    return u * u + v * v <= 1.0;
  };
  for (int y = 0; y < frame; ++y) {
    for (int x = 0; x < frame; ++x) {
      if (!in(x, y)) continue;
      const bool edge = !in(x - 1, y) || !in(x + 1, y) || !in(x, y - 1) || !in(x, y + 1);
      (edge ? c.boundary : c.interior)(x, y) = 1.0f;
    }
  }
  return c;
}

// KL between two Gaussians with a shared covariance.
inline double gaussian_kl(const Eigen::VectorXd& mu_p, const Eigen::VectorXd& mu_q, const Eigen::MatrixXd& cov) {
  const Eigen::VectorXd d = mu_p - mu_q;
  return 0.5 * d.dot(cov.ldlt().solve(d));
}

// Majority-label purity, written independently of the metrics module.
inline double purity(const std::vector<int>& predicted, const std::vector<int>& truth) {
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < predicted.size(); ++i) pairs.emplace_back(predicted[i], truth[i]);
  std::sort(pairs.begin(), pairs.end());
  int total = 0;
  for (std::size_t i = 0; i < pairs.size();) {
    std::size_t j = i;
    int best = 0;
    while (j < pairs.size() && pairs[j].first == pairs[i].first) {
      std::size_t k = j;
      while (k < pairs.size() && pairs[k] == pairs[j]) ++k;
      best = std::max(best, static_cast<int>(k - j));
      j = k;
    }
    total += best;
    i = j;
  }
  return predicted.empty() ? 0.0 : static_cast<double>(total) / predicted.size();
}

}  // namespace oracle
