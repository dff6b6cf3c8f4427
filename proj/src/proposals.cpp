#include "overlap/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

namespace overlap {

namespace {

IntegralImage seed_mass_table(const std::vector<EdgeGroup>& groups, int width, int height) {
  std::vector<double> mass(static_cast<std::size_t>(width) * height, 0.0);
  for (const auto& g : groups) mass[g.pixels.front()] += g.magnitude;
  return IntegralImage(width, height, mass);
}

Field2D thresholded(const Field2D& edges, double threshold) {
  Field2D f = edges;
  for (float& v : f.data()) {
    if (!(v > threshold)) v = 0.0f;
  }
  return f;
}

bool seed_in_box(const EdgeGroup& g, int width, const Box& b) {
  const int p = g.pixels.front();
  const int x = p % width;
  const int y = p / width;
  return x >= b.x && x < b.right() && y >= b.y && y < b.bottom();
}

std::vector<Proposal> sorted_by_score(std::vector<Proposal> proposals) {
  std::stable_sort(proposals.begin(), proposals.end(),
                   [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  return proposals;
}

}  // namespace

bool group_inside(const Box& g, const Box& b) {
  return g.x >= b.x + 1 && g.right() <= b.right() - 1 && g.y >= b.y + 1 &&
         g.bottom() <= b.bottom() - 1;
}

bool group_straddles(const Box& g, const Box& b) {
  return intersection_area(g, b) > 0 && !group_inside(g, b);
}

GroupGraph group_affinities(const std::vector<EdgeGroup>& groups, int width, int height,
                            double gamma) {
  GroupGraph graph;
  graph.neighbors.resize(groups.size());
  std::vector<int> label(static_cast<std::size_t>(width) * height, -1);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (const int p : groups[i].pixels) label[p] = static_cast<int>(i);
  }
  constexpr int kRadius = 2;
  std::vector<std::vector<int>> seen(groups.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int s0 = label[static_cast<std::size_t>(y) * width + x];
      if (s0 < 0) continue;
      for (int dy = -kRadius; dy <= kRadius; ++dy) {
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
          const int s1 = label[static_cast<std::size_t>(ny) * width + nx];
          if (s1 <= s0) continue;
          auto& known = seen[s0];
          if (std::find(known.begin(), known.end(), s1) != known.end()) continue;
          known.push_back(s1);
          const auto& a = groups[s0];
          const auto& b = groups[s1];
          const double link = std::atan2(a.mean_y - b.mean_y, a.mean_x - b.mean_x) + std::numbers::pi / 2.0;
          const double aff =
              std::pow(std::abs(std::cos(a.orientation - link) * std::cos(b.orientation - link)), gamma);
          graph.neighbors[s0].emplace_back(s1, aff);
          graph.neighbors[s1].emplace_back(s0, aff);
        }
      }
    }
  }
  for (auto& n : graph.neighbors) std::sort(n.begin(), n.end());
  return graph;
}

BoxScorer::BoxScorer(const Field2D& edges, std::vector<EdgeGroup> groups, const ProposalParams& params)
    : width_(edges.width()),
      height_(edges.height()),
      kappa_(params.kappa),
      threshold_(params.edge_threshold),
      groups_(std::move(groups)),
      graph_(group_affinities(groups_, width_, height_, params.affinity_gamma)),
      seed_mass_(seed_mass_table(groups_, width_, height_)),
      magnitude_(thresholded(edges, params.edge_threshold)),
      row_groups_(height_),
      col_groups_(width_),
      stamp_(groups_.size(), 0),
      weight_(groups_.size(), 0.0) {
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    const Box& g = groups_[i].bounds;
    for (int y = g.y; y < g.bottom(); ++y) row_groups_[y].push_back(static_cast<int>(i));
    for (int x = g.x; x < g.right(); ++x) col_groups_[x].push_back(static_cast<int>(i));
  }
}

double BoxScorer::normalizer(const Box& b) const {
  return std::pow(2.0 * (b.w + b.h), kappa_);
}

double BoxScorer::center_sum(const Box& b) const {
  const int iw = b.w / 2;
  const int ih = b.h / 2;
  if (iw <= 0 || ih <= 0) return 0.0;
  const int ix = b.x + (b.w - iw) / 2;
  const int iy = b.y + (b.h - ih) / 2;
  return magnitude_.sum(ix, iy, ix + iw, iy + ih);
}

double BoxScorer::upper_bound(const Box& b) const {
  if (!within_frame(b, width_, height_)) throw std::out_of_range("box outside frame");
  const double v = seed_mass_.sum(b.x, b.y, b.right(), b.bottom()) - center_sum(b);
  return std::max(0.0, v) / normalizer(b);
}

double BoxScorer::score(const Box& b) const {
  if (!within_frame(b, width_, height_)) throw std::out_of_range("box outside frame");
  double v = seed_mass_.sum(b.x, b.y, b.right(), b.bottom()) - center_sum(b);

  if (++stamp_id_ == 0) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    stamp_id_ = 1;
  }
  const std::uint32_t id = stamp_id_;
  std::deque<int> queue;
  auto mark_straddler = [&](int g) {
    if (stamp_[g] == id) return;
    stamp_[g] = id;
    weight_[g] = 1.0;
    queue.push_back(g);
    if (seed_in_box(groups_[g], width_, b)) v -= groups_[g].magnitude;
  };

  // Straddlers are the groups whose bounds meet the border band.
  const int x0 = b.x, x1 = b.right() - 1, y0 = b.y, y1 = b.bottom() - 1;
  for (const int y : {y0, y1}) {
    for (const int g : row_groups_[y]) {
      const Box& gb = groups_[g].bounds;
      if (gb.x <= x1 && gb.right() - 1 >= x0) mark_straddler(g);
    }
  }
  for (const int x : {x0, x1}) {
    for (const int g : col_groups_[x]) {
      const Box& gb = groups_[g].bounds;
      if (gb.y <= y1 && gb.bottom() - 1 >= y0) mark_straddler(g);
    }
  }

  // Max-product path weights into the groups inside b.
  std::vector<int> reached;
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    const double wj = weight_[j];
    for (const auto& [q, aff] : graph_.neighbors[j]) {
      const double wq = wj * aff;
      if (wq < kMinPathWeight) continue;
      if (!group_inside(groups_[q].bounds, b)) continue;
      if (stamp_[q] != id) {
        stamp_[q] = id;
        weight_[q] = wq;
        reached.push_back(q);
        queue.push_back(q);
      } else if (wq > weight_[q]) {
        weight_[q] = wq;
        queue.push_back(q);
      }
    }
  }
  for (const int q : reached) v -= weight_[q] * groups_[q].magnitude;
  return std::max(0.0, v) / normalizer(b);
}

double score_box(const Box& b, const BoxScorer& scorer) { return scorer.score(b); }

std::vector<Box> sliding_windows(int width, int height, const ProposalParams& params) {
  const double alpha = params.step_iou;
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("step_iou must lie in (0, 1)");
  const double sx_step = std::sqrt(1.0 / alpha);
  const double ay_step = (1.0 + alpha) / (2.0 * alpha);
  const double xy_ratio = (1.0 - alpha) / (1.0 + alpha);
  const double min_size = std::sqrt(params.min_box_area);
  const int ay_rad = static_cast<int>(std::log(params.max_aspect_ratio) / std::log(ay_step * ay_step));
  const int sx_num = std::max(
      1, static_cast<int>(std::ceil(std::log(std::max(width, height) / min_size) / std::log(sx_step))));

  std::vector<Box> boxes;
  for (int s = 0; s < sx_num; ++s) {
    for (int a = 0; a < 2 * ay_rad + 1; ++a) {
      const double ay = std::pow(ay_step, a - ay_rad);
      const double sx = min_size * std::pow(sx_step, s);
      const int bh = std::min(height, static_cast<int>(sx / ay));
      const int bw = std::min(width, static_cast<int>(sx * ay));
      if (bh < 1 || bw < 1) continue;
      const int ky = std::max(2, static_cast<int>(bh * xy_ratio));
      const int kx = std::max(2, static_cast<int>(bw * xy_ratio));
      for (int y = 0; y + bh <= height; y += ky) {
        for (int x = 0; x + bw <= width; x += kx) boxes.emplace_back(x, y, bw, bh);
      }
    }
  }
  std::sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
    return std::tie(a.y, a.x, a.h, a.w) < std::tie(b.y, b.x, b.h, b.w);
  });
  boxes.erase(std::unique(boxes.begin(), boxes.end()), boxes.end());
  return boxes;
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double beta, std::size_t limit) {
  proposals = sorted_by_score(std::move(proposals));
  std::vector<Proposal> kept;
  for (const auto& p : proposals) {
    if (kept.size() >= limit) break;
    const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                        [&](const Proposal& k) { return iou(k.box, p.box) > beta; });
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

namespace {

// Coordinate-descent refinement of each box side, halving steps down to one pixel.
Box refine_box(const BoxScorer& scorer, Box box, double& score, double xy_ratio) {
  const int w = scorer.width();
  const int h = scorer.height();
  auto try_box = [&](int x, int y, int bw, int bh, Box& best, double& best_score) {
    if (bw < 1 || bh < 1) return;
    const Box candidate = clamp_to_frame(Box(x, y, bw, bh), w, h);
    const double s = scorer.score(candidate);
    if (s > best_score) {
      best = candidate;
      best_score = s;
    }
  };
  int y_step = std::max(1, static_cast<int>(box.h * xy_ratio) / 2);
  int x_step = std::max(1, static_cast<int>(box.w * xy_ratio) / 2);
  for (bool last = false; !last; y_step = std::max(1, y_step / 2), x_step = std::max(1, x_step / 2)) {
    last = y_step == 1 && x_step == 1;

    Box best = box;
    double best_score = score;
    try_box(box.x, box.y - y_step, box.w, box.h + y_step, best, best_score);
    if (best == box) try_box(box.x, box.y + y_step, box.w, box.h - y_step, best, best_score);
    box = best;
    score = best_score;

    try_box(box.x, box.y, box.w, box.h + y_step, best, best_score);
    if (best == box) try_box(box.x, box.y, box.w, box.h - y_step, best, best_score);
    box = best;
    score = best_score;

    try_box(box.x - x_step, box.y, box.w + x_step, box.h, best, best_score);
    if (best == box) try_box(box.x + x_step, box.y, box.w - x_step, box.h, best, best_score);
    box = best;
    score = best_score;

    try_box(box.x, box.y, box.w + x_step, box.h, best, best_score);
    if (best == box) try_box(box.x, box.y, box.w - x_step, box.h, best, best_score);
    box = best;
    score = best_score;
  }
  return box;
}

}  // namespace

std::vector<Proposal> generate_proposals(const BoxScorer& scorer, const ProposalParams& params,
                                         int frame_index) {
  if (params.max_proposals < 1) throw std::invalid_argument("max_proposals must be at least 1");
  if (!(params.nms_beta > 0.0 && params.nms_beta < 1.0)) {
    throw std::invalid_argument("nms_beta must lie in (0, 1)");
  }
  std::vector<Proposal> candidates;
  for (const Box& b : sliding_windows(scorer.width(), scorer.height(), params)) {
    if (scorer.upper_bound(b) <= params.min_score) continue;
    const double s = scorer.score(b);
    if (s > params.min_score) candidates.push_back({b, s, frame_index});
  }
  candidates = sorted_by_score(std::move(candidates));

  const double xy_ratio = (1.0 - params.step_iou) / (1.0 + params.step_iou);
  const std::size_t refine = std::min(candidates.size(), static_cast<std::size_t>(std::max(0, params.refine_limit)));
  for (std::size_t i = 0; i < refine; ++i) {
    candidates[i].box = refine_box(scorer, candidates[i].box, candidates[i].score, xy_ratio);
  }
  return nms(std::move(candidates), params.nms_beta, static_cast<std::size_t>(params.max_proposals));
}

std::vector<Proposal> generate_proposals(const Field2D& edges, const std::vector<EdgeGroup>& groups,
                                         const ProposalParams& params, int frame_index) {
  const BoxScorer scorer(edges, groups, params);
  return generate_proposals(scorer, params, frame_index);
}

}  // namespace overlap
