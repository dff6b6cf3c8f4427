#include "overlap/segmentation.hpp"

#include <stdexcept>

namespace overlap {

Field2D foreground_prior(const std::vector<Box>& boxes, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("frame dimensions must be positive");
  if (boxes.empty()) return Field2D(width, height);
  // 2-D difference array, then a prefix sum.
  std::vector<int> diff(static_cast<std::size_t>(width + 1) * (height + 1), 0);
  const auto at = [&](int x, int y) -> int& { return diff[static_cast<std::size_t>(y) * (width + 1) + x]; };
  for (const Box& b : boxes) {
    if (intersection_area(b, Box(0, 0, width, height)) <= 0) continue;
    const Box c = clamp_to_frame(b, width, height);
    at(c.x, c.y) += 1;
    at(c.right(), c.y) -= 1;
    at(c.x, c.bottom()) -= 1;
    at(c.right(), c.bottom()) += 1;
  }
  Field2D prior(width, height);
  std::vector<int> row(width + 1, 0);
  const double n = static_cast<double>(boxes.size());
  for (int y = 0; y < height; ++y) {
    int running = 0;
    for (int x = 0; x < width; ++x) {
      row[x] += at(x, y);
      running += row[x];
      prior(x, y) = static_cast<float>(running / n);
    }
  }
  return prior;
}

Field2D prior_mask(const Field2D& prior, double threshold, bool keep_largest) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must lie in (0, 1)");
  const int w = prior.width();
  const int h = prior.height();
  Field2D mask(w, h);
  for (std::size_t i = 0; i < prior.size(); ++i) mask.data()[i] = prior.data()[i] >= threshold ? 1.0f : 0.0f;
  if (!keep_largest) return mask;

  std::vector<int> label(prior.size(), -1);
  std::vector<int> sizes;
  std::vector<int> stack;
  for (int start = 0; start < static_cast<int>(prior.size()); ++start) {
    if (mask.data()[start] == 0.0f || label[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    int count = 0;
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++count;
      const int x = p % w, y = p / w;
      const int nbrs[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& [nx, ny] : nbrs) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int q = ny * w + nx;
        if (mask.data()[q] == 0.0f || label[q] >= 0) continue;
        label[q] = id;
        stack.push_back(q);
      }
    }
    sizes.push_back(count);
  }
  int best = -1;
  for (int i = 0; i < static_cast<int>(sizes.size()); ++i) {
    if (best < 0 || sizes[i] > sizes[best]) best = i;
  }
  for (std::size_t i = 0; i < label.size(); ++i) mask.data()[i] = label[i] == best && best >= 0 ? 1.0f : 0.0f;
  return mask;
}

double mask_iou(const Field2D& a, const Field2D& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("masks differ in size");
  long long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.data()[i] != 0.0f, y = b.data()[i] != 0.0f;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace overlap
