#pragma once

#include <vector>

#include "overlap/core.hpp"

namespace overlap {

/// Fraction of the boxes covering each pixel. Boxes are clipped to the frame;
/// no boxes give an all-zero prior.
Field2D foreground_prior(const std::vector<Box>& boxes, int width, int height);

/// 1 where prior >= threshold, else 0; optionally only the largest
/// 4-connected component survives (lowest raster index wins ties).
Field2D prior_mask(const Field2D& prior, double threshold, bool keep_largest = true);

/// IoU of two binary masks (non-zero = foreground); 0 when both are empty.
double mask_iou(const Field2D& a, const Field2D& b);

}  // namespace overlap
