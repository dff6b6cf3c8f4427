#pragma once

#include <filesystem>
#include <vector>

#include "overlap/core.hpp"

namespace overlap {

/// Edge magnitude in [0, 1] plus the gradient-normal orientation in [0, pi).
struct EdgeResponse {
  Field2D magnitude;
  Field2D orientation;
};

/// Gaussian pre-smoothing followed by a Scharr 3x3 gradient. For color frames
/// the channel with the strongest gradient wins per pixel.
EdgeResponse spatial_edge(const Image& frame, double sigma = 1.5);
EdgeResponse spatial_edge(const Field2D& gray, double sigma = 1.5);

/// Edge map from an external detector: PGM (P5), magnitude = value / maxval.
/// Orientation is taken from the map's own gradient.
EdgeResponse load_edge_map(const std::filesystem::path& path);

/// Orientation in [0, pi) of the central-difference gradient.
Field2D gradient_orientation(const Field2D& f);

Field2D gaussian_blur(const Field2D& f, double sigma);

/// E = lambda * Et + (1 - lambda) * Es.
Field2D combine_edges(const Field2D& spatial, const Field2D& temporal, double lambda);

/// Combined magnitude; orientation comes from whichever weighted term is
/// larger at each pixel (temporal wins only when strictly larger).
EdgeResponse combine_edge_responses(const EdgeResponse& spatial, const EdgeResponse& temporal,
                                    double lambda);

/// Non-maximum suppression along the edge normal: a pixel survives when its
/// magnitude is at least the bilinear samples one step away on both sides.
EdgeResponse thin_edges(const EdgeResponse& edges);

/// Smallest angle between two undirected orientations, in [0, pi/2].
double orientation_difference(double a, double b);

struct EdgeGroup {
  std::vector<int> pixels;  ///< linear indices y * width + x, in visiting order
  double magnitude = 0.0;   ///< sum of member magnitudes
  double orientation = 0.0; ///< magnitude-weighted mean orientation
  double mean_x = 0.0;
  double mean_y = 0.0;
  Box bounds;
};

/// Partitions the pixels with E > threshold into 8-connected groups. A group
/// is grown greedily along the smallest orientation change; once the summed
/// change reaches pi/2 the next pixel starts a new group.
std::vector<EdgeGroup> edge_groups(const Field2D& edges, const Field2D& orientation,
                                   double magnitude_threshold);

}  // namespace overlap
