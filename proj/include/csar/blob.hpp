#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "csar/image.hpp"

namespace csar {

struct Blob {
  int label = 0;
  int area = 0;
  Point centroid = Point::Zero();
  double radius = 0.5;       // max Chebyshev distance pixel -> centroid, floor 0.5
  int perimeter = 0;         // exposed pixel edges
  double circularity = 0.0;  // Heywood: perimeter / (2 sqrt(pi area))
};

struct BlobFilterConfig {
  int min_area = 9;
  double max_area = 0.0;  // pi (d/2)^2 by default, see for_grid_spacing
  double intensity_lo = 0.0;
  double intensity_hi = 125.0;
  double max_circularity = 1.5;
  int connectivity = 8;

  static double max_area_for_spacing(int spacing);
  static BlobFilterConfig for_grid_spacing(int spacing);
  void validate() const;
};

/// lo <= v <= hi.
BinaryFrame intensity_mask(const Frame& frame, double lo, double hi);

struct Labeling {
  LabelImage labels;  // 0 background, 1..count in raster order of first pixel
  int count = 0;
};

/// Two-pass union-find labelling, connectivity 4 or 8.
Labeling connected_components(const BinaryFrame& mask, int connectivity);

/// Pixel lists per label, index 0 holding label 1.
std::vector<std::vector<Eigen::Vector2i>> region_pixels(const Labeling& labeling);

/// Features of one region; pixels outside the frame dimensions are rejected.
Blob blob_features(std::span<const Eigen::Vector2i> pixels, int frame_width, int frame_height);

/// Keeps blobs inside the area bounds and under the circularity bound.
std::vector<Blob> filter_blobs(std::span<const Blob> blobs, const BlobFilterConfig& config);

/// Equalize, mask the intensity band, label, measure, filter.
std::vector<Blob> detect_blobs(const Frame& frame, const BlobFilterConfig& config);

}  // namespace csar
