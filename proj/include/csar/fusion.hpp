#pragma once

#include <span>
#include <vector>

#include "csar/blob.hpp"
#include "csar/optical_flow.hpp"

namespace csar {

/// A tracked point confirmed by a blob.
struct Detection {
  int frame_index = 0;
  Point position = Point::Zero();
  Blob blob;
  double motion_magnitude = 0.0;
  double motion_angle = 0.0;
};

/// |x - x_n| <= r_n and |y - y_n| <= r_n.
bool point_in_blob_square(const Point& point, const Blob& blob);

/// Each tracked point is confirmed by the first blob, in blob order, whose
/// square contains it; unconfirmed points produce nothing.
std::vector<Detection> fuse(int frame_index, std::span<const TrackedPoint> tracked,
                            std::span<const Blob> blobs);

}  // namespace csar
