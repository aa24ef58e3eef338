#include "csar/fusion.hpp"

#include <cmath>

namespace csar {

bool point_in_blob_square(const Point& point, const Blob& blob) {
  return std::abs(point.x() - blob.centroid.x()) <= blob.radius &&
         std::abs(point.y() - blob.centroid.y()) <= blob.radius;
}

std::vector<Detection> fuse(int frame_index, std::span<const TrackedPoint> tracked,
                            std::span<const Blob> blobs) {
  std::vector<Detection> out;
  for (const auto& p : tracked) {
    for (const auto& b : blobs) {
      if (point_in_blob_square(p.position, b)) {
        out.push_back({frame_index, p.position, b, p.last_motion, p.last_angle});
        break;
      }
    }
  }
  return out;
}

}  // namespace csar
