#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "csar/image.hpp"

namespace csar {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double response = 0.0;
  double orientation = 0.0;  // radians in [0, 2pi)
};

/// 256-bit steered binary descriptor.
struct BinaryDescriptor {
  std::array<std::uint64_t, 4> words{};

  bool bit(int i) const { return (words[i / 64] >> (i % 64)) & 1U; }
  void set(int i) { words[i / 64] |= std::uint64_t{1} << (i % 64); }
  friend bool operator==(const BinaryDescriptor&, const BinaryDescriptor&) = default;
};

int hamming_distance(const BinaryDescriptor& a, const BinaryDescriptor& b);

struct Feature {
  Keypoint keypoint;
  BinaryDescriptor descriptor;
};

struct FeatureMatch {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  int distance = 0;
};

/// Rotation by `angle` about `center` followed by translation (tx, ty):
/// p' = R(angle) (p - center) + center + t.
struct RigidTransform {
  double angle = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  Point center = Point::Zero();

  Point apply(const Point& p) const;
  RigidTransform inverse() const;
  static RigidTransform identity(const Point& center = Point::Zero()) { return {0, 0, 0, center}; }
};

struct FeatureDetectorParams {
  int max_count = 500;
  double fast_threshold = 20.0;
};

// Sampling pattern geometry. Keypoints stay kBorder pixels inside the frame
// so the rotated pattern and the orientation patch always fit.
inline constexpr int kPatternRadius = 13;
inline constexpr int kOrientationRadius = 15;
inline constexpr int kFeatureBorder = kOrientationRadius + 1;
inline constexpr int kOrientationBins = 30;

/// The shipped 256-pair comparison table, {ax, ay, bx, by} per bit.
std::span<const std::array<int, 4>, 256> descriptor_pattern();

/// FAST-9/16 segment-test corners with 3x3 non-max suppression, intensity
/// centroid orientation, and pattern comparisons steered in 12 degree steps.
/// Requires at least 64x64. A frame without corners yields an empty list.
std::vector<Feature> detect_features(const Frame& frame, const FeatureDetectorParams& params);

/// Mutual nearest neighbours by Hamming distance.
std::vector<FeatureMatch> match_features(std::span<const BinaryDescriptor> set_a,
                                         std::span<const BinaryDescriptor> set_b);

/// Stable sort by distance, keep the first ceil(keep_fraction * n).
std::vector<FeatureMatch> filter_matches(std::vector<FeatureMatch> matches, double keep_fraction);

/// Least-squares rotation about `center` plus translation taking each
/// pair.first onto pair.second, with one re-fit after dropping pairs whose
/// residual exceeds three times the median.
RigidTransform estimate_transform(std::span<const std::pair<Point, Point>> pairs,
                                  const Point& center);

/// Inverse-mapped bilinear warp: out(p) = frame(T^-1 p), 0 outside the source.
Frame warp_frame(const Frame& frame, const RigidTransform& transform);

struct RegistrationParams {
  int max_features = 500;
  double keep_fraction = 0.25;
  double fast_threshold = 20.0;
};

/// Full chain: features in both frames, mutual matching, filtering and a
/// rigid fit taking `moving` coordinates onto `reference` coordinates.
/// Returns identity when fewer than two matches survive.
RigidTransform register_frames(const Frame& reference, const Frame& moving,
                               const RegistrationParams& params);

}  // namespace csar
