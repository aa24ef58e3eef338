#include "csar/registration.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include "csar/imgproc.hpp"

namespace csar {

namespace {

constexpr std::array<std::array<int, 4>, 256> kPattern = {{
#include "descriptor_pattern.inc"
}};

// Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr std::array<std::array<int, 2>, 16> kCircle = {{{0, -3},
                                                          {1, -3},
                                                          {2, -2},
                                                          {3, -1},
                                                          {3, 0},
                                                          {3, 1},
                                                          {2, 2},
                                                          {1, 3},
                                                          {0, 3},
                                                          {-1, 3},
                                                          {-2, 2},
                                                          {-3, 1},
                                                          {-3, 0},
                                                          {-3, -1},
                                                          {-2, -2},
                                                          {-1, -3}}};

constexpr int kArcLength = 9;
constexpr double kDescriptorSmoothing = 2.0;

// Returns the corner score, or 0 when no arc of kArcLength contiguous circle
// pixels is uniformly brighter or darker than the centre by the threshold.
double segment_test_score(const Frame& f, Eigen::Index x, Eigen::Index y, double threshold) {
  const double c = f(y, x);
  std::array<int, 16> state{};  // +1 brighter, -1 darker, 0 similar
  for (int i = 0; i < 16; ++i) {
    const double v = f(y + kCircle[i][1], x + kCircle[i][0]);
    state[i] = v > c + threshold ? 1 : (v < c - threshold ? -1 : 0);
  }
  bool found = false;
  for (int sign : {1, -1}) {
    int run = 0;
    for (int i = 0; i < 16 + kArcLength - 1 && !found; ++i) {
      run = state[i % 16] == sign ? run + 1 : 0;
      if (run >= kArcLength) found = true;
    }
  }
  if (!found) return 0.0;

  double bright = 0.0;
  double dark = 0.0;
  for (int i = 0; i < 16; ++i) {
    const double d = f(y + kCircle[i][1], x + kCircle[i][0]) - c;
    if (d > threshold) bright += d - threshold;
    if (d < -threshold) dark += -d - threshold;
  }
  return std::max(bright, dark);
}

double intensity_centroid_angle(const Frame& f, double x, double y) {
  const auto cx = static_cast<Eigen::Index>(x);
  const auto cy = static_cast<Eigen::Index>(y);
  double m10 = 0.0;
  double m01 = 0.0;
  constexpr int r = kOrientationRadius;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy > r * r) continue;
      const double v = f(cy + dy, cx + dx);
      m10 += dx * v;
      m01 += dy * v;
    }
  }
  double angle = std::atan2(m01, m10);
  if (angle < 0.0) angle += 2.0 * std::numbers::pi;
  if (angle >= 2.0 * std::numbers::pi) angle = 0.0;
  return angle;
}

using SteeredPattern = std::array<std::array<int, 4>, 256>;

const std::array<SteeredPattern, kOrientationBins>& steered_patterns() {
  static const auto tables = [] {
    std::array<SteeredPattern, kOrientationBins> out{};
    for (int b = 0; b < kOrientationBins; ++b) {
      const double a = 2.0 * std::numbers::pi * b / kOrientationBins;
      const double c = std::cos(a);
      const double s = std::sin(a);
      for (int i = 0; i < 256; ++i) {
        const auto& p = kPattern[i];
        out[b][i] = {static_cast<int>(std::lround(c * p[0] - s * p[1])),
                     static_cast<int>(std::lround(s * p[0] + c * p[1])),
                     static_cast<int>(std::lround(c * p[2] - s * p[3])),
                     static_cast<int>(std::lround(s * p[2] + c * p[3]))};
      }
    }
    return out;
  }();
  return tables;
}

BinaryDescriptor describe(const Frame& smoothed, const Keypoint& kp) {
  const int bin = static_cast<int>(std::lround(kp.orientation / (2.0 * std::numbers::pi) *
                                               kOrientationBins)) %
                  kOrientationBins;
  const auto& pattern = steered_patterns()[bin];
  const auto cx = static_cast<Eigen::Index>(kp.x);
  const auto cy = static_cast<Eigen::Index>(kp.y);
  BinaryDescriptor d;
  for (int i = 0; i < 256; ++i) {
    const auto& p = pattern[i];
    if (smoothed(cy + p[1], cx + p[0]) < smoothed(cy + p[3], cx + p[2])) d.set(i);
  }
  return d;
}

Eigen::Index best_match(const BinaryDescriptor& query, std::span<const BinaryDescriptor> pool,
                        int* distance) {
  Eigen::Index best = -1;
  int best_d = 257;
  for (std::size_t j = 0; j < pool.size(); ++j) {
    const int d = hamming_distance(query, pool[j]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<Eigen::Index>(j);
    }
  }
  if (distance) *distance = best_d;
  return best;
}

struct Fit {
  RigidTransform transform;
  bool ok = false;
};

Fit procrustes(std::span<const std::pair<Point, Point>> pairs, const std::vector<bool>& use,
               const Point& center) {
  Point mean_src = Point::Zero();
  Point mean_dst = Point::Zero();
  std::size_t n = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!use[i]) continue;
    mean_src += pairs[i].first;
    mean_dst += pairs[i].second;
    ++n;
  }
  if (n < 2) return {};
  mean_src /= double(n);
  mean_dst /= double(n);

  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  double spread = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!use[i]) continue;
    const Point s = pairs[i].first - mean_src;
    const Point d = pairs[i].second - mean_dst;
    cov += s * d.transpose();
    spread += s.squaredNorm();
  }
  if (spread <= 1e-18) return {};

  // Maximizes trace(R^T cov^T): the optimal angle balances the antisymmetric
  // and symmetric parts of the 2x2 cross-covariance.
  const double angle = std::atan2(cov(0, 1) - cov(1, 0), cov(0, 0) + cov(1, 1));
  const Eigen::Matrix2d rot = Eigen::Rotation2Dd(angle).toRotationMatrix();
  const Point t = mean_dst - center - rot * (mean_src - center);
  return {RigidTransform{angle, t.x(), t.y(), center}, true};
}

}  // namespace

int hamming_distance(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a.words[i] ^ b.words[i]);
  return d;
}

Point RigidTransform::apply(const Point& p) const {
  return Eigen::Rotation2Dd(angle) * (p - center) + center + Point(tx, ty);
}

RigidTransform RigidTransform::inverse() const {
  // p = R^-1 (p' - center - t) + center
  const Point t = -(Eigen::Rotation2Dd(-angle) * Point(tx, ty));
  return {-angle, t.x(), t.y(), center};
}

std::span<const std::array<int, 4>, 256> descriptor_pattern() { return kPattern; }

std::vector<Feature> detect_features(const Frame& frame, const FeatureDetectorParams& params) {
  if (frame.rows() < 64 || frame.cols() < 64) {
    throw ParameterError("feature detection needs frames of at least 64x64");
  }
  if (params.max_count < 1) throw ParameterError("max feature count must be positive");
  if (!(params.fast_threshold > 0.0)) throw ParameterError("FAST threshold must be positive");

  const auto w = frame.cols();
  const auto h = frame.rows();
  Frame score = Frame::Zero(h, w);
  for (Eigen::Index y = kFeatureBorder; y < h - kFeatureBorder; ++y) {
    for (Eigen::Index x = kFeatureBorder; x < w - kFeatureBorder; ++x) {
      score(y, x) = segment_test_score(frame, x, y, params.fast_threshold);
    }
  }

  std::vector<Keypoint> corners;
  for (Eigen::Index y = kFeatureBorder; y < h - kFeatureBorder; ++y) {
    for (Eigen::Index x = kFeatureBorder; x < w - kFeatureBorder; ++x) {
      const double s = score(y, x);
      if (s <= 0.0) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const double n = score(y + dy, x + dx);
          // Earlier raster neighbours win ties.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (n > s || (earlier && n == s)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) corners.push_back({double(x), double(y), s, 0.0});
    }
  }

  std::stable_sort(corners.begin(), corners.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  if (corners.size() > std::size_t(params.max_count)) corners.resize(params.max_count);

  const Frame smoothed = gaussian_blur(frame, kDescriptorSmoothing);
  std::vector<Feature> features;
  features.reserve(corners.size());
  for (auto kp : corners) {
    kp.orientation = intensity_centroid_angle(frame, kp.x, kp.y);
    features.push_back({kp, describe(smoothed, kp)});
  }
  return features;
}

std::vector<FeatureMatch> match_features(std::span<const BinaryDescriptor> set_a,
                                         std::span<const BinaryDescriptor> set_b) {
  if (set_a.empty() || set_b.empty()) throw ParameterError("cannot match an empty descriptor set");
  std::vector<Eigen::Index> best_for_b(set_b.size());
  for (std::size_t j = 0; j < set_b.size(); ++j) best_for_b[j] = best_match(set_b[j], set_a, nullptr);

  std::vector<FeatureMatch> matches;
  for (std::size_t i = 0; i < set_a.size(); ++i) {
    int d = 0;
    const auto j = best_match(set_a[i], set_b, &d);
    if (best_for_b[j] == static_cast<Eigen::Index>(i)) {
      matches.push_back({i, static_cast<std::size_t>(j), d});
    }
  }
  return matches;
}

std::vector<FeatureMatch> filter_matches(std::vector<FeatureMatch> matches, double keep_fraction) {
  if (matches.empty()) throw ParameterError("cannot filter an empty match list");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ParameterError("keep fraction must lie in (0, 1]");
  }
  std::stable_sort(matches.begin(), matches.end(),
                   [](const auto& a, const auto& b) { return a.distance < b.distance; });
  const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * double(matches.size())));
  matches.resize(std::min(keep, matches.size()));
  return matches;
}

RigidTransform estimate_transform(std::span<const std::pair<Point, Point>> pairs,
                                  const Point& center) {
  if (pairs.size() < 2) throw ParameterError("rigid fit needs at least two point pairs");
  std::vector<bool> use(pairs.size(), true);
  const Fit first = procrustes(pairs, use, center);
  if (!first.ok) throw DegenerateInputError("rigid fit undefined: source points coincide");

  std::vector<double> residuals(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    residuals[i] = (first.transform.apply(pairs[i].first) - pairs[i].second).norm();
  }
  std::vector<double> sorted = residuals;
  const auto mid = sorted.begin() + sorted.size() / 2;
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double limit = 3.0 * *mid;
  for (std::size_t i = 0; i < pairs.size(); ++i) use[i] = residuals[i] <= limit;

  const Fit refit = procrustes(pairs, use, center);
  return refit.ok ? refit.transform : first.transform;
}

Frame warp_frame(const Frame& frame, const RigidTransform& transform) {
  const RigidTransform inv = transform.inverse();
  Frame out(frame.rows(), frame.cols());
  for (Eigen::Index y = 0; y < frame.rows(); ++y) {
    for (Eigen::Index x = 0; x < frame.cols(); ++x) {
      const Point src = inv.apply(Point(double(x), double(y)));
      // Snap round-off so integer mappings stay exact.
      const double sx = std::abs(src.x() - std::round(src.x())) < 1e-9 ? std::round(src.x()) : src.x();
      const double sy = std::abs(src.y() - std::round(src.y())) < 1e-9 ? std::round(src.y()) : src.y();
      out(y, x) = sample_bilinear(frame, sx, sy, 0.0);
    }
  }
  return out;
}

RigidTransform register_frames(const Frame& reference, const Frame& moving,
                               const RegistrationParams& params) {
  const Point center((reference.cols() - 1) / 2.0, (reference.rows() - 1) / 2.0);
  const FeatureDetectorParams det{params.max_features, params.fast_threshold};
  const auto ref_features = detect_features(reference, det);
  const auto mov_features = detect_features(moving, det);
  if (ref_features.empty() || mov_features.empty()) return RigidTransform::identity(center);

  std::vector<BinaryDescriptor> ref_desc;
  std::vector<BinaryDescriptor> mov_desc;
  for (const auto& f : ref_features) ref_desc.push_back(f.descriptor);
  for (const auto& f : mov_features) mov_desc.push_back(f.descriptor);

  auto matches = match_features(mov_desc, ref_desc);
  if (matches.size() < 2) return RigidTransform::identity(center);
  matches = filter_matches(std::move(matches), params.keep_fraction);
  if (matches.size() < 2) return RigidTransform::identity(center);

  std::vector<std::pair<Point, Point>> pairs;
  for (const auto& m : matches) {
    const auto& a = mov_features[m.index_a].keypoint;
    const auto& b = ref_features[m.index_b].keypoint;
    pairs.emplace_back(Point(a.x, a.y), Point(b.x, b.y));
  }
  try {
    return estimate_transform(pairs, center);
  } catch (const DegenerateInputError&) {
    return RigidTransform::identity(center);
  }
}

}  // namespace csar
