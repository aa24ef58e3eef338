#include "csar/blob.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "csar/imgproc.hpp"

namespace csar {

double BlobFilterConfig::max_area_for_spacing(int spacing) {
  const double r = spacing / 2.0;
  return std::numbers::pi * r * r;
}

BlobFilterConfig BlobFilterConfig::for_grid_spacing(int spacing) {
  BlobFilterConfig c;
  c.max_area = max_area_for_spacing(spacing);
  return c;
}

void BlobFilterConfig::validate() const {
  if (!(intensity_lo >= 0.0 && intensity_lo < intensity_hi && intensity_hi <= 255.0)) {
    throw ParameterError("blob intensity band must satisfy 0 <= lo < hi <= 255");
  }
  if (min_area < 1 || !(double(min_area) < max_area)) {
    throw ParameterError("blob area bounds must satisfy 1 <= min_area < max_area");
  }
  if (!(max_circularity > 0.0)) throw ParameterError("blob circularity bound must be positive");
  if (connectivity != 4 && connectivity != 8) throw ParameterError("connectivity must be 4 or 8");
}

BinaryFrame intensity_mask(const Frame& frame, double lo, double hi) {
  if (!(lo < hi)) throw ParameterError("intensity band needs lo < hi");
  return ((frame >= lo) && (frame <= hi)).cast<std::uint8_t>();
}

namespace {

class DisjointSets {
public:
  int make() {
    parent_.push_back(int(parent_.size()));
    return parent_.back();
  }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  // The smaller id stays the root, so a root is always the first label
  // created for its component.
  void join(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) parent_[b] = a;
    else parent_[a] = b;
  }
  int size() const { return int(parent_.size()); }

private:
  std::vector<int> parent_;
};

}  // namespace

Labeling connected_components(const BinaryFrame& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw ParameterError("connectivity must be 4 or 8");
  const auto h = mask.rows();
  const auto w = mask.cols();
  LabelImage provisional = LabelImage::Constant(h, w, -1);
  DisjointSets sets;

  // Already-visited neighbours: W, NW, N, NE.
  const int offsets8[4][2] = {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
  const int offsets4[2][2] = {{-1, 0}, {0, -1}};

  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      int label = -1;
      const int count = connectivity == 8 ? 4 : 2;
      for (int k = 0; k < count; ++k) {
        const int dx = connectivity == 8 ? offsets8[k][0] : offsets4[k][0];
        const int dy = connectivity == 8 ? offsets8[k][1] : offsets4[k][1];
        const auto nx = x + dx;
        const auto ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w) continue;
        const int n = provisional(ny, nx);
        if (n < 0) continue;
        if (label < 0) label = n;
        else sets.join(label, n);
      }
      provisional(y, x) = label < 0 ? sets.make() : label;
    }
  }

  std::vector<int> final_label(sets.size(), 0);
  int next = 0;
  for (int i = 0; i < sets.size(); ++i) {
    if (sets.find(i) == i) final_label[i] = ++next;
  }
  Labeling out{LabelImage::Zero(h, w), next};
  for (Eigen::Index i = 0; i < provisional.size(); ++i) {
    const int p = provisional.data()[i];
    if (p >= 0) out.labels.data()[i] = final_label[sets.find(p)];
  }
  return out;
}

std::vector<std::vector<Eigen::Vector2i>> region_pixels(const Labeling& labeling) {
  std::vector<std::vector<Eigen::Vector2i>> regions(labeling.count);
  for (Eigen::Index y = 0; y < labeling.labels.rows(); ++y) {
    for (Eigen::Index x = 0; x < labeling.labels.cols(); ++x) {
      const int l = labeling.labels(y, x);
      if (l > 0) regions[l - 1].emplace_back(int(x), int(y));
    }
  }
  return regions;
}

Blob blob_features(std::span<const Eigen::Vector2i> pixels, int frame_width, int frame_height) {
  if (pixels.empty()) throw ParameterError("blob region is empty");
  Eigen::Vector2i lo = pixels.front();
  Eigen::Vector2i hi = pixels.front();
  Point sum = Point::Zero();
  for (const auto& p : pixels) {
    if (p.x() < 0 || p.y() < 0 || p.x() >= frame_width || p.y() >= frame_height) {
      throw ParameterError("blob pixel outside the frame");
    }
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
    sum += p.cast<double>();
  }

  Blob b;
  b.area = int(pixels.size());
  b.centroid = sum / double(b.area);

  // Local occupancy with a one-pixel background frame around the bounding box.
  const Eigen::Vector2i size = hi - lo + Eigen::Vector2i::Constant(3);
  Image<std::uint8_t> occ = Image<std::uint8_t>::Zero(size.y(), size.x());
  for (const auto& p : pixels) occ(p.y() - lo.y() + 1, p.x() - lo.x() + 1) = 1;

  int perimeter = 0;
  double radius = 0.0;
  for (const auto& p : pixels) {
    const int ly = p.y() - lo.y() + 1;
    const int lx = p.x() - lo.x() + 1;
    perimeter += !occ(ly, lx - 1) + !occ(ly, lx + 1) + !occ(ly - 1, lx) + !occ(ly + 1, lx);
    radius = std::max({radius, std::abs(p.x() - b.centroid.x()), std::abs(p.y() - b.centroid.y())});
  }
  b.perimeter = perimeter;
  b.radius = std::max(radius, 0.5);
  b.circularity = double(perimeter) / (2.0 * std::sqrt(std::numbers::pi * double(b.area)));
  return b;
}

std::vector<Blob> filter_blobs(std::span<const Blob> blobs, const BlobFilterConfig& config) {
  std::vector<Blob> kept;
  for (const auto& b : blobs) {
    if (b.area >= config.min_area && double(b.area) <= config.max_area &&
        b.circularity <= config.max_circularity) {
      kept.push_back(b);
    }
  }
  return kept;
}

std::vector<Blob> detect_blobs(const Frame& frame, const BlobFilterConfig& config) {
  config.validate();
  const Frame equalized = histogram_equalize(frame);
  const BinaryFrame mask = intensity_mask(equalized, config.intensity_lo, config.intensity_hi);
  const Labeling labeling = connected_components(mask, config.connectivity);

  std::vector<int> areas(labeling.count, 0);
  for (Eigen::Index i = 0; i < labeling.labels.size(); ++i) {
    if (const int l = labeling.labels.data()[i]; l > 0) ++areas[l - 1];
  }
  const auto regions = region_pixels(labeling);
  std::vector<Blob> blobs;
  for (int l = 0; l < labeling.count; ++l) {
    // Regions outside the area bounds cannot survive filtering; skip measuring them.
    if (areas[l] < config.min_area || double(areas[l]) > config.max_area) continue;
    Blob b = blob_features(regions[l], int(frame.cols()), int(frame.rows()));
    b.label = l + 1;
    blobs.push_back(b);
  }
  return filter_blobs(blobs, config);
}

}  // namespace csar
