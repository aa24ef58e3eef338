#include "csar/imgproc.hpp"

#include <cmath>
#include <string>

namespace csar {

void require_valid_frame(const Frame& frame, const char* what) {
  if (frame.rows() < kMinFrameSide || frame.cols() < kMinFrameSide) {
    throw ParameterError(std::string(what) + ": frames must be at least 16x16, got " +
                         std::to_string(frame.cols()) + "x" + std::to_string(frame.rows()));
  }
  if (!frame.isFinite().all() || (frame < 0.0).any() || (frame > 255.0).any()) {
    throw ParameterError(std::string(what) + ": intensities must be finite and within [0, 255]");
  }
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ParameterError("gaussian sigma must be positive and finite");
  }
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-double(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& w : k) w /= sum;
  return k;
}

namespace {

// One separable pass along rows (horizontal == true) or columns.
Frame convolve_1d(const Frame& src, const std::vector<double>& k, bool horizontal) {
  const auto h = src.rows();
  const auto w = src.cols();
  const auto radius = static_cast<Eigen::Index>(k.size() / 2);
  Frame out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Eigen::Index i = -radius; i <= radius; ++i) {
        const double v = horizontal ? src(y, std::clamp(x + i, Eigen::Index{0}, w - 1))
                                    : src(std::clamp(y + i, Eigen::Index{0}, h - 1), x);
        acc += k[i + radius] * v;
      }
      out(y, x) = acc;
    }
  }
  return out;
}

}  // namespace

Frame gaussian_blur(const Frame& frame, double sigma) {
  const auto k = gaussian_kernel(sigma);
  return convolve_1d(convolve_1d(frame, k, true), k, false);
}

Frame adjust_contrast(const Frame& frame, double gain) {
  if (!(gain >= 1.0) || !std::isfinite(gain)) {
    throw ParameterError("contrast gain must be >= 1");
  }
  return clamp_intensity(128.0 + gain * (frame - 128.0));
}

Frame unsharp_mask(const Frame& frame, double sigma, double contrast_gain) {
  const Frame blurred = gaussian_blur(frame, sigma);
  const Frame high = adjust_contrast(frame, contrast_gain);
  const Frame luminosity = ((frame - blurred).abs() / 255.0).min(1.0);
  return clamp_intensity(luminosity * high + (1.0 - luminosity) * frame);
}

std::array<std::int64_t, 256> histogram(const Frame& frame) {
  std::array<std::int64_t, 256> hist{};
  for (Eigen::Index i = 0; i < frame.size(); ++i) ++hist[quantize(frame.data()[i])];
  return hist;
}

int otsu_threshold(const Frame& frame) {
  const auto hist = histogram(frame);
  const auto occupied = std::count_if(hist.begin(), hist.end(), [](auto c) { return c > 0; });
  if (occupied < 2) {
    throw DegenerateInputError("otsu threshold undefined for a single-level frame");
  }

  const double total = double(frame.size());
  double sum_all = 0.0;
  for (int v = 0; v < 256; ++v) sum_all += double(v) * double(hist[v]);

  // Between-class variance scaled by N^2: (S0 W1 - S1 W0)^2 / (W0 W1) on raw
  // counts. Equal histograms splits give bit-identical scores, so plateaus
  // resolve to their first t.
  int best_t = 0;
  double best = -1.0;
  double w0 = 0.0;
  double sum0 = 0.0;
  for (int t = 0; t < 255; ++t) {
    w0 += double(hist[t]);
    sum0 += double(t) * double(hist[t]);
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double diff = sum0 * w1 - (sum_all - sum0) * w0;
    const double score = diff * diff / (w0 * w1);
    if (score > best) {
      best = score;
      best_t = t;
    }
  }
  return best_t;
}

BinaryFrame binarize(const Frame& frame, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 255.0)) {
    throw ParameterError("binarize threshold must lie in [0, 255]");
  }
  return (frame > threshold).cast<std::uint8_t>();
}

Frame histogram_equalize(const Frame& frame) {
  const auto hist = histogram(frame);
  const auto n = static_cast<std::int64_t>(frame.size());

  std::array<std::int64_t, 256> cdf{};
  std::int64_t running = 0;
  for (int v = 0; v < 256; ++v) {
    running += hist[v];
    cdf[v] = running;
  }
  const auto first = std::find_if(hist.begin(), hist.end(), [](auto c) { return c > 0; });
  const std::int64_t cdf_min = first == hist.end() ? 0 : cdf[first - hist.begin()];

  if (n == cdf_min) return quantize(frame).cast<double>();

  std::array<double, 256> lut{};
  for (int v = 0; v < 256; ++v) {
    const double mapped = std::round(255.0 * double(cdf[v] - cdf_min) / double(n - cdf_min));
    lut[v] = std::clamp(mapped, 0.0, 255.0);
  }
  return frame.unaryExpr([&](double v) { return lut[quantize(v)]; });
}

}  // namespace csar
