#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "csar/error.hpp"

namespace csar {

// Rasters are row-major Eigen arrays indexed (row, col) == (y, x).
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grayscale intensities in [0, 255], kept at double precision between
/// operations and quantized to 8 bits only for histograms and file output.
using Frame = Image<double>;

/// {0, 1} mask.
using BinaryFrame = Image<std::uint8_t>;

/// Connected-component labels, 0 for background.
using LabelImage = Image<std::int32_t>;

/// Sub-pixel (x, y) frame coordinate.
using Point = Eigen::Vector2d;

inline constexpr Eigen::Index kMinFrameSide = 16;

inline Eigen::Index width(const auto& img) { return img.cols(); }
inline Eigen::Index height(const auto& img) { return img.rows(); }

/// Throws ParameterError unless the frame meets the pipeline minimum size
/// and holds finite intensities in [0, 255].
void require_valid_frame(const Frame& frame, const char* what = "frame");

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline Image<std::uint8_t> quantize(const Frame& frame) {
  return frame.unaryExpr([](double v) { return quantize(v); });
}

inline Frame clamp_intensity(const Frame& frame) {
  return frame.max(0.0).min(255.0);
}

/// Bilinear sample at (x, y). Samples outside [0, w-1] x [0, h-1] return
/// `fill`. Integer positions reproduce the stored value exactly.
template <typename Derived>
typename Derived::Scalar sample_bilinear(const Eigen::ArrayBase<Derived>& img, double x, double y,
                                         typename Derived::Scalar fill) {
  using Scalar = typename Derived::Scalar;
  const auto w = img.cols();
  const auto h = img.rows();
  if (!(x >= 0.0 && y >= 0.0 && x <= double(w - 1) && y <= double(h - 1))) return fill;
  const auto x0 = static_cast<Eigen::Index>(std::floor(x));
  const auto y0 = static_cast<Eigen::Index>(std::floor(y));
  const double fx = x - double(x0);
  const double fy = y - double(y0);
  const auto x1 = fx > 0.0 ? x0 + 1 : x0;
  const auto y1 = fy > 0.0 ? y0 + 1 : y0;
  if (fx == 0.0 && fy == 0.0) return img(y0, x0);
  const double top = (1.0 - fx) * double(img(y0, x0)) + fx * double(img(y0, x1));
  const double bottom = (1.0 - fx) * double(img(y1, x0)) + fx * double(img(y1, x1));
  return static_cast<Scalar>((1.0 - fy) * top + fy * bottom);
}

/// Bilinear sample with edge-clamped coordinates (never falls outside).
template <typename Derived>
typename Derived::Scalar sample_bilinear_clamped(const Eigen::ArrayBase<Derived>& img, double x,
                                                 double y) {
  x = std::clamp(x, 0.0, double(img.cols() - 1));
  y = std::clamp(y, 0.0, double(img.rows() - 1));
  return sample_bilinear(img, x, y, typename Derived::Scalar{});
}

}  // namespace csar
