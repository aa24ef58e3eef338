#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "csar/image.hpp"

namespace csar {

/// Normalized 1-D Gaussian weights with radius ceil(3 * sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur, edge-clamped borders.
Frame gaussian_blur(const Frame& frame, double sigma);

/// Linear contrast stretch pivoting on mid-gray: 128 + gain * (v - 128),
/// clamped to [0, 255]. Requires gain >= 1.
Frame adjust_contrast(const Frame& frame, double gain);

/// Unsharp masking by luminosity blending.
///
/// The mask M = frame - blur(frame, sigma) gives a per-pixel luminosity
/// L = clamp(|M| / 255, 0, 1). The result blends a contrast-stretched copy H
/// with the original: L * H + (1 - L) * frame, so a zero mask keeps the
/// original pixel and a saturated mask takes the high-contrast one.
Frame unsharp_mask(const Frame& frame, double sigma, double contrast_gain);

/// 256-bin histogram of the 8-bit quantized frame.
std::array<std::int64_t, 256> histogram(const Frame& frame);

/// Otsu's threshold over the quantized histogram. Class 0 holds levels
/// <= t. Ties resolve to the smallest t. Throws DegenerateInputError when the
/// frame has a single quantized level.
int otsu_threshold(const Frame& frame);

/// bit = frame > threshold.
BinaryFrame binarize(const Frame& frame, double threshold);

/// CDF remapping; a single-level frame is returned as that level.
Frame histogram_equalize(const Frame& frame);

}  // namespace csar
