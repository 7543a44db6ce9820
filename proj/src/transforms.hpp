#pragma once

#include <array>
#include <vector>

#include "image.hpp"

namespace gridpure {

// Normalized 1-D Gaussian sampled at integer offsets; kernel must be odd.
std::vector<double> gaussian_kernel_1d(int kernel, double sigma);

// Separable Gaussian convolution with edge-exclusive reflect padding.
// Linear, so usable inside transform-averaged attack objectives.
ImageBuffer gaussian_blur(const ImageBuffer& x, int kernel, double sigma);

// Adjoint of gaussian_blur (exact transpose of the padded convolution),
// used to chain gradients through blurred loss draws.
ImageBuffer gaussian_blur_vjp(const ImageBuffer& upstream, int kernel, double sigma);

struct QuantTables {
  std::array<int, 64> luma;
  std::array<int, 64> chroma;
  int quality = 50;
};

// Base tables scaled by s = 5000/q (q < 50) or 200 - 2q (q >= 50), each entry
// clamp(floor((base*s + 50)/100), 1, 255). Base tables are the conventional
// luminance/chrominance defaults from ITU-T T.81 Annex K.
QuantTables make_quant_tables(int quality);

// In-memory lossy roundtrip: RGB -> BT.601 full-range YCbCr, per-channel 8x8
// orthonormal DCT-II on edge-replicated padding, quantize/dequantize with the
// quality-scaled tables, inverse DCT, back to RGB, clamp, crop. No chroma
// subsampling and no entropy coding (lossless stages do not change pixels).
ImageBuffer jpeg_roundtrip(const ImageBuffer& x, int quality);

}  // namespace gridpure
