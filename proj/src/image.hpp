#pragma once

#include <cstddef>
#include <vector>

namespace gridpure {

// H x W x C pixel-space raster, row-major and channel-interleaved.
// Values are nominally in [0,1]; intermediates of the diffusion process
// (noised images, gradients, residuals) may leave that range and are
// brought back by clamp01() wherever an operation's contract says so.
// Grayscale (1 channel) and RGB (3 channels) only.
struct ImageBuffer {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int h, int w, int c);  // zero-filled, validates dimensions

  static ImageBuffer constant(int h, int w, int c, double value);

  std::size_t size() const { return data.size(); }

  double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  bool same_shape(const ImageBuffer& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  void clamp01();
  bool all_finite() const;
  bool in_unit_range() const;  // every value in [0,1]
};

// Shape-checked elementwise helpers used across the attack/purify pipelines.
ImageBuffer clamped01(ImageBuffer img);
double dot(const ImageBuffer& a, const ImageBuffer& b);
double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b);
double squared_norm(const ImageBuffer& a);

// out = alpha*a + beta*b
ImageBuffer lincomb(double alpha, const ImageBuffer& a, double beta, const ImageBuffer& b);

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* where);

}  // namespace gridpure
