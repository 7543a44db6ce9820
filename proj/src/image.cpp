#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "error.hpp"

namespace gridpure {

namespace {

void validate_dims(int h, int w, int c) {
  if (h < 1 || w < 1) fail(ErrorKind::invalid_argument, "image dimensions must be positive");
  if (c != 1 && c != 3) fail(ErrorKind::invalid_argument, "unsupported channel layout");
}

}  // namespace

ImageBuffer::ImageBuffer(int h, int w, int c) : height(h), width(w), channels(c) {
  validate_dims(h, w, c);
  data.assign(static_cast<std::size_t>(h) * w * c, 0.0);
}

ImageBuffer ImageBuffer::constant(int h, int w, int c, double value) {
  ImageBuffer img(h, w, c);
  std::fill(img.data.begin(), img.data.end(), value);
  return img;
}

void ImageBuffer::clamp01() {
  for (double& v : data) v = std::min(1.0, std::max(0.0, v));
}

bool ImageBuffer::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

bool ImageBuffer::in_unit_range() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

ImageBuffer clamped01(ImageBuffer img) {
  img.clamp01();
  return img;
}

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* where) {
  if (!a.same_shape(b)) fail(ErrorKind::invalid_argument, std::string(where) + ": shape mismatch");
}

double dot(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

double max_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

double squared_norm(const ImageBuffer& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v * v;
  return acc;
}

ImageBuffer lincomb(double alpha, const ImageBuffer& a, double beta, const ImageBuffer& b) {
  require_same_shape(a, b, "lincomb");
  ImageBuffer out(a.height, a.width, a.channels);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = alpha * a.data[i] + beta * b.data[i];
  return out;
}

}  // namespace gridpure
