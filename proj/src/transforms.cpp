#include "transforms.hpp"

#include <cmath>

#include "error.hpp"

namespace gridpure {

namespace {

// Edge-exclusive reflection: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

enum class Axis { rows, cols };

void convolve_axis(const ImageBuffer& src, ImageBuffer& dst, const std::vector<double>& kernel, Axis axis) {
  const int r = static_cast<int>(kernel.size()) / 2;
  const int extent = axis == Axis::rows ? src.height : src.width;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0.0;
        const int base = axis == Axis::rows ? y : x;
        for (int k = -r; k <= r; ++k) {
          const int idx = reflect_index(base + k, extent);
          acc += kernel[k + r] * (axis == Axis::rows ? src.at(idx, x, c) : src.at(y, idx, c));
        }
        dst.at(y, x, c) = acc;
      }
}

void convolve_axis_adjoint(const ImageBuffer& src, ImageBuffer& dst, const std::vector<double>& kernel,
                           Axis axis) {
  const int r = static_cast<int>(kernel.size()) / 2;
  const int extent = axis == Axis::rows ? src.height : src.width;
  std::fill(dst.data.begin(), dst.data.end(), 0.0);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) {
        const double v = src.at(y, x, c);
        const int base = axis == Axis::rows ? y : x;
        for (int k = -r; k <= r; ++k) {
          const int idx = reflect_index(base + k, extent);
          if (axis == Axis::rows)
            dst.at(idx, x, c) += kernel[k + r] * v;
          else
            dst.at(y, idx, c) += kernel[k + r] * v;
        }
      }
}

}  // namespace

std::vector<double> gaussian_kernel_1d(int kernel, double sigma) {
  if (kernel < 1 || kernel % 2 == 0) fail(ErrorKind::invalid_argument, "gaussian kernel size must be odd");
  if (!(sigma > 0.0)) fail(ErrorKind::invalid_argument, "gaussian sigma must be positive");
  const int r = kernel / 2;
  std::vector<double> k(kernel);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * (i / sigma) * (i / sigma));
    total += k[i + r];
  }
  for (double& v : k) v /= total;
  return k;
}

ImageBuffer gaussian_blur(const ImageBuffer& x, int kernel, double sigma) {
  const std::vector<double> k = gaussian_kernel_1d(kernel, sigma);
  if (kernel == 1) return x;
  ImageBuffer tmp(x.height, x.width, x.channels);
  ImageBuffer out(x.height, x.width, x.channels);
  convolve_axis(x, tmp, k, Axis::rows);
  convolve_axis(tmp, out, k, Axis::cols);
  return out;
}

ImageBuffer gaussian_blur_vjp(const ImageBuffer& upstream, int kernel, double sigma) {
  const std::vector<double> k = gaussian_kernel_1d(kernel, sigma);
  if (kernel == 1) return upstream;
  ImageBuffer tmp(upstream.height, upstream.width, upstream.channels);
  ImageBuffer out(upstream.height, upstream.width, upstream.channels);
  convolve_axis_adjoint(upstream, tmp, k, Axis::cols);
  convolve_axis_adjoint(tmp, out, k, Axis::rows);
  return out;
}

// ---------------------------------------------------------------------------
// JPEG roundtrip

namespace {

// ITU-T T.81 Annex K default quantization tables.
constexpr std::array<int, 64> kBaseLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};

constexpr std::array<int, 64> kBaseChroma = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,
};

struct DctBasis {
  double c[8][8];  // c[k][n] = scale(k) * cos((2n+1) k pi / 16)
  DctBasis() {
    for (int k = 0; k < 8; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) c[k][n] = scale * std::cos((2 * n + 1) * k * M_PI / 16.0);
    }
  }
};

const DctBasis& dct_basis() {
  static const DctBasis basis;
  return basis;
}

void dct8x8(const double in[8][8], double out[8][8]) {
  const DctBasis& b = dct_basis();
  double tmp[8][8];
  for (int k = 0; k < 8; ++k)
    for (int n = 0; n < 8; ++n) {
      double acc = 0.0;
      for (int m = 0; m < 8; ++m) acc += b.c[k][m] * in[m][n];
      tmp[k][n] = acc;
    }
  for (int k = 0; k < 8; ++k)
    for (int l = 0; l < 8; ++l) {
      double acc = 0.0;
      for (int n = 0; n < 8; ++n) acc += tmp[k][n] * b.c[l][n];
      out[k][l] = acc;
    }
}

void idct8x8(const double in[8][8], double out[8][8]) {
  const DctBasis& b = dct_basis();
  double tmp[8][8];
  for (int m = 0; m < 8; ++m)
    for (int l = 0; l < 8; ++l) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += b.c[k][m] * in[k][l];
      tmp[m][l] = acc;
    }
  for (int m = 0; m < 8; ++m)
    for (int n = 0; n < 8; ++n) {
      double acc = 0.0;
      for (int l = 0; l < 8; ++l) acc += tmp[m][l] * b.c[l][n];
      out[m][n] = acc;
    }
}

}  // namespace

QuantTables make_quant_tables(int quality) {
  if (quality < 1 || quality > 100) fail(ErrorKind::invalid_argument, "jpeg quality must be in [1,100]");
  const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  QuantTables q;
  q.quality = quality;
  for (int i = 0; i < 64; ++i) {
    q.luma[i] = std::clamp((kBaseLuma[i] * s + 50) / 100, 1, 255);
    q.chroma[i] = std::clamp((kBaseChroma[i] * s + 50) / 100, 1, 255);
  }
  return q;
}

ImageBuffer jpeg_roundtrip(const ImageBuffer& x, int quality) {
  if (x.channels != 3) fail(ErrorKind::invalid_argument, "jpeg_roundtrip: 3-channel image required");
  const QuantTables tables = make_quant_tables(quality);

  const int ph = (x.height + 7) / 8 * 8;
  const int pw = (x.width + 7) / 8 * 8;

  // Padded planar YCbCr on the [0,255] scale.
  std::vector<double> planes(static_cast<std::size_t>(3) * ph * pw);
  const auto plane_at = [&](int p, int y, int xx) -> double& {
    return planes[(static_cast<std::size_t>(p) * ph + y) * pw + xx];
  };
  for (int y = 0; y < ph; ++y) {
    const int sy = y < x.height ? y : x.height - 1;
    for (int xx = 0; xx < pw; ++xx) {
      const int sx = xx < x.width ? xx : x.width - 1;
      const double r = x.at(sy, sx, 0) * 255.0;
      const double g = x.at(sy, sx, 1) * 255.0;
      const double b = x.at(sy, sx, 2) * 255.0;
      const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
      plane_at(0, y, xx) = luma;
      plane_at(1, y, xx) = 128.0 + (b - luma) / 1.772;
      plane_at(2, y, xx) = 128.0 + (r - luma) / 1.402;
    }
  }

  for (int p = 0; p < 3; ++p) {
    const std::array<int, 64>& q = p == 0 ? tables.luma : tables.chroma;
    for (int by = 0; by < ph; by += 8)
      for (int bx = 0; bx < pw; bx += 8) {
        double block[8][8], coef[8][8];
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) block[i][j] = plane_at(p, by + i, bx + j) - 128.0;
        dct8x8(block, coef);
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) {
            const double step = q[i * 8 + j];
            coef[i][j] = step * std::lround(coef[i][j] / step);
          }
        idct8x8(coef, block);
        for (int i = 0; i < 8; ++i)
          for (int j = 0; j < 8; ++j) plane_at(p, by + i, bx + j) = block[i][j] + 128.0;
      }
  }

  ImageBuffer out(x.height, x.width, 3);
  for (int y = 0; y < x.height; ++y)
    for (int xx = 0; xx < x.width; ++xx) {
      const double luma = plane_at(0, y, xx);
      const double cb = plane_at(1, y, xx) - 128.0;
      const double cr = plane_at(2, y, xx) - 128.0;
      const double r = luma + 1.402 * cr;
      const double b = luma + 1.772 * cb;
      const double g = (luma - 0.299 * r - 0.114 * b) / 0.587;
      out.at(y, xx, 0) = r / 255.0;
      out.at(y, xx, 1) = g / 255.0;
      out.at(y, xx, 2) = b / 255.0;
    }
  out.clamp01();
  return out;
}

}  // namespace gridpure
