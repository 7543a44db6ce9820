#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "error.hpp"
#include "transforms.hpp"

namespace gridpure {

double mse(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b, "mse");
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const long double d = static_cast<long double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return static_cast<double>(acc / a.data.size());
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

namespace {

constexpr int kWindow = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Valid-mode separable weighted mean: out has (h-10) x (w-10) entries.
std::vector<double> window_mean(const std::vector<double>& plane, int h, int w,
                                const std::vector<double>& kernel) {
  const int vh = h - kWindow + 1;
  const int vw = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * vw);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += kernel[k] * plane[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * vw + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(vh) * vw);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += kernel[k] * rows[static_cast<std::size_t>(y + k) * vw + x];
      out[static_cast<std::size_t>(y) * vw + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_shape(a, b, "ssim");
  if (a.height < kWindow || a.width < kWindow)
    fail(ErrorKind::invalid_argument, "ssim: image smaller than the 11x11 window");

  const std::vector<double> kernel = gaussian_kernel_1d(kWindow, 1.5);
  const std::size_t plane_size = static_cast<std::size_t>(a.height) * a.width;
  std::vector<double> pa(plane_size), pb(plane_size), paa(plane_size), pbb(plane_size), pab(plane_size);

  double channel_sum = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        const double va = a.at(y, x, c);
        const double vb = b.at(y, x, c);
        const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
        pa[i] = va;
        pb[i] = vb;
        paa[i] = va * va;
        pbb[i] = vb * vb;
        pab[i] = va * vb;
      }
    const std::vector<double> mu_a = window_mean(pa, a.height, a.width, kernel);
    const std::vector<double> mu_b = window_mean(pb, a.height, a.width, kernel);
    const std::vector<double> mu_aa = window_mean(paa, a.height, a.width, kernel);
    const std::vector<double> mu_bb = window_mean(pbb, a.height, a.width, kernel);
    const std::vector<double> mu_ab = window_mean(pab, a.height, a.width, kernel);

    long double acc = 0.0L;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = mu_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = mu_bb[i] - mu_b[i] * mu_b[i];
      const double cov = mu_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (var_a + var_b + kC2);
      acc += num / den;
    }
    channel_sum += static_cast<double>(acc / mu_a.size());
  }
  return channel_sum / a.channels;
}

MetricReport compare(const ImageBuffer& a, const ImageBuffer& b) {
  MetricReport report;
  report.mse = mse(a, b);
  report.psnr = psnr(a, b);
  report.ssim = ssim(a, b);
  return report;
}

}  // namespace gridpure
