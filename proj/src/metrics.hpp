#pragma once

#include "image.hpp"

namespace gridpure {

inline constexpr double kPsnrCap = 99.0;

double mse(const ImageBuffer& a, const ImageBuffer& b);

// 10*log10(1/mse) with MAX = 1.0; identical inputs report the 99 dB cap so
// results stay finite and sortable.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

// Per-channel SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2 on unit dynamic range, valid-window sliding (no padding),
// averaged over windows then channels. Requires min(h, w) >= 11.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

struct MetricReport {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

MetricReport compare(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace gridpure
