#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "image.hpp"

namespace gridpure {

// Counter-based splittable generator. The i-th output is a keyed hash of
// (seed, stream, i), so two states with equal (seed, stream) produce the
// same sequence and substreams derived from distinct ids never share draws,
// regardless of the order tiles or images get processed in.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t counter = 0;

  RngState() = default;
  RngState(std::uint64_t seed_, std::uint64_t stream_) : seed(seed_), stream(stream_) {}

  // Derived generator with an independent stream; counter starts at zero.
  RngState substream(std::uint64_t id) const;

  std::uint64_t next_u64();
  double next_double();  // uniform in [0, 1), 53-bit
  // Unbiased enough for range sampling at desk scale (128-bit multiply-shift).
  std::uint64_t next_below(std::uint64_t n);
};

// n i.i.d. standard normal draws (Box-Muller over pairs of uniforms).
std::vector<double> sample_gaussian(RngState& rng, std::size_t n);

ImageBuffer gaussian_image(RngState& rng, int h, int w, int c);

}  // namespace gridpure
