#include "rng.hpp"

#include <cmath>

#include "error.hpp"

namespace gridpure {

namespace {

// SplitMix64 finalizer; full-avalanche mixing of one word.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kStreamSalt = 0x632be59bd9b4e019ULL;

inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed + kGolden * mix64(stream + kStreamSalt));
}

}  // namespace

RngState RngState::substream(std::uint64_t id) const {
  RngState child;
  child.seed = seed;
  child.stream = mix64(stream ^ mix64(id + kGolden));
  child.counter = 0;
  return child;
}

std::uint64_t RngState::next_u64() {
  const std::uint64_t key = derive_key(seed, stream);
  std::uint64_t z = mix64(counter * kGolden + key);
  ++counter;
  return mix64(z ^ key);
}

double RngState::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngState::next_below(std::uint64_t n) {
  if (n == 0) fail(ErrorKind::invalid_argument, "next_below: empty range");
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

std::vector<double> sample_gaussian(RngState& rng, std::size_t n) {
  if (n == 0) fail(ErrorKind::invalid_argument, "sample_gaussian: n must be positive");
  std::vector<double> out(n);
  const double two_pi = 2.0 * M_PI;
  for (std::size_t i = 0; i < n; i += 2) {
    // u1 in (0,1] keeps the log finite.
    double u1 = (static_cast<double>(rng.next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = rng.next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    out[i] = r * std::cos(two_pi * u2);
    if (i + 1 < n) out[i + 1] = r * std::sin(two_pi * u2);
  }
  return out;
}

ImageBuffer gaussian_image(RngState& rng, int h, int w, int c) {
  ImageBuffer img(h, w, c);
  img.data = sample_gaussian(rng, img.size());
  return img;
}

}  // namespace gridpure
