#pragma once

#include <functional>

#include "denoiser.hpp"
#include "image.hpp"
#include "rng.hpp"
#include "schedule.hpp"

namespace gridpure {

struct PurifyConfig {
  int t_pure = 10;      // forward-noise timestep per pass
  int substeps = 10;    // DDIM reverse steps per pass
  int iterations = 10;  // M
  double gamma = 0.1;   // blend weight toward the previous iterate
  int grid_size = 256;  // G
  bool with_corner = true;
  void validate() const;
};

// Single-pass purification: forward diffuse to t_pure with fresh noise from
// rng, then DDIM reverse with the given substep count. Output clamped.
ImageBuffer diffpure(const ImageBuffer& x, int t_pure, int substeps, const DenoiserBackend& backend,
                     const NoiseSchedule& sched, RngState& rng);

// Grid pass: plan the overlapped tiling, purify each tile independently with
// noise from rng.substream(tile_index), merge by averaging. Tiles can run
// concurrently without changing the result because the substream keying and
// the fixed-order merge make the output schedule-independent.
ImageBuffer gdp(const ImageBuffer& x, const PurifyConfig& cfg, const DenoiserBackend& backend,
                const NoiseSchedule& sched, const RngState& rng);

using IterationObserver = std::function<void(int iteration, const ImageBuffer& current)>;

// Iterated grid purification: x_{m+1} = (1-gamma) * gdp(x_m) + gamma * x_m
// for m = 0..M-1, where iteration m draws its tile noise from
// rng.substream(m). The observer, when set, sees each blended iterate.
ImageBuffer gridpure(const ImageBuffer& x, const PurifyConfig& cfg, const DenoiserBackend& backend,
                     const NoiseSchedule& sched, const RngState& rng, const IterationObserver& observer = {});

}  // namespace gridpure
