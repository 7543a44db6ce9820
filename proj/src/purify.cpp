#include "purify.hpp"

#include "diffusion.hpp"
#include "error.hpp"
#include "grid.hpp"

namespace gridpure {

void PurifyConfig::validate() const {
  if (t_pure < 1) fail(ErrorKind::invalid_argument, "purify config: t_pure must be >= 1");
  if (substeps < 1 || substeps > t_pure)
    fail(ErrorKind::invalid_argument, "purify config: need 1 <= substeps <= t_pure");
  if (iterations < 1) fail(ErrorKind::invalid_argument, "purify config: iterations must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail(ErrorKind::invalid_argument, "purify config: gamma must be in [0,1]");
  if (grid_size <= 0 || grid_size % 2 != 0)
    fail(ErrorKind::invalid_argument, "purify config: grid size must be positive and even");
}

ImageBuffer diffpure(const ImageBuffer& x, int t_pure, int substeps, const DenoiserBackend& backend,
                     const NoiseSchedule& sched, RngState& rng) {
  const std::vector<double> eps = sample_gaussian(rng, x.size());
  const ImageBuffer noised = forward_diffuse(x, t_pure, eps, sched);
  return ddim_reverse(noised, t_pure, substeps, backend, sched);
}

ImageBuffer gdp(const ImageBuffer& x, const PurifyConfig& cfg, const DenoiserBackend& backend,
                const NoiseSchedule& sched, const RngState& rng) {
  cfg.validate();
  const GridPlan plan = plan_grids(x.height, x.width, cfg.grid_size, cfg.with_corner);
  std::vector<ImageBuffer> purified;
  purified.reserve(plan.tiles.size());
  for (std::size_t i = 0; i < plan.tiles.size(); ++i) {
    RngState tile_rng = rng.substream(i);
    purified.push_back(diffpure(crop_tile(x, plan.tiles[i]), cfg.t_pure, cfg.substeps, backend, sched, tile_rng));
  }
  ImageBuffer merged = merge_tiles(plan, purified);
  merged.clamp01();
  return merged;
}

ImageBuffer gridpure(const ImageBuffer& x, const PurifyConfig& cfg, const DenoiserBackend& backend,
                     const NoiseSchedule& sched, const RngState& rng, const IterationObserver& observer) {
  cfg.validate();
  ImageBuffer current = x;
  for (int m = 0; m < cfg.iterations; ++m) {
    const ImageBuffer purified = gdp(current, cfg, backend, sched, rng.substream(static_cast<std::uint64_t>(m)));
    current = lincomb(1.0 - cfg.gamma, purified, cfg.gamma, current);
    // The blend of in-range values is in range up to rounding; keep iterates
    // exactly inside image space.
    current.clamp01();
    if (observer) observer(m, current);
  }
  return current;
}

}  // namespace gridpure
