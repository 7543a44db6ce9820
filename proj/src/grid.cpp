#include "grid.hpp"

#include <algorithm>

#include "error.hpp"

namespace gridpure {

namespace {

std::vector<int> axis_origins(int extent, int grid, int stride) {
  std::vector<int> origins;
  for (int o = 0; o <= extent - grid; o += stride) origins.push_back(o);
  if (origins.back() != extent - grid) origins.push_back(extent - grid);
  return origins;
}

}  // namespace

int GridPlan::min_coverage() const {
  return *std::min_element(coverage.begin(), coverage.end());
}

bool GridPlan::has_composite() const {
  return !tiles.empty() && tiles.back().kind == TileKind::corner_composite;
}

GridPlan plan_grids(int h, int w, int grid_size, bool with_corner) {
  if (grid_size <= 0) fail(ErrorKind::invalid_argument, "plan_grids: grid size must be positive");
  if (grid_size % 2 != 0) fail(ErrorKind::invalid_argument, "plan_grids: grid size must be even");
  if (h < 1 || w < 1) fail(ErrorKind::invalid_argument, "plan_grids: image dimensions must be positive");

  GridPlan plan;
  plan.image_h = h;
  plan.image_w = w;
  plan.tile_size = grid_size;
  plan.stride = grid_size / 2;
  plan.coverage.assign(static_cast<std::size_t>(h) * w, 0);

  auto add_tile = [&](Tile tile) {
    for (const Tile::Pair& p : tile.rects)
      for (int y = p.src.top; y < p.src.top + p.src.height; ++y)
        for (int x = p.src.left; x < p.src.left + p.src.width; ++x)
          ++plan.coverage[static_cast<std::size_t>(y) * w + x];
    plan.tiles.push_back(std::move(tile));
  };

  if (h < grid_size || w < grid_size) {
    // Degenerate rule: one tile spanning the whole image.
    Tile tile;
    tile.kind = TileKind::regular;
    tile.extent_h = h;
    tile.extent_w = w;
    tile.rects.push_back({Rect{0, 0, h, w}, Rect{0, 0, h, w}});
    add_tile(std::move(tile));
    return plan;
  }

  const std::vector<int> rows = axis_origins(h, grid_size, plan.stride);
  const std::vector<int> cols = axis_origins(w, grid_size, plan.stride);
  for (int r : rows) {
    for (int c : cols) {
      Tile tile;
      tile.kind = TileKind::regular;
      tile.extent_h = grid_size;
      tile.extent_w = grid_size;
      tile.rects.push_back({Rect{r, c, grid_size, grid_size}, Rect{0, 0, grid_size, grid_size}});
      add_tile(std::move(tile));
    }
  }

  if (with_corner && rows.size() >= 2 && cols.size() >= 2) {
    const int half = grid_size / 2;
    Tile corner;
    corner.kind = TileKind::corner_composite;
    corner.extent_h = grid_size;
    corner.extent_w = grid_size;
    corner.rects.push_back({Rect{0, 0, half, half}, Rect{0, 0, half, half}});
    corner.rects.push_back({Rect{0, w - half, half, half}, Rect{0, half, half, half}});
    corner.rects.push_back({Rect{h - half, 0, half, half}, Rect{half, 0, half, half}});
    corner.rects.push_back({Rect{h - half, w - half, half, half}, Rect{half, half, half, half}});
    add_tile(std::move(corner));
  }

  return plan;
}

ImageBuffer crop_tile(const ImageBuffer& img, const Tile& tile) {
  for (const Tile::Pair& p : tile.rects) {
    if (p.src.top < 0 || p.src.left < 0 || p.src.top + p.src.height > img.height ||
        p.src.left + p.src.width > img.width)
      fail(ErrorKind::invalid_argument, "crop_tile: dimension mismatch");
  }
  ImageBuffer out(tile.extent_h, tile.extent_w, img.channels);
  for (const Tile::Pair& p : tile.rects)
    for (int y = 0; y < p.src.height; ++y)
      for (int x = 0; x < p.src.width; ++x)
        for (int c = 0; c < img.channels; ++c)
          out.at(p.dst.top + y, p.dst.left + x, c) = img.at(p.src.top + y, p.src.left + x, c);
  return out;
}

ImageBuffer merge_tiles(const GridPlan& plan, const std::vector<ImageBuffer>& tiles) {
  if (tiles.size() != plan.tiles.size()) fail(ErrorKind::invalid_argument, "merge_tiles: tile count mismatch");
  if (tiles.empty()) fail(ErrorKind::invalid_argument, "merge_tiles: empty plan");
  const int channels = tiles.front().channels;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    if (tiles[i].height != plan.tiles[i].extent_h || tiles[i].width != plan.tiles[i].extent_w ||
        tiles[i].channels != channels)
      fail(ErrorKind::invalid_argument, "merge_tiles: tile size mismatch");
  }

  // Widened accumulation: coverage counts are small integers, so the sum of
  // equal contributions stays exact and merge(crop(img)) reproduces img
  // bit for bit after the single final rounding.
  std::vector<long double> acc(static_cast<std::size_t>(plan.image_h) * plan.image_w * channels, 0.0L);
  const auto idx = [&](int y, int x, int c) {
    return (static_cast<std::size_t>(y) * plan.image_w + x) * channels + c;
  };
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    for (const Tile::Pair& p : plan.tiles[i].rects)
      for (int y = 0; y < p.src.height; ++y)
        for (int x = 0; x < p.src.width; ++x)
          for (int c = 0; c < channels; ++c)
            acc[idx(p.src.top + y, p.src.left + x, c)] += tiles[i].at(p.dst.top + y, p.dst.left + x, c);
  }
  ImageBuffer out(plan.image_h, plan.image_w, channels);
  for (int y = 0; y < plan.image_h; ++y)
    for (int x = 0; x < plan.image_w; ++x) {
      const long double cov = plan.coverage_at(y, x);
      for (int c = 0; c < channels; ++c)
        out.at(y, x, c) = static_cast<double>(acc[idx(y, x, c)] / cov);
    }
  return out;
}

}  // namespace gridpure
