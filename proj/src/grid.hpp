#pragma once

#include <vector>

#include "image.hpp"

namespace gridpure {

struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

enum class TileKind { regular, corner_composite };

// A tile is a set of (source-rect -> tile-rect) copies. Regular tiles have a
// single full-extent pair; the corner-composite tile stitches the four
// image corners into its four quadrants (TL, TR, BL, BR kept in place).
struct Tile {
  TileKind kind = TileKind::regular;
  int extent_h = 0;  // tile buffer height
  int extent_w = 0;
  struct Pair {
    Rect src;  // in image coordinates
    Rect dst;  // in tile coordinates
  };
  std::vector<Pair> rects;
};

struct GridPlan {
  int image_h = 0;
  int image_w = 0;
  int tile_size = 0;  // G; degenerate single-tile plans keep the image extent instead
  int stride = 0;     // G/2
  std::vector<Tile> tiles;
  std::vector<int> coverage;  // image_h * image_w contributing-tile counts

  int coverage_at(int y, int x) const { return coverage[static_cast<std::size_t>(y) * image_w + x]; }
  int min_coverage() const;
  bool has_composite() const;
};

// Overlapped tiling: regular origins {0, S, 2S, ...} with S = G/2, clamped so
// the last origin sits flush at h-G (a flush tile is appended when (h-G) is
// not a multiple of S), plus an optional corner-composite tile once the plan
// has at least two rows and two columns. Images smaller than G in either
// dimension degenerate to a single whole-image tile.
GridPlan plan_grids(int h, int w, int grid_size, bool with_corner);

ImageBuffer crop_tile(const ImageBuffer& img, const Tile& tile);

// Per-pixel average of all contributions: sum of covering tile values divided
// by the coverage count. Accumulation runs in plan order, so the result does
// not depend on how the tile buffers were produced.
ImageBuffer merge_tiles(const GridPlan& plan, const std::vector<ImageBuffer>& tiles);

}  // namespace gridpure
