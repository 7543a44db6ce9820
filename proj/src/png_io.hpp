#pragma once

#include <string>

#include "image.hpp"

namespace gridpure {

// 8-bit grayscale or RGB PNG only; byte v maps to v/255. Alpha, palette and
// 16-bit streams are rejected.
ImageBuffer load_image(const std::string& path);

// Stores round(v*255) per component, so load(save(img)) differs from img by
// at most 1/510 per value. Pixel values must already be in [0,1].
void save_image(const ImageBuffer& img, const std::string& path);

}  // namespace gridpure
