#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "image.hpp"

namespace gridpure {

// Tensor frame wire format, used verbatim for external denoiser requests and
// responses:
//
//   ASCII header  "EPS <height> <width> <channels> <timestep>\n"
//   payload       height*width*channels float32, little-endian,
//                 row-major channel-interleaved
//
// Values are stored at float32 precision regardless of internal precision.
void write_tensor(const ImageBuffer& img, int timestep, std::ostream& out);
ImageBuffer read_tensor(std::istream& in, int* timestep_out);

std::vector<std::uint8_t> encode_frame(const ImageBuffer& img, int timestep);
ImageBuffer decode_frame(const std::uint8_t* data, std::size_t size, int* timestep_out);

// Parses just the header line (text up to and including '\n').
// Returns the payload byte count; validates dimensions.
std::size_t parse_frame_header(const std::string& line, int* h, int* w, int* c, int* timestep);

}  // namespace gridpure
