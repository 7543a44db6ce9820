#include "png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <vector>

#include "error.hpp"

namespace gridpure {

namespace {

void quiet_warning(png_structp, png_const_charp) {}

struct PngReader {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriter {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

}  // namespace

ImageBuffer load_image(const std::string& path) {
  PngReader r;
  r.fp = std::fopen(path.c_str(), "rb");
  if (!r.fp) fail(ErrorKind::io, "cannot open " + path);

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    fail(ErrorKind::format, path + ": not a PNG stream");

  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, quiet_warning);
  if (!r.png) fail(ErrorKind::io, "libpng allocation failure");
  r.info = png_create_info_struct(r.png);
  if (!r.info) fail(ErrorKind::io, "libpng allocation failure");

  if (setjmp(png_jmpbuf(r.png))) fail(ErrorKind::format, path + ": corrupt PNG stream");

  png_init_io(r.png, r.fp);
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);

  const int bit_depth = png_get_bit_depth(r.png, r.info);
  const int color_type = png_get_color_type(r.png, r.info);
  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);

  if (bit_depth != 8) fail(ErrorKind::format, path + ": unsupported bit depth");
  int channels;
  if (color_type == PNG_COLOR_TYPE_GRAY) {
    channels = 1;
  } else if (color_type == PNG_COLOR_TYPE_RGB) {
    channels = 3;
  } else {
    fail(ErrorKind::format, path + ": unsupported channel layout");
  }
  if (w < 1 || h < 1 || w > (1u << 20) || h > (1u << 20))
    fail(ErrorKind::format, path + ": unreasonable image dimensions");

  png_set_interlace_handling(r.png);
  png_read_update_info(r.png, r.info);

  const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
  std::vector<unsigned char> bytes(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = bytes.data() + y * rowbytes;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);

  ImageBuffer img(static_cast<int>(h), static_cast<int>(w), channels);
  const std::size_t n = img.size();
  for (std::size_t i = 0; i < n; ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void save_image(const ImageBuffer& img, const std::string& path) {
  if (img.height < 1 || img.width < 1 || (img.channels != 1 && img.channels != 3))
    fail(ErrorKind::invalid_argument, "save_image: invalid image");
  if (!img.in_unit_range()) fail(ErrorKind::invalid_argument, "save_image: pixel values outside [0,1]");

  PngWriter w;
  w.fp = std::fopen(path.c_str(), "wb");
  if (!w.fp) fail(ErrorKind::io, "cannot write " + path);

  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, quiet_warning);
  if (!w.png) fail(ErrorKind::io, "libpng allocation failure");
  w.info = png_create_info_struct(w.png);
  if (!w.info) fail(ErrorKind::io, "libpng allocation failure");

  if (setjmp(png_jmpbuf(w.png))) fail(ErrorKind::io, "PNG encode failure for " + path);

  png_init_io(w.png, w.fp);
  const int color_type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(w.png, w.info, img.width, img.height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);

  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[static_cast<std::size_t>(x) * img.channels + c] =
            static_cast<unsigned char>(std::lround(img.at(y, x, c) * 255.0));
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, w.info);
}

}  // namespace gridpure
