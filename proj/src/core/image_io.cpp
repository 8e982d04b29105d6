#include "agvp/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace agvp::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_warn(png_structp, png_const_charp) {}

}  // namespace

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Raster8 to_raster(const FrameImage& img) {
  Raster8 r{img.height(), img.width(), 3, {}};
  r.pixels.reserve(img.values().size());
  for (double v : img.values()) r.pixels.push_back(quantize(v));
  return r;
}

FrameImage from_raster(const Raster8& r) {
  if (r.channels != 3) throw IoError("expected an RGB raster");
  std::vector<double> v(r.pixels.size());
  std::transform(r.pixels.begin(), r.pixels.end(), v.begin(), [](std::uint8_t p) { return p / 255.0; });
  return FrameImage(r.height, r.width, std::move(v));
}

void write_png(const std::filesystem::path& path, const Raster8& r) {
  if (r.channels != 1 && r.channels != 3) throw IoError("PNG writer supports 1 or 3 channels");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  {
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), 8,
                 r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.channels);
    for (int y = 0; y < r.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(r.pixels.data() + static_cast<std::size_t>(y) * stride));
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
}

Raster8 read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  png_infop info = png_create_info_struct(png);
  Raster8 r;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng failed reading " + path.string());
  }
  {
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    r.width = static_cast<int>(png_get_image_width(png, info));
    r.height = static_cast<int>(png_get_image_height(png, info));
    r.channels = png_get_channels(png, info);
    r.pixels.resize(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height) *
                    static_cast<std::size_t>(r.channels));
    const std::size_t stride = static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.channels);
    for (int y = 0; y < r.height; ++y) png_read_row(png, r.pixels.data() + static_cast<std::size_t>(y) * stride, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return r;
}

void write_pgm(const std::filesystem::path& path, const Raster8& gray) {
  if (gray.channels != 1) throw IoError("PGM needs a single-channel raster");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << gray.width << ' ' << gray.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.pixels.data()), static_cast<std::streamsize>(gray.pixels.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Raster8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  Raster8 r;
  r.channels = 1;
  in >> magic >> r.width >> r.height >> maxval;
  if (magic != "P5" || maxval != 255 || r.width <= 0 || r.height <= 0) {
    throw IoError(path.string() + " is not an 8-bit binary PGM");
  }
  in.get();
  r.pixels.resize(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height));
  in.read(reinterpret_cast<char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  if (!in) throw IoError(path.string() + " is truncated");
  return r;
}

}  // namespace agvp::io
