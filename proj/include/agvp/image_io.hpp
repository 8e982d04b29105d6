#pragma once

#include "agvp/core.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace agvp::io {

/// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Raster8 {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;
};

std::uint8_t quantize(double v);
Raster8 to_raster(const FrameImage& img);
FrameImage from_raster(const Raster8& r);

/// Writes an 8-bit RGB or gray PNG. Output bytes depend only on the pixels.
void write_png(const std::filesystem::path& path, const Raster8& r);
Raster8 read_png(const std::filesystem::path& path);

inline void write_png(const std::filesystem::path& path, const FrameImage& img) { write_png(path, to_raster(img)); }
inline FrameImage read_frame(const std::filesystem::path& path) { return from_raster(read_png(path)); }

/// Binary (P5) 8-bit PGM.
void write_pgm(const std::filesystem::path& path, const Raster8& gray);
Raster8 read_pgm(const std::filesystem::path& path);

}  // namespace agvp::io
