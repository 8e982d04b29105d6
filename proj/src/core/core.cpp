#include "agvp/core.hpp"

#include <algorithm>
#include <cmath>

namespace agvp {

std::string_view to_string(Platform p) {
  switch (p) {
    case Platform::Aerial: return "aerial";
    case Platform::CCTV: return "cctv";
    case Platform::Wearable: return "wearable";
  }
  return "?";
}

Platform platform_from_string(std::string_view s) {
  if (s == "aerial") return Platform::Aerial;
  if (s == "cctv") return Platform::CCTV;
  if (s == "wearable") return Platform::Wearable;
  throw ValidationError("unknown platform '" + std::string(s) + "'");
}

AltitudeBucket altitude_from_meters(int m) {
  switch (m) {
    case 0: return AltitudeBucket::Ground;
    case 15: return AltitudeBucket::A15;
    case 30: return AltitudeBucket::A30;
    case 80: return AltitudeBucket::A80;
    case 120: return AltitudeBucket::A120;
    default: throw ValidationError("unsupported altitude " + std::to_string(m) + " m");
  }
}

void check_platform_altitude(Platform p, AltitudeBucket a) {
  const bool ground_alt = a == AltitudeBucket::Ground;
  if (is_ground(p) != ground_alt) {
    throw ValidationError(std::string("platform ") + std::string(to_string(p)) +
                          " is inconsistent with altitude " + std::to_string(meters(a)) + " m");
  }
}

FrameImage::FrameImage(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height < 8 || width < 8) {
    throw ValidationError("frame must be at least 8x8, got " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
  if (values_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3) {
    throw ValidationError("frame value count does not match HxWx3");
  }
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw ValidationError("frame values must be finite and within [0,1]");
    }
  }
}

FrameImage FrameImage::filled(int height, int width, double value) {
  return FrameImage(height, width,
                    std::vector<double>(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3, value));
}

void Tracklet::validate() const {
  if (frames.empty()) throw StructuralError("tracklet " + tracklet_id.str() + " has no frames");
  check_platform_altitude(platform, altitude);
}

Embedding::Embedding(std::vector<double> values, bool normalized)
    : values_(std::move(values)), normalized_(normalized) {
  if (values_.empty()) throw ValidationError("embedding must have dim > 0");
  double sq = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("embedding has a non-finite entry");
    sq += v * v;
  }
  if (normalized_ && std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
    throw ValidationError("embedding flagged normalized but its L2 norm is not 1");
  }
}

Embedding Embedding::normalized_from(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  const double n = std::sqrt(sq);
  if (!(n > 0.0)) throw ValidationError("cannot normalize a zero embedding");
  for (double& v : values) v /= n;
  return Embedding(std::move(values), true);
}

std::vector<std::size_t> clip_indices(std::size_t length, int clip_length) {
  if (clip_length < 1) throw ValidationError("clip length must be >= 1");
  if (length == 0) throw StructuralError("cannot sample a clip from an empty tracklet");
  const auto t = static_cast<std::size_t>(clip_length);
  std::vector<std::size_t> idx(t);
  if (length >= t) {
    for (std::size_t i = 0; i < t; ++i) idx[i] = i * length / t;
  } else {
    for (std::size_t i = 0; i < t; ++i) idx[i] = std::min(i, length - 1);
  }
  return idx;
}

std::vector<FrameImage> sample_clip(std::span<const FrameImage> frames, int clip_length) {
  std::vector<FrameImage> out;
  for (std::size_t i : clip_indices(frames.size(), clip_length)) out.push_back(frames[i]);
  return out;
}

namespace {

// Bilinearly resamples `img` to ch x cw and writes it into a canvas of width
// `canvas_w` at (y_off, x_off).
void bilinear_into(const FrameImage& img, int ch, int cw, std::vector<double>& canvas, int canvas_w,
                   int y_off, int x_off) {
  const double sy = double(img.height()) / ch;
  const double sx = double(img.width()) / cw;
  for (int y = 0; y < ch; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(img.height() - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < cw; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(img.width() - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      const std::size_t base = (static_cast<std::size_t>(y + y_off) * static_cast<std::size_t>(canvas_w) +
                                static_cast<std::size_t>(x + x_off)) * 3;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        canvas[base + static_cast<std::size_t>(c)] = std::clamp(top * (1 - wy) + bot * wy, 0.0, 1.0);
      }
    }
  }
}

}  // namespace

FrameImage resize_bilinear(const FrameImage& img, int out_h, int out_w) {
  if (out_h == img.height() && out_w == img.width()) return img;
  std::vector<double> out(static_cast<std::size_t>(out_h) * static_cast<std::size_t>(out_w) * 3);
  bilinear_into(img, out_h, out_w, out, out_w, 0, 0);
  return FrameImage(out_h, out_w, std::move(out));
}

FrameImage pad_and_resize(const FrameImage& img, int side) {
  if (side < 8) throw ValidationError("pad_and_resize side must be >= 8");
  const double s = double(side) / std::max(img.height(), img.width());
  const int ch = std::clamp(static_cast<int>(std::lround(img.height() * s)), 1, side);
  const int cw = std::clamp(static_cast<int>(std::lround(img.width() * s)), 1, side);
  if (ch == side && cw == side) return resize_bilinear(img, side, side);
  std::vector<double> out(static_cast<std::size_t>(side) * static_cast<std::size_t>(side) * 3, 0.0);
  bilinear_into(img, ch, cw, out, side, (side - ch) / 2, (side - cw) / 2);
  return FrameImage(side, side, std::move(out));
}

FrameImage flip_horizontal(const FrameImage& img) {
  std::vector<double> out(img.values().size());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c)
        out[(static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()) + static_cast<std::size_t>(x)) * 3 +
            static_cast<std::size_t>(c)] = img.at(y, img.width() - 1 - x, c);
  return FrameImage(img.height(), img.width(), std::move(out));
}

}  // namespace agvp
