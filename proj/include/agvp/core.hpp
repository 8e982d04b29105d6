#pragma once

// Domain types shared by every stream, plus clip sampling and image geometry.

#include "agvp/errors.hpp"

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace agvp {

template <class Tag>
class Id {
 public:
  Id() = default;
  explicit Id(std::string v) : value_(std::move(v)) {
    if (value_.empty()) throw ValidationError(std::string(Tag::name) + " must be non-empty");
  }
  const std::string& str() const { return value_; }
  bool empty() const { return value_.empty(); }
  auto operator<=>(const Id&) const = default;

 private:
  std::string value_;
};

struct PersonTag { static constexpr const char* name = "person_id"; };
struct CameraTag { static constexpr const char* name = "camera_id"; };
struct SessionTag { static constexpr const char* name = "session"; };
struct ClothingTag { static constexpr const char* name = "clothing_id"; };
struct TrackletTag { static constexpr const char* name = "tracklet_id"; };

using PersonId = Id<PersonTag>;
using CameraId = Id<CameraTag>;
using SessionId = Id<SessionTag>;
using ClothingId = Id<ClothingTag>;
using TrackletId = Id<TrackletTag>;

enum class Platform { Aerial, CCTV, Wearable };

std::string_view to_string(Platform p);
Platform platform_from_string(std::string_view s);
inline bool is_ground(Platform p) { return p != Platform::Aerial; }

/// Altitude in metres; Ground is 0.
enum class AltitudeBucket : int { Ground = 0, A15 = 15, A30 = 30, A80 = 80, A120 = 120 };

AltitudeBucket altitude_from_meters(int meters);
inline int meters(AltitudeBucket a) { return static_cast<int>(a); }
/// Throws ValidationError unless ground platforms carry Ground and aerial ones do not.
void check_platform_altitude(Platform p, AltitudeBucket a);

/// HxWx3 image, values in [0,1], stored row-major with interleaved channels.
class FrameImage {
 public:
  FrameImage(int height, int width, std::vector<double> values);
  static FrameImage filled(int height, int width, double value);

  int height() const { return height_; }
  int width() const { return width_; }
  static constexpr int channels() { return 3; }
  double at(int y, int x, int c) const { return values_[index(y, x, c)]; }
  std::span<const double> values() const { return values_; }

  bool operator==(const FrameImage&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3 +
           static_cast<std::size_t>(c);
  }
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

struct Tracklet {
  TrackletId tracklet_id;
  PersonId person_id;
  CameraId camera_id;
  Platform platform = Platform::CCTV;
  AltitudeBucket altitude = AltitudeBucket::Ground;
  SessionId session;
  ClothingId clothing_id;
  std::vector<std::string> frames;  // temporal order

  /// Throws on an empty frame list or inconsistent platform/altitude.
  void validate() const;
  bool operator==(const Tracklet&) const = default;
};

class Embedding {
 public:
  explicit Embedding(std::vector<double> values, bool normalized = false);
  static Embedding normalized_from(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  bool normalized() const { return normalized_; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
  bool normalized_;
};

/// Frame indices for a clip of length T out of L frames: floor(i*L/T) when
/// L >= T, otherwise 0..L-1 followed by repeats of the last index.
std::vector<std::size_t> clip_indices(std::size_t length, int clip_length);
std::vector<FrameImage> sample_clip(std::span<const FrameImage> frames, int clip_length);

/// Half-pixel-centred bilinear resampling. Same-size input is returned unchanged.
FrameImage resize_bilinear(const FrameImage& img, int out_height, int out_width);
/// Aspect-preserving resize into a side x side canvas, content centred, zero padding.
FrameImage pad_and_resize(const FrameImage& img, int side);
FrameImage flip_horizontal(const FrameImage& img);

}  // namespace agvp
