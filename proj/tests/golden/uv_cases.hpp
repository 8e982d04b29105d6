#pragma once

// Fixed synthetic UV tracklets for the normalization chain goldens. Values are
// integer hashes scaled onto a 1/1020 grid so every platform builds the same
// inputs bit for bit.

#include "agvp/stream_na.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

namespace agvp::golden {

inline constexpr int kUvSide = 16;

struct UvCase {
  std::string name;
  std::vector<na::UvTexture> textures;
  std::vector<na::UvMask> masks;
};

inline double hashed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = a * 2654435761u + b * 40503u + c * 97u + d * 7919u + 12345u;
  h ^= h >> 13;
  h *= 0x5bd1e995u;
  h ^= h >> 15;
  return static_cast<double>(h % 1021u) / 1020.0;
}

/// Frame texture: a smooth gradient plus hashed noise, scaled into [lo, hi].
inline na::UvTexture case_texture(int id, int frame, double lo, double hi) {
  const int n = kUvSide * kUvSide;
  std::vector<double> v(static_cast<std::size_t>(n) * 3);
  for (int t = 0; t < n; ++t) {
    const int r = t / kUvSide, c = t % kUvSide;
    for (int ch = 0; ch < 3; ++ch) {
      const double base = 0.5 * (double(r) / (kUvSide - 1)) + 0.25 * (double((c + 3 * ch) % kUvSide) / (kUvSide - 1));
      const double noise = hashed(std::uint64_t(id), std::uint64_t(frame), std::uint64_t(t), std::uint64_t(ch));
      const double u = std::min(1.0, base + 0.25 * noise);
      v[static_cast<std::size_t>(t) * 3 + static_cast<std::size_t>(ch)] = lo + (hi - lo) * u;
    }
  }
  return na::UvTexture(kUvSide, kUvSide, std::move(v));
}

/// Visibility in eighths: a band of columns facing the camera, hashed dropouts.
inline na::UvMask case_mask(int id, int frame, int centre, int half_width, bool dropouts) {
  const int n = kUvSide * kUvSide;
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  for (int t = 0; t < n; ++t) {
    const int c = t % kUvSide;
    int dc = std::abs(c - centre);
    dc = std::min(dc, kUvSide - dc);
    if (dc > half_width) continue;
    double w = double(8 - (8 * dc) / (half_width + 1)) / 8.0;
    if (dropouts && hashed(std::uint64_t(id) + 100, std::uint64_t(frame), std::uint64_t(t), 0) < 0.15) w = 0.0;
    v[static_cast<std::size_t>(t)] = w;
  }
  return na::UvMask(kUvSide, kUvSide, std::move(v));
}

inline std::vector<UvCase> uv_cases() {
  std::vector<UvCase> cases;
  {  // single frame, fully visible: aggregation is the identity on the chain output
    UvCase k{"single_frame", {case_texture(0, 0, 0.1, 0.9)}, {na::UvMask::filled(kUvSide, kUvSide, 1.0)}};
    cases.push_back(std::move(k));
  }
  {  // three views around the body with partial overlap
    UvCase k{"three_views", {}, {}};
    for (int f = 0; f < 3; ++f) {
      k.textures.push_back(case_texture(1, f, 0.05 + 0.1 * f, 0.7 + 0.1 * f));
      k.masks.push_back(case_mask(1, f, 4 * f, 5, false));
    }
    cases.push_back(std::move(k));
  }
  {  // first frame unseen, so the reference is the second
    UvCase k{"late_reference", {}, {}};
    for (int f = 0; f < 4; ++f) {
      k.textures.push_back(case_texture(2, f, 0.0, 0.6 + 0.1 * f));
      k.masks.push_back(f == 0 ? na::UvMask::filled(kUvSide, kUvSide, 0.0) : case_mask(2, f, 5 * f, 4, true));
    }
    cases.push_back(std::move(k));
  }
  {  // nothing visible anywhere: zero texture, zero validity
    UvCase k{"zero_visibility", {}, {}};
    for (int f = 0; f < 2; ++f) {
      k.textures.push_back(case_texture(3, f, 0.2, 0.8));
      k.masks.push_back(na::UvMask::filled(kUvSide, kUvSide, 0.0));
    }
    cases.push_back(std::move(k));
  }
  {  // dark and bright frames with dropouts; gamma does real work here
    UvCase k{"exposure_sweep", {}, {}};
    for (int f = 0; f < 5; ++f) {
      const double lo = 0.02 * f;
      k.textures.push_back(case_texture(4, f, lo, lo + 0.3 + 0.15 * f));
      k.masks.push_back(case_mask(4, f, 3 * f + 1, 6, true));
    }
    cases.push_back(std::move(k));
  }
  return cases;
}

inline nlohmann::json case_to_json(const UvCase& k) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t f = 0; f < k.textures.size(); ++f) {
    const auto t = k.textures[f].values();
    const auto m = k.masks[f].values();
    frames.push_back({{"texture", std::vector<double>(t.begin(), t.end())},
                      {"mask", std::vector<double>(m.begin(), m.end())}});
  }
  return {{"name", k.name}, {"rows", kUvSide}, {"cols", kUvSide}, {"frames", frames}};
}

}  // namespace agvp::golden
