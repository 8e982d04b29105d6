#pragma once

// Per-frame UV texture sources for the appearance stream and the tracklet
// level texel-set builder.

#include "agvp/datagen.hpp"
#include "agvp/stream_na.hpp"

#include <filesystem>
#include <memory>

namespace agvp::na {

struct FrameUv {
  UvTexture texture;
  UvMask visibility;
};

class UvExtractor {
 public:
  virtual ~UvExtractor() = default;
  virtual FrameUv extract(const Tracklet& tracklet, std::size_t frame) const = 0;
  /// 3-D position of every texel for the tracklet's subject.
  virtual std::vector<Vec3> texel_coords(const Tracklet& tracklet) const = 0;
};

/// Ground truth from the synthetic generator; rejects anything else.
class OracleExtractor : public UvExtractor {
 public:
  explicit OracleExtractor(datagen::UvOracle oracle) : oracle_(std::move(oracle)) {}
  FrameUv extract(const Tracklet& tracklet, std::size_t frame) const override;
  std::vector<Vec3> texel_coords(const Tracklet& tracklet) const override;

 private:
  datagen::UvOracle oracle_;
};

/// PNG + PGM cache keyed by frame path. Results always go through the 8-bit
/// cache encoding so cold and warm runs agree exactly.
class CachedExtractor : public UvExtractor {
 public:
  CachedExtractor(std::shared_ptr<const UvExtractor> inner, std::filesystem::path dir);
  FrameUv extract(const Tracklet& tracklet, std::size_t frame) const override;
  std::vector<Vec3> texel_coords(const Tracklet& tracklet) const override { return inner_->texel_coords(tracklet); }

 private:
  std::shared_ptr<const UvExtractor> inner_;
  std::filesystem::path dir_;
};

struct TrackletTexels {
  TexelSet texels;
  ChainResult chain;
};

/// Clip frames -> normalize/match/gamma -> aggregate -> m texels.
TrackletTexels tracklet_texels(const UvExtractor& extractor, const Tracklet& tracklet, int clip_length, int m,
                               const ChainOptions& options = {});

}  // namespace agvp::na
