#include "agvp/uv_extract.hpp"

namespace agvp::na {

FrameUv OracleExtractor::extract(const Tracklet& tracklet, std::size_t frame) const {
  auto uv = oracle_.uv(tracklet, frame);
  return {std::move(uv.texture), std::move(uv.visibility)};
}

std::vector<Vec3> OracleExtractor::texel_coords(const Tracklet& tracklet) const { return oracle_.texel_coords(tracklet); }

CachedExtractor::CachedExtractor(std::shared_ptr<const UvExtractor> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
  if (!inner_) throw ValidationError("cached extractor needs an inner extractor");
}

FrameUv CachedExtractor::extract(const Tracklet& tracklet, std::size_t frame) const {
  if (frame >= tracklet.frames.size()) throw ValidationError("frame index outside tracklet " + tracklet.tracklet_id.str());
  auto base = dir_ / tracklet.frames[frame];
  auto png = base;
  png += ".uv.png";
  auto pgm = base;
  pgm += ".vis.pgm";
  if (!std::filesystem::exists(png) || !std::filesystem::exists(pgm)) {
    const FrameUv fresh = inner_->extract(tracklet, frame);
    std::filesystem::create_directories(png.parent_path());
    save_uv_pair(png, pgm, fresh.texture, fresh.visibility);
  }
  auto [tex, vis] = load_uv_pair(png, pgm);
  return {std::move(tex), std::move(vis)};
}

TrackletTexels tracklet_texels(const UvExtractor& extractor, const Tracklet& tracklet, int clip_length, int m,
                               const ChainOptions& options) {
  tracklet.validate();
  std::vector<UvTexture> textures;
  std::vector<UvMask> masks;
  for (std::size_t i : clip_indices(tracklet.frames.size(), clip_length)) {
    FrameUv uv = extractor.extract(tracklet, i);
    textures.push_back(std::move(uv.texture));
    masks.push_back(std::move(uv.visibility));
  }
  TrackletTexels out;
  out.chain = normalize_and_aggregate(textures, masks, options);
  out.texels = texel_sample(out.chain.aggregated, extractor.texel_coords(tracklet), m);
  return out;
}

}  // namespace agvp::na
