#include "agvp/stream_ats.hpp"

namespace agvp::ats {

void EncoderConfig::validate() const {
  if (patch < 1 || height < patch || width < patch || height % patch != 0 || width % patch != 0) {
    throw ConfigError("encoder input " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not a multiple of patch " + std::to_string(patch));
  }
  if (dim < 1 || depth < 1 || heads < 1 || dim % heads != 0 || mlp_ratio < 1) {
    throw ConfigError("encoder dim must be positive and divisible by heads");
  }
}

int token_count(int side, int patch) {
  if (patch < 1 || side < patch || side % patch != 0) throw ConfigError("side must be a multiple of patch");
  const int g = side / patch;
  return g * g + 1;
}

Mat frames_to_rows(std::span<const FrameImage> frames) {
  if (frames.empty()) throw StructuralError("no frames to encode");
  const int h = frames.front().height();
  const int w = frames.front().width();
  Mat out(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(h) * w * 3);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].height() != h || frames[i].width() != w) throw ShapeError("frames in a batch differ in size");
    const auto v = frames[i].values();
    for (std::size_t j = 0; j < v.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
  }
  return out;
}

Mat patchify(const Mat& pixels, const EncoderConfig& cfg) {
  const Eigen::Index expected = static_cast<Eigen::Index>(cfg.height) * cfg.width * 3;
  if (pixels.cols() != expected) {
    throw ShapeError("frame has " + std::to_string(pixels.cols()) + " values, encoder expects " +
                     std::to_string(expected));
  }
  const int gw = cfg.width / cfg.patch;
  const int gh = cfg.height / cfg.patch;
  const Eigen::Index tokens = cfg.tokens();
  Mat out = Mat::Zero(pixels.rows() * tokens, cfg.patch_dim());
  for (Eigen::Index f = 0; f < pixels.rows(); ++f) {
    for (int py = 0; py < gh; ++py) {
      for (int px = 0; px < gw; ++px) {
        const Eigen::Index row = f * tokens + 1 + py * gw + px;
        Eigen::Index col = 0;
        for (int y = 0; y < cfg.patch; ++y) {
          const Eigen::Index src = (static_cast<Eigen::Index>(py * cfg.patch + y) * cfg.width + px * cfg.patch) * 3;
          out.block(row, col, 1, cfg.patch * 3) = pixels.block(f, src, 1, cfg.patch * 3);
          col += cfg.patch * 3;
        }
      }
    }
  }
  return out;
}

TinyFrameEncoder::TinyFrameEncoder(nn::ParamStore& store, const std::string& name, const EncoderConfig& cfg,
                                   nn::Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  embed_ = nn::Linear(store, name + ".embed", cfg.patch_dim(), cfg.dim, rng);
  pos_ = store.add(name + ".pos", nn::randn(cfg.tokens(), cfg.dim, 0.1, rng));
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string b = name + ".block" + std::to_string(i);
    Block blk;
    blk.norm1 = nn::LayerNorm(store, b + ".norm1", cfg.dim);
    blk.attn = nn::MultiHeadAttention(store, b + ".attn", cfg.dim, cfg.heads, rng);
    blk.norm2 = nn::LayerNorm(store, b + ".norm2", cfg.dim);
    blk.mlp = nn::Mlp(store, b + ".mlp", cfg.dim, cfg.dim * cfg.mlp_ratio, cfg.dim, rng);
    blocks_.push_back(std::move(blk));
  }
  final_norm_ = nn::LayerNorm(store, name + ".norm", cfg.dim);
}

EncoderOutput TinyFrameEncoder::encode(const Mat& pixels) const {
  const Eigen::Index frames = pixels.rows();
  const Eigen::Index tokens = cfg_.tokens();
  // Pixels are centred so the zero class-token row sits mid-range.
  Mat patches = patchify(pixels, cfg_);
  patches.array() -= 0.5;
  for (Eigen::Index f = 0; f < frames; ++f) patches.row(f * tokens).setZero();

  EncoderOutput out;
  Var x = nn::add(embed_(nn::constant(std::move(patches))), nn::tile_rows(pos_, frames));
  for (const auto& blk : blocks_) {
    const Var h = blk.norm1(x);
    x = nn::add(x, blk.attn.attend(h, h, frames));
    x = nn::add(x, blk.mlp(blk.norm2(x)));
    out.layers.push_back(x);
  }
  out.pooled = nn::mean_rows_grouped(final_norm_(x), tokens);
  return out;
}

}  // namespace agvp::ats
