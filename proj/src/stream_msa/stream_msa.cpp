#include "agvp/stream_msa.hpp"

namespace agvp::msa {

void MsaConfig::validate() const {
  encoder.validate();
  if (taps < 1 || blocks < 1) throw ConfigError("msa: N and M must be >= 1");
  if (blocks > taps) {
    throw ConfigError("msa: M = " + std::to_string(blocks) + " decoder blocks need M <= N = " + std::to_string(taps));
  }
  if (encoder.depth < taps) {
    throw ConfigError("msa: encoder has " + std::to_string(encoder.depth) + " layers, cannot tap " + std::to_string(taps));
  }
  if (embed_dim < 1 || heads < 1 || encoder.dim % heads != 0) throw ConfigError("msa: invalid heads/embed_dim");
}

FeatureVolume tap_layers(const ats::EncoderOutput& encoded, Eigen::Index frames, Eigen::Index tokens, int n) {
  const int depth = static_cast<int>(encoded.layers.size());
  if (n < 1 || depth < n) {
    throw StructuralError("encoder exposes " + std::to_string(depth) + " layers, " + std::to_string(n) + " requested");
  }
  FeatureVolume v;
  v.frames = frames;
  v.tokens = tokens;
  v.layers.assign(encoded.layers.end() - n, encoded.layers.end());
  return v;
}

TempModule::TempModule(nn::ParamStore& store, const std::string& name, Eigen::Index dim, nn::Rng& rng)
    : kernel(store.add(name + ".kernel", nn::randn(3, dim, 0.1, rng))) {}

Var TempModule::operator()(const Var& G, Eigen::Index frames, Eigen::Index tokens) const {
  const Var conv = nn::temporal_dwconv(G, kernel, frames, tokens);
  return residual ? nn::add(G, conv) : conv;
}

DecoderBlock::DecoderBlock(nn::ParamStore& store, const std::string& name, Eigen::Index dim, int heads, nn::Rng& rng)
    : attn(store, name + ".attn", dim, heads, rng), mlp(store, name + ".mlp", dim, 2 * dim, dim, rng) {}

Var DecoderBlock::operator()(const Var& q, const Var& Y, nn::AttentionProbe* probe) const {
  const Var refined = nn::add(q, attn.attend(q, Y, q->rows(), probe));
  return nn::add(refined, mlp(refined));
}

Stream3Model::Stream3Model(const MsaConfig& cfg, nn::Rng& rng)
    : encoder(encoder_params_, "msa.encoder", cfg.encoder, rng), cfg_(cfg) {
  cfg_.validate();
  const Eigen::Index d = cfg.encoder.dim;
  for (int i = 0; i < cfg.blocks; ++i) {
    temporal.emplace_back(params_, "msa.temp" + std::to_string(i + 1), d, rng);
    decoder.emplace_back(params_, "msa.decoder" + std::to_string(i + 1), d, cfg.heads, rng);
  }
  query = params_.add("msa.query", nn::randn(1, d, 1.0, rng));
  head = nn::Linear(params_, "msa.head", d, cfg.embed_dim, rng);
  encoder_params_.set_trainable(cfg.train_encoder);
}

FeatureVolume Stream3Model::features(const Mat& pixels, Eigen::Index frames) const {
  if (frames < 1 || pixels.rows() % frames != 0) throw ShapeError("msa: pixel rows are not whole clips");
  if (!cfg_.train_encoder) {
    nn::NoGradGuard frozen;
    return tap_layers(encoder.encode(pixels), frames, cfg_.encoder.tokens(), cfg_.taps);
  }
  return tap_layers(encoder.encode(pixels), frames, cfg_.encoder.tokens(), cfg_.taps);
}

Var Stream3Model::decode(const FeatureVolume& volume, MsaTrace* trace) const {
  const int n = static_cast<int>(volume.layers.size());
  const int m = static_cast<int>(decoder.size());
  if (m > n) throw ConfigError("msa: more decoder blocks than tapped layers");
  const Eigen::Index span = volume.frames * volume.tokens;
  const Eigen::Index clips = volume.layers.front()->rows() / span;

  Var q = nn::tile_rows(query, clips);
  for (int i = 1; i <= m; ++i) {
    // Block i reads G_{N-M+i}.
    const int layer = n - m + i;
    const Var Y = temporal[static_cast<std::size_t>(i - 1)](volume.layers[static_cast<std::size_t>(layer - 1)],
                                                            volume.frames, volume.tokens);
    nn::AttentionProbe probe;
    q = decoder[static_cast<std::size_t>(i - 1)](q, Y, trace != nullptr ? &probe : nullptr);
    if (trace != nullptr) {
      trace->layer_for_block.push_back(layer);
      trace->attention.push_back(std::move(probe));
    }
  }
  return head(q);
}

Var Stream3Model::forward(const Mat& pixels, Eigen::Index frames, MsaTrace* trace) const {
  return decode(features(pixels, frames), trace);
}

}  // namespace agvp::msa
