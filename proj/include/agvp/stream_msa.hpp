#pragma once

// Multi-Scale Attention stream: tokens tapped from the last N encoder layers,
// a local temporal module per decoder block, and a query token refined by M
// decoder blocks.

#include "agvp/stream_ats.hpp"

namespace agvp::msa {

using nn::Mat;
using nn::Var;

struct MsaConfig {
  ats::EncoderConfig encoder{64, 64, 16, 64, 4, 4, 2};
  int taps = 4;    // N
  int blocks = 4;  // M
  int heads = 4;
  int embed_dim = 128;
  bool train_encoder = false;

  void validate() const;
  bool operator==(const MsaConfig&) const = default;
};

/// Last N layer token maps, each (B*T*P) x d.
struct FeatureVolume {
  std::vector<Var> layers;
  Eigen::Index frames = 0;
  Eigen::Index tokens = 0;
};

FeatureVolume tap_layers(const ats::EncoderOutput& encoded, Eigen::Index frames, Eigen::Index tokens, int n);

/// Y = G + dwconv_t(G) (kernel 3, zero padding); without the residual Y = dwconv_t(G).
struct TempModule {
  TempModule() = default;
  TempModule(nn::ParamStore& store, const std::string& name, Eigen::Index dim, nn::Rng& rng);
  Var operator()(const Var& G, Eigen::Index frames, Eigen::Index tokens) const;

  Var kernel;  // 3 x d
  bool residual = true;
};

/// q~ = q + MHA(q, Y, Y); q' = q~ + MLP(q~), with each clip's T*P tokens as keys.
struct DecoderBlock {
  DecoderBlock() = default;
  DecoderBlock(nn::ParamStore& store, const std::string& name, Eigen::Index dim, int heads, nn::Rng& rng);
  Var operator()(const Var& q, const Var& Y, nn::AttentionProbe* probe = nullptr) const;

  nn::MultiHeadAttention attn;
  nn::Mlp mlp;
};

/// Which tapped layer each block consumed, plus the attention it produced.
struct MsaTrace {
  std::vector<int> layer_for_block;  // 1-based index into G_1..G_N
  std::vector<nn::AttentionProbe> attention;
};

class Stream3Model {
 public:
  Stream3Model(const MsaConfig& cfg, nn::Rng& rng);
  Stream3Model(const Stream3Model&) = delete;
  Stream3Model& operator=(const Stream3Model&) = delete;

  const MsaConfig& config() const { return cfg_; }
  /// Trainable parameters (temporal modules, decoder, query, head; plus the
  /// encoder when it is not frozen).
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  nn::ParamStore& encoder_params() { return encoder_params_; }
  const nn::ParamStore& encoder_params() const { return encoder_params_; }

  FeatureVolume features(const Mat& pixels, Eigen::Index frames) const;
  /// f_G for B clips of T frames: B x embed_dim.
  Var forward(const Mat& pixels, Eigen::Index frames, MsaTrace* trace = nullptr) const;
  Var decode(const FeatureVolume& volume, MsaTrace* trace = nullptr) const;

  nn::ParamStore encoder_params_;
  nn::ParamStore params_;
  ats::TinyFrameEncoder encoder;
  std::vector<TempModule> temporal;
  std::vector<DecoderBlock> decoder;
  Var query;  // q_0, 1 x d
  nn::Linear head;

 private:
  MsaConfig cfg_;
};

}  // namespace agvp::msa
