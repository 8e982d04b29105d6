#pragma once

// Adapted Temporal-Spatial stream: frame encoder, recurrent shape model,
// shape-gated temporal enhancement, identity memory and its per-clip refinement.
// Batches are clip-major: row b*T + t is frame t of clip b.

#include "agvp/core.hpp"
#include "agvp/nn/layers.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace agvp::ats {

using nn::Mat;
using nn::Var;

struct EncoderConfig {
  int height = 128;
  int width = 64;
  int patch = 16;
  int dim = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 2;

  /// Patch tokens plus the class token.
  int tokens() const { return (height / patch) * (width / patch) + 1; }
  int patch_dim() const { return patch * patch * 3; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Token count law for a square input: (side/patch)^2 + 1.
int token_count(int side, int patch);

struct EncoderOutput {
  Var pooled;               // frames x dim, mean over the final normalised tokens
  std::vector<Var> layers;  // per block: (frames*tokens) x dim
};

/// Anything that maps a batch of frames to per-layer tokens.
class FrameEncoder {
 public:
  virtual ~FrameEncoder() = default;
  virtual const EncoderConfig& config() const = 0;
  /// `pixels` holds one flattened HxWx3 frame per row.
  virtual EncoderOutput encode(const Mat& pixels) const = 0;
};

/// Patch embedding + pre-norm transformer blocks. The class token is the
/// positional embedding of slot 0 (its pixel row is all zeros).
class TinyFrameEncoder : public FrameEncoder {
 public:
  TinyFrameEncoder(nn::ParamStore& store, const std::string& name, const EncoderConfig& cfg, nn::Rng& rng);
  const EncoderConfig& config() const override { return cfg_; }
  EncoderOutput encode(const Mat& pixels) const override;

 private:
  struct Block {
    nn::LayerNorm norm1, norm2;
    nn::MultiHeadAttention attn;
    nn::Mlp mlp;
  };
  EncoderConfig cfg_;
  nn::Linear embed_;
  Var pos_;
  std::vector<Block> blocks_;
  nn::LayerNorm final_norm_;
};

/// (frames*tokens) x patch_dim matrix for the encoder; row 0 of every frame is zero.
Mat patchify(const Mat& pixels, const EncoderConfig& cfg);
/// One flattened frame per row; every frame must already be height x width.
Mat frames_to_rows(std::span<const FrameImage> frames);

struct TsmOutput {
  Var g;     // (B*T) x hidden, clip-major
  Var beta;  // (B*T) x shape_dim
};

/// g_t = GRU(F_t, g_{t-1}), g_0 = 0; beta_t = regressor(g_t).
struct Tsm {
  Tsm() = default;
  Tsm(nn::ParamStore& store, Eigen::Index in, Eigen::Index hidden, Eigen::Index shape_dim, nn::Rng& rng);
  TsmOutput operator()(const Var& F, Eigen::Index frames) const;

  nn::GruCell gru;
  nn::Mlp regressor;
};

/// F + sigmoid(gate(P beta)) * (P beta), then one residual temporal
/// self-attention layer inside each clip.
struct Tfe {
  Tfe() = default;
  Tfe(nn::ParamStore& store, Eigen::Index dim, Eigen::Index shape_dim, int heads, nn::Rng& rng);
  Var operator()(const Var& F, const Var& beta, Eigen::Index frames, nn::AttentionProbe* probe = nullptr) const;

  nn::Linear project;
  nn::Linear gate;
  nn::MultiHeadAttention attn;
};

/// Per-clip mean over T frames.
Var tap(const Var& F, Eigen::Index frames);

/// m + CrossAttn(query m, keys/values = clip frames).
struct Ssp {
  Ssp() = default;
  Ssp(nn::ParamStore& store, Eigen::Index dim, int heads, nn::Rng& rng);
  /// F: (B*T) x d, memory: B x d. Returns B x d.
  Var operator()(const Var& F, const Var& memory, Eigen::Index frames, nn::AttentionProbe* probe = nullptr) const;

  nn::MultiHeadAttention attn;
};

/// Per-identity mean of clip TAP vectors.
class MemoryBank {
 public:
  void add(const PersonId& id, const Eigen::RowVectorXd& tap_vector);
  bool contains(const PersonId& id) const { return sums_.contains(id); }
  Eigen::RowVectorXd entry(const PersonId& id) const;
  std::size_t count(const PersonId& id) const;
  std::size_t size() const { return sums_.size(); }
  std::vector<PersonId> identities() const;

 private:
  std::map<PersonId, Eigen::RowVectorXd> sums_;
  std::map<PersonId, std::size_t> counts_;
};

struct AtsConfig {
  EncoderConfig encoder;
  int gru_hidden = 64;
  int shape_dim = 10;
  int heads = 4;
  bool operator==(const AtsConfig&) const = default;
};

enum class Mode { Train, Infer };

class Stream1Model {
 public:
  Stream1Model(const AtsConfig& cfg, nn::Rng& rng);
  Stream1Model(const Stream1Model&) = delete;
  Stream1Model& operator=(const Stream1Model&) = delete;

  const AtsConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  Var encode_frames(const Mat& pixels) const;
  /// Enhanced per-frame features for B clips of T frames.
  Var enhanced(const Mat& pixels, Eigen::Index frames) const;
  /// [tap(F_enhanced); refined memory], B x 2d. Train mode needs one bank row
  /// per clip; infer mode uses the clip's own TAP vector in its place.
  Var forward(const Mat& pixels, Eigen::Index frames, Mode mode, const Mat* memory = nullptr) const;

  nn::ParamStore params_;
  TinyFrameEncoder encoder;
  Tsm tsm;
  Tfe tfe;
  Ssp ssp;

 private:
  AtsConfig cfg_;
};

/// Bank from labelled clips: entry = mean TAP(F_enhanced) per identity.
MemoryBank build_memory(const Stream1Model& model, std::span<const Mat> clips, std::span<const PersonId> labels,
                        Eigen::Index frames);

}  // namespace agvp::ats
