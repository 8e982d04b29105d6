#pragma once

// Normalized Appearance stream: per-frame UV texture normalization
// (normalize -> histogram match -> gamma), visibility-weighted aggregation,
// texel sampling and the omni-scale texel-set encoder.

#include "agvp/errors.hpp"
#include "agvp/nn/layers.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace agvp::na {

using Vec3 = Eigen::Vector3d;

/// rows x cols x 3 texture in UV space, values in [0,1].
class UvTexture {
 public:
  UvTexture() = default;
  UvTexture(int rows, int cols, std::vector<double> values);
  static UvTexture filled(int rows, int cols, double v);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t texels() const { return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_); }
  double& at(std::size_t texel, int c) { return values_[texel * 3 + static_cast<std::size_t>(c)]; }
  double at(std::size_t texel, int c) const { return values_[texel * 3 + static_cast<std::size_t>(c)]; }
  std::span<const double> values() const { return values_; }
  /// Throws ValidationError on non-finite or out-of-range values.
  void validate() const;
  bool operator==(const UvTexture&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

/// rows x cols visibility weights in [0,1].
class UvMask {
 public:
  UvMask() = default;
  UvMask(int rows, int cols, std::vector<double> values);
  static UvMask filled(int rows, int cols, double v);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t texels() const { return values_.size(); }
  double& at(std::size_t texel) { return values_[texel]; }
  double at(std::size_t texel) const { return values_[texel]; }
  std::span<const double> values() const { return values_; }
  bool any_visible() const;
  bool operator==(const UvMask&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

enum class Status { Ok, AllInvisible, ReferenceInvisible, Resampled };

struct TextureResult {
  UvTexture texture;
  Status status = Status::Ok;
};

inline constexpr double kTargetMean = 0.5;
inline constexpr double kTargetStd = 0.2;

/// Per-channel affine rescale over visible texels to mean 0.5 / std 0.2,
/// clamped to [0,1]; invisible texels untouched.
TextureResult normalize_uv(const UvTexture& tex, const UvMask& vis);

/// Per-channel CDF matching of visible texels against the visible texels of `ref`.
TextureResult histogram_match(const UvTexture& tex, const UvMask& vis, const UvTexture& ref,
                              const UvMask& ref_vis);

/// Elementwise power law T^g.
UvTexture gamma_correct(const UvTexture& tex, double g);
/// Exponent that maps the mean visible luminance to 0.5 (1 when undefined),
/// clamped to [0.25, 4].
double solve_gamma(const UvTexture& tex, const UvMask& vis);

/// max(dot(N, V), 0) per texel.
UvMask visibility(std::span<const Vec3> normals, int rows, int cols, const Vec3& view);

enum class BlendMode {
  Visibility,  // sum V_i T_i / sum V_i
  Softmax,     // softmax over visible frames' mask values
};

struct Aggregated {
  UvTexture texture;
  UvMask valid;  // 1 where at least one frame saw the texel, else 0
};

Aggregated aggregate(std::span<const UvTexture> textures, std::span<const UvMask> masks,
                     BlendMode mode = BlendMode::Visibility, double softmax_temperature = 0.1);

struct ChainOptions {
  bool gamma = true;
  /// External histogram reference; when unset the first frame with any
  /// visible texel is used.
  std::optional<std::pair<UvTexture, UvMask>> reference;
  BlendMode blend = BlendMode::Visibility;
  double softmax_temperature = 0.1;
};

struct ChainResult {
  Aggregated aggregated;
  std::vector<UvTexture> normalized;  // per frame
  std::vector<Status> statuses;       // worst status per frame
};

/// gamma(H(N(T_i))) per frame, then aggregation.
ChainResult normalize_and_aggregate(std::span<const UvTexture> textures, std::span<const UvMask> masks,
                                    const ChainOptions& options = {});

/// m x 6 rows (x, y, z, r, g, b).
struct TexelSet {
  nn::Mat rows;
  Status status = Status::Ok;
};

/// Deterministic stratified pick of m valid texels in raster order; falls back
/// to cycling (with replacement) when fewer than m are valid.
TexelSet texel_sample(const Aggregated& agg, std::span<const Vec3> coords, int m);

/// Indices of the k nearest other rows (ties by lower index), row-major m*k.
std::vector<Eigen::Index> knn_graph(const nn::Mat& coords, int k);

struct OmniConfig {
  std::array<Eigen::Index, 4> channels{64, 128, 256, 512};
  Eigen::Index pooled_rows = 96;
  int neighbours = 8;
  std::array<int, 3> group_rates{1, 2, 4};
  Eigen::Index out_dim = 512;

  bool operator==(const OmniConfig&) const = default;
};

/// Four omni-scale modules (dynamic graph convolution + grouped branches),
/// learned row pooling before the last module, global max-pool and FC.
class AppearanceEncoder {
 public:
  AppearanceEncoder(nn::ParamStore& store, const OmniConfig& cfg, nn::Rng& rng);

  /// Input rows are put in canonical order first, so the result does not
  /// depend on row order at all.
  nn::Var operator()(const nn::Mat& texels) const;
  nn::Var operator()(const nn::Var& texels) const;

  const OmniConfig& config() const { return cfg_; }

 private:
  struct Module {
    nn::Linear edge_diff;  // applied to x_j - x_i
    nn::Linear edge_self;  // applied to x_i
    std::vector<std::vector<nn::Linear>> branches;  // [rate][group]
  };
  nn::Var run_module(const Module& mod, const nn::Var& h, const std::vector<Eigen::Index>& graph) const;

  OmniConfig cfg_;
  std::array<Module, 4> modules_;
  nn::Linear pool_logits_;
  nn::Linear head_;
};

/// Lexicographic row sort used to canonicalise texel sets.
nn::Mat canonical_rows(const nn::Mat& m);

// ---- on-disk cache: texture as RGB PNG, mask as PGM ----
void save_uv_pair(const std::filesystem::path& texture_png, const std::filesystem::path& mask_pgm,
                  const UvTexture& tex, const UvMask& mask);
std::pair<UvTexture, UvMask> load_uv_pair(const std::filesystem::path& texture_png,
                                          const std::filesystem::path& mask_pgm);

}  // namespace agvp::na
