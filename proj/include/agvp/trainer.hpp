#pragma once

// Desk-scale training: AdamW with warmup/step or cosine schedules, P x K
// identity sampling, cross-entropy + batch-hard triplet losses, a generic
// loop over stream runners, and the checkpoint container.

#include "agvp/evalkit.hpp"
#include "agvp/fusion.hpp"
#include "agvp/stream_msa.hpp"
#include "agvp/uv_extract.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace agvp::train {

using nn::Mat;
using nn::Var;

enum class Schedule { WarmupStep, Cosine };
enum class StreamKind { Temporal = 1, Appearance = 2, MultiScale = 3, Fusion = 4 };

std::string_view to_string(StreamKind s);
StreamKind stream_from_string(std::string_view s);

struct TrainConfig {
  int clip_length = 8;
  int frame_height = 128;
  int frame_width = 64;
  int batch_identities = 4;  // P
  int batch_instances = 4;   // K
  double lr = 5e-3;
  double weight_decay = 0.01;
  int epochs = 30;
  Schedule schedule = Schedule::WarmupStep;
  int warmup_epochs = 3;
  std::vector<int> decay_epochs{20};
  double decay_factor = 0.1;
  double flip_prob = 0.5;
  double erase_prob = 0.5;
  double triplet_margin = 0.3;
  double ce_weight = 1.0;
  double triplet_weight = 1.0;
  int eval_every = 1;  // 0 = only after the last epoch
  std::uint64_t seed = 1;
  int texel_count = 1024;
  na::BlendMode blend = na::BlendMode::Visibility;
  ats::AtsConfig ats;
  na::OmniConfig omni;
  msa::MsaConfig msa;
  int fused_dim = 128;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep defaults; unknown keys raise ConfigError naming the key.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

/// Learning rate for a (fractional) epoch position.
double learning_rate(const TrainConfig& cfg, double epoch);

/// Decoupled weight decay: p <- p * (1 - lr*wd) - lr * mhat / (sqrt(vhat) + eps).
class AdamW {
 public:
  AdamW(std::vector<Var> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr, double weight_decay);
  std::size_t steps() const { return t_; }

 private:
  std::vector<Var> params_;
  std::vector<Mat> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

/// P identities x K instances per batch. Identities with fewer than K items
/// are sampled with replacement.
class PkSampler {
 public:
  PkSampler(std::vector<int> labels, int p, int k);
  std::vector<std::vector<std::size_t>> epoch(nn::Rng& rng) const;

 private:
  std::vector<int> labels_;
  std::map<int, std::vector<std::size_t>> by_label_;
  int p_, k_;
};

/// Mean over anchors of max(0, d(a,p_hard) - d(a,n_hard) + margin) on
/// Euclidean distances. Anchors without a positive or a negative are skipped.
Var batch_hard_triplet(const Var& embeddings, std::span<const int> labels, double margin);

struct LossValues {
  double ce = 0.0;
  double triplet = 0.0;
  double total = 0.0;
};

// ---- data ----
struct Item {
  const Tracklet* tracklet = nullptr;
  int label = -1;
  std::vector<FrameImage> frames;  // sampled clip, original resolution
  std::optional<na::TexelSet> texels;
};

struct Dataset {
  std::vector<Item> items;
  std::vector<std::string> classes;  // label -> person id
  std::vector<int> labels() const;
};

struct DataNeeds {
  bool frames = false;
  bool texels = false;
};

Dataset load_dataset(const std::vector<Tracklet>& tracklets, const std::filesystem::path& root, const TrainConfig& cfg,
                     DataNeeds needs, const na::UvExtractor* extractor = nullptr);

/// Identity-disjoint split: sorted identities seen on both sides go to
/// training with probability `train_fraction` (first ones first);
/// aerial-only identities always go to test.
std::pair<std::vector<Tracklet>, std::vector<Tracklet>> split_by_identity(const std::vector<Tracklet>& tracklets,
                                                                         double train_fraction);

/// Clip augmentation shared by the frame streams: one flip decision and one
/// erased rectangle per clip.
void augment_clip(std::vector<FrameImage>& clip, const TrainConfig& cfg, nn::Rng& rng);

// ---- stream runners ----
class StreamRunner {
 public:
  virtual ~StreamRunner() = default;
  virtual StreamKind kind() const = 0;
  virtual std::vector<nn::ParamStore*> trainable() = 0;
  virtual std::vector<const nn::ParamStore*> all_params() const = 0;
  /// Every store, frozen ones included (checkpoint restore).
  virtual std::vector<nn::ParamStore*> stores() = 0;
  virtual Eigen::Index embed_dim() const = 0;
  virtual void begin_epoch(const Dataset&) {}
  /// Training-mode embeddings (augmented) for a batch, B x embed_dim.
  virtual Var forward_train(const Dataset& data, const std::vector<std::size_t>& batch, nn::Rng& rng) = 0;
  /// Evaluation embeddings, no augmentation, no graph.
  virtual Mat embed(const Dataset& data) const = 0;
};

std::unique_ptr<StreamRunner> make_runner(StreamKind kind, const TrainConfig& cfg);

/// Frozen stream embeddings for the fusion runner (rows aligned with dataset items).
struct FusionInputs {
  std::array<Mat, 3> streams;
};
std::unique_ptr<StreamRunner> make_fusion_runner(const TrainConfig& cfg, FusionInputs train_inputs,
                                                 std::array<Eigen::Index, 3> dims);
fusion::FusionModel& fusion_model(StreamRunner& runner);
/// Points the fusion runner at another set of frozen embeddings.
void set_fusion_inputs(StreamRunner& runner, FusionInputs inputs);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double ce = 0.0;
  double triplet = 0.0;
  double total = 0.0;
  std::optional<double> heldout_rank1;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct Heldout {
  const Dataset* data = nullptr;
  const std::vector<Tracklet>* tracklets = nullptr;
  /// Defaults to the A2G protocol over all altitudes.
  eval::ProtocolSpec protocol;
  /// Embeddings used for held-out ranking; defaults to runner.embed(data).
  std::function<Mat(const StreamRunner&)> embed;
};

/// Runs the configured schedule. `on_epoch` sees every log record as it is produced.
TrainResult train_stream(StreamRunner& runner, const Dataset& data, const TrainConfig& cfg,
                         const Heldout* heldout = nullptr, const std::function<void(const EpochLog&)>& on_epoch = {});
/// Convenience: gradient steps only, for a fixed number of batches.
TrainResult train_steps(StreamRunner& runner, const Dataset& data, const TrainConfig& cfg, int steps);

std::string epoch_log_json(const EpochLog& e);

eval::EmbeddingTable to_table(const Dataset& data, const Mat& rows);

// ---- checkpoints ----
struct Checkpoint {
  int version = 0;
  StreamKind stream = StreamKind::Temporal;
  TrainConfig config;
  std::vector<std::pair<std::string, Mat>> arrays;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, StreamKind stream, const TrainConfig& cfg,
                     const std::vector<const nn::ParamStore*>& stores);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Copies arrays into the stores by name. Throws CheckpointError listing every
/// missing, unexpected or shape-mismatched array.
void apply_checkpoint(const Checkpoint& ckpt, const std::vector<nn::ParamStore*>& stores);

}  // namespace agvp::train
