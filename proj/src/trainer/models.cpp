#include "agvp/trainer.hpp"

#include "agvp/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace agvp::train {

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.label);
  return out;
}

Dataset load_dataset(const std::vector<Tracklet>& tracklets, const std::filesystem::path& root, const TrainConfig& cfg,
                     DataNeeds needs, const na::UvExtractor* extractor) {
  if (needs.texels && extractor == nullptr) throw ValidationError("texel sets need a UV extractor");
  Dataset d;
  std::set<std::string> ids;
  for (const auto& t : tracklets) ids.insert(t.person_id.str());
  d.classes.assign(ids.begin(), ids.end());
  na::ChainOptions chain;
  chain.blend = cfg.blend;
  for (const auto& t : tracklets) {
    t.validate();
    Item it;
    it.tracklet = &t;
    it.label = static_cast<int>(std::lower_bound(d.classes.begin(), d.classes.end(), t.person_id.str()) - d.classes.begin());
    if (needs.frames) {
      for (std::size_t i : clip_indices(t.frames.size(), cfg.clip_length)) it.frames.push_back(io::read_frame(root / t.frames[i]));
    }
    if (needs.texels) it.texels = na::tracklet_texels(*extractor, t, cfg.clip_length, cfg.texel_count, chain).texels;
    d.items.push_back(std::move(it));
  }
  return d;
}

std::pair<std::vector<Tracklet>, std::vector<Tracklet>> split_by_identity(const std::vector<Tracklet>& tracklets,
                                                                         double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ConfigError("train fraction must lie in [0,1]");
  std::set<std::string> ground, aerial;
  for (const auto& t : tracklets) (is_ground(t.platform) ? ground : aerial).insert(t.person_id.str());
  std::vector<std::string> both;
  std::set_intersection(ground.begin(), ground.end(), aerial.begin(), aerial.end(), std::back_inserter(both));
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * double(both.size())));
  const std::set<std::string> train_ids(both.begin(), both.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::pair<std::vector<Tracklet>, std::vector<Tracklet>> out;
  for (const auto& t : tracklets) (train_ids.contains(t.person_id.str()) ? out.first : out.second).push_back(t);
  return out;
}

void augment_clip(std::vector<FrameImage>& clip, const TrainConfig& cfg, nn::Rng& rng) {
  if (clip.empty()) return;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool flip = u(rng) < cfg.flip_prob;
  const bool erase = u(rng) < cfg.erase_prob;
  const int h = clip.front().height();
  const int w = clip.front().width();
  int x0 = 0, y0 = 0, eh = 0, ew = 0;
  double fill = 0.0;
  if (erase) {
    const double area = (0.02 + 0.3 * u(rng)) * h * w;
    const double aspect = std::exp(std::log(0.3) + (std::log(3.3) - std::log(0.3)) * u(rng));
    eh = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, h);
    ew = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, w);
    y0 = static_cast<int>(u(rng) * (h - eh + 1));
    x0 = static_cast<int>(u(rng) * (w - ew + 1));
    fill = u(rng);
  }
  for (auto& f : clip) {
    if (flip) f = flip_horizontal(f);
    if (!erase) continue;
    std::vector<double> v(f.values().begin(), f.values().end());
    for (int y = y0; y < std::min(h, y0 + eh); ++y)
      for (int x = x0; x < std::min(w, x0 + ew); ++x)
        for (int c = 0; c < 3; ++c) v[(static_cast<std::size_t>(y) * w + x) * 3 + c] = fill;
    f = FrameImage(h, w, std::move(v));
  }
}

namespace {

std::vector<std::size_t> all_indices(const Dataset& d) {
  std::vector<std::size_t> idx(d.items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

constexpr std::size_t kEvalChunk = 16;

/// Shared clip preparation for the two frame streams.
class FrameRunner : public StreamRunner {
 protected:
  FrameRunner(const TrainConfig& cfg) : cfg_(cfg) {}

  virtual FrameImage prepare(const FrameImage& f) const = 0;

  Mat pixels(const Dataset& data, const std::vector<std::size_t>& batch, nn::Rng* augment) const {
    std::vector<FrameImage> frames;
    frames.reserve(batch.size() * static_cast<std::size_t>(cfg_.clip_length));
    for (std::size_t i : batch) {
      const Item& it = data.items.at(i);
      if (it.frames.size() != static_cast<std::size_t>(cfg_.clip_length))
        throw ValidationError("dataset item " + it.tracklet->tracklet_id.str() + " has no sampled clip");
      std::vector<FrameImage> clip;
      for (const auto& f : it.frames) clip.push_back(prepare(f));
      if (augment) augment_clip(clip, cfg_, *augment);
      for (auto& f : clip) frames.push_back(std::move(f));
    }
    return ats::frames_to_rows(frames);
  }

  template <class Fn>
  Mat embed_chunks(const Dataset& data, Fn fn) const {
    nn::NoGradGuard no_grad;
    const auto idx = all_indices(data);
    Mat out(static_cast<Eigen::Index>(idx.size()), embed_dim());
    for (std::size_t s = 0; s < idx.size(); s += kEvalChunk) {
      const std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(s),
                                           idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), s + kEvalChunk)));
      out.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(chunk.size())) = fn(chunk)->value;
    }
    return out;
  }

  TrainConfig cfg_;
};

class TemporalRunner final : public FrameRunner {
 public:
  TemporalRunner(const TrainConfig& cfg, nn::Rng& rng) : FrameRunner(cfg), model_(cfg.ats, rng) {}

  StreamKind kind() const override { return StreamKind::Temporal; }
  std::vector<nn::ParamStore*> trainable() override { return {&model_.params()}; }
  std::vector<const nn::ParamStore*> all_params() const override { return {&model_.params()}; }
  std::vector<nn::ParamStore*> stores() override { return {&model_.params()}; }
  Eigen::Index embed_dim() const override { return 2 * model_.config().encoder.dim; }

  void begin_epoch(const Dataset& data) override {
    nn::NoGradGuard no_grad;
    bank_ = ats::MemoryBank{};
    const auto idx = all_indices(data);
    for (std::size_t s = 0; s < idx.size(); s += kEvalChunk) {
      const std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(s),
                                           idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), s + kEvalChunk)));
      const Var pooled = ats::tap(model_.enhanced(pixels(data, chunk, nullptr), cfg_.clip_length), cfg_.clip_length);
      for (std::size_t b = 0; b < chunk.size(); ++b)
        bank_.add(data.items[chunk[b]].tracklet->person_id, pooled->value.row(static_cast<Eigen::Index>(b)));
    }
  }

  Var forward_train(const Dataset& data, const std::vector<std::size_t>& batch, nn::Rng& rng) override {
    if (bank_.size() == 0) begin_epoch(data);
    Mat memory(static_cast<Eigen::Index>(batch.size()), model_.config().encoder.dim);
    for (std::size_t b = 0; b < batch.size(); ++b)
      memory.row(static_cast<Eigen::Index>(b)) = bank_.entry(data.items.at(batch[b]).tracklet->person_id);
    return model_.forward(pixels(data, batch, &rng), cfg_.clip_length, ats::Mode::Train, &memory);
  }

  Mat embed(const Dataset& data) const override {
    return embed_chunks(data, [&](const std::vector<std::size_t>& chunk) {
      return model_.forward(pixels(data, chunk, nullptr), cfg_.clip_length, ats::Mode::Infer);
    });
  }

 private:
  FrameImage prepare(const FrameImage& f) const override {
    return resize_bilinear(f, model_.config().encoder.height, model_.config().encoder.width);
  }

  ats::Stream1Model model_;
  ats::MemoryBank bank_;
};

class MultiScaleRunner final : public FrameRunner {
 public:
  MultiScaleRunner(const TrainConfig& cfg, nn::Rng& rng) : FrameRunner(cfg), model_(cfg.msa, rng) {}

  StreamKind kind() const override { return StreamKind::MultiScale; }
  std::vector<nn::ParamStore*> trainable() override {
    if (model_.config().train_encoder) return {&model_.encoder_params(), &model_.params()};
    return {&model_.params()};
  }
  std::vector<const nn::ParamStore*> all_params() const override {
    return {&model_.encoder_params(), &model_.params()};
  }
  std::vector<nn::ParamStore*> stores() override { return {&model_.encoder_params(), &model_.params()}; }
  Eigen::Index embed_dim() const override { return model_.config().embed_dim; }

  Var forward_train(const Dataset& data, const std::vector<std::size_t>& batch, nn::Rng& rng) override {
    return model_.forward(pixels(data, batch, &rng), cfg_.clip_length);
  }

  Mat embed(const Dataset& data) const override {
    return embed_chunks(data, [&](const std::vector<std::size_t>& chunk) {
      return model_.forward(pixels(data, chunk, nullptr), cfg_.clip_length);
    });
  }

 private:
  FrameImage prepare(const FrameImage& f) const override { return pad_and_resize(f, model_.config().encoder.height); }

  msa::Stream3Model model_;
};

class AppearanceRunner final : public StreamRunner {
 public:
  AppearanceRunner(const TrainConfig& cfg, nn::Rng& rng) : encoder_(params_, cfg.omni, rng) {}

  StreamKind kind() const override { return StreamKind::Appearance; }
  std::vector<nn::ParamStore*> trainable() override { return {&params_}; }
  std::vector<const nn::ParamStore*> all_params() const override { return {&params_}; }
  std::vector<nn::ParamStore*> stores() override { return {&params_}; }
  Eigen::Index embed_dim() const override { return encoder_.config().out_dim; }

  Var forward_train(const Dataset& data, const std::vector<std::size_t>& batch, nn::Rng&) override {
    std::vector<Var> rows;
    for (std::size_t i : batch) rows.push_back(encoder_(texels(data.items.at(i))));
    return nn::concat_rows(rows);
  }

  Mat embed(const Dataset& data) const override {
    nn::NoGradGuard no_grad;
    Mat out(static_cast<Eigen::Index>(data.items.size()), embed_dim());
    for (std::size_t i = 0; i < data.items.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = encoder_(texels(data.items[i]))->value;
    return out;
  }

 private:
  static const Mat& texels(const Item& it) {
    if (!it.texels) throw ValidationError("dataset item " + it.tracklet->tracklet_id.str() + " has no texel set");
    return it.texels->rows;
  }

  nn::ParamStore params_;
  na::AppearanceEncoder encoder_;
};

class FusionRunner final : public StreamRunner {
 public:
  FusionRunner(const TrainConfig& cfg, FusionInputs inputs, std::array<Eigen::Index, 3> dims, nn::Rng& rng)
      : model_(dims, cfg.fused_dim, rng), fused_dim_(cfg.fused_dim) {
    set_inputs(std::move(inputs));
  }

  StreamKind kind() const override { return StreamKind::Fusion; }
  std::vector<nn::ParamStore*> trainable() override { return {&model_.params()}; }
  std::vector<const nn::ParamStore*> all_params() const override { return {&model_.params()}; }
  std::vector<nn::ParamStore*> stores() override { return {&model_.params()}; }
  Eigen::Index embed_dim() const override { return fused_dim_; }

  Var forward_train(const Dataset& data, const std::vector<std::size_t>& batch, nn::Rng&) override {
    check(data);
    std::vector<Eigen::Index> idx(batch.begin(), batch.end());
    std::array<Var, 3> s;
    for (std::size_t k = 0; k < 3; ++k) s[k] = nn::gather_rows(nn::constant(inputs_.streams[k]), idx);
    return model_(s[0], s[1], s[2]);
  }

  Mat embed(const Dataset& data) const override {
    check(data);
    nn::NoGradGuard no_grad;
    return model_(nn::constant(inputs_.streams[0]), nn::constant(inputs_.streams[1]), nn::constant(inputs_.streams[2]))
        ->value;
  }

  void set_inputs(FusionInputs inputs) {
    for (std::size_t k = 1; k < 3; ++k)
      if (inputs.streams[k].rows() != inputs.streams[0].rows())
        throw ShapeError("fusion inputs must have one row per item in every stream");
    inputs_ = std::move(inputs);
  }

  fusion::FusionModel& model() { return model_; }

 private:
  void check(const Dataset& data) const {
    if (static_cast<std::size_t>(inputs_.streams[0].rows()) != data.items.size())
      throw ShapeError("fusion inputs have " + std::to_string(inputs_.streams[0].rows()) + " rows for " +
                       std::to_string(data.items.size()) + " items");
  }

  fusion::FusionModel model_;
  Eigen::Index fused_dim_;
  FusionInputs inputs_;
};

nn::Rng runner_rng(const TrainConfig& cfg, StreamKind kind) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(kind), 0x5eedu};
  return nn::Rng(seq);
}

}  // namespace

std::unique_ptr<StreamRunner> make_runner(StreamKind kind, const TrainConfig& cfg) {
  cfg.validate();
  nn::Rng rng = runner_rng(cfg, kind);
  switch (kind) {
    case StreamKind::Temporal: return std::make_unique<TemporalRunner>(cfg, rng);
    case StreamKind::Appearance: return std::make_unique<AppearanceRunner>(cfg, rng);
    case StreamKind::MultiScale: return std::make_unique<MultiScaleRunner>(cfg, rng);
    case StreamKind::Fusion: break;
  }
  throw ValidationError("the fusion runner is built from frozen stream embeddings (make_fusion_runner)");
}

std::unique_ptr<StreamRunner> make_fusion_runner(const TrainConfig& cfg, FusionInputs inputs,
                                                 std::array<Eigen::Index, 3> dims) {
  cfg.validate();
  nn::Rng rng = runner_rng(cfg, StreamKind::Fusion);
  return std::make_unique<FusionRunner>(cfg, std::move(inputs), dims, rng);
}

fusion::FusionModel& fusion_model(StreamRunner& runner) {
  auto* f = dynamic_cast<FusionRunner*>(&runner);
  if (f == nullptr) throw ValidationError("not a fusion runner");
  return f->model();
}

void set_fusion_inputs(StreamRunner& runner, FusionInputs inputs) {
  auto* f = dynamic_cast<FusionRunner*>(&runner);
  if (f == nullptr) throw ValidationError("not a fusion runner");
  f->set_inputs(std::move(inputs));
}

}  // namespace agvp::train
