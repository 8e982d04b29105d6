#include "agvp/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace agvp::train {

std::string_view to_string(StreamKind s) {
  switch (s) {
    case StreamKind::Temporal: return "1";
    case StreamKind::Appearance: return "2";
    case StreamKind::MultiScale: return "3";
    case StreamKind::Fusion: return "fusion";
  }
  return "?";
}

StreamKind stream_from_string(std::string_view s) {
  if (s == "1") return StreamKind::Temporal;
  if (s == "2") return StreamKind::Appearance;
  if (s == "3") return StreamKind::MultiScale;
  if (s == "fusion") return StreamKind::Fusion;
  throw ConfigError("unknown stream '" + std::string(s) + "' (expected 1, 2, 3 or fusion)");
}

void TrainConfig::validate() const {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("train.") + what + " must be positive");
  };
  positive(clip_length >= 1, "clip_length");
  positive(frame_height >= 8 && frame_width >= 8, "frame size");
  positive(batch_identities >= 2, "batch_identities (>= 2)");
  positive(batch_instances >= 2, "batch_instances (>= 2)");
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (epochs < 0 || warmup_epochs < 0 || eval_every < 0) throw ConfigError("train epoch counts must be >= 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("train.decay_factor must lie in (0,1]");
  if (flip_prob < 0.0 || flip_prob > 1.0 || erase_prob < 0.0 || erase_prob > 1.0)
    throw ConfigError("augmentation probabilities must lie in [0,1]");
  if (!(triplet_margin >= 0.0) || ce_weight < 0.0 || triplet_weight < 0.0) throw ConfigError("loss weights must be >= 0");
  positive(texel_count > omni.neighbours, "texel_count (> neighbours)");
  positive(fused_dim >= 1, "fused_dim");
  ats.encoder.validate();
  if (ats.encoder.height != frame_height || ats.encoder.width != frame_width)
    throw ConfigError("stream 1 encoder input must equal the frame size");
  msa.validate();
  if (msa.encoder.height != msa.encoder.width) throw ConfigError("stream 3 encoder input must be square");
}

double learning_rate(const TrainConfig& cfg, double epoch) {
  double lr = cfg.lr;
  if (cfg.warmup_epochs > 0 && epoch < cfg.warmup_epochs) lr *= (epoch + 1.0) / (cfg.warmup_epochs + 1.0);
  if (cfg.schedule == Schedule::WarmupStep) {
    for (int d : cfg.decay_epochs)
      if (epoch >= d) lr *= cfg.decay_factor;
  } else if (cfg.epochs > 0) {
    const double t = std::clamp(epoch / double(cfg.epochs), 0.0, 1.0);
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  }
  return lr;
}

// ---------------------------------------------------------------------------

namespace {

using json = nlohmann::json;

json encoder_json(const ats::EncoderConfig& e) {
  return {{"height", e.height}, {"width", e.width}, {"patch", e.patch}, {"dim", e.dim},
          {"depth", e.depth},   {"heads", e.heads}, {"mlp_ratio", e.mlp_ratio}};
}

void check_keys(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!keys.contains(k)) throw ConfigError("unknown key '" + where + "." + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ats::EncoderConfig encoder_from(const json& j, ats::EncoderConfig e, const std::string& where) {
  check_keys(j, {"height", "width", "patch", "dim", "depth", "heads", "mlp_ratio"}, where);
  read(j, "height", e.height);
  read(j, "width", e.width);
  read(j, "patch", e.patch);
  read(j, "dim", e.dim);
  read(j, "depth", e.depth);
  read(j, "heads", e.heads);
  read(j, "mlp_ratio", e.mlp_ratio);
  return e;
}

}  // namespace

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["clip_length"] = c.clip_length;
  j["frame_height"] = c.frame_height;
  j["frame_width"] = c.frame_width;
  j["batch_identities"] = c.batch_identities;
  j["batch_instances"] = c.batch_instances;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["schedule"] = c.schedule == Schedule::Cosine ? "cosine" : "warmup_step";
  j["warmup_epochs"] = c.warmup_epochs;
  j["decay_epochs"] = c.decay_epochs;
  j["decay_factor"] = c.decay_factor;
  j["flip_prob"] = c.flip_prob;
  j["erase_prob"] = c.erase_prob;
  j["triplet_margin"] = c.triplet_margin;
  j["ce_weight"] = c.ce_weight;
  j["triplet_weight"] = c.triplet_weight;
  j["eval_every"] = c.eval_every;
  j["seed"] = c.seed;
  j["texel_count"] = c.texel_count;
  j["blend"] = c.blend == na::BlendMode::Softmax ? "softmax" : "visibility";
  j["ats"] = {{"encoder", encoder_json(c.ats.encoder)},
              {"gru_hidden", c.ats.gru_hidden},
              {"shape_dim", c.ats.shape_dim},
              {"heads", c.ats.heads}};
  j["omni"] = {{"channels", c.omni.channels},
               {"pooled_rows", c.omni.pooled_rows},
               {"neighbours", c.omni.neighbours},
               {"group_rates", c.omni.group_rates},
               {"out_dim", c.omni.out_dim}};
  j["msa"] = {{"encoder", encoder_json(c.msa.encoder)},
              {"taps", c.msa.taps},
              {"blocks", c.msa.blocks},
              {"heads", c.msa.heads},
              {"embed_dim", c.msa.embed_dim},
              {"train_encoder", c.msa.train_encoder}};
  j["fused_dim"] = c.fused_dim;
  return json::parse(j.dump());
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base) {
  TrainConfig c = base;
  check_keys(j,
             {"clip_length", "frame_height", "frame_width", "batch_identities", "batch_instances", "lr", "weight_decay",
              "epochs", "schedule", "warmup_epochs", "decay_epochs", "decay_factor", "flip_prob", "erase_prob",
              "triplet_margin", "ce_weight", "triplet_weight", "eval_every", "seed", "texel_count", "blend", "ats",
              "omni", "msa", "fused_dim"},
             "train");
  try {
    read(j, "clip_length", c.clip_length);
    read(j, "frame_height", c.frame_height);
    read(j, "frame_width", c.frame_width);
    read(j, "batch_identities", c.batch_identities);
    read(j, "batch_instances", c.batch_instances);
    read(j, "lr", c.lr);
    read(j, "weight_decay", c.weight_decay);
    read(j, "epochs", c.epochs);
    if (j.contains("schedule")) {
      const auto s = j.at("schedule").get<std::string>();
      if (s == "cosine") c.schedule = Schedule::Cosine;
      else if (s == "warmup_step") c.schedule = Schedule::WarmupStep;
      else throw ConfigError("train.schedule must be cosine or warmup_step");
    }
    read(j, "warmup_epochs", c.warmup_epochs);
    read(j, "decay_epochs", c.decay_epochs);
    read(j, "decay_factor", c.decay_factor);
    read(j, "flip_prob", c.flip_prob);
    read(j, "erase_prob", c.erase_prob);
    read(j, "triplet_margin", c.triplet_margin);
    read(j, "ce_weight", c.ce_weight);
    read(j, "triplet_weight", c.triplet_weight);
    read(j, "eval_every", c.eval_every);
    read(j, "seed", c.seed);
    read(j, "texel_count", c.texel_count);
    if (j.contains("blend")) {
      const auto b = j.at("blend").get<std::string>();
      if (b == "softmax") c.blend = na::BlendMode::Softmax;
      else if (b == "visibility") c.blend = na::BlendMode::Visibility;
      else throw ConfigError("train.blend must be visibility or softmax");
    }
    if (j.contains("ats")) {
      const auto& a = j.at("ats");
      check_keys(a, {"encoder", "gru_hidden", "shape_dim", "heads"}, "train.ats");
      if (a.contains("encoder")) c.ats.encoder = encoder_from(a.at("encoder"), c.ats.encoder, "train.ats.encoder");
      read(a, "gru_hidden", c.ats.gru_hidden);
      read(a, "shape_dim", c.ats.shape_dim);
      read(a, "heads", c.ats.heads);
    }
    if (j.contains("omni")) {
      const auto& o = j.at("omni");
      check_keys(o, {"channels", "pooled_rows", "neighbours", "group_rates", "out_dim"}, "train.omni");
      read(o, "channels", c.omni.channels);
      read(o, "pooled_rows", c.omni.pooled_rows);
      read(o, "neighbours", c.omni.neighbours);
      read(o, "group_rates", c.omni.group_rates);
      read(o, "out_dim", c.omni.out_dim);
    }
    if (j.contains("msa")) {
      const auto& m = j.at("msa");
      check_keys(m, {"encoder", "taps", "blocks", "heads", "embed_dim", "train_encoder"}, "train.msa");
      if (m.contains("encoder")) c.msa.encoder = encoder_from(m.at("encoder"), c.msa.encoder, "train.msa.encoder");
      read(m, "taps", c.msa.taps);
      read(m, "blocks", c.msa.blocks);
      read(m, "heads", c.msa.heads);
      read(m, "embed_dim", c.msa.embed_dim);
      read(m, "train_encoder", c.msa.train_encoder);
    }
    read(j, "fused_dim", c.fused_dim);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

AdamW::AdamW(std::vector<Var> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Mat::Zero(p->rows(), p->cols()));
    v_.push_back(Mat::Zero(p->rows(), p->cols()));
  }
}

void AdamW::step(double lr, double weight_decay) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Node& p = *params_[i];
    if (!p.requires_grad) continue;
    p.value *= 1.0 - lr * weight_decay;
    if (p.grad.size() == 0) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------

PkSampler::PkSampler(std::vector<int> labels, int p, int k) : labels_(std::move(labels)), p_(p), k_(k) {
  if (p < 2 || k < 2) throw SamplerError("P and K must both be >= 2");
  for (std::size_t i = 0; i < labels_.size(); ++i) by_label_[labels_[i]].push_back(i);
  std::size_t usable = 0;
  for (const auto& [label, items] : by_label_)
    if (items.size() >= 2) ++usable;
  if (usable < 2) {
    throw SamplerError("need at least 2 identities with at least 2 tracklets each, found " + std::to_string(usable));
  }
}

std::vector<std::vector<std::size_t>> PkSampler::epoch(nn::Rng& rng) const {
  std::vector<int> ids;
  for (const auto& [label, items] : by_label_)
    if (items.size() >= 2) ids.push_back(label);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < ids.size(); start += static_cast<std::size_t>(p_)) {
    std::size_t end = std::min(ids.size(), start + static_cast<std::size_t>(p_));
    // A trailing single identity cannot form negatives; fold it into the previous batch.
    if (end - start < 2) break;
    if (ids.size() - end == 1) end = ids.size();
    std::vector<std::size_t> batch;
    for (std::size_t i = start; i < end; ++i) {
      std::vector<std::size_t> pool = by_label_.at(ids[i]);
      std::shuffle(pool.begin(), pool.end(), rng);
      for (int k = 0; k < k_; ++k) batch.push_back(pool[static_cast<std::size_t>(k) % pool.size()]);
    }
    batches.push_back(std::move(batch));
    start = end - static_cast<std::size_t>(p_);
  }
  return batches;
}

Var batch_hard_triplet(const Var& embeddings, std::span<const int> labels, double margin) {
  const Eigen::Index n = embeddings->rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("triplet: one label per embedding row");
  const Var d2 = nn::pairwise_sqdist(embeddings);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pos, neg;
  for (Eigen::Index a = 0; a < n; ++a) {
    Eigen::Index hp = -1, hn = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == a) continue;
      const bool same = labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)];
      if (same && (hp < 0 || d2->value(a, j) > d2->value(a, hp))) hp = j;
      if (!same && (hn < 0 || d2->value(a, j) < d2->value(a, hn))) hn = j;
    }
    if (hp < 0 || hn < 0) continue;
    pos.emplace_back(a, hp);
    neg.emplace_back(a, hn);
  }
  if (pos.empty()) return nn::constant(Mat::Zero(1, 1));
  const Var dp = nn::sqrt_eps(nn::pick(d2, pos), 1e-12);
  const Var dn = nn::sqrt_eps(nn::pick(d2, neg), 1e-12);
  const Var hinge = nn::relu(nn::add_row(nn::sub(dp, dn), nn::constant(Mat::Constant(1, dp->cols(), margin))));
  return nn::mean_all(hinge);
}

}  // namespace agvp::train
