#include "agvp/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace agvp::train {

eval::EmbeddingTable to_table(const Dataset& data, const Mat& rows) {
  if (static_cast<std::size_t>(rows.rows()) != data.items.size())
    throw ShapeError("embedding rows do not match the dataset size");
  eval::EmbeddingTable t;
  for (const auto& it : data.items) t.ids.push_back(it.tracklet->tracklet_id.str());
  t.rows = rows;
  return t;
}

std::string epoch_log_json(const EpochLog& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["lr"] = e.lr;
  j["ce"] = e.ce;
  j["triplet"] = e.triplet;
  j["total"] = e.total;
  if (e.heldout_rank1) j["heldout_rank1"] = *e.heldout_rank1;
  else j["heldout_rank1"] = nullptr;
  return j.dump();
}

namespace {

class Loop {
 public:
  Loop(StreamRunner& runner, const Dataset& data, const TrainConfig& cfg)
      : runner_(runner), data_(data), cfg_(cfg), sampler_(data.labels(), cfg.batch_identities, cfg.batch_instances) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(runner.kind()), 0x7a11u};
    rng_.seed(seq);
    classifier_ = nn::Linear(head_, "classifier", runner.embed_dim(), static_cast<Eigen::Index>(data.classes.size()), rng_);
    std::vector<Var> params;
    for (auto* s : runner.trainable())
      for (const auto& e : s->entries()) params.push_back(e.var);
    for (const auto& e : head_.entries()) params.push_back(e.var);
    opt_ = std::make_unique<AdamW>(std::move(params));
  }

  LossValues step(const std::vector<std::size_t>& batch, double lr) {
    for (auto* s : runner_.trainable()) s->zero_grad();
    head_.zero_grad();
    std::vector<int> labels;
    for (std::size_t i : batch) labels.push_back(data_.items.at(i).label);
    const Var emb = runner_.forward_train(data_, batch, rng_);
    const Var ce = nn::cross_entropy(classifier_(emb), labels);
    const Var tri = batch_hard_triplet(nn::l2_normalize_rows(emb), labels, cfg_.triplet_margin);
    const Var total = nn::add(nn::scale(ce, cfg_.ce_weight), nn::scale(tri, cfg_.triplet_weight));
    nn::backward(total);
    opt_->step(lr, cfg_.weight_decay);
    LossValues v{ce->value(0, 0), tri->value(0, 0), total->value(0, 0)};
    if (!std::isfinite(v.total)) throw ValidationError("training loss became non-finite");
    return v;
  }

  std::vector<std::vector<std::size_t>> batches() { return sampler_.epoch(rng_); }

 private:
  StreamRunner& runner_;
  const Dataset& data_;
  const TrainConfig& cfg_;
  PkSampler sampler_;
  nn::Rng rng_;
  nn::ParamStore head_;
  nn::Linear classifier_;
  std::unique_ptr<AdamW> opt_;
};

double heldout_rank1(const StreamRunner& runner, const Heldout& h) {
  const Mat rows = h.embed ? h.embed(runner) : runner.embed(*h.data);
  const auto report = eval::evaluate(h.protocol, *h.tracklets, to_table(*h.data, rows));
  return report.buckets.front().rank1;
}

}  // namespace

TrainResult train_stream(StreamRunner& runner, const Dataset& data, const TrainConfig& cfg, const Heldout* heldout,
                         const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (heldout && (heldout->data == nullptr || heldout->tracklets == nullptr))
    throw ValidationError("held-out split needs both a dataset and its tracklets");
  Loop loop(runner, data, cfg);
  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    runner.begin_epoch(data);
    const auto batches = loop.batches();
    EpochLog log;
    log.epoch = epoch;
    log.lr = learning_rate(cfg, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const LossValues v = loop.step(batches[b], learning_rate(cfg, epoch + double(b) / double(batches.size())));
      log.ce += v.ce;
      log.triplet += v.triplet;
      log.total += v.total;
    }
    const double n = static_cast<double>(std::max<std::size_t>(batches.size(), 1));
    log.ce /= n;
    log.triplet /= n;
    log.total /= n;
    const bool last = epoch + 1 == cfg.epochs;
    if (heldout && (last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)))
      log.heldout_rank1 = heldout_rank1(runner, *heldout);
    if (epoch == 0) result.initial_loss = log.total;
    result.final_loss = log.total;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

TrainResult train_steps(StreamRunner& runner, const Dataset& data, const TrainConfig& cfg, int steps) {
  cfg.validate();
  if (steps < 0) throw ValidationError("step count must be >= 0");
  Loop loop(runner, data, cfg);
  TrainResult result;
  std::vector<std::vector<std::size_t>> batches;
  std::size_t next = 0;
  runner.begin_epoch(data);
  for (int s = 0; s < steps; ++s) {
    if (next == batches.size()) {
      batches = loop.batches();
      next = 0;
    }
    const LossValues v = loop.step(batches[next++], cfg.lr);
    if (s == 0) result.initial_loss = v.total;
    result.final_loss = v.total;
    result.log.push_back(EpochLog{s, cfg.lr, v.ce, v.triplet, v.total, std::nullopt});
  }
  return result;
}

}  // namespace agvp::train
