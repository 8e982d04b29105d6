#include "agvp/stream_ats.hpp"

#include <array>

namespace agvp::ats {

namespace {

void require_clips(const Var& F, Eigen::Index frames) {
  if (frames < 1 || F->rows() % frames != 0) {
    throw ShapeError("feature rows (" + std::to_string(F->rows()) + ") are not a whole number of " +
                     std::to_string(frames) + "-frame clips");
  }
}

}  // namespace

Tsm::Tsm(nn::ParamStore& store, Eigen::Index in, Eigen::Index hidden, Eigen::Index shape_dim, nn::Rng& rng)
    : gru(store, "tsm.gru", in, hidden, rng), regressor(store, "tsm.regressor", hidden, hidden, shape_dim, rng) {}

TsmOutput Tsm::operator()(const Var& F, Eigen::Index frames) const {
  require_clips(F, frames);
  if (F->cols() != gru.w_in->rows()) throw ShapeError("tsm: feature width does not match the GRU input");
  const Eigen::Index clips = F->rows() / frames;

  Var h = nn::constant(Mat::Zero(clips, gru.hidden));
  std::vector<Var> states;
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(clips));
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index b = 0; b < clips; ++b) rows[static_cast<std::size_t>(b)] = b * frames + t;
    h = gru(nn::gather_rows(F, rows), h);
    states.push_back(h);
  }
  // Back from time-major to clip-major.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(clips * frames));
  for (Eigen::Index b = 0; b < clips; ++b)
    for (Eigen::Index t = 0; t < frames; ++t) order[static_cast<std::size_t>(b * frames + t)] = t * clips + b;
  TsmOutput out;
  out.g = nn::gather_rows(nn::concat_rows(states), order);
  out.beta = regressor(out.g);
  return out;
}

Tfe::Tfe(nn::ParamStore& store, Eigen::Index dim, Eigen::Index shape_dim, int heads, nn::Rng& rng)
    : project(store, "tfe.project", shape_dim, dim, rng),
      gate(store, "tfe.gate", dim, dim, rng),
      attn(store, "tfe.attn", dim, heads, rng) {}

Var Tfe::operator()(const Var& F, const Var& beta, Eigen::Index frames, nn::AttentionProbe* probe) const {
  require_clips(F, frames);
  if (beta->rows() != F->rows()) throw ShapeError("tfe: shape rows do not match feature rows");
  const Var shape = project(beta);
  const Var fused = nn::add(F, nn::mul(nn::sigmoid(gate(shape)), shape));
  return nn::add(fused, attn.attend(fused, fused, F->rows() / frames, probe));
}

Var tap(const Var& F, Eigen::Index frames) {
  require_clips(F, frames);
  return nn::mean_rows_grouped(F, frames);
}

Ssp::Ssp(nn::ParamStore& store, Eigen::Index dim, int heads, nn::Rng& rng) : attn(store, "ssp.attn", dim, heads, rng) {}

Var Ssp::operator()(const Var& F, const Var& memory, Eigen::Index frames, nn::AttentionProbe* probe) const {
  require_clips(F, frames);
  if (memory->rows() != F->rows() / frames || memory->cols() != F->cols()) {
    throw ShapeError("ssp: need one memory row of width " + std::to_string(F->cols()) + " per clip");
  }
  return nn::add(memory, attn.attend(memory, F, memory->rows(), probe));
}

void MemoryBank::add(const PersonId& id, const Eigen::RowVectorXd& v) {
  auto it = sums_.find(id);
  if (it == sums_.end()) {
    sums_.emplace(id, v);
    counts_[id] = 1;
    return;
  }
  if (it->second.size() != v.size()) throw ShapeError("memory bank entries must share one width");
  it->second += v;
  ++counts_[id];
}

Eigen::RowVectorXd MemoryBank::entry(const PersonId& id) const {
  const auto it = sums_.find(id);
  if (it == sums_.end()) throw ValidationError("identity " + id.str() + " has no memory entry");
  return it->second / double(counts_.at(id));
}

std::size_t MemoryBank::count(const PersonId& id) const {
  const auto it = counts_.find(id);
  return it == counts_.end() ? 0 : it->second;
}

std::vector<PersonId> MemoryBank::identities() const {
  std::vector<PersonId> out;
  for (const auto& [id, v] : sums_) out.push_back(id);
  return out;
}

Stream1Model::Stream1Model(const AtsConfig& cfg, nn::Rng& rng)
    : encoder(params_, "ats.encoder", cfg.encoder, rng),
      tsm(params_, cfg.encoder.dim, cfg.gru_hidden, cfg.shape_dim, rng),
      tfe(params_, cfg.encoder.dim, cfg.shape_dim, cfg.heads, rng),
      ssp(params_, cfg.encoder.dim, cfg.heads, rng),
      cfg_(cfg) {}

Var Stream1Model::encode_frames(const Mat& pixels) const { return encoder.encode(pixels).pooled; }

Var Stream1Model::enhanced(const Mat& pixels, Eigen::Index frames) const {
  const Var F = encode_frames(pixels);
  const TsmOutput shape = tsm(F, frames);
  return tfe(F, shape.beta, frames);
}

Var Stream1Model::forward(const Mat& pixels, Eigen::Index frames, Mode mode, const Mat* memory) const {
  const Var Fe = enhanced(pixels, frames);
  const Var pooled = tap(Fe, frames);
  Var m;
  if (mode == Mode::Train) {
    if (memory == nullptr) throw ValidationError("train mode needs the label's memory entry");
    m = nn::constant(*memory);
  } else {
    m = pooled;
  }
  const std::array<Var, 2> halves{pooled, ssp(Fe, m, frames)};
  return nn::concat_cols(halves);
}

MemoryBank build_memory(const Stream1Model& model, std::span<const Mat> clips, std::span<const PersonId> labels,
                        Eigen::Index frames) {
  if (clips.size() != labels.size()) throw ValidationError("build_memory: one label per clip required");
  nn::NoGradGuard no_grad;
  MemoryBank bank;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const Var pooled = tap(model.enhanced(clips[i], frames), frames);
    for (Eigen::Index b = 0; b < pooled->rows(); ++b) bank.add(labels[i], pooled->value.row(b));
  }
  return bank;
}

}  // namespace agvp::ats
