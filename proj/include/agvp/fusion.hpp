#pragma once

// Stream combination: softmax-weighted fusion of projected, unit-norm stream
// embeddings, and reciprocal rank fusion of per-stream rankings.

#include "agvp/nn/layers.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace agvp::fusion {

using nn::Mat;
using nn::Var;

/// (alpha, beta, gamma) = softmax(logits).
struct StreamWeights {
  std::array<double, 3> logits{0.0, 0.0, 0.0};
  std::array<double, 3> weights() const;
};

std::array<double, 3> softmax3(const std::array<double, 3>& logits);

/// Per-stream linear heads to a common width plus learnable mixing logits.
class FusionModel {
 public:
  FusionModel(std::array<Eigen::Index, 3> input_dims, Eigen::Index fused_dim, nn::Rng& rng);
  FusionModel(const FusionModel&) = delete;
  FusionModel& operator=(const FusionModel&) = delete;

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  StreamWeights weights() const;

  /// Each stream batch is B x input_dim; output B x fused_dim.
  Var operator()(const Var& temporal, const Var& appearance, const Var& multiscale) const;

  nn::ParamStore params_;
  std::array<nn::Linear, 3> heads;
  Var logits;  // 1 x 3
  std::array<Eigen::Index, 3> input_dims;
};

/// alpha*Ft + beta*Fa + gamma*Fm over already projected, unit-norm rows.
Var fuse_features(const Var& temporal, const Var& appearance, const Var& multiscale, const Var& logits);
Mat fuse_features(const Mat& temporal, const Mat& appearance, const Mat& multiscale, const StreamWeights& w);

struct RankedEntry {
  std::string gallery_id;
  double score = 0.0;
  bool operator==(const RankedEntry&) const = default;
};

struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;  // best first
  bool operator==(const RankedList&) const = default;
};

inline constexpr int kRrfK = 60;

/// score(d) = sum_i 1/(k + r_i(d)), sorted descending with ties broken by
/// ascending gallery id. Any number of lists >= 1 over the same gallery.
RankedList rrf(const std::vector<RankedList>& lists, int k = kRrfK);
double rrf_score(std::span<const int> ranks, int k = kRrfK);

/// Rank-list interchange: CSV `query_id,gallery_id,rank,score`.
void write_rank_csv(const std::filesystem::path& path, const std::vector<RankedList>& lists);
std::vector<RankedList> read_rank_csv(const std::filesystem::path& path);

}  // namespace agvp::fusion
