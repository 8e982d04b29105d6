#pragma once

#include "agvp/nn/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace agvp::nn {

using Rng = std::mt19937_64;

/// Ordered, named collection of parameters. Order is registration order and
/// is the order used by checkpoints and the optimizer.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var var;
  };

  Var add(std::string name, Mat init);
  const std::vector<Entry>& entries() const { return entries_; }
  Var find(const std::string& name) const;
  void zero_grad();
  /// Toggles requires_grad on every entry (frozen encoders).
  void set_trainable(bool trainable);
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

 private:
  std::vector<Entry> entries_;
};

Mat randn(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

struct Linear {
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
         double init_scale = 1.0);
  Var operator()(const Var& x) const { return add_row(matmul(x, weight), bias); }

  Var weight;  // in x out
  Var bias;    // 1 x out
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim);
  Var operator()(const Var& x) const { return layer_norm_rows(x, gain, bias); }

  Var gain;
  Var bias;
};

/// Two linear layers with a GELU in between.
struct Mlp {
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
      Eigen::Index out, Rng& rng);
  Var operator()(const Var& x) const { return fc2(gelu(fc1(x))); }

  Linear fc1;
  Linear fc2;
};

/// Collects softmax weight matrices for inspection (one per head per call).
struct AttentionProbe {
  std::vector<Mat> weights;
};

struct MultiHeadAttention {
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, Eigen::Index dim, int heads,
                     Rng& rng);
  /// query: Nq x d; context: Nk x d. Returns Nq x d.
  Var operator()(const Var& query, const Var& context, AttentionProbe* probe = nullptr) const;
  /// Batched form: query and context are split into `blocks` equal row
  /// blocks and block b of the query attends only to block b of the context.
  Var attend(const Var& query, const Var& context, Eigen::Index blocks,
             AttentionProbe* probe = nullptr) const;

  int heads = 1;
  Linear q, k, v, o;
};

/// Standard GRU cell (reset gate applied to the hidden projection).
struct GruCell {
  GruCell() = default;
  GruCell(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
          Rng& rng);
  Var operator()(const Var& x, const Var& h) const;

  Eigen::Index hidden = 0;
  Var w_in;      // in x 3h   (update | reset | candidate)
  Var w_hidden;  // h x 3h
  Var b_in;      // 1 x 3h
  Var b_hidden;  // 1 x 3h
};

}  // namespace agvp::nn
