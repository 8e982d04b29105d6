#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value is 2-D; vectors are 1xN rows.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace agvp::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  explicit Node(Mat v) : value(std::move(v)) {}

  Mat value;
  Mat grad;  // empty until something flows back
  bool requires_grad = false;

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }

  void accumulate(const Mat& g);
  void zero_grad() { grad.resize(0, 0); }

 private:
  friend Var make_result(Mat, std::vector<Var>, std::function<void(Node&)>);
  friend void backward(const Var&);
  std::vector<Var> parents_;
  std::function<void(Node&)> backward_fn_;
};

/// Leaf that never receives gradients.
Var constant(Mat v);
/// Leaf that accumulates gradients.
Var parameter(Mat v);

Var make_result(Mat value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

/// Runs reverse accumulation from a 1x1 value.
void backward(const Var& loss);

bool grad_enabled();

/// Disables graph recording for its lifetime (evaluation passes, frozen encoders).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Broadcasts a 1xN row over every row of a.
Var add_row(const Var& a, const Var& row);
Var mul_row(const Var& a, const Var& row);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
/// tanh approximation of GELU (smooth everywhere).
Var gelu(const Var& a);
Var relu(const Var& a);
Var sqrt_eps(const Var& a, double eps);

// ---- reductions / reshaping ----
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
Var l2_normalize_rows(const Var& a, double eps = 1e-12);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var mean_rows(const Var& a);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
/// Max over consecutive blocks of `group` rows; result has rows()/group rows.
Var max_rows_grouped(const Var& a, Eigen::Index group);
Var gather_rows(const Var& a, std::span<const Eigen::Index> index);
/// Each row repeated `times` times consecutively.
Var repeat_rows(const Var& a, Eigen::Index times);
/// Picks single entries (row, col) into a 1xN row.
Var pick(const Var& a, std::span<const std::pair<Eigen::Index, Eigen::Index>> at);

// ---- losses / geometry ----
/// Mean softmax cross-entropy of logits (BxC) against integer labels.
Var cross_entropy(const Var& logits, std::span<const int> labels);
/// Squared Euclidean distances between all row pairs (BxB).
Var pairwise_sqdist(const Var& a);
/// Depthwise temporal convolution, kernel 3, zero padding, per clip. `x`
/// holds clips of T blocks of P rows (time-major); `w` is 3xC, row s weights
/// offset s-1.
Var temporal_dwconv(const Var& x, const Var& w, Eigen::Index frames, Eigen::Index tokens);

/// The whole matrix stacked `times` times.
Var tile_rows(const Var& a, Eigen::Index times);
/// Mean over consecutive blocks of `group` rows.
Var mean_rows_grouped(const Var& a, Eigen::Index group);

/// Scaled dot-product attention evaluated independently inside each of
/// `blocks` equal row blocks of q and k/v, split into `heads` column groups.
/// When `probe` is given the softmax matrices are appended to it.
Var block_attention(const Var& q, const Var& k, const Var& v, Eigen::Index blocks, int heads,
                    std::vector<Mat>* probe = nullptr);

}  // namespace agvp::nn
