#include "agvp/nn/tensor.hpp"
#include "agvp/errors.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

namespace agvp::nn {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(std::string("nn: ") + what);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a->rows() != b->rows() || a->cols() != b->cols()) {
    throw ShapeError(std::string("nn: shape mismatch in ") + op + " (" +
                                std::to_string(a->rows()) + "x" + std::to_string(a->cols()) +
                                " vs " + std::to_string(b->rows()) + "x" +
                                std::to_string(b->cols()) + ")");
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

void Node::accumulate(const Mat& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var constant(Mat v) { return std::make_shared<Node>(std::move(v)); }

Var parameter(Mat v) {
  auto n = std::make_shared<Node>(std::move(v));
  n->requires_grad = true;
  return n;
}

Var make_result(Mat value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>(std::move(value));
  if (!g_grad_enabled) return n;
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (!any) return n;
  n->requires_grad = true;
  n->parents_ = std::move(parents);
  n->backward_fn_ = std::move(backward_fn);
  return n;
}

void backward(const Var& loss) {
  require(loss->rows() == 1 && loss->cols() == 1, "backward needs a 1x1 value");
  if (!loss->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents_.size()) {
      Node* p = node->parents_[next++].get();
      if (p->requires_grad && p->backward_fn_ && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->grad = Mat::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0) continue;
    n->backward_fn_(*n);
  }
  // Intermediate grads are not needed once propagated.
  for (Node* n : order) {
    if (n != loss.get()) n->grad.resize(0, 0);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require(a->cols() == b->rows(), "matmul inner dimension mismatch");
  Mat out = a->value * b->value;
  return make_result(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad * b->value.transpose());
    if (b->requires_grad) b->accumulate(a->value.transpose() * n.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a->cols() == b->cols(), "matmul_nt inner dimension mismatch");
  Mat out = a->value * b->value.transpose();
  return make_result(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad * b->value);
    if (b->requires_grad) b->accumulate(n.grad.transpose() * a->value);
  });
}

Var transpose(const Var& a) {
  Mat out = a->value.transpose();
  return make_result(std::move(out), {a}, [a](Node& n) { a->accumulate(n.grad.transpose()); });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Mat out = a->value + b->value;
  return make_result(std::move(out), {a, b}, [a, b](Node& n) {
    a->accumulate(n.grad);
    b->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Mat out = a->value - b->value;
  return make_result(std::move(out), {a, b}, [a, b](Node& n) {
    a->accumulate(n.grad);
    if (b->requires_grad) b->accumulate(-n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Mat out = a->value.cwiseProduct(b->value);
  return make_result(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad.cwiseProduct(b->value));
    if (b->requires_grad) b->accumulate(n.grad.cwiseProduct(a->value));
  });
}

Var scale(const Var& a, double s) {
  Mat out = a->value * s;
  return make_result(std::move(out), {a}, [a, s](Node& n) { a->accumulate(n.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
  require(row->rows() == 1 && row->cols() == a->cols(), "add_row expects a 1xN row");
  Mat out = a->value.rowwise() + row->value.row(0);
  return make_result(std::move(out), {a, row}, [a, row](Node& n) {
    a->accumulate(n.grad);
    if (row->requires_grad) row->accumulate(n.grad.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  require(row->rows() == 1 && row->cols() == a->cols(), "mul_row expects a 1xN row");
  Mat out = a->value.array().rowwise() * row->value.row(0).array();
  return make_result(std::move(out), {a, row}, [a, row](Node& n) {
    if (a->requires_grad) {
      Mat g = n.grad.array().rowwise() * row->value.row(0).array();
      a->accumulate(g);
    }
    if (row->requires_grad) row->accumulate(n.grad.cwiseProduct(a->value).colwise().sum());
  });
}

Var sigmoid(const Var& a) {
  Mat out = a->value.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return make_result(std::move(out), {a}, [a](Node& n) {
    Mat g = n.grad.array() * n.value.array() * (1.0 - n.value.array());
    a->accumulate(g);
  });
}

Var tanh(const Var& a) {
  Mat out = a->value.array().tanh();
  return make_result(std::move(out), {a}, [a](Node& n) {
    Mat g = n.grad.array() * (1.0 - n.value.array().square());
    a->accumulate(g);
  });
}

Var gelu(const Var& a) {
  Mat out = a->value.unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  });
  return make_result(std::move(out), {a}, [a](Node& n) {
    Mat g = a->value.binaryExpr(n.grad, [](double x, double up) {
      const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      return up * (0.5 * (1.0 + t) + 0.5 * x * dt);
    });
    a->accumulate(g);
  });
}

Var relu(const Var& a) {
  Mat out = a->value.cwiseMax(0.0);
  return make_result(std::move(out), {a}, [a](Node& n) {
    Mat g = a->value.binaryExpr(n.grad, [](double x, double up) { return x > 0.0 ? up : 0.0; });
    a->accumulate(g);
  });
}

Var sqrt_eps(const Var& a, double eps) {
  Mat out = (a->value.array() + eps).sqrt();
  return make_result(std::move(out), {a}, [a](Node& n) {
    Mat g = n.grad.array() / (2.0 * n.value.array());
    a->accumulate(g);
  });
}

// ---------------------------------------------------------------------------

Var softmax_rows(const Var& a) {
  Mat out(a->rows(), a->cols());
  for (Eigen::Index r = 0; r < a->rows(); ++r) {
    const double mx = a->value.row(r).maxCoeff();
    out.row(r) = (a->value.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return make_result(std::move(out), {a}, [a](Node& n) {
    Mat g(n.value.rows(), n.value.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double dot = n.grad.row(r).dot(n.value.row(r));
      g.row(r) = n.value.row(r).array() * (n.grad.row(r).array() - dot);
    }
    a->accumulate(g);
  });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index rows = a->rows();
  const Eigen::Index cols = a->cols();
  require(gain->rows() == 1 && gain->cols() == cols, "layer_norm gain shape");
  require(bias->rows() == 1 && bias->cols() == cols, "layer_norm bias shape");
  Mat xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = a->value.row(r).mean();
    const double var = (a->value.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a->value.row(r).array() - mean) * inv_std(r);
  }
  Mat out = (xhat.array().rowwise() * gain->value.row(0).array()).rowwise() +
            bias->value.row(0).array();
  return make_result(std::move(out), {a, gain, bias},
                     [a, gain, bias, xhat = std::move(xhat), inv_std](Node& n) {
                       if (gain->requires_grad)
                         gain->accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
                       if (bias->requires_grad) bias->accumulate(n.grad.colwise().sum());
                       if (!a->requires_grad) return;
                       Mat dxhat = n.grad.array().rowwise() * gain->value.row(0).array();
                       Mat g(dxhat.rows(), dxhat.cols());
                       for (Eigen::Index r = 0; r < g.rows(); ++r) {
                         const double m1 = dxhat.row(r).mean();
                         const double m2 = dxhat.row(r).dot(xhat.row(r)) / double(g.cols());
                         g.row(r) = inv_std(r) *
                                    (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                       }
                       a->accumulate(g);
                     });
}

Var l2_normalize_rows(const Var& a, double eps) {
  Eigen::VectorXd norms(a->rows());
  Mat out(a->rows(), a->cols());
  for (Eigen::Index r = 0; r < a->rows(); ++r) {
    norms(r) = std::sqrt(a->value.row(r).squaredNorm() + eps);
    out.row(r) = a->value.row(r) / norms(r);
  }
  return make_result(std::move(out), {a}, [a, norms](Node& n) {
    Mat g(n.value.rows(), n.value.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double dot = n.grad.row(r).dot(n.value.row(r));
      g.row(r) = (n.grad.row(r) - n.value.row(r) * dot) / norms(r);
    }
    a->accumulate(g);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const Eigen::Index rows = parts.front()->rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p->rows() == rows, "concat_cols row mismatch");
    cols += p->cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p->cols()) = p->value;
    c += p->cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return make_result(std::move(out), ps, [ps](Node& n) {
    Eigen::Index c0 = 0;
    for (const auto& p : ps) {
      if (p->requires_grad) p->accumulate(n.grad.middleCols(c0, p->cols()));
      c0 += p->cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows of nothing");
  const Eigen::Index cols = parts.front()->cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    require(p->cols() == cols, "concat_rows column mismatch");
    rows += p->rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p->rows()) = p->value;
    r += p->rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return make_result(std::move(out), ps, [ps](Node& n) {
    Eigen::Index r0 = 0;
    for (const auto& p : ps) {
      if (p->requires_grad) p->accumulate(n.grad.middleRows(r0, p->rows()));
      r0 += p->rows();
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a->rows(), "slice_rows out of range");
  Mat out = a->value.middleRows(start, count);
  return make_result(std::move(out), {a}, [a, start, count](Node& n) {
    Mat g = Mat::Zero(a->rows(), a->cols());
    g.middleRows(start, count) = n.grad;
    a->accumulate(g);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a->cols(), "slice_cols out of range");
  Mat out = a->value.middleCols(start, count);
  return make_result(std::move(out), {a}, [a, start, count](Node& n) {
    Mat g = Mat::Zero(a->rows(), a->cols());
    g.middleCols(start, count) = n.grad;
    a->accumulate(g);
  });
}

Var mean_rows(const Var& a) {
  require(a->rows() > 0, "mean_rows of empty matrix");
  Mat out = a->value.colwise().mean();
  return make_result(std::move(out), {a}, [a](Node& n) {
    Mat g = n.grad.replicate(a->rows(), 1) / double(a->rows());
    a->accumulate(g);
  });
}

Var sum_all(const Var& a) {
  Mat out(1, 1);
  out(0, 0) = a->value.sum();
  return make_result(std::move(out), {a}, [a](Node& n) {
    a->accumulate(Mat::Constant(a->rows(), a->cols(), n.grad(0, 0)));
  });
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / double(a->value.size())); }

Var max_rows_grouped(const Var& a, Eigen::Index group) {
  require(group > 0 && a->rows() % group == 0, "max_rows_grouped: rows not divisible by group");
  const Eigen::Index blocks = a->rows() / group;
  const Eigen::Index cols = a->cols();
  Mat out(blocks, cols);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(blocks * cols));
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      Eigen::Index best = b * group;
      double v = a->value(best, c);
      for (Eigen::Index r = best + 1; r < (b + 1) * group; ++r) {
        if (a->value(r, c) > v) {
          v = a->value(r, c);
          best = r;
        }
      }
      out(b, c) = v;
      arg[static_cast<std::size_t>(b * cols + c)] = best;
    }
  }
  return make_result(std::move(out), {a}, [a, arg = std::move(arg), cols](Node& n) {
    Mat g = Mat::Zero(a->rows(), a->cols());
    for (Eigen::Index b = 0; b < n.grad.rows(); ++b)
      for (Eigen::Index c = 0; c < cols; ++c)
        g(arg[static_cast<std::size_t>(b * cols + c)], c) += n.grad(b, c);
    a->accumulate(g);
  });
}

Var gather_rows(const Var& a, std::span<const Eigen::Index> index) {
  Mat out(static_cast<Eigen::Index>(index.size()), a->cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < a->rows(), "gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a->value.row(index[i]);
  }
  std::vector<Eigen::Index> idx(index.begin(), index.end());
  return make_result(std::move(out), {a}, [a, idx = std::move(idx)](Node& n) {
    Mat g = Mat::Zero(a->rows(), a->cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    a->accumulate(g);
  });
}

Var repeat_rows(const Var& a, Eigen::Index times) {
  require(times > 0, "repeat_rows needs times > 0");
  Mat out(a->rows() * times, a->cols());
  for (Eigen::Index r = 0; r < a->rows(); ++r)
    out.middleRows(r * times, times) = a->value.row(r).replicate(times, 1);
  return make_result(std::move(out), {a}, [a, times](Node& n) {
    Mat g(a->rows(), a->cols());
    for (Eigen::Index r = 0; r < a->rows(); ++r)
      g.row(r) = n.grad.middleRows(r * times, times).colwise().sum();
    a->accumulate(g);
  });
}

Var pick(const Var& a, std::span<const std::pair<Eigen::Index, Eigen::Index>> at) {
  Mat out(1, static_cast<Eigen::Index>(at.size()));
  for (std::size_t i = 0; i < at.size(); ++i) out(0, static_cast<Eigen::Index>(i)) = a->value(at[i].first, at[i].second);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> where(at.begin(), at.end());
  return make_result(std::move(out), {a}, [a, where = std::move(where)](Node& n) {
    Mat g = Mat::Zero(a->rows(), a->cols());
    for (std::size_t i = 0; i < where.size(); ++i)
      g(where[i].first, where[i].second) += n.grad(0, static_cast<Eigen::Index>(i));
    a->accumulate(g);
  });
}

// ---------------------------------------------------------------------------

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const Eigen::Index batch = logits->rows();
  require(static_cast<Eigen::Index>(labels.size()) == batch, "cross_entropy label count");
  Mat prob(batch, logits->cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < batch; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    require(y >= 0 && y < logits->cols(), "cross_entropy label out of range");
    const double mx = logits->value.row(r).maxCoeff();
    prob.row(r) = (logits->value.row(r).array() - mx).exp();
    const double z = prob.row(r).sum();
    prob.row(r) /= z;
    total += (std::log(z) + mx) - logits->value(r, y);
  }
  Mat out(1, 1);
  out(0, 0) = total / double(batch);
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result(std::move(out), {logits}, [logits, prob = std::move(prob), ys](Node& n) {
    Mat g = prob;
    for (std::size_t r = 0; r < ys.size(); ++r) g(static_cast<Eigen::Index>(r), ys[r]) -= 1.0;
    g *= n.grad(0, 0) / double(g.rows());
    logits->accumulate(g);
  });
}

Var pairwise_sqdist(const Var& a) {
  const Mat& x = a->value;
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Mat out = (-2.0 * x * x.transpose()).colwise() + sq;
  out.rowwise() += sq.transpose();
  out = out.cwiseMax(0.0);
  out.diagonal().setZero();
  return make_result(std::move(out), {a}, [a](Node& n) {
    const Mat s = n.grad + n.grad.transpose();
    Mat g = (s.rowwise().sum().asDiagonal() * a->value) - s * a->value;
    a->accumulate(2.0 * g);
  });
}

Var temporal_dwconv(const Var& x, const Var& w, Eigen::Index frames, Eigen::Index tokens) {
  const Eigen::Index span = frames * tokens;
  require(span > 0 && x->rows() % span == 0, "temporal_dwconv: rows not a multiple of frames*tokens");
  require(w->rows() == 3 && w->cols() == x->cols(), "temporal_dwconv: kernel must be 3xC");
  const Eigen::Index clips = x->rows() / span;
  Mat out = Mat::Zero(x->rows(), x->cols());
  for (Eigen::Index c = 0; c < clips; ++c) {
    for (Eigen::Index t = 0; t < frames; ++t) {
      for (Eigen::Index s = 0; s < 3; ++s) {
        const Eigen::Index src = t + s - 1;
        if (src < 0 || src >= frames) continue;
        out.middleRows(c * span + t * tokens, tokens).array() +=
            x->value.middleRows(c * span + src * tokens, tokens).array().rowwise() * w->value.row(s).array();
      }
    }
  }
  return make_result(std::move(out), {x, w}, [x, w, frames, tokens, clips, span](Node& n) {
    Mat gx = Mat::Zero(x->rows(), x->cols());
    Mat gw = Mat::Zero(3, x->cols());
    for (Eigen::Index c = 0; c < clips; ++c) {
      for (Eigen::Index t = 0; t < frames; ++t) {
        const auto up = n.grad.middleRows(c * span + t * tokens, tokens);
        for (Eigen::Index s = 0; s < 3; ++s) {
          const Eigen::Index src = t + s - 1;
          if (src < 0 || src >= frames) continue;
          gx.middleRows(c * span + src * tokens, tokens).array() += up.array().rowwise() * w->value.row(s).array();
          gw.row(s) += up.cwiseProduct(x->value.middleRows(c * span + src * tokens, tokens)).colwise().sum();
        }
      }
    }
    x->accumulate(gx);
    w->accumulate(gw);
  });
}

Var tile_rows(const Var& a, Eigen::Index times) {
  require(times > 0, "tile_rows needs times > 0");
  Mat out = a->value.replicate(times, 1);
  return make_result(std::move(out), {a}, [a, times](Node& n) {
    Mat g = Mat::Zero(a->rows(), a->cols());
    for (Eigen::Index i = 0; i < times; ++i) g += n.grad.middleRows(i * a->rows(), a->rows());
    a->accumulate(g);
  });
}

Var mean_rows_grouped(const Var& a, Eigen::Index group) {
  require(group > 0 && a->rows() % group == 0, "mean_rows_grouped: rows not divisible by group");
  const Eigen::Index blocks = a->rows() / group;
  Mat out(blocks, a->cols());
  for (Eigen::Index b = 0; b < blocks; ++b) out.row(b) = a->value.middleRows(b * group, group).colwise().sum() / double(group);
  return make_result(std::move(out), {a}, [a, group, blocks](Node& n) {
    Mat g(a->rows(), a->cols());
    for (Eigen::Index b = 0; b < blocks; ++b)
      g.middleRows(b * group, group) = (n.grad.row(b) / double(group)).replicate(group, 1);
    a->accumulate(g);
  });
}

Var block_attention(const Var& q, const Var& k, const Var& v, Eigen::Index blocks, int heads,
                    std::vector<Mat>* probe) {
  require(blocks > 0 && heads > 0, "block_attention: blocks and heads must be positive");
  require(q->rows() % blocks == 0 && k->rows() % blocks == 0, "block_attention: rows not divisible by blocks");
  require(k->rows() == v->rows() && q->cols() == k->cols() && k->cols() == v->cols(),
          "block_attention: q/k/v shapes disagree");
  require(q->cols() % heads == 0, "block_attention: width not divisible by heads");
  const Eigen::Index nq = q->rows() / blocks;
  const Eigen::Index nk = k->rows() / blocks;
  const Eigen::Index hd = q->cols() / heads;
  const double temp = 1.0 / std::sqrt(double(hd));

  // Softmax weights are kept for the backward pass, one matrix per (block, head).
  auto weights = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(blocks * heads));
  Mat out(q->rows(), q->cols());
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto qb = q->value.block(b * nq, h * hd, nq, hd);
      const auto kb = k->value.block(b * nk, h * hd, nk, hd);
      Mat s = (qb * kb.transpose()) * temp;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        s.row(r).array() -= s.row(r).maxCoeff();
        s.row(r) = s.row(r).array().exp();
        s.row(r) /= s.row(r).sum();
      }
      out.block(b * nq, h * hd, nq, hd) = s * v->value.block(b * nk, h * hd, nk, hd);
      if (probe != nullptr) probe->push_back(s);
      (*weights)[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }
  return make_result(std::move(out), {q, k, v}, [q, k, v, weights, blocks, heads, nq, nk, hd, temp](Node& n) {
    Mat gq = Mat::Zero(q->rows(), q->cols());
    Mat gk = Mat::Zero(k->rows(), k->cols());
    Mat gv = Mat::Zero(v->rows(), v->cols());
    for (Eigen::Index b = 0; b < blocks; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Mat& a = (*weights)[static_cast<std::size_t>(b * heads + h)];
        const auto go = n.grad.block(b * nq, h * hd, nq, hd);
        const auto vb = v->value.block(b * nk, h * hd, nk, hd);
        gv.block(b * nk, h * hd, nk, hd) += a.transpose() * go;
        const Mat ga = go * vb.transpose();
        Mat gs = a.cwiseProduct(ga);
        const Eigen::VectorXd dot = gs.rowwise().sum();
        gs -= a.cwiseProduct(dot.replicate(1, a.cols()));
        gs *= temp;
        gq.block(b * nq, h * hd, nq, hd) += gs * k->value.block(b * nk, h * hd, nk, hd);
        gk.block(b * nk, h * hd, nk, hd) += gs.transpose() * q->value.block(b * nq, h * hd, nq, hd);
      }
    }
    q->accumulate(gq);
    k->accumulate(gk);
    v->accumulate(gv);
  });
}

}  // namespace agvp::nn
