#include "agvp/nn/layers.hpp"
#include "agvp/errors.hpp"

#include <cmath>

namespace agvp::nn {

Var ParamStore::add(std::string name, Mat init) {
  for (const auto& e : entries_) {
    if (e.name == name) throw StructuralError("duplicate parameter name: " + name);
  }
  auto v = parameter(std::move(init));
  entries_.push_back({std::move(name), v});
  return v;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.var;
  }
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.var->zero_grad();
}

void ParamStore::set_trainable(bool trainable) {
  for (auto& e : entries_) e.var->requires_grad = trainable;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.var->value.size());
  return n;
}

Mat randn(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear::Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
               Rng& rng, double init_scale)
    : weight(store.add(name + ".weight", randn(in, out, init_scale / std::sqrt(double(in)), rng))),
      bias(store.add(name + ".bias", Mat::Zero(1, out))) {}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim)
    : gain(store.add(name + ".gain", Mat::Ones(1, dim))),
      bias(store.add(name + ".bias", Mat::Zero(1, dim))) {}

Mlp::Mlp(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
         Eigen::Index out, Rng& rng)
    : fc1(store, name + ".fc1", in, hidden, rng), fc2(store, name + ".fc2", hidden, out, rng) {}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name,
                                       Eigen::Index dim, int heads_, Rng& rng)
    : heads(heads_),
      q(store, name + ".q", dim, dim, rng),
      k(store, name + ".k", dim, dim, rng),
      v(store, name + ".v", dim, dim, rng),
      o(store, name + ".o", dim, dim, rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw ShapeError("attention dim must be divisible by head count");
  }
}

Var MultiHeadAttention::operator()(const Var& query, const Var& context,
                                   AttentionProbe* probe) const {
  return attend(query, context, 1, probe);
}

Var MultiHeadAttention::attend(const Var& query, const Var& context, Eigen::Index blocks,
                               AttentionProbe* probe) const {
  return o(block_attention(q(query), k(context), v(context), blocks, heads,
                           probe != nullptr ? &probe->weights : nullptr));
}

GruCell::GruCell(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hid,
                 Rng& rng)
    : hidden(hid),
      w_in(store.add(name + ".w_in", randn(in, 3 * hid, 1.0 / std::sqrt(double(in)), rng))),
      w_hidden(store.add(name + ".w_hidden", randn(hid, 3 * hid, 1.0 / std::sqrt(double(hid)), rng))),
      b_in(store.add(name + ".b_in", Mat::Zero(1, 3 * hid))),
      b_hidden(store.add(name + ".b_hidden", Mat::Zero(1, 3 * hid))) {}

Var GruCell::operator()(const Var& x, const Var& h) const {
  const Var gi = add_row(matmul(x, w_in), b_in);
  const Var gh = add_row(matmul(h, w_hidden), b_hidden);
  const Var z = sigmoid(add(slice_cols(gi, 0, hidden), slice_cols(gh, 0, hidden)));
  const Var r = sigmoid(add(slice_cols(gi, hidden, hidden), slice_cols(gh, hidden, hidden)));
  const Var n = tanh(add(slice_cols(gi, 2 * hidden, hidden), mul(r, slice_cols(gh, 2 * hidden, hidden))));
  // h' = (1 - z) * n + z * h  ==  n + z * (h - n)
  return add(n, mul(z, sub(h, n)));
}

}  // namespace agvp::nn
