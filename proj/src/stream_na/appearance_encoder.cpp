#include "agvp/stream_na.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace agvp::na {

using nn::Mat;
using nn::Var;

namespace {

std::vector<Eigen::Index> lexicographic_order(const Mat& m) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&m](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (m(a, c) < m(b, c)) return true;
      if (m(a, c) > m(b, c)) return false;
    }
    return false;
  });
  return order;
}

}  // namespace

Mat canonical_rows(const Mat& m) {
  const auto order = lexicographic_order(m);
  Mat out(m.rows(), m.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(order[i]);
  return out;
}

std::vector<Eigen::Index> knn_graph(const Mat& coords, int k) {
  const Eigen::Index m = coords.rows();
  if (k < 1 || m < k + 1) {
    throw StructuralError("k-NN graph needs at least k+1 = " + std::to_string(k + 1) + " points, got " +
                          std::to_string(m));
  }
  std::vector<Eigen::Index> out(static_cast<std::size_t>(m * k));
  std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(m - 1));
  for (Eigen::Index i = 0; i < m; ++i) {
    std::size_t n = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i) continue;
      d[n++] = {(coords.row(i) - coords.row(j)).squaredNorm(), j};
    }
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(i * k + j)] = d[static_cast<std::size_t>(j)].second;
  }
  return out;
}

AppearanceEncoder::AppearanceEncoder(nn::ParamStore& store, const OmniConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
  Eigen::Index in = 6;
  for (std::size_t mi = 0; mi < modules_.size(); ++mi) {
    const Eigen::Index out = cfg.channels[mi];
    const std::string base = "omni" + std::to_string(mi);
    auto& mod = modules_[mi];
    mod.edge_diff = nn::Linear(store, base + ".edge_diff", in, out, rng, 0.7);
    mod.edge_self = nn::Linear(store, base + ".edge_self", in, out, rng, 0.7);
    for (int rate : cfg.group_rates) {
      if (out % rate != 0) throw ValidationError("channel count not divisible by grouping rate");
      std::vector<nn::Linear> groups;
      const Eigen::Index width = out / rate;
      for (int g = 0; g < rate; ++g) {
        groups.emplace_back(store, base + ".g" + std::to_string(rate) + "_" + std::to_string(g), width, width, rng,
                            0.5);
      }
      mod.branches.push_back(std::move(groups));
    }
    in = out;
  }
  pool_logits_ = nn::Linear(store, "omni.pool", cfg.channels[2], cfg.pooled_rows, rng);
  head_ = nn::Linear(store, "omni.fc", cfg.channels[3], cfg.out_dim, rng);
}

Var AppearanceEncoder::run_module(const Module& mod, const Var& h, const std::vector<Eigen::Index>& graph) const {
  const Eigen::Index k = cfg_.neighbours;
  // Edge features [x_j - x_i ; x_i] through one shared linear layer:
  // W_d (x_j - x_i) + W_s x_i + b = (W_d x_j) + (W_s x_i + b - W_d x_i).
  const Var diff = nn::matmul(h, mod.edge_diff.weight);
  const Var self = mod.edge_self(h);
  const Var edges = nn::add(nn::gather_rows(diff, graph), nn::repeat_rows(nn::sub(self, diff), k));
  const Var x = nn::max_rows_grouped(nn::gelu(edges), k);

  std::vector<Var> summed{x};
  for (const auto& groups : mod.branches) {
    const Eigen::Index width = x->cols() / static_cast<Eigen::Index>(groups.size());
    std::vector<Var> parts;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      parts.push_back(groups[g](nn::slice_cols(x, static_cast<Eigen::Index>(g) * width, width)));
    }
    const Var branch = nn::gelu(parts.size() == 1 ? parts.front() : nn::concat_cols(parts));
    summed.push_back(branch);
  }
  Var acc = summed.front();
  for (std::size_t i = 1; i < summed.size(); ++i) acc = nn::add(acc, summed[i]);
  return acc;
}

Var AppearanceEncoder::operator()(const Mat& texels) const { return (*this)(nn::constant(texels)); }

Var AppearanceEncoder::operator()(const Var& texels) const {
  if (texels->cols() != 6) throw ShapeError("texel set must have 6 columns");
  const auto order = lexicographic_order(texels->value);
  const Var x = nn::gather_rows(texels, order);
  const Mat coords = x->value.leftCols(3);

  const auto graph = knn_graph(coords, cfg_.neighbours);
  Var h = run_module(modules_[0], x, graph);
  h = run_module(modules_[1], h, graph);
  h = run_module(modules_[2], h, graph);

  // Learned soft pooling of the m rows down to `pooled_rows`.
  const Var weights = nn::softmax_rows(nn::transpose(pool_logits_(h)));
  h = nn::matmul(weights, h);
  const Mat pooled_coords = weights->value * coords;
  h = run_module(modules_[3], h, knn_graph(pooled_coords, cfg_.neighbours));

  return head_(nn::max_rows_grouped(h, h->rows()));
}

}  // namespace agvp::na
