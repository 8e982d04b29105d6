#pragma once

// Hand-rolled random generators, brute-force metric/fusion oracles and a
// central finite-difference gradient checker shared by the test binaries.

#include "agvp/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace agvp::testing {

using nn::Mat;
using nn::Var;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return real() < p; }
  Mat matrix(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = real(-scale, scale);
    return m;
  }
  template <class T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), rng_);
  }
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(p);
    return p;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// ---- brute-force retrieval oracles ----

/// Gallery order for one query by exhaustive pairwise comparison (selection sort).
inline std::vector<std::size_t> brute_order(const std::vector<double>& dist, const std::vector<std::string>& ids) {
  std::vector<std::size_t> left(dist.size());
  std::iota(left.begin(), left.end(), std::size_t{0});
  std::vector<std::size_t> out;
  while (!left.empty()) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < left.size(); ++j) {
      const auto a = left[j];
      const auto b = left[best];
      if (dist[a] < dist[b] || (dist[a] == dist[b] && ids[a] < ids[b])) best = j;
    }
    out.push_back(left[best]);
    left.erase(left.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return out;
}

/// 1 if the first relevant item sits within the top k, else 0; -1 without any relevant item.
inline int brute_hit(const std::vector<bool>& rel, int k) {
  bool any = false;
  for (bool r : rel) any = any || r;
  if (!any) return -1;
  for (int i = 0; i < k && i < static_cast<int>(rel.size()); ++i)
    if (rel[static_cast<std::size_t>(i)]) return 1;
  return 0;
}

/// Average precision straight from the definition: mean of precision@i over relevant i.
inline double brute_ap(const std::vector<bool>& rel) {
  double total = 0.0;
  int relevant = 0;
  for (std::size_t i = 0; i < rel.size(); ++i) {
    if (!rel[i]) continue;
    int hits = 0;
    for (std::size_t j = 0; j <= i; ++j) hits += rel[j] ? 1 : 0;
    total += double(hits) / double(i + 1);
    ++relevant;
  }
  return relevant ? total / relevant : -1.0;
}

/// Reciprocal rank fusion evaluated literally: score(d) = sum_i 1/(k + r_i(d)).
inline std::vector<std::pair<std::string, double>> brute_rrf(const std::vector<std::vector<std::string>>& orders,
                                                              int k = 60) {
  std::map<std::string, double> score;
  for (const auto& order : orders)
    for (std::size_t r = 0; r < order.size(); ++r) score[order[r]] += 1.0 / (double(k) + double(r + 1));
  std::vector<std::pair<std::string, double>> out(score.begin(), score.end());
  // Bubble sort keeps this independent of the library's comparator.
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j + 1 < out.size() - i; ++j) {
      const auto& a = out[j];
      const auto& b = out[j + 1];
      if (b.second > a.second || (b.second == a.second && b.first < a.first)) std::swap(out[j], out[j + 1]);
    }
  return out;
}

// ---- finite differences ----

struct GradReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

/// Compares analytic gradients of `loss()` with central differences for up
/// to `per_param` entries of every parameter.
inline GradReport grad_check(const std::vector<Var>& params, const std::function<Var()>& loss, std::size_t per_param = 12,
                             double h = 1e-5, std::uint64_t seed = 3) {
  for (const auto& p : params) p->zero_grad();
  nn::backward(loss());
  std::vector<Mat> analytic;
  for (const auto& p : params) analytic.push_back(p->grad.size() ? p->grad : Mat::Zero(p->rows(), p->cols()));
  std::mt19937_64 rng(seed);
  GradReport rep;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Var p = params[k];
    const auto n = static_cast<std::size_t>(p->value.size());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n, per_param));
    for (std::size_t i : idx) {
      double& x = p->value.data()[i];
      const double x0 = x;
      double fp, fm;
      {
        nn::NoGradGuard g;
        x = x0 + h;
        fp = loss()->value(0, 0);
        x = x0 - h;
        fm = loss()->value(0, 0);
      }
      x = x0;
      const double num = (fp - fm) / (2 * h);
      const double ana = analytic[k].data()[i];
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6});
      rep.max_rel = std::max(rep.max_rel, rel);
      ++rep.checked;
    }
  }
  return rep;
}

inline std::vector<Var> store_params(const nn::ParamStore& s) {
  std::vector<Var> out;
  for (const auto& e : s.entries()) out.push_back(e.var);
  return out;
}

/// Scalar probe loss: sum(W .* y) with a fixed random W, so every output entry matters.
inline Var probe_loss(const Var& y, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat w(y->rows(), y->cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return nn::sum_all(nn::mul(y, nn::constant(w)));
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("agvp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace agvp::testing
