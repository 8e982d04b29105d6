#include <doctest.h>

#include "agvp/errors.hpp"
#include "agvp/nn/layers.hpp"
#include "support/testing.hpp"

#include <array>

using namespace agvp;
using namespace agvp::nn;
using agvp::testing::Gen;
using agvp::testing::grad_check;
using agvp::testing::probe_loss;

namespace {

constexpr double kTol = 1e-4;

// Checks d probe(f(x...)) / dx for every input with central differences.
void check_op(const std::vector<Var>& inputs, const std::function<Var()>& f, double tol = kTol) {
  const auto rep = grad_check(inputs, [&] { return probe_loss(f()); }, 16);
  CHECK(rep.checked > 0);
  CHECK(rep.max_rel <= tol);
}

}  // namespace

TEST_CASE("elementwise and linear-algebra gradients") {
  Gen g(1);
  auto a = parameter(g.matrix(3, 4));
  auto b = parameter(g.matrix(3, 4));
  auto c = parameter(g.matrix(4, 5));
  auto row = parameter(g.matrix(1, 4));
  check_op({a, c}, [&] { return matmul(a, c); });
  check_op({a, b}, [&] { return matmul_nt(a, b); });
  check_op({a}, [&] { return transpose(a); });
  check_op({a, b}, [&] { return add(a, b); });
  check_op({a, b}, [&] { return sub(a, b); });
  check_op({a, b}, [&] { return mul(a, b); });
  check_op({a}, [&] { return scale(a, -1.7); });
  check_op({a, row}, [&] { return add_row(a, row); });
  check_op({a, row}, [&] { return mul_row(a, row); });
  check_op({a}, [&] { return sigmoid(a); });
  check_op({a}, [&] { return nn::tanh(a); });
  check_op({a}, [&] { return gelu(a); });
}

TEST_CASE("relu and sqrt gradients away from kinks") {
  Gen g(2);
  Mat m = g.matrix(4, 4);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (std::abs(m.data()[i]) < 0.05) m.data()[i] = 0.3;
  auto a = parameter(m);
  check_op({a}, [&] { return relu(a); });
  auto p = parameter(g.matrix(3, 3).cwiseAbs().array() + 0.2);
  check_op({p}, [&] { return sqrt_eps(p, 1e-12); });
}

TEST_CASE("reduction and reshaping gradients") {
  Gen g(3);
  auto a = parameter(g.matrix(6, 4));
  auto b = parameter(g.matrix(2, 4));
  auto gain = parameter(g.matrix(1, 4) + Mat::Ones(1, 4));
  auto bias = parameter(g.matrix(1, 4));
  check_op({a}, [&] { return softmax_rows(a); });
  check_op({a, gain, bias}, [&] { return layer_norm_rows(a, gain, bias); });
  check_op({a}, [&] { return l2_normalize_rows(a); });
  check_op({a, b}, [&] {
    std::array<Var, 2> parts{a, b};
    return concat_rows(parts);
  });
  check_op({a, a}, [&] {
    std::array<Var, 2> parts{a, a};
    return concat_cols(parts);
  });
  check_op({a}, [&] { return slice_rows(a, 1, 3); });
  check_op({a}, [&] { return slice_cols(a, 1, 2); });
  check_op({a}, [&] { return mean_rows(a); });
  check_op({a}, [&] { return sum_all(a); });
  check_op({a}, [&] { return mean_all(a); });
  check_op({a}, [&] { return max_rows_grouped(a, 3); });
  check_op({a}, [&] { return mean_rows_grouped(a, 2); });
  check_op({a}, [&] { return repeat_rows(a, 2); });
  check_op({a}, [&] { return tile_rows(a, 3); });
  check_op({a}, [&] {
    const std::array<Eigen::Index, 5> idx{5, 0, 0, 3, 2};
    return gather_rows(a, idx);
  });
  check_op({a}, [&] {
    const std::array<std::pair<Eigen::Index, Eigen::Index>, 3> at{{{0, 1}, {5, 3}, {2, 2}}};
    return pick(a, at);
  });
}

TEST_CASE("loss and geometry gradients") {
  Gen g(4);
  auto logits = parameter(g.matrix(5, 3, 2.0));
  const std::array<int, 5> labels{0, 2, 1, 1, 0};
  const auto rep = grad_check({logits}, [&] { return cross_entropy(logits, labels); });
  CHECK(rep.max_rel <= kTol);
  auto e = parameter(g.matrix(5, 4));
  check_op({e}, [&] { return pairwise_sqdist(e); });
  // x holds 2 clips of 3 frames of 2 tokens.
  auto x = parameter(g.matrix(12, 4));
  auto w = parameter(g.matrix(3, 4));
  check_op({x, w}, [&] { return temporal_dwconv(x, w, 3, 2); });
}

TEST_CASE("block attention gradients and row-stochastic weights") {
  Gen g(5);
  auto q = parameter(g.matrix(4, 6));
  auto k = parameter(g.matrix(10, 6));
  auto v = parameter(g.matrix(10, 6));
  check_op({q, k, v}, [&] { return block_attention(q, k, v, 2, 3); });
  std::vector<Mat> probe;
  block_attention(q, k, v, 2, 3, &probe);
  REQUIRE(!probe.empty());
  for (const auto& p : probe)
    for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0) <= 1e-12);
}

TEST_CASE("layer gradients: linear, mlp, attention, gru") {
  Gen g(6);
  Rng rng(6);
  ParamStore store;
  Linear lin(store, "lin", 4, 3, rng);
  Mlp mlp(store, "mlp", 3, 5, 3, rng);
  MultiHeadAttention mha(store, "mha", 3, 1, rng);
  GruCell gru(store, "gru", 3, 4, rng);
  const Mat x = g.matrix(5, 4);
  const Mat h0 = g.matrix(5, 4, 0.5);
  auto loss = [&] {
    auto y = mlp(lin(constant(x)));
    y = add(y, mha(y, y));
    return probe_loss(gru(y, constant(h0)));
  };
  const auto rep = grad_check(agvp::testing::store_params(store), loss, 8);
  CHECK(rep.max_rel <= kTol);
}

TEST_CASE("shape mismatches raise ShapeError") {
  auto a = constant(Mat::Zero(2, 3));
  auto b = constant(Mat::Zero(4, 2));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(add_row(a, constant(Mat::Zero(2, 3))), ShapeError);
}

TEST_CASE("no-grad guard records nothing and constants stay gradient-free") {
  auto p = parameter(Mat::Ones(2, 2));
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    auto y = sum_all(mul(p, p));
    CHECK_FALSE(y->requires_grad);
  }
  CHECK(grad_enabled());
  auto c = constant(Mat::Ones(2, 2));
  backward(sum_all(mul(p, c)));
  CHECK(p->grad.isApprox(Mat::Ones(2, 2)));
  CHECK(c->grad.size() == 0);
}

TEST_CASE("param store bookkeeping") {
  ParamStore s;
  s.add("a", Mat::Zero(2, 3));
  s.add("b", Mat::Zero(1, 4));
  CHECK(s.size() == 2);
  CHECK(s.scalar_count() == 10);
  CHECK(s.find("b")->cols() == 4);
  s.set_trainable(false);
  CHECK_FALSE(s.find("a")->requires_grad);
}
