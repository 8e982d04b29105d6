#include <doctest.h>

#include "agvp/stream_msa.hpp"
#include "support/suites.hpp"

using namespace agvp;
using namespace agvp::msa;
using agvp::testing::Gen;

namespace {

MsaConfig toy_config(int taps = 3, int blocks = 2) {
  MsaConfig cfg;
  cfg.encoder = agvp::testing::toy_encoder(16, 8, 3);
  cfg.taps = taps;
  cfg.blocks = blocks;
  cfg.heads = 2;
  cfg.embed_dim = 5;
  return cfg;
}

Mat toy_pixels(Gen& g, Eigen::Index frames, int side = 16) { return g.matrix(frames, side * side * 3).cwiseAbs(); }

void zero(const Var& v) { v->value.setZero(); }

void silence_decoder(Stream3Model& m) {
  for (auto& blk : m.decoder) {
    zero(blk.attn.v.weight);
    zero(blk.attn.v.bias);
    zero(blk.attn.o.bias);
    zero(blk.mlp.fc2.weight);
    zero(blk.mlp.fc2.bias);
  }
}

}  // namespace

TEST_CASE("desk configuration feature volume is T x 17 x 64") {
  Gen g(1);
  nn::Rng rng(1);
  MsaConfig cfg;  // 64x64, patch 16, d 64, 4 layers
  Stream3Model model(cfg, rng);
  nn::NoGradGuard ng;
  const auto vol = model.features(toy_pixels(g, 8, 64), 8);
  REQUIRE(vol.layers.size() == 4);
  CHECK(vol.tokens == 17);
  for (const auto& G : vol.layers) {
    CHECK(G->rows() == 8 * 17);
    CHECK(G->cols() == 64);
  }
}

TEST_CASE("identical frames give a feature volume constant along time") {
  Gen g(2);
  nn::Rng rng(2);
  Stream3Model model(toy_config(), rng);
  const Mat one = toy_pixels(g, 1);
  Mat px(4, one.cols());
  for (int i = 0; i < 4; ++i) px.row(i) = one;
  nn::NoGradGuard ng;
  const auto vol = model.features(px, 4);
  const Eigen::Index P = vol.tokens;
  for (const auto& G : vol.layers)
    for (Eigen::Index t = 1; t < 4; ++t) CHECK(G->value.middleRows(t * P, P) == G->value.topRows(P));
}

TEST_CASE("temp module: delta kernel without residual is the identity") {
  Gen g(3);
  nn::Rng rng(3);
  nn::ParamStore s;
  TempModule temp(s, "t", 6, rng);
  temp.kernel->value.setZero();
  temp.kernel->value.row(1).setOnes();
  temp.residual = false;
  const Mat G = g.matrix(2 * 3 * 4, 6);
  nn::NoGradGuard ng;
  CHECK(temp(nn::constant(G), 3, 4)->value == G);
  temp.residual = true;
  const Mat Y = temp(nn::constant(G), 3, 4)->value;
  CHECK(Y.rows() == G.rows());
  CHECK(Y.cols() == G.cols());
  CHECK(Y.isApprox(2 * G, 1e-15));
}

TEST_CASE("decoder block: silenced residual branches keep q") {
  Gen g(4);
  nn::Rng rng(4);
  nn::ParamStore s;
  DecoderBlock blk(s, "d", 6, 2, rng);
  zero(blk.attn.v.weight);
  zero(blk.attn.v.bias);
  zero(blk.attn.o.bias);
  zero(blk.mlp.fc2.weight);
  zero(blk.mlp.fc2.bias);
  const Mat q = g.matrix(2, 6);
  nn::NoGradGuard ng;
  nn::AttentionProbe probe;
  CHECK(blk(nn::constant(q), nn::constant(g.matrix(2 * 10, 6)), &probe)->value == q);
  REQUIRE(probe.weights.size() == 4);  // 2 clips x 2 heads
  for (const auto& w : probe.weights) CHECK(w.cols() == 10);
  CHECK(agvp::testing::row_stochastic_error(probe) <= 1e-12);
}

TEST_CASE("block i reads tapped layer N-M+i") {
  Gen g(5);
  for (auto [n, m] : {std::pair{3, 2}, std::pair{3, 3}, std::pair{3, 1}, std::pair{2, 2}}) {
    nn::Rng rng(5);
    Stream3Model model(toy_config(n, m), rng);
    nn::NoGradGuard ng;
    const Mat px = toy_pixels(g, 6);
    MsaTrace trace;
    const Mat out = model.forward(px, 3, &trace)->value;
    std::vector<int> expect;
    for (int i = 1; i <= m; ++i) expect.push_back(n - m + i);
    CHECK(trace.layer_for_block == expect);

    // Perturbing a layer that no block reads must leave f_G untouched.
    if (n - m >= 1) {
      auto vol = model.features(px, 3);
      vol.layers[0] = nn::constant(vol.layers[0]->value * 3.0 + Mat::Ones(vol.layers[0]->rows(), vol.layers[0]->cols()));
      CHECK(model.decode(vol)->value == out);
    }
    // Perturbing the layer block 1 reads changes it.
    auto vol = model.features(px, 3);
    const std::size_t read = static_cast<std::size_t>(n - m);
    vol.layers[read] = nn::constant(vol.layers[read]->value * 3.0);
    CHECK(model.decode(vol)->value != out);
  }
}

TEST_CASE("silenced decoder gives FC(q0) for any input") {
  Gen g(6);
  nn::Rng rng(6);
  Stream3Model model(toy_config(), rng);
  silence_decoder(model);
  nn::NoGradGuard ng;
  const Mat expect = model.head(model.query)->value;
  for (int trial = 0; trial < 3; ++trial) {
    const Mat out = model.forward(toy_pixels(g, 6), 3)->value;
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 5);
    for (Eigen::Index r = 0; r < 2; ++r) CHECK(out.row(r) == expect);
  }
}

TEST_CASE("delta kernel and identical frames: f_G does not depend on T") {
  Gen g(7);
  nn::Rng rng(7);
  Stream3Model model(toy_config(), rng);
  for (auto& t : model.temporal) {
    t.kernel->value.setZero();
    t.kernel->value.row(1).setOnes();
  }
  const Mat one = toy_pixels(g, 1);
  nn::NoGradGuard ng;
  const Mat base = model.forward(one, 1)->value;
  for (int T : {2, 3, 5}) {
    const Mat out = model.forward(one.replicate(T, 1), T)->value;
    CHECK((out - base).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("configuration errors") {
  auto cfg = toy_config(2, 3);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = toy_config(4, 2);  // encoder has 3 layers
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  nn::Rng rng(8);
  CHECK_THROWS_AS(Stream3Model(toy_config(2, 3), rng), ConfigError);
  ats::EncoderOutput shallow;
  shallow.layers.resize(2);
  CHECK_THROWS_AS(tap_layers(shallow, 1, 1, 3), StructuralError);
}

TEST_CASE("frozen encoder receives no gradient, trainable one does") {
  Gen g(9);
  for (bool train : {false, true}) {
    nn::Rng rng(9);
    auto cfg = toy_config();
    cfg.train_encoder = train;
    Stream3Model model(cfg, rng);
    nn::backward(agvp::testing::probe_loss(model.forward(toy_pixels(g, 6), 3)));
    bool any = false;
    for (const auto& e : model.encoder_params().entries()) any = any || (e.var->grad.size() && !e.var->grad.isZero());
    CHECK(any == train);
  }
}

TEST_CASE("gradient suite items for stream 3 blocks") {
  for (const auto& item : agvp::testing::gradient_suite()) {
    if (item.name != "Temp module" && item.name != "decoder block" && item.name != "stream-3 end to end wrt q0") continue;
    INFO(item.name << " max rel err " << item.value);
    CHECK(item.ok);
  }
}
