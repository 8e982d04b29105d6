#include <doctest.h>

#include "agvp/stream_ats.hpp"
#include "support/suites.hpp"

using namespace agvp;
using namespace agvp::ats;
using agvp::testing::Gen;
using nn::Rng;

namespace {

AtsConfig toy_config() {
  AtsConfig cfg;
  cfg.encoder = agvp::testing::toy_encoder();
  cfg.gru_hidden = 6;
  cfg.heads = 2;
  return cfg;
}

Mat toy_pixels(Gen& g, Eigen::Index frames) { return g.matrix(frames, 16 * 16 * 3).cwiseAbs(); }

void zero(const Var& v) { v->value.setZero(); }

}  // namespace

TEST_CASE("frame encoder is per-frame") {
  Gen g(1);
  Rng rng(1);
  Stream1Model model(toy_config(), rng);
  nn::NoGradGuard ng;
  SUBCASE("identical frames give identical rows") {
    Mat px(4, 16 * 16 * 3);
    const Mat one = toy_pixels(g, 1);
    for (int i = 0; i < 4; ++i) px.row(i) = one;
    const Mat F = model.encode_frames(px)->value;
    for (int i = 1; i < 4; ++i) CHECK(F.row(i) == F.row(0));
  }
  SUBCASE("permuting frames permutes rows") {
    const Mat px = toy_pixels(g, 5);
    const Mat F = model.encode_frames(px)->value;
    const auto perm = g.permutation(5);
    Mat ppx(5, px.cols());
    for (int i = 0; i < 5; ++i) ppx.row(i) = px.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
    const Mat PF = model.encode_frames(ppx)->value;
    for (int i = 0; i < 5; ++i)
      CHECK((PF.row(i) - F.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]))).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("shape T x d") {
    const Mat F = model.encode_frames(toy_pixels(g, 8))->value;
    CHECK(F.rows() == 8);
    CHECK(F.cols() == 8);
  }
  CHECK_THROWS_AS(model.encode_frames(g.matrix(2, 10)), ShapeError);
}

TEST_CASE("encoder config validation and token law") {
  CHECK(token_count(64, 16) == 17);
  CHECK(token_count(224, 14) == 257);
  CHECK_THROWS_AS(token_count(30, 16), ConfigError);
  EncoderConfig bad{30, 30, 16, 64, 2, 4, 2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  EncoderConfig heads{32, 32, 16, 10, 2, 4, 2};
  CHECK_THROWS_AS(heads.validate(), ConfigError);
}

TEST_CASE("tsm: zero parameters give a zero state and the regressor bias") {
  Gen g(2);
  Rng rng(2);
  nn::ParamStore s;
  Tsm tsm(s, 8, 6, 10, rng);
  for (const auto& e : s.entries()) zero(e.var);
  tsm.regressor.fc2.bias->value = g.matrix(1, 10);
  nn::NoGradGuard ng;
  const auto out = tsm(nn::constant(g.matrix(6, 8)), 3);
  CHECK(out.g->value.isZero(0.0));
  CHECK(out.beta->cols() == 10);
  for (Eigen::Index r = 0; r < 6; ++r) CHECK(out.beta->value.row(r) == tsm.regressor.fc2.bias->value);
}

TEST_CASE("tsm causality: g_t ignores later frames") {
  Gen g(3);
  Rng rng(3);
  nn::ParamStore s;
  Tsm tsm(s, 8, 6, 10, rng);
  nn::NoGradGuard ng;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index T = g.integer(2, 6);
    const Mat F = g.matrix(2 * T, 8);
    const Eigen::Index t = g.integer(0, static_cast<int>(T) - 2);
    Mat F2 = F;
    // Perturb every frame after t in both clips.
    for (Eigen::Index b = 0; b < 2; ++b)
      for (Eigen::Index u = t + 1; u < T; ++u) F2.row(b * T + u) = g.matrix(1, 8);
    const Mat a = tsm(nn::constant(F), T).g->value;
    const Mat b = tsm(nn::constant(F2), T).g->value;
    for (Eigen::Index c = 0; c < 2; ++c)
      for (Eigen::Index u = 0; u <= t; ++u) CHECK(a.row(c * T + u) == b.row(c * T + u));
    CHECK(a != b);
  }
}

TEST_CASE("tfe: closed gate and zero attention values pass features through") {
  Gen g(4);
  Rng rng(4);
  nn::ParamStore s;
  Tfe tfe(s, 8, 10, 2, rng);
  zero(tfe.gate.weight);
  tfe.gate.bias->value.setConstant(-1e4);
  zero(tfe.attn.v.weight);
  zero(tfe.attn.v.bias);
  zero(tfe.attn.o.bias);
  nn::NoGradGuard ng;
  const Mat F = g.matrix(6, 8);
  nn::AttentionProbe probe;
  const Mat out = tfe(nn::constant(F), nn::constant(g.matrix(6, 10)), 3, &probe)->value;
  CHECK(out == F);
  CHECK(agvp::testing::row_stochastic_error(probe) <= 1e-12);
}

TEST_CASE("tap examples") {
  Mat F(2, 2);
  F << 0, 2, 2, 0;
  CHECK(tap(nn::constant(F), 2)->value == (Mat(1, 2) << 1, 1).finished());
  Gen g(5);
  const Mat c = g.matrix(1, 4);
  CHECK(tap(nn::constant(c.replicate(5, 1)), 5)->value.isApprox(c, 1e-15));
  const Mat X = g.matrix(4, 3);
  const Mat Xp = (Mat(4, 3) << X.row(2), X.row(0), X.row(3), X.row(1)).finished();
  CHECK((tap(nn::constant(X), 4)->value - tap(nn::constant(Xp), 4)->value).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(tap(nn::constant(X), 3), ShapeError);
}

TEST_CASE("ssp: zero value projection returns the memory row") {
  Gen g(6);
  Rng rng(6);
  nn::ParamStore s;
  Ssp ssp(s, 8, 2, rng);
  const Mat m = g.matrix(2, 8);
  {
    nn::NoGradGuard ng;
    const Mat out = ssp(nn::constant(g.matrix(6, 8)), nn::constant(m), 3)->value;
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 8);
  }
  zero(ssp.attn.v.weight);
  zero(ssp.attn.v.bias);
  zero(ssp.attn.o.bias);
  nn::NoGradGuard ng;
  CHECK(ssp(nn::constant(g.matrix(6, 8)), nn::constant(m), 3)->value == m);
  CHECK_THROWS_AS(ssp(nn::constant(g.matrix(6, 8)), nn::constant(g.matrix(3, 8)), 3), ShapeError);
}

TEST_CASE("memory bank") {
  MemoryBank bank;
  const PersonId a("A"), b("B");
  Eigen::RowVectorXd u(2), v(2), w(2);
  u << 1, 2;
  v << 3, 6;
  w << -1, 5;
  bank.add(a, u);
  CHECK(bank.entry(a) == u);
  bank.add(b, w);
  bank.add(a, v);
  CHECK(bank.entry(a) == (u + v) / 2);
  CHECK(bank.entry(b) == w);
  CHECK(bank.count(a) == 2);
  CHECK_FALSE(bank.contains(PersonId("C")));
  CHECK_THROWS_AS(bank.entry(PersonId("C")), ValidationError);
}

TEST_CASE("stream 1 forward modes") {
  Gen g(7);
  Rng rng(7);
  Stream1Model model(toy_config(), rng);
  const Eigen::Index T = 4;
  const Mat px = toy_pixels(g, 2 * T);
  nn::NoGradGuard ng;
  const Mat infer = model.forward(px, T, Mode::Infer)->value;
  CHECK(infer.rows() == 2);
  CHECK(infer.cols() == 16);
  const Mat mem = g.matrix(2, 8);
  const Mat train = model.forward(px, T, Mode::Train, &mem)->value;
  CHECK(train.leftCols(8) == infer.leftCols(8));
  CHECK(train.rightCols(8) != infer.rightCols(8));
  CHECK_THROWS_AS(model.forward(px, T, Mode::Train), ValidationError);

  SUBCASE("constant features and zeroed attention residual give [c; c]") {
    zero(model.ssp.attn.v.weight);
    zero(model.ssp.attn.v.bias);
    zero(model.ssp.attn.o.bias);
    const Mat r = model.forward(px, T, Mode::Infer)->value;
    CHECK(r.leftCols(8) == r.rightCols(8));
  }
}

TEST_CASE("gradient suite items for stream 1 blocks") {
  for (const auto& item : agvp::testing::gradient_suite()) {
    if (item.name != "GRU + shape regressor" && item.name != "TFE" && item.name != "SSP" && item.name != "frame encoder")
      continue;
    INFO(item.name << " max rel err " << item.value);
    CHECK(item.ok);
  }
}
