#include <doctest.h>

#include "agvp/fusion.hpp"
#include "support/suites.hpp"

#include <array>
#include <cmath>
#include <fstream>

using namespace agvp;
using namespace agvp::fusion;
using agvp::testing::Gen;

namespace {

RankedList list_of(const std::string& q, const std::vector<std::string>& ids) {
  RankedList l{q, {}};
  for (std::size_t i = 0; i < ids.size(); ++i) l.entries.push_back({ids[i], -double(i)});
  return l;
}

std::vector<std::string> gallery(int n) {
  std::vector<std::string> g;
  for (int i = 0; i < n; ++i) g.push_back("g" + std::to_string(100 + i));
  return g;
}

double score_of(const RankedList& l, const std::string& id) {
  for (const auto& e : l.entries)
    if (e.gallery_id == id) return e.score;
  return -1.0;
}

}  // namespace

TEST_CASE("rrf scores: hand-evaluated examples") {
  const std::array<int, 3> ones{1, 1, 1};
  const std::array<int, 3> spread{1, 2, 3};
  CHECK(rrf_score(ones) == doctest::Approx(3.0 / 61).epsilon(1e-15));
  CHECK(rrf_score(ones) == doctest::Approx(0.0491803).epsilon(1e-6));
  CHECK(rrf_score(spread) == doctest::Approx(1.0 / 61 + 1.0 / 62 + 1.0 / 63).epsilon(1e-15));
  CHECK(rrf_score(spread) == doctest::Approx(0.0483955).epsilon(1e-6));
  const auto fused = rrf({list_of("q", {"a", "b"}), list_of("q", {"a", "b"}), list_of("q", {"a", "b"})});
  CHECK(fused.entries[0].gallery_id == "a");
  CHECK(fused.entries[0].score == doctest::Approx(3.0 / 61).epsilon(1e-15));
}

TEST_CASE("rrf ties break by ascending gallery id") {
  const auto fused = rrf({list_of("q", {"b", "a"}), list_of("q", {"a", "b"})});
  CHECK(fused.entries[0].gallery_id == "a");
  CHECK(fused.entries[0].score == fused.entries[1].score);
}

TEST_CASE("rrf errors") {
  CHECK_THROWS_AS(rrf({}), ValidationError);
  CHECK_THROWS_AS(rrf({list_of("q", {"a", "b"}), list_of("q", {"a", "c"})}), ValidationError);
  CHECK_THROWS_AS(rrf({list_of("q", {"a", "b"}), list_of("p", {"a", "b"})}), ValidationError);
  CHECK_THROWS_AS(rrf({list_of("q", {"a", "a"})}), ValidationError);
}

TEST_CASE("rrf property: oracle equivalence and list-order symmetry") {
  Gen g(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ids = gallery(g.integer(1, 50));
    std::vector<RankedList> lists;
    std::vector<std::vector<std::string>> orders;
    for (int s = 0; s < 3; ++s) {
      auto o = ids;
      g.shuffle(o);
      orders.push_back(o);
      lists.push_back(list_of("q", o));
    }
    const auto fused = rrf(lists);
    const auto oracle = agvp::testing::brute_rrf(orders);
    REQUIRE(fused.entries.size() == oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      CHECK(fused.entries[i].gallery_id == oracle[i].first);
      CHECK(fused.entries[i].score == oracle[i].second);
    }
    // List order only changes the summation order, so scores agree to rounding.
    std::vector<RankedList> rotated{lists[2], lists[0], lists[1]};
    const auto again = rrf(rotated);
    for (const auto& e : again.entries) CHECK(std::abs(e.score - score_of(fused, e.gallery_id)) <= 1e-15);
  }
}

TEST_CASE("rrf property: monotone in every single rank and bounded") {
  Gen g(12);
  for (int trial = 0; trial < 60; ++trial) {
    const int G = g.integer(2, 40);
    const auto ids = gallery(G);
    std::vector<RankedList> lists;
    for (int s = 0; s < 3; ++s) {
      auto o = ids;
      g.shuffle(o);
      lists.push_back(list_of("q", o));
    }
    const auto fused = rrf(lists);
    for (const auto& e : fused.entries) {
      CHECK(e.score >= 3.0 / (60 + G) - 1e-15);
      CHECK(e.score <= 3.0 / 61 + 1e-15);
    }
    // Move a random item up by one in a random stream.
    const int s = g.integer(0, 2);
    auto& entries = lists[static_cast<std::size_t>(s)].entries;
    const int pos = g.integer(1, G - 1);
    const std::string moved = entries[static_cast<std::size_t>(pos)].gallery_id;
    std::swap(entries[static_cast<std::size_t>(pos)], entries[static_cast<std::size_t>(pos - 1)]);
    CHECK(score_of(rrf(lists), moved) > score_of(fused, moved));
  }
}

TEST_CASE("rank csv round trip") {
  const std::vector<RankedList> lists{rrf({list_of("q1", {"a", "b", "c"}), list_of("q1", {"c", "a", "b"})}),
                                      list_of("q2", {"x", "y"})};
  const auto dir = agvp::testing::scratch_dir("rank_csv");
  write_rank_csv(dir / "r.csv", lists);
  CHECK(read_rank_csv(dir / "r.csv") == lists);
  std::ofstream(dir / "bad.csv") << "query_id,gallery_id,rank,score\nq1,a,notanumber,0.1\n";
  CHECK_THROWS(read_rank_csv(dir / "bad.csv"));
}

TEST_CASE("stream weights") {
  CHECK(StreamWeights{}.weights() == std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  Gen g(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::array<double, 3> l{g.real(-4, 4), g.real(-4, 4), g.real(-4, 4)};
    const double c = g.real(-20, 20);
    const auto a = softmax3(l);
    const auto b = softmax3({l[0] + c, l[1] + c, l[2] + c});
    for (int i = 0; i < 3; ++i) CHECK(a[static_cast<std::size_t>(i)] == doctest::Approx(b[static_cast<std::size_t>(i)]).epsilon(1e-12));
    CHECK(a[0] + a[1] + a[2] == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Exact shift invariance for shifts that keep the exponent arguments exact.
  const std::array<double, 3> l{0.5, -1.25, 2.0};
  CHECK(softmax3(l) == softmax3({l[0] + 8, l[1] + 8, l[2] + 8}));
}

TEST_CASE("feature fusion examples") {
  Gen g(14);
  const Mat t = g.matrix(3, 5).rowwise().normalized();
  const Mat a = g.matrix(3, 5).rowwise().normalized();
  const Mat m = g.matrix(3, 5).rowwise().normalized();
  CHECK(fuse_features(t, a, m, StreamWeights{{800.0, 0.0, 0.0}}).isApprox(t, 1e-15));
  CHECK(fuse_features(t, a, m, StreamWeights{}).isApprox((t + a + m) / 3.0, 1e-15));
  const Mat f = fuse_features(t, a, m, StreamWeights{{0.2, -1.0, 0.7}});
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(f.row(r).norm() <= 1.0 + 1e-12);
  CHECK_THROWS_AS(fuse_features(t, a, g.matrix(3, 4), StreamWeights{}), ShapeError);

  // The autograd path agrees with the plain one.
  nn::Var logits = nn::constant((Mat(1, 3) << 0.2, -1.0, 0.7).finished());
  const Mat viaGraph = fuse_features(nn::constant(t), nn::constant(a), nn::constant(m), logits)->value;
  CHECK(viaGraph.isApprox(f, 1e-14));
}

TEST_CASE("fusion model projects, normalizes and mixes") {
  nn::Rng rng(15);
  FusionModel model({6, 9, 4}, 5, rng);
  Gen g(15);
  nn::NoGradGuard ng;
  const Mat out = model(nn::constant(g.matrix(4, 6)), nn::constant(g.matrix(4, 9)), nn::constant(g.matrix(4, 4)))->value;
  CHECK(out.rows() == 4);
  CHECK(out.cols() == 5);
  for (Eigen::Index r = 0; r < 4; ++r) CHECK(out.row(r).norm() <= 1.0 + 1e-12);
  CHECK(model.weights().weights() == std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK_THROWS_AS(model(nn::constant(g.matrix(4, 5)), nn::constant(g.matrix(4, 9)), nn::constant(g.matrix(4, 4))),
                  ShapeError);
}

TEST_CASE("fusion head gradients") {
  for (const auto& item : agvp::testing::gradient_suite()) {
    if (item.name != "fusion heads + logits") continue;
    INFO(item.value);
    CHECK(item.ok);
  }
}
