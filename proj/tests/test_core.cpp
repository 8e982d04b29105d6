#include <doctest.h>

#include "agvp/core.hpp"
#include "agvp/image_io.hpp"
#include "support/testing.hpp"

#include <cmath>
#include <limits>

using namespace agvp;
using agvp::testing::Gen;

namespace {

FrameImage random_frame(Gen& g, int h, int w) {
  std::vector<double> v(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3);
  for (auto& x : v) x = g.real();
  return FrameImage(h, w, std::move(v));
}

}  // namespace

TEST_CASE("ids reject empty strings and compare by value") {
  CHECK_THROWS_AS(PersonId(""), ValidationError);
  CHECK(PersonId("P1") == PersonId("P1"));
  CHECK(PersonId("P1") < PersonId("P2"));
}

TEST_CASE("platform and altitude consistency") {
  CHECK_NOTHROW(check_platform_altitude(Platform::CCTV, AltitudeBucket::Ground));
  CHECK_NOTHROW(check_platform_altitude(Platform::Wearable, AltitudeBucket::Ground));
  CHECK_NOTHROW(check_platform_altitude(Platform::Aerial, AltitudeBucket::A80));
  CHECK_THROWS_AS(check_platform_altitude(Platform::Aerial, AltitudeBucket::Ground), ValidationError);
  CHECK_THROWS_AS(check_platform_altitude(Platform::CCTV, AltitudeBucket::A15), ValidationError);
  CHECK_THROWS_AS(altitude_from_meters(50), ValidationError);
  for (auto p : {Platform::Aerial, Platform::CCTV, Platform::Wearable}) CHECK(platform_from_string(to_string(p)) == p);
}

TEST_CASE("frame images reject non-finite and out-of-range values") {
  std::vector<double> v(8 * 8 * 3, 0.5);
  CHECK_NOTHROW(FrameImage(8, 8, v));
  v[7] = 1.5;
  CHECK_THROWS_AS(FrameImage(8, 8, v), ValidationError);
  v[7] = -0.01;
  CHECK_THROWS_AS(FrameImage(8, 8, v), ValidationError);
  v[7] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(FrameImage(8, 8, v), ValidationError);
  v[7] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(FrameImage(8, 8, v), ValidationError);
  CHECK_THROWS_AS(FrameImage(8, 8, std::vector<double>(10, 0.0)), ValidationError);
}

TEST_CASE("tracklet validation") {
  Tracklet t;
  t.tracklet_id = TrackletId("t0");
  t.person_id = PersonId("p0");
  CHECK_THROWS_AS(t.validate(), StructuralError);
  t.frames = {"a.png"};
  CHECK_NOTHROW(t.validate());
  t.platform = Platform::Aerial;
  CHECK_THROWS_AS(t.validate(), ValidationError);
}

TEST_CASE("embedding normalization flag") {
  CHECK_THROWS_AS(Embedding({}), ValidationError);
  CHECK_THROWS_AS(Embedding({1.0, 1.0}, true), ValidationError);
  const Embedding e = Embedding::normalized_from({3.0, 4.0});
  CHECK(e.normalized());
  CHECK(e.values()[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(e.values()[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(Embedding::normalized_from({0.0, 0.0}), ValidationError);
}

TEST_CASE("clip sampling examples") {
  using V = std::vector<std::size_t>;
  CHECK(clip_indices(8, 8) == V{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(clip_indices(16, 8) == V{0, 2, 4, 6, 8, 10, 12, 14});
  CHECK(clip_indices(3, 8) == V{0, 1, 2, 2, 2, 2, 2, 2});
  CHECK_THROWS_AS(clip_indices(0, 8), StructuralError);
  CHECK_THROWS_AS(clip_indices(5, 0), ValidationError);
}

TEST_CASE("clip sampling property: nondecreasing, in range, starts at 0") {
  Gen g(101);
  for (int trial = 0; trial < 300; ++trial) {
    const auto len = static_cast<std::size_t>(g.integer(1, 60));
    const int t = g.integer(1, 20);
    const auto idx = clip_indices(len, t);
    REQUIRE(idx.size() == static_cast<std::size_t>(t));
    CHECK(idx.front() == 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      CHECK(idx[i] < len);
      if (i) CHECK(idx[i] >= idx[i - 1]);
    }
  }
}

TEST_CASE("sample_clip picks the indexed frames") {
  std::vector<FrameImage> frames;
  for (int i = 0; i < 5; ++i) frames.push_back(FrameImage::filled(8, 8, 0.1 * i));
  const auto clip = sample_clip(frames, 8);
  REQUIRE(clip.size() == 8);
  CHECK(clip[0] == frames[0]);
  CHECK(clip[7] == frames[4]);
}

TEST_CASE("pad_and_resize geometry") {
  Gen g(7);
  SUBCASE("square input at the target side is unchanged") {
    const auto img = random_frame(g, 24, 24);
    CHECK(pad_and_resize(img, 24) == img);
  }
  SUBCASE("tall input occupies a centred column band") {
    const auto img = FrameImage::filled(100, 50, 1.0);
    const auto out = pad_and_resize(img, 224);
    REQUIRE(out.height() == 224);
    // Content spans columns 56..167 (224 x 112), zeros elsewhere.
    for (int y : {0, 100, 223}) {
      CHECK(out.at(y, 55, 0) == 0.0);
      CHECK(out.at(y, 56, 0) == 1.0);
      CHECK(out.at(y, 167, 0) == 1.0);
      CHECK(out.at(y, 168, 0) == 0.0);
    }
  }
  SUBCASE("wide input occupies a centred row band") {
    const auto img = FrameImage::filled(50, 100, 1.0);
    const auto out = pad_and_resize(img, 224);
    for (int x : {0, 100, 223}) {
      CHECK(out.at(55, x, 1) == 0.0);
      CHECK(out.at(56, x, 1) == 1.0);
      CHECK(out.at(167, x, 1) == 1.0);
      CHECK(out.at(168, x, 1) == 0.0);
    }
  }
  SUBCASE("idempotent on its own output") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto img = random_frame(g, g.integer(8, 40), g.integer(8, 40));
      const int side = g.integer(8, 48);
      const auto once = pad_and_resize(img, side);
      CHECK(pad_and_resize(once, side) == once);
    }
  }
  CHECK_THROWS_AS(pad_and_resize(FrameImage::filled(8, 8, 0.0), 4), ValidationError);
}

TEST_CASE("flip is an involution and bilinear preserves constants") {
  Gen g(9);
  const auto img = random_frame(g, 12, 9);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  CHECK(flip_horizontal(img).at(3, 0, 2) == img.at(3, 8, 2));
  const auto c = resize_bilinear(FrameImage::filled(10, 14, 0.25), 31, 17);
  for (double v : c.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("png round trip is exact on 8-bit values") {
  Gen g(3);
  io::Raster8 r;
  r.height = 9;
  r.width = 11;
  r.channels = 3;
  for (int i = 0; i < 9 * 11 * 3; ++i) r.pixels.push_back(static_cast<std::uint8_t>(g.integer(0, 255)));
  const auto dir = agvp::testing::scratch_dir("core_png");
  io::write_png(dir / "a.png", r);
  const auto back = io::read_png(dir / "a.png");
  CHECK(back.pixels == r.pixels);
  CHECK(io::quantize(0.0) == 0);
  CHECK(io::quantize(1.0) == 255);
  CHECK_THROWS_AS(io::read_png(dir / "missing.png"), IoError);

  io::Raster8 gray{5, 4, 1, std::vector<std::uint8_t>(20, 17)};
  io::write_pgm(dir / "m.pgm", gray);
  CHECK(io::read_pgm(dir / "m.pgm").pixels == gray.pixels);
}
