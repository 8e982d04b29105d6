#include "agvp/pipeline.hpp"

#include "agvp/image_io.hpp"

#include <map>

namespace agvp::pipeline {

namespace {

constexpr int kCellH = 64;
constexpr int kCellW = 32;
constexpr int kStripFrames = 4;
constexpr int kBorder = 3;
constexpr int kGap = 8;
constexpr int kStripW = kStripFrames * kCellW + 2 * kBorder;
constexpr int kStripH = kCellH + 2 * kBorder;

using Rgb = std::array<std::uint8_t, 3>;
constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kQuery{60, 90, 200};
constexpr Rgb kHit{30, 170, 60};
constexpr Rgb kMiss{210, 40, 40};

struct Canvas {
  io::Raster8 r;
  Canvas(int h, int w) {
    r.height = h;
    r.width = w;
    r.channels = 3;
    r.pixels.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3, 255);
  }
  void set(int y, int x, const Rgb& c) {
    const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(r.width) + static_cast<std::size_t>(x)) * 3;
    for (int k = 0; k < 3; ++k) r.pixels[i + static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(k)];
  }
  void fill(int y0, int x0, int h, int w, const Rgb& c) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) set(y, x, c);
  }
};

void draw_strip(Canvas& cv, int y0, int x0, const Tracklet& t, const std::filesystem::path& root, const Rgb& border) {
  cv.fill(y0, x0, kStripH, kStripW, border);
  cv.fill(y0 + kBorder, x0 + kBorder, kCellH, kStripFrames * kCellW, kWhite);
  const auto idx = clip_indices(t.frames.size(), kStripFrames);
  for (int f = 0; f < kStripFrames; ++f) {
    const FrameImage img = resize_bilinear(io::read_frame(root / t.frames[idx[static_cast<std::size_t>(f)]]), kCellH, kCellW);
    for (int y = 0; y < kCellH; ++y)
      for (int x = 0; x < kCellW; ++x) {
        Rgb c{};
        for (int k = 0; k < 3; ++k) c[static_cast<std::size_t>(k)] = io::quantize(img.at(y, x, k));
        cv.set(y0 + kBorder + y, x0 + kBorder + f * kCellW + x, c);
      }
  }
}

}  // namespace

void ranking_figure(const std::filesystem::path& png, const std::vector<fusion::RankedList>& lists,
                    const std::vector<Tracklet>& tracklets, const std::filesystem::path& corpus_root, int queries,
                    int top) {
  if (queries < 1 || top < 1) throw ValidationError("figure needs at least one query and one gallery column");
  std::map<std::string, const Tracklet*> by_id;
  for (const auto& t : tracklets) by_id[t.tracklet_id.str()] = &t;
  auto find = [&](const std::string& id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("figure: unknown tracklet " + id);
    return it->second;
  };
  const int rows = std::min<int>(queries, static_cast<int>(lists.size()));
  if (rows == 0) throw ValidationError("figure: no ranked queries");
  const int width = kGap + kStripW + 2 * kGap + top * (kStripW + kGap);
  const int height = kGap + rows * (kStripH + kGap);
  Canvas cv(height, width);
  for (int q = 0; q < rows; ++q) {
    const auto& list = lists[static_cast<std::size_t>(q)];
    const Tracklet* query = find(list.query_id);
    const int y = kGap + q * (kStripH + kGap);
    draw_strip(cv, y, kGap, *query, corpus_root, kQuery);
    const int n = std::min<int>(top, static_cast<int>(list.entries.size()));
    for (int g = 0; g < n; ++g) {
      const Tracklet* hit = find(list.entries[static_cast<std::size_t>(g)].gallery_id);
      const bool correct = hit->person_id == query->person_id;
      draw_strip(cv, y, kGap + kStripW + 2 * kGap + g * (kStripW + kGap), *hit, corpus_root, correct ? kHit : kMiss);
    }
  }
  io::write_png(png, cv.r);
}

}  // namespace agvp::pipeline
