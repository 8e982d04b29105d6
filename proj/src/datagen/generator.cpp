#include "agvp/datagen.hpp"
#include "agvp/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

namespace agvp::datagen {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFps = 10.0;

using Color = std::array<double, 3>;

double color_dist(const Color& a, const Color& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Color uniform_color(std::mt19937_64& rng, double lo = 0.05, double hi = 0.95) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

Color jitter(const Color& c, double amount, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amount, amount);
  return {std::clamp(c[0] + u(rng), 0.0, 1.0), std::clamp(c[1] + u(rng), 0.0, 1.0), std::clamp(c[2] + u(rng), 0.0, 1.0)};
}

std::string hex(const Color& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", io::quantize(c[0]), io::quantize(c[1]), io::quantize(c[2]));
  return buf;
}

struct Garments {
  Color shirt, secondary, pants;
  int pattern = 0;  // 0 plain, 1 stripes, 2 front panel, 3 two-tone
  bool long_sleeves = false;
};

struct Look {
  Color hair, skin, shoes;
  Garments garments;
};

Garments sample_garments(std::mt19937_64& rng) {
  Garments g;
  g.shirt = uniform_color(rng);
  g.secondary = uniform_color(rng);
  g.pants = uniform_color(rng);
  g.pattern = std::uniform_int_distribution<int>(0, 3)(rng);
  g.long_sleeves = std::bernoulli_distribution(0.5)(rng);
  return g;
}

double garment_distance(const Garments& a, const Garments& b) {
  const double s = color_dist(a.shirt, b.shirt);
  const double p = color_dist(a.pants, b.pants);
  return std::sqrt(s * s + p * p);
}

na::UvTexture paint(const Look& look, const BodyModel& body, std::mt19937_64& rng) {
  const int n = body.uv_size();
  std::vector<double> v(static_cast<std::size_t>(n) * static_cast<std::size_t>(n) * 3);
  std::uniform_real_distribution<double> fabric(-0.03, 0.03);
  const double head_end = n * 10.0 / 64.0;
  const double torso_end = n * 34.0 / 64.0;
  const double arm_end = n * 46.0 / 64.0;
  const Garments& g = look.garments;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double row = r + 0.5;
      const double gcol = (c + 0.5) / n;
      const double theta = 2.0 * kPi * gcol;
      Color col;
      if (row < head_end) {
        const double psi = row / head_end * 0.8 * kPi;
        col = (psi < 0.45 * kPi || std::cos(theta) < -0.2) ? look.hair : look.skin;
      } else if (row < torso_end) {
        const double t = (row - head_end) / (torso_end - head_end);
        bool second = false;
        switch (g.pattern) {
          case 1: second = static_cast<int>(t * 8.0) % 2 == 1; break;
          case 2: second = std::cos(theta) > 0.5 && t > 0.3 && t < 0.7; break;
          case 3: second = std::sin(theta) > 0.0; break;
          default: break;
        }
        col = second ? g.secondary : g.shirt;
      } else if (row < arm_end) {
        const double t = (row - torso_end) / (arm_end - torso_end);
        col = (g.long_sleeves || t < 0.35) ? g.shirt : look.skin;
      } else {
        const double t = (row - arm_end) / (n - arm_end);
        col = t < 0.85 ? g.pants : look.shoes;
      }
      const std::size_t base = (static_cast<std::size_t>(r) * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)) * 3;
      for (int ch = 0; ch < 3; ++ch) v[base + static_cast<std::size_t>(ch)] = std::clamp(col[ch] + fabric(rng), 0.0, 1.0);
    }
  }
  return na::UvTexture(n, n, std::move(v));
}

char platform_code(Platform p) {
  switch (p) {
    case Platform::Aerial: return 'A';
    case Platform::CCTV: return 'C';
    case Platform::Wearable: return 'W';
  }
  return '?';
}

std::string person_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%04d", i + 1);
  return buf;
}

// Resolution change by exact area averaging.
std::vector<double> area_resize(const std::vector<double>& src, int h, int w, int oh, int ow) {
  std::vector<double> out(static_cast<std::size_t>(oh) * static_cast<std::size_t>(ow) * 3, 0.0);
  const double sy = double(h) / oh;
  const double sx = double(w) / ow;
  for (int y = 0; y < oh; ++y) {
    const double y0 = y * sy;
    const double y1 = (y + 1) * sy;
    for (int x = 0; x < ow; ++x) {
      const double x0 = x * sx;
      const double x1 = (x + 1) * sx;
      double acc[3] = {0, 0, 0};
      double wsum = 0.0;
      for (int yy = static_cast<int>(std::floor(y0)); yy < std::min(h, static_cast<int>(std::ceil(y1))); ++yy) {
        const double wy = std::min(y1, yy + 1.0) - std::max(y0, double(yy));
        for (int xx = static_cast<int>(std::floor(x0)); xx < std::min(w, static_cast<int>(std::ceil(x1))); ++xx) {
          const double wx = std::min(x1, xx + 1.0) - std::max(x0, double(xx));
          const double wgt = wx * wy;
          const std::size_t si = (static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xx)) * 3;
          for (int c = 0; c < 3; ++c) acc[c] += wgt * src[si + static_cast<std::size_t>(c)];
          wsum += wgt;
        }
      }
      const std::size_t di = (static_cast<std::size_t>(y) * static_cast<std::size_t>(ow) + static_cast<std::size_t>(x)) * 3;
      for (int c = 0; c < 3; ++c) out[di + static_cast<std::size_t>(c)] = acc[c] / wsum;
    }
  }
  return out;
}

void box_blur(std::vector<double>& img, int h, int w, int radius) {
  if (radius <= 0) return;
  std::vector<double> tmp(img.size());
  const double norm = 1.0 / (2 * radius + 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          const int xx = std::clamp(x + d, 0, w - 1);
          s += img[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xx)) * 3 + static_cast<std::size_t>(c)];
        }
        tmp[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)] = s * norm;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          const int yy = std::clamp(y + d, 0, h - 1);
          s += tmp[(static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)];
        }
        img[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)] = s * norm;
      }
}

std::pair<double, double> elevation_range(Platform p, int altitude) {
  if (p == Platform::CCTV) return {3.0, 12.0};
  if (p == Platform::Wearable) return {-3.0, 5.0};
  switch (altitude) {
    case 15: return {30.0, 42.0};
    case 30: return {42.0, 55.0};
    case 80: return {58.0, 70.0};
    default: return {70.0, 82.0};
  }
}

}  // namespace

std::uint64_t fnv1a(std::string_view s, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::string_view key) {
  const std::uint64_t h = fnv1a(key);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

std::map<int, Degradation> GenConfig::default_altitude_noise() {
  return {{15, {1.0, 0, 0.01}}, {30, {0.7, 1, 0.02}}, {80, {0.35, 2, 0.04}}, {120, {0.2, 3, 0.06}}};
}

void GenConfig::validate() const {
  if (num_identities < 1) throw ConfigError("num_identities must be >= 1");
  if (tracklets_per_identity_per_platform < 1) throw ConfigError("tracklets_per_identity_per_platform must be >= 1");
  if (frames_per_tracklet < 1) throw ConfigError("frames_per_tracklet must be >= 1");
  if (base_image_side < 32) throw ConfigError("base_image_side must be >= 32");
  if (sessions < 1) throw ConfigError("sessions must be >= 1");
  if (num_distractors < 0) throw ConfigError("num_distractors must be >= 0");
  if (clothing_change_prob < 0.0 || clothing_change_prob > 1.0) throw ConfigError("clothing_change_prob must lie in [0,1]");
  if (ground_platforms.empty() && altitudes.empty()) throw ConfigError("no platforms configured");
  for (Platform p : ground_platforms)
    if (!is_ground(p)) throw ConfigError("ground_platforms may only list cctv/wearable");
  for (int a : altitudes) {
    if (a != 15 && a != 30 && a != 80 && a != 120) throw ConfigError("altitude " + std::to_string(a) + " not in {15,30,80,120}");
    if (!altitude_noise.contains(a)) throw ConfigError("no degradation preset for altitude " + std::to_string(a));
  }
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& [alt, d] : altitude_noise) {
    if (!(d.downscale > 0.0 && d.downscale <= 1.0)) throw ConfigError("downscale factors must lie in (0,1]");
    if (d.blur_radius < 0 || d.noise_sigma < 0.0) throw ConfigError("blur radius and noise sigma must be >= 0");
    if (d.downscale > prev) throw ConfigError("downscale factor must be nonincreasing in altitude (violated at " + std::to_string(alt) + " m)");
    prev = d.downscale;
  }
  if (ground_noise.downscale <= 0.0 || ground_noise.downscale > 1.0 || ground_noise.noise_sigma < 0.0 ||
      ground_noise.blur_radius < 0) {
    throw ConfigError("invalid ground degradation");
  }
}

Generator::Generator(GenConfig cfg) : cfg_(std::move(cfg)), body_(cfg_.uv_size) {
  cfg_.validate();
  std::vector<Garments> accepted;
  const int total = cfg_.num_identities + cfg_.num_distractors;
  static const std::array<Color, 5> kHair{{{0.08, 0.06, 0.05}, {0.25, 0.15, 0.08}, {0.45, 0.3, 0.15}, {0.8, 0.7, 0.45}, {0.5, 0.5, 0.5}}};
  static const std::array<Color, 4> kSkin{{{0.95, 0.8, 0.7}, {0.85, 0.65, 0.5}, {0.6, 0.42, 0.3}, {0.38, 0.26, 0.2}}};

  for (int i = 0; i < total; ++i) {
    const std::string pid = person_name(i);
    auto rng = stream_rng(cfg_.seed, "identity/" + pid);
    Look look;
    look.hair = jitter(kHair[std::uniform_int_distribution<std::size_t>(0, kHair.size() - 1)(rng)], 0.05, rng);
    look.skin = jitter(kSkin[std::uniform_int_distribution<std::size_t>(0, kSkin.size() - 1)(rng)], 0.04, rng);
    look.shoes = uniform_color(rng, 0.05, 0.6);
    // Keep garments of different people apart so textures are separable.
    Garments best = sample_garments(rng);
    double best_gap = -1.0;
    for (int attempt = 0; attempt < 500; ++attempt) {
      Garments cand = attempt == 0 ? best : sample_garments(rng);
      double gap = std::numeric_limits<double>::infinity();
      for (const auto& other : accepted) gap = std::min(gap, garment_distance(cand, other));
      if (gap > best_gap) {
        best_gap = gap;
        best = cand;
      }
      if (gap >= 0.35) break;
    }
    look.garments = best;
    accepted.push_back(best);

    SyntheticIdentity id;
    id.person_id = PersonId(pid);
    id.gait_frequency = std::uniform_real_distribution<double>(0.8, 1.2)(rng);
    id.height_scale = std::uniform_real_distribution<double>(0.9, 1.1)(rng);
    id.texture = paint(look, body_, rng);
    id.attributes = {{"hair", hex(look.hair)},
                     {"upper", hex(best.shirt)},
                     {"lower", hex(best.pants)},
                     {"pattern", std::to_string(best.pattern)},
                     {"sleeves", best.long_sleeves ? "long" : "short"},
                     {"role", i < cfg_.num_identities ? "regular" : "distractor"}};

    std::vector<na::UvTexture> variants{id.texture};
    for (int s = 1; s < cfg_.sessions; ++s) {
      Look changed = look;
      changed.garments = sample_garments(rng);
      variants.push_back(paint(changed, body_, rng));
    }
    clothing_.push_back(std::move(variants));
    identities_.push_back(std::move(id));
  }

  // Tracklet plans: ground platforms first, then altitudes, per identity.
  for (int i = 0; i < total; ++i) {
    const bool distractor = i >= cfg_.num_identities;
    const auto& ident = identities_[static_cast<std::size_t>(i)];
    std::vector<std::pair<Platform, int>> slots;
    if (!distractor)
      for (Platform p : cfg_.ground_platforms) slots.emplace_back(p, 0);
    for (int a : cfg_.altitudes) slots.emplace_back(Platform::Aerial, a);

    std::vector<int> session_variant(static_cast<std::size_t>(cfg_.sessions), 0);
    auto clothing_rng = stream_rng(cfg_.seed, "clothing/" + ident.person_id.str());
    for (int s = 1; s < cfg_.sessions; ++s) {
      if (std::uniform_real_distribution<double>(0.0, 1.0)(clothing_rng) < cfg_.clothing_change_prob)
        session_variant[static_cast<std::size_t>(s)] = s;
    }

    for (const auto& [platform, alt] : slots) {
      for (int k = 0; k < cfg_.tracklets_per_identity_per_platform; ++k) {
        std::string camera;
        if (platform == Platform::CCTV) camera = "C" + std::to_string(k % 2 + 1);
        else if (platform == Platform::Wearable) camera = "W1";
        else camera = alt <= 30 ? "D1" : "D2";
        char tid[64];
        std::snprintf(tid, sizeof tid, "%s_%c%s_a%03d_t%02d", ident.person_id.str().c_str(), platform_code(platform),
                      camera.c_str(), alt, k);
        const int session = k % cfg_.sessions;
        char sess[16];
        std::snprintf(sess, sizeof sess, "S%02d", session + 1);

        TrackletPlan plan;
        plan.identity_index = static_cast<std::size_t>(i);
        plan.clothing_variant = session_variant[static_cast<std::size_t>(session)];
        Tracklet& t = plan.tracklet;
        t.tracklet_id = TrackletId(tid);
        t.person_id = ident.person_id;
        t.camera_id = CameraId(camera);
        t.platform = platform;
        t.altitude = altitude_from_meters(alt);
        t.session = SessionId(sess);
        t.clothing_id = ClothingId(ident.person_id.str() + "_c" + std::to_string(plan.clothing_variant));
        for (int f = 0; f < cfg_.frames_per_tracklet; ++f) {
          char path[128];
          std::snprintf(path, sizeof path, "frames/%s/%06d.png", tid, f);
          t.frames.emplace_back(path);
        }

        auto rng = stream_rng(cfg_.seed, std::string("plan/") + tid);
        const auto [elo, ehi] = elevation_range(platform, alt);
        plan.yaw = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
        plan.yaw_drift = std::uniform_real_distribution<double>(-0.03, 0.03)(rng);
        plan.elevation = std::uniform_real_distribution<double>(elo, ehi)(rng) * kPi / 180.0;
        plan.gait_phase = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
        plan.background = std::uniform_real_distribution<double>(0.3, 0.7)(rng);
        plan.degradation = platform == Platform::Aerial ? cfg_.altitude_noise.at(alt) : cfg_.ground_noise;
        plans_.push_back(std::move(plan));
      }
    }
  }
}

na::UvTexture Generator::texture_for(const TrackletPlan& plan) const {
  return clothing_[plan.identity_index][static_cast<std::size_t>(plan.clothing_variant)];
}

BodyPose Generator::pose_at(const TrackletPlan& plan, std::size_t frame) const {
  const double freq = identities_[plan.identity_index].gait_frequency;
  const double phase = plan.gait_phase + 2.0 * kPi * freq * double(frame) / kFps;
  const double s = std::sin(phase);
  return BodyPose{0.45 * s, -0.45 * s, -0.35 * s, 0.35 * s};
}

na::Vec3 Generator::view_at(const TrackletPlan& plan, std::size_t frame) const {
  const double yaw = plan.yaw + plan.yaw_drift * double(frame);
  const double e = plan.elevation;
  return {std::cos(e) * std::sin(yaw), std::cos(e) * std::cos(yaw), std::sin(e)};
}

FrameImage Generator::render(const TrackletPlan& plan, std::size_t frame) const {
  const auto& ident = identities_[plan.identity_index];
  const na::UvTexture tex = texture_for(plan);
  const BodyPose pose = pose_at(plan, frame);
  const na::Vec3 view = view_at(plan, frame);
  const double yaw = plan.yaw + plan.yaw_drift * double(frame);
  const na::Vec3 right(-std::cos(yaw), std::sin(yaw), 0.0);
  const na::Vec3 up = view.cross(right);
  const na::Vec3 light = na::Vec3(0.2, 0.3, 0.93).normalized();
  const double ppu = cfg_.base_image_side;
  const int n = body_.uv_size();
  const int ss_r = std::max(2, static_cast<int>(std::ceil(6.0 * ppu / 128.0 * 64.0 / n)));
  const int ss_c = std::max(2, static_cast<int>(std::ceil(3.0 * ppu / 128.0 * 64.0 / n)));

  struct Splat {
    double x, y, depth;
    std::size_t texel;
    double shade;
  };
  std::vector<Splat> splats;
  splats.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n) * static_cast<std::size_t>(ss_r * ss_c));
  double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
  na::Vec3 p;
  na::Vec3 nrm;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const std::size_t texel = static_cast<std::size_t>(r) * static_cast<std::size_t>(n) + static_cast<std::size_t>(c);
      for (int i = 0; i < ss_r; ++i) {
        for (int j = 0; j < ss_c; ++j) {
          body_.surface(r + (i + 0.5) / ss_r, c + (j + 0.5) / ss_c, pose, ident.height_scale, p, nrm);
          Splat s{p.dot(right) * ppu, -p.dot(up) * ppu, p.dot(view), texel, 0.7 + 0.3 * std::max(0.0, nrm.dot(light))};
          minx = std::min(minx, s.x);
          maxx = std::max(maxx, s.x);
          miny = std::min(miny, s.y);
          maxy = std::max(maxy, s.y);
          splats.push_back(s);
        }
      }
    }
  }

  // Canvas large enough that the degraded crop keeps at least 8 px per side.
  const double factor = plan.degradation.downscale;
  const int margin = 3;
  const int min_side = static_cast<int>(std::ceil(10.0 / factor));
  int h = static_cast<int>(std::ceil(maxy - miny)) + 2 * margin;
  int w = static_cast<int>(std::ceil(maxx - minx)) + 2 * margin;
  const int pad_y = std::max(0, min_side - h) / 2;
  const int pad_x = std::max(0, min_side - w) / 2;
  h = std::max(h, min_side);
  w = std::max(w, min_side);

  std::vector<double> img(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3);
  for (std::size_t i = 0; i < img.size(); i += 3) {
    img[i] = plan.background;
    img[i + 1] = plan.background * 0.97;
    img[i + 2] = plan.background * 0.92;
  }
  std::vector<double> zbuf(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), -1e300);
  for (const Splat& s : splats) {
    const int x = static_cast<int>(std::floor(s.x - minx)) + margin + pad_x;
    const int y = static_cast<int>(std::floor(s.y - miny)) + margin + pad_y;
    if (x < 0 || y < 0 || x >= w || y >= h) continue;
    const std::size_t pix = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
    if (s.depth <= zbuf[pix]) continue;
    zbuf[pix] = s.depth;
    for (int c = 0; c < 3; ++c) img[pix * 3 + static_cast<std::size_t>(c)] = std::clamp(tex.at(s.texel, c) * s.shade, 0.0, 1.0);
  }

  if (factor < 1.0) {
    const int oh = std::max(8, static_cast<int>(std::lround(h * factor)));
    const int ow = std::max(8, static_cast<int>(std::lround(w * factor)));
    img = area_resize(img, h, w, oh, ow);
    h = oh;
    w = ow;
  }
  box_blur(img, h, w, plan.degradation.blur_radius);
  if (plan.degradation.noise_sigma > 0.0) {
    auto rng = stream_rng(cfg_.seed, plan.tracklet.tracklet_id.str() + "/frame/" + std::to_string(frame));
    std::normal_distribution<double> noise(0.0, plan.degradation.noise_sigma);
    for (double& v : img) v += noise(rng);
  }
  for (double& v : img) v = std::clamp(v, 0.0, 1.0);
  return FrameImage(h, w, std::move(img));
}

Manifest Generator::manifest() const {
  Manifest m;
  for (const auto& plan : plans_) m.tracklets.push_back(plan.tracklet);
  for (const auto& id : identities_) m.attributes[id.person_id.str()] = id.attributes;
  return m;
}

Manifest Generator::write_corpus(const std::filesystem::path& out_dir) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "frames", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "frames").string() + ": " + ec.message());
  for (const auto& plan : plans_) {
    const fs::path dir = out_dir / "frames" / plan.tracklet.tracklet_id.str();
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());
    for (std::size_t f = 0; f < plan.tracklet.frames.size(); ++f) {
      io::write_png(out_dir / plan.tracklet.frames[f], render(plan, f));
    }
  }
  Manifest m = manifest();
  write_manifest(m, out_dir / "manifest.jsonl");
  std::ofstream cfg(out_dir / "corpus.json", std::ios::binary);
  cfg << gen_config_to_json(cfg_) << '\n';
  if (!cfg) throw IoError("cannot write corpus.json");
  return m;
}

Manifest generate_corpus(const GenConfig& cfg, const std::filesystem::path& out_dir) {
  return Generator(cfg).write_corpus(out_dir);
}

// ---------------------------------------------------------------------------

UvOracle::UvOracle(GenConfig cfg) : gen_(std::move(cfg)) {
  for (std::size_t i = 0; i < gen_.plans().size(); ++i) by_id_[gen_.plans()[i].tracklet.tracklet_id.str()] = i;
}

UvOracle UvOracle::from_corpus(const std::filesystem::path& root) {
  std::ifstream in(root / "corpus.json", std::ios::binary);
  if (!in) throw UnsupportedInputError(root.string() + " has no corpus.json; not a synthetic corpus");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return UvOracle(gen_config_from_json(text));
}

const TrackletPlan& UvOracle::plan_for(const Tracklet& t) const {
  const auto it = by_id_.find(t.tracklet_id.str());
  if (it == by_id_.end()) throw UnsupportedInputError("tracklet " + t.tracklet_id.str() + " is not part of the synthetic corpus");
  const TrackletPlan& plan = gen_.plans()[it->second];
  if (plan.tracklet.person_id != t.person_id || plan.tracklet.platform != t.platform ||
      plan.tracklet.altitude != t.altitude) {
    throw UnsupportedInputError("tracklet " + t.tracklet_id.str() + " metadata does not match the synthetic corpus");
  }
  return plan;
}

OracleUv UvOracle::uv(const Tracklet& tracklet, std::size_t frame) const {
  const TrackletPlan& plan = plan_for(tracklet);
  if (frame >= plan.tracklet.frames.size()) {
    throw UnsupportedInputError("frame " + std::to_string(frame) + " is outside tracklet " + tracklet.tracklet_id.str());
  }
  const int n = gen_.body().uv_size();
  const auto normals = gen_.body().texel_normals(gen_.pose_at(plan, frame));
  na::UvMask vis = na::visibility(normals, n, n, gen_.view_at(plan, frame));
  const na::UvTexture base = gen_.texture_for(plan);
  std::vector<double> tex(base.values().begin(), base.values().end());
  const double sigma = plan.degradation.noise_sigma;
  if (sigma > 0.0) {
    auto rng = stream_rng(gen_.config().seed, tracklet.tracklet_id.str() + "/uv/" + std::to_string(frame));
    std::normal_distribution<double> noise(0.0, sigma);
    for (std::size_t t = 0; t < vis.texels(); ++t) {
      if (vis.at(t) <= 0.0) continue;
      for (int c = 0; c < 3; ++c) tex[t * 3 + static_cast<std::size_t>(c)] = std::clamp(tex[t * 3 + static_cast<std::size_t>(c)] + noise(rng), 0.0, 1.0);
    }
  }
  return {na::UvTexture(n, n, std::move(tex)), std::move(vis)};
}

std::vector<na::Vec3> UvOracle::texel_coords(const Tracklet& tracklet) const {
  const TrackletPlan& plan = plan_for(tracklet);
  return gen_.body().texel_coords(gen_.identities()[plan.identity_index].height_scale);
}

}  // namespace agvp::datagen
