#include "agvp/image_io.hpp"
#include "agvp/stream_na.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace agvp::na {

UvTexture::UvTexture(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows <= 0 || cols <= 0) throw ValidationError("UV texture needs positive dimensions");
  if (values_.size() != texels() * 3) throw ValidationError("UV texture value count mismatch");
  validate();
}

UvTexture UvTexture::filled(int rows, int cols, double v) {
  return UvTexture(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 3, v));
}

void UvTexture::validate() const {
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw ValidationError("UV texture values must lie in [0,1]");
  }
}

UvMask::UvMask(int rows, int cols, std::vector<double> values) : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows <= 0 || cols <= 0) throw ValidationError("visibility mask needs positive dimensions");
  if (values_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw ValidationError("visibility mask value count mismatch");
  }
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw ValidationError("visibility values must lie in [0,1]");
  }
}

UvMask UvMask::filled(int rows, int cols, double v) {
  return UvMask(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), v));
}

bool UvMask::any_visible() const {
  return std::any_of(values_.begin(), values_.end(), [](double v) { return v > 0.0; });
}

namespace {

void require_same_grid(const UvTexture& t, const UvMask& m) {
  if (t.rows() != m.rows() || t.cols() != m.cols()) throw ShapeError("texture and mask grids differ");
}

}  // namespace

TextureResult normalize_uv(const UvTexture& tex, const UvMask& vis) {
  require_same_grid(tex, vis);
  if (!vis.any_visible()) return {tex, Status::AllInvisible};
  UvTexture out = tex;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < tex.texels(); ++i) {
      if (vis.at(i) > 0.0) {
        sum += tex.at(i, c);
        ++n;
      }
    }
    const double mean = sum / double(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < tex.texels(); ++i) {
      if (vis.at(i) > 0.0) sq += (tex.at(i, c) - mean) * (tex.at(i, c) - mean);
    }
    const double sd = std::sqrt(sq / double(n));
    for (std::size_t i = 0; i < tex.texels(); ++i) {
      if (vis.at(i) <= 0.0) continue;
      // A spread at rounding level is a constant channel.
      const double z = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? (tex.at(i, c) - mean) / sd : 0.0;
      out.at(i, c) = std::clamp(kTargetMean + kTargetStd * z, 0.0, 1.0);
    }
  }
  return {std::move(out), Status::Ok};
}

TextureResult histogram_match(const UvTexture& tex, const UvMask& vis, const UvTexture& ref,
                              const UvMask& ref_vis) {
  require_same_grid(tex, vis);
  require_same_grid(ref, ref_vis);
  if (!vis.any_visible()) return {tex, Status::AllInvisible};
  if (!ref_vis.any_visible()) return {tex, Status::ReferenceInvisible};
  UvTexture out = tex;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> src;
    std::vector<double> dst;
    for (std::size_t i = 0; i < tex.texels(); ++i)
      if (vis.at(i) > 0.0) src.push_back(tex.at(i, c));
    for (std::size_t i = 0; i < ref.texels(); ++i)
      if (ref_vis.at(i) > 0.0) dst.push_back(ref.at(i, c));
    std::sort(src.begin(), src.end());
    std::sort(dst.begin(), dst.end());
    const std::size_t ns = src.size();
    const std::size_t nr = dst.size();
    for (std::size_t i = 0; i < tex.texels(); ++i) {
      if (vis.at(i) <= 0.0) continue;
      const double x = tex.at(i, c);
      // Mid-rank CDF p = (#<x + #<=x) / (2 ns); target is the smallest
      // reference value whose CDF reaches p, i.e. index ceil(p*nr) - 1.
      const auto below = static_cast<std::size_t>(std::lower_bound(src.begin(), src.end(), x) - src.begin());
      const auto upto = static_cast<std::size_t>(std::upper_bound(src.begin(), src.end(), x) - src.begin());
      const std::size_t num = (below + upto) * nr;
      const std::size_t den = 2 * ns;
      std::size_t idx = (num + den - 1) / den;
      idx = std::clamp<std::size_t>(idx, 1, nr) - 1;
      out.at(i, c) = dst[idx];
    }
  }
  return {std::move(out), Status::Ok};
}

UvTexture gamma_correct(const UvTexture& tex, double g) {
  if (!(g > 0.0) || !std::isfinite(g)) throw ValidationError("gamma exponent must be positive");
  std::vector<double> v(tex.values().begin(), tex.values().end());
  if (g != 1.0) {
    for (double& x : v) x = std::pow(x, g);
  }
  return UvTexture(tex.rows(), tex.cols(), std::move(v));
}

double solve_gamma(const UvTexture& tex, const UvMask& vis) {
  require_same_grid(tex, vis);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < tex.texels(); ++i) {
    if (vis.at(i) <= 0.0) continue;
    sum += 0.299 * tex.at(i, 0) + 0.587 * tex.at(i, 1) + 0.114 * tex.at(i, 2);
    ++n;
  }
  if (n == 0) return 1.0;
  const double lum = sum / double(n);
  if (!(lum > 0.0) || !(lum < 1.0)) return 1.0;
  return std::clamp(std::log(0.5) / std::log(lum), 0.25, 4.0);
}

UvMask visibility(std::span<const Vec3> normals, int rows, int cols, const Vec3& view) {
  if (normals.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw ShapeError("normal count does not match the UV grid");
  }
  std::vector<double> v(normals.size());
  for (std::size_t i = 0; i < normals.size(); ++i) v[i] = std::clamp(normals[i].dot(view), 0.0, 1.0);
  return UvMask(rows, cols, std::move(v));
}

Aggregated aggregate(std::span<const UvTexture> textures, std::span<const UvMask> masks, BlendMode mode,
                     double temperature) {
  if (textures.empty()) throw ValidationError("aggregate needs at least one frame");
  if (textures.size() != masks.size()) throw ShapeError("texture and mask counts differ");
  const int rows = textures.front().rows();
  const int cols = textures.front().cols();
  for (std::size_t i = 0; i < textures.size(); ++i) {
    if (textures[i].rows() != rows || textures[i].cols() != cols) throw ShapeError("texture grids differ");
    require_same_grid(textures[i], masks[i]);
  }
  const std::size_t texels = textures.front().texels();
  std::vector<double> out(texels * 3, 0.0);
  std::vector<double> valid(texels, 0.0);
  std::vector<double> weights(textures.size());
  for (std::size_t t = 0; t < texels; ++t) {
    double total = 0.0;
    if (mode == BlendMode::Visibility) {
      for (std::size_t i = 0; i < textures.size(); ++i) {
        weights[i] = masks[i].at(t);
        total += weights[i];
      }
    } else {
      double mx = -1.0;
      for (std::size_t i = 0; i < textures.size(); ++i)
        if (masks[i].at(t) > 0.0) mx = std::max(mx, masks[i].at(t));
      for (std::size_t i = 0; i < textures.size(); ++i) {
        weights[i] = masks[i].at(t) > 0.0 ? std::exp((masks[i].at(t) - mx) / temperature) : 0.0;
        total += weights[i];
      }
    }
    if (!(total > 0.0)) continue;
    valid[t] = 1.0;
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < textures.size(); ++i) acc += weights[i] * textures[i].at(t, c);
      out[t * 3 + static_cast<std::size_t>(c)] = std::clamp(acc / total, 0.0, 1.0);
    }
  }
  return {UvTexture(rows, cols, std::move(out)), UvMask(rows, cols, std::move(valid))};
}

namespace {

Status worse(Status a, Status b) { return static_cast<int>(b) > static_cast<int>(a) ? b : a; }

}  // namespace

ChainResult normalize_and_aggregate(std::span<const UvTexture> textures, std::span<const UvMask> masks,
                                    const ChainOptions& options) {
  if (textures.size() != masks.size()) throw ShapeError("texture and mask counts differ");
  if (textures.empty()) throw ValidationError("chain needs at least one frame");

  std::optional<std::pair<UvTexture, UvMask>> ref = options.reference;
  if (!ref) {
    for (std::size_t i = 0; i < textures.size(); ++i) {
      if (masks[i].any_visible()) {
        ref.emplace(normalize_uv(textures[i], masks[i]).texture, masks[i]);
        break;
      }
    }
  }

  ChainResult res;
  for (std::size_t i = 0; i < textures.size(); ++i) {
    TextureResult n = normalize_uv(textures[i], masks[i]);
    Status st = n.status;
    TextureResult h = ref ? histogram_match(n.texture, masks[i], ref->first, ref->second)
                          : TextureResult{n.texture, Status::ReferenceInvisible};
    st = worse(st, h.status);
    const double g = options.gamma ? solve_gamma(h.texture, masks[i]) : 1.0;
    res.normalized.push_back(gamma_correct(h.texture, g));
    res.statuses.push_back(st);
  }
  res.aggregated = aggregate(res.normalized, masks, options.blend, options.softmax_temperature);
  return res;
}

TexelSet texel_sample(const Aggregated& agg, std::span<const Vec3> coords, int m) {
  if (m <= 0) throw ValidationError("texel sample size must be positive");
  if (coords.size() != agg.texture.texels()) throw ShapeError("coordinate count does not match the UV grid");
  std::vector<std::size_t> valid;
  for (std::size_t t = 0; t < agg.valid.texels(); ++t)
    if (agg.valid.at(t) > 0.0) valid.push_back(t);
  if (valid.empty()) throw StructuralError("no valid texels to sample");

  const auto mm = static_cast<std::size_t>(m);
  TexelSet out;
  out.rows.resize(m, 6);
  out.status = valid.size() < mm ? Status::Resampled : Status::Ok;
  for (std::size_t i = 0; i < mm; ++i) {
    const std::size_t pick = valid.size() >= mm ? valid[(2 * i + 1) * valid.size() / (2 * mm)] : valid[i % valid.size()];
    const auto r = static_cast<Eigen::Index>(i);
    out.rows(r, 0) = coords[pick].x();
    out.rows(r, 1) = coords[pick].y();
    out.rows(r, 2) = coords[pick].z();
    for (int c = 0; c < 3; ++c) out.rows(r, 3 + c) = agg.texture.at(pick, c);
  }
  return out;
}

void save_uv_pair(const std::filesystem::path& texture_png, const std::filesystem::path& mask_pgm,
                  const UvTexture& tex, const UvMask& mask) {
  require_same_grid(tex, mask);
  io::Raster8 rgb{tex.rows(), tex.cols(), 3, {}};
  for (double v : tex.values()) rgb.pixels.push_back(io::quantize(v));
  io::Raster8 gray{mask.rows(), mask.cols(), 1, {}};
  for (double v : mask.values()) gray.pixels.push_back(io::quantize(v));
  io::write_png(texture_png, rgb);
  io::write_pgm(mask_pgm, gray);
}

std::pair<UvTexture, UvMask> load_uv_pair(const std::filesystem::path& texture_png,
                                          const std::filesystem::path& mask_pgm) {
  const io::Raster8 rgb = io::read_png(texture_png);
  const io::Raster8 gray = io::read_pgm(mask_pgm);
  if (rgb.channels != 3) throw IoError(texture_png.string() + " is not RGB");
  std::vector<double> t(rgb.pixels.size());
  std::transform(rgb.pixels.begin(), rgb.pixels.end(), t.begin(), [](std::uint8_t p) { return p / 255.0; });
  std::vector<double> m(gray.pixels.size());
  std::transform(gray.pixels.begin(), gray.pixels.end(), m.begin(), [](std::uint8_t p) { return p / 255.0; });
  UvTexture tex(rgb.height, rgb.width, std::move(t));
  UvMask mask(gray.height, gray.width, std::move(m));
  require_same_grid(tex, mask);
  return {std::move(tex), std::move(mask)};
}

}  // namespace agvp::na
