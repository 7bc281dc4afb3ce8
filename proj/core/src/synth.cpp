#include "pseudoseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "pseudoseg/error.hpp"
#include "pseudoseg/rng.hpp"

namespace pseudoseg {

namespace {

constexpr double kPi = std::numbers::pi;

Rgb clamp01(Rgb c) {
  return {std::clamp(c.r, 0.0, 1.0), std::clamp(c.g, 0.0, 1.0), std::clamp(c.b, 0.0, 1.0)};
}

// Smooth random field: bilinear interpolation of a random lattice.
class ValueNoise {
 public:
  ValueNoise(int width, int height, double scale, Rng& rng)
      : scale_(std::max(scale, 1.0)),
        gw_(static_cast<int>(width / scale_) + 2),
        gh_(static_cast<int>(height / scale_) + 2) {
    lattice_.resize(static_cast<std::size_t>(gw_) * gh_);
    for (double& v : lattice_) v = rng.uniform(-1.0, 1.0);
  }

  double at(double x, double y) const {
    const double gx = x / scale_;
    const double gy = y / scale_;
    const int x0 = std::min(static_cast<int>(gx), gw_ - 2);
    const int y0 = std::min(static_cast<int>(gy), gh_ - 2);
    const double fx = gx - x0;
    const double fy = gy - y0;
    auto v = [&](int xx, int yy) { return lattice_[static_cast<std::size_t>(yy) * gw_ + xx]; };
    return (1 - fy) * ((1 - fx) * v(x0, y0) + fx * v(x0 + 1, y0)) +
           fy * ((1 - fx) * v(x0, y0 + 1) + fx * v(x0 + 1, y0 + 1));
  }

 private:
  double scale_;
  int gw_;
  int gh_;
  std::vector<double> lattice_;
};

}  // namespace

Hsv rgb_to_hsv(const Rgb& c) {
  const double mx = std::max({c.r, c.g, c.b});
  const double mn = std::min({c.r, c.g, c.b});
  const double d = mx - mn;
  Hsv out{0.0, mx > 0 ? d / mx : 0.0, mx};
  if (d <= 0) return out;
  double h;
  if (mx == c.r) {
    h = std::fmod((c.g - c.b) / d, 6.0);
  } else if (mx == c.g) {
    h = (c.b - c.r) / d + 2.0;
  } else {
    h = (c.r - c.g) / d + 4.0;
  }
  h *= 60.0;
  if (h < 0) h += 360.0;
  out.h = h;
  return out;
}

Rgb hsv_to_rgb(const Hsv& c) {
  const double h = std::fmod(std::fmod(c.h, 360.0) + 360.0, 360.0) / 60.0;
  const double chroma = c.v * c.s;
  const double x = chroma * (1 - std::abs(std::fmod(h, 2.0) - 1));
  const double m = c.v - chroma;
  Rgb out;
  switch (static_cast<int>(h)) {
    case 0: out = {chroma, x, 0}; break;
    case 1: out = {x, chroma, 0}; break;
    case 2: out = {0, chroma, x}; break;
    case 3: out = {0, x, chroma}; break;
    case 4: out = {x, 0, chroma}; break;
    default: out = {chroma, 0, x}; break;
  }
  return {out.r + m, out.g + m, out.b + m};
}

Rgb rotate_hue(const Rgb& c, double degrees) {
  Hsv hsv = rgb_to_hsv(c);
  hsv.h += degrees;
  return hsv_to_rgb(hsv);
}

void SceneSpec::validate() const {
  auto in01 = [](const Rgb& c) {
    return c.r >= 0 && c.r <= 1 && c.g >= 0 && c.g <= 1 && c.b >= 0 && c.b <= 1;
  };
  if (width < 1 || height < 1) throw DataError("synth", "image size must be positive");
  if (flowers_min < 0 || flowers_max < flowers_min) {
    throw DataError("synth", "flower count range must satisfy 0 <= min <= max");
  }
  if (!in01(flower_color) || !in01(background_color) || !in01(distractor_color)) {
    throw DataError("synth", "colors must lie in [0, 1]");
  }
  if (!(radius_min > 0 && radius_max >= radius_min)) {
    throw DataError("synth", "flower radius range must satisfy 0 < min <= max");
  }
  if (lobes_min < 1 || lobes_max < lobes_min) throw DataError("synth", "bad lobe range");
  if (!(lobe_depth >= 0 && lobe_depth < 1)) throw DataError("synth", "lobe depth in [0, 1)");
  if (distractors < 0) throw DataError("synth", "distractor count must be >= 0");
  if (color_spread < 0 || noise < 0 || texture_amplitude < 0) {
    throw DataError("synth", "spreads and noise levels must be >= 0");
  }
}

double blob_radius_at(const FlowerBlob& blob, double lobe_depth, double phi) {
  return blob.radius *
         (1.0 - lobe_depth + lobe_depth * std::abs(std::cos(blob.lobes * (phi - blob.phase) / 2)));
}

double blob_area_lower(const FlowerBlob& blob, double lobe_depth) {
  const double r = blob.radius * (1.0 - lobe_depth);
  return kPi * r * r;
}

double blob_area_upper(const FlowerBlob& blob) { return kPi * blob.radius * blob.radius; }

SyntheticImage generate_one(const SceneSpec& spec, int index) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(index)}));
  const int w = spec.width;
  const int h = spec.height;

  char id[16];
  std::snprintf(id, sizeof(id), "%04d", index);
  SyntheticImage out{id, Raster(w, h, 3), BinaryMask(w, h), {}};

  ValueNoise tex_r(w, h, spec.texture_scale, rng);
  ValueNoise tex_g(w, h, spec.texture_scale, rng);
  ValueNoise tex_b(w, h, spec.texture_scale, rng);
  ValueNoise shade(w, h, spec.texture_scale * 2, rng);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double s = 1.0 + 0.5 * spec.texture_amplitude * shade.at(x, y);
      out.image.at(x, y, 0) = static_cast<float>(
          s * (spec.background_color.r + spec.texture_amplitude * tex_r.at(x, y)));
      out.image.at(x, y, 1) = static_cast<float>(
          s * (spec.background_color.g + spec.texture_amplitude * tex_g.at(x, y)));
      out.image.at(x, y, 2) = static_cast<float>(
          s * (spec.background_color.b + spec.texture_amplitude * tex_b.at(x, y)));
    }
  }

  for (int d = 0; d < spec.distractors; ++d) {
    const double cx = rng.uniform(0, w);
    const double cy = rng.uniform(0, h);
    const double r = spec.distractor_radius * rng.uniform(0.6, 1.4);
    const double ax = rng.uniform(0.5, 1.0);
    const int x0 = std::max(0, static_cast<int>(cx - r - 1));
    const int x1 = std::min(w - 1, static_cast<int>(cx + r + 1));
    const int y0 = std::max(0, static_cast<int>(cy - r - 1));
    const int y1 = std::min(h - 1, static_cast<int>(cy + r + 1));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = (x - cx) / ax;
        const double dy = y - cy;
        if (dx * dx + dy * dy > r * r) continue;
        out.image.at(x, y, 0) = static_cast<float>(spec.distractor_color.r);
        out.image.at(x, y, 1) = static_cast<float>(spec.distractor_color.g);
        out.image.at(x, y, 2) = static_cast<float>(spec.distractor_color.b);
      }
    }
  }

  const int n_flowers = rng.range(spec.flowers_min, spec.flowers_max);
  for (int f = 0; f < n_flowers; ++f) {
    FlowerBlob blob;
    blob.radius = rng.uniform(spec.radius_min, spec.radius_max);
    blob.cx = rng.uniform(0, w);
    blob.cy = rng.uniform(0, h);
    blob.lobes = rng.range(spec.lobes_min, spec.lobes_max);
    blob.phase = rng.uniform(0, 2 * kPi);
    blob.color = clamp01({spec.flower_color.r + rng.normal(0, spec.color_spread),
                          spec.flower_color.g + rng.normal(0, spec.color_spread),
                          spec.flower_color.b + rng.normal(0, spec.color_spread)});
    const double r = blob.radius;
    const int x0 = std::max(0, static_cast<int>(std::floor(blob.cx - r)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(blob.cx + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(blob.cy - r)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(blob.cy + r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - blob.cx;
        const double dy = y - blob.cy;
        const double dist = std::sqrt(dx * dx + dy * dy);
        const double edge = blob_radius_at(blob, spec.lobe_depth, std::atan2(dy, dx));
        if (dist > edge) continue;
        // Brighter toward the center; scaling keeps the hue.
        const double s = 0.85 + 0.15 * (1.0 - dist / std::max(edge, 1e-9));
        out.image.at(x, y, 0) = static_cast<float>(s * blob.color.r);
        out.image.at(x, y, 1) = static_cast<float>(s * blob.color.g);
        out.image.at(x, y, 2) = static_cast<float>(s * blob.color.b);
        out.mask.set(x, y, true);
      }
    }
    out.flowers.push_back(blob);
  }

  for (float& v : out.image.data()) {
    v = static_cast<float>(std::clamp(v + rng.normal(0, spec.noise), 0.0, 1.0));
  }
  return out;
}

std::vector<SyntheticImage> generate(const SceneSpec& spec, int count, int first_index) {
  std::vector<SyntheticImage> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) out.push_back(generate_one(spec, first_index + i));
  return out;
}

ShiftKind parse_shift_kind(const std::string& name) {
  if (name == "hue") return ShiftKind::kHue;
  if (name == "scale") return ShiftKind::kScale;
  if (name == "clutter") return ShiftKind::kClutter;
  throw DataError("synth", "unknown shift kind '" + name + "' (hue, scale, clutter)");
}

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::kHue: return "hue";
    case ShiftKind::kScale: return "scale";
    case ShiftKind::kClutter: return "clutter";
  }
  return "hue";
}

SceneSpec shift(const SceneSpec& spec, ShiftKind kind) {
  SceneSpec out = spec;
  switch (kind) {
    case ShiftKind::kHue:
      out.flower_color = clamp01(rotate_hue(spec.flower_color, 60.0));
      break;
    case ShiftKind::kScale:
      out.radius_min = spec.radius_min * 0.5;
      out.radius_max = spec.radius_max * 0.5;
      break;
    case ShiftKind::kClutter:
      out.distractors = spec.distractors * 3;
      break;
  }
  return out;
}

SceneSpec shift(const SceneSpec& spec, std::span<const ShiftKind> kinds) {
  SceneSpec out = spec;
  for (ShiftKind k : kinds) out = shift(out, k);
  return out;
}

double mean_hue(const Raster& image, const BinaryMask& mask) {
  double sx = 0.0;
  double sy = 0.0;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (!mask.get(x, y)) continue;
      const Hsv hsv = rgb_to_hsv({image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2)});
      sx += std::cos(hsv.h * kPi / 180.0);
      sy += std::sin(hsv.h * kPi / 180.0);
    }
  }
  double deg = std::atan2(sy, sx) * 180.0 / kPi;
  if (deg < 0) deg += 360.0;
  return deg;
}

}  // namespace pseudoseg
