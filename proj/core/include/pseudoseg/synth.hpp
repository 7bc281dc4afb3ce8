#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pseudoseg/raster.hpp"

namespace pseudoseg {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Hue in degrees [0, 360), saturation and value in [0, 1].
struct Hsv {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

Hsv rgb_to_hsv(const Rgb& c);
Rgb hsv_to_rgb(const Hsv& c);
Rgb rotate_hue(const Rgb& c, double degrees);

// Procedural flower scene: lobed flower blobs over a textured background
// with flower-free distractor blobs.
struct SceneSpec {
  int width = 128;
  int height = 128;
  int flowers_min = 3;
  int flowers_max = 6;
  Rgb flower_color{0.95, 0.55, 0.80};
  double color_spread = 0.03;  // per-flower, per-channel std-dev
  double radius_min = 5.0;
  double radius_max = 9.0;
  int lobes_min = 5;
  int lobes_max = 6;
  double lobe_depth = 0.3;  // fraction of the radius carved out between petals
  Rgb background_color{0.25, 0.45, 0.20};
  double texture_scale = 16.0;  // pixels per texture lattice cell
  double texture_amplitude = 0.08;
  int distractors = 4;
  Rgb distractor_color{0.45, 0.35, 0.20};
  double distractor_radius = 8.0;
  double noise = 0.02;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct FlowerBlob {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  int lobes = 5;
  double phase = 0.0;
  Rgb color;
};

// Petal outline radius at polar angle phi.
double blob_radius_at(const FlowerBlob& blob, double lobe_depth, double phi);
// Area bounds of one blob: pi (R (1 - depth))^2 <= area <= pi R^2.
double blob_area_lower(const FlowerBlob& blob, double lobe_depth);
double blob_area_upper(const FlowerBlob& blob);

struct SyntheticImage {
  std::string id;
  Raster image;
  BinaryMask mask;
  std::vector<FlowerBlob> flowers;
};

// Deterministic per (spec.seed, index). Ids are zero-padded indices.
SyntheticImage generate_one(const SceneSpec& spec, int index);
std::vector<SyntheticImage> generate(const SceneSpec& spec, int count, int first_index = 0);

enum class ShiftKind { kHue, kScale, kClutter };

ShiftKind parse_shift_kind(const std::string& name);
std::string to_string(ShiftKind kind);

// hue: flower color hue +60 degrees; scale: flower radii x0.5;
// clutter: distractor count x3.
SceneSpec shift(const SceneSpec& spec, ShiftKind kind);
SceneSpec shift(const SceneSpec& spec, std::span<const ShiftKind> kinds);

// Circular mean hue (degrees) of the masked pixels.
double mean_hue(const Raster& image, const BinaryMask& mask);

}  // namespace pseudoseg
