#pragma once

#include <cstdint>
#include <vector>

#include "pseudoseg/raster.hpp"
#include "pseudoseg/rng.hpp"

namespace pseudoseg {

enum class GrowthMode {
  // Each pixel joins the seed with the smallest joint color/spatial distance.
  kNearestSeed,
  // Best-first seeded region growing; regions stay 4- or 8-connected.
  kConnected4,
  kConnected8,
};

struct RgrParams {
  double spacing = 100.0;           // average seed spacing, pixels
  int num_runs = 10;                // Monte Carlo runs
  double scoremap_threshold = 0.5;  // foreground vote fraction
  double hi_fg = 0.8;               // high-confidence foreground: p >= hi_fg
  double hi_bg = 0.01;              // high-confidence background: p <= hi_bg
  double spatial_weight = 0.5;
  GrowthMode growth = GrowthMode::kNearestSeed;

  // Throws DataError unless 0 <= hi_bg < scoremap_threshold < hi_fg <= 1,
  // spacing >= 1 and num_runs >= 1.
  void validate() const;

  friend bool operator==(const RgrParams&, const RgrParams&) = default;
};

enum class Confidence : std::uint8_t { kUncertain = 0, kForeground = 1, kBackground = 2 };

struct PixelPartition {
  int width = 0;
  int height = 0;
  std::vector<Confidence> labels;  // row-major

  Confidence at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count(Confidence c) const;
};

PixelPartition partition(const ScoreMap& probabilities, const RgrParams& params);

struct Seed {
  int x = 0;
  int y = 0;
  ClassId cls = ClassId::kBackground;

  friend bool operator==(const Seed&, const Seed&) = default;
};

// Independent thinning of each high-confidence set with keep probability
// min(1, area / (spacing^2 * |set|)); a nonempty set always yields at least
// one seed. Seeds come back in raster order.
std::vector<Seed> sample_seeds(const PixelPartition& part, const RgrParams& params, Rng& rng);

// Joint distance between pixel p and seed s:
//   |I(p) - I(s)|^2 + spatial_weight * |p - s|^2 / spacing^2
// Ties go to the seed listed first. Returns per-pixel flower assignment.
BinaryMask assign_to_seeds(const Raster& image, const std::vector<Seed>& seeds,
                           const RgrParams& params);

struct RefineResult {
  BinaryMask mask;
  std::vector<int> flower_votes;  // per pixel, over the runs actually made
  int runs = 0;
};

// Monte Carlo region growing refinement of a flower probability map.
// High-confidence pixels keep their class; uncertain pixels become
// foreground when their flower vote fraction reaches scoremap_threshold.
// Run k draws its seeds with Rng(derive_seed(seed, {k})).
RefineResult refine_detailed(const Raster& image, const ScoreMap& probabilities,
                             const RgrParams& params, std::uint64_t seed);

BinaryMask refine(const Raster& image, const ScoreMap& probabilities, const RgrParams& params,
                  std::uint64_t seed);

}  // namespace pseudoseg
