#include "pseudoseg/rgr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <tuple>

#include "pseudoseg/error.hpp"

namespace pseudoseg {

namespace {

double color_distance2(const Raster& image, std::size_t a, std::size_t b) {
  const auto data = image.data();
  const int ch = image.channels();
  double d = 0.0;
  for (int c = 0; c < ch; ++c) {
    const double diff = static_cast<double>(data[a * ch + c]) - data[b * ch + c];
    d += diff * diff;
  }
  return d;
}

double joint_distance(const Raster& image, int px, int py, const Seed& s,
                      const RgrParams& params) {
  const std::size_t w = static_cast<std::size_t>(image.width());
  const double color = color_distance2(image, static_cast<std::size_t>(py) * w + px,
                                       static_cast<std::size_t>(s.y) * w + s.x);
  const long long dx = px - s.x;
  const long long dy = py - s.y;
  return color + params.spatial_weight *
                     (static_cast<double>(dx * dx + dy * dy) / (params.spacing * params.spacing));
}

// Exact nearest-seed search using a uniform bucket grid: rings of cells are
// visited outward until the spatial term alone exceeds the best distance.
BinaryMask assign_nearest(const Raster& image, const std::vector<Seed>& seeds,
                          const RgrParams& params) {
  const int w = image.width();
  const int h = image.height();
  const int cell = std::max(1, static_cast<int>(std::lround(params.spacing / 2)));
  const int gw = (w + cell - 1) / cell;
  const int gh = (h + cell - 1) / cell;
  std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(gw) * gh);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    buckets[static_cast<std::size_t>(seeds[i].y / cell) * gw + seeds[i].x / cell].push_back(i);
  }
  const int max_ring = std::max(gw, gh);
  const double inv_s2 = 1.0 / (params.spacing * params.spacing);

  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    const int cy = y / cell;
    for (int x = 0; x < w; ++x) {
      const int cx = x / cell;
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_idx = seeds.size();
      for (int ring = 0; ring <= max_ring; ++ring) {
        if (ring >= 2 && best_idx < seeds.size()) {
          const double gap = static_cast<double>(ring - 1) * cell;
          if (params.spatial_weight * gap * gap * inv_s2 > best) break;
        }
        for (int gy = cy - ring; gy <= cy + ring; ++gy) {
          if (gy < 0 || gy >= gh) continue;
          const bool edge_row = (gy == cy - ring || gy == cy + ring);
          const int step = edge_row ? 1 : 2 * ring;
          for (int gx = cx - ring; gx <= cx + ring; gx += std::max(step, 1)) {
            if (gx < 0 || gx >= gw) continue;
            for (std::size_t si : buckets[static_cast<std::size_t>(gy) * gw + gx]) {
              const double d = joint_distance(image, x, y, seeds[si], params);
              if (d < best || (d == best && si < best_idx)) {
                best = d;
                best_idx = si;
              }
            }
          }
        }
      }
      out.set(x, y, seeds[best_idx].cls == ClassId::kFlower);
    }
  }
  return out;
}

// Seeded region growing: a priority queue ordered by (distance, seed index,
// pixel index) expands every region through its unassigned neighbors.
BinaryMask assign_connected(const Raster& image, const std::vector<Seed>& seeds,
                            const RgrParams& params, bool eight) {
  const int w = image.width();
  const int h = image.height();
  using Entry = std::tuple<double, std::size_t, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  std::vector<std::size_t> owner(static_cast<std::size_t>(w) * h, seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    queue.emplace(0.0, i, static_cast<std::size_t>(seeds[i].y) * w + seeds[i].x);
  }
  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int neighbors = eight ? 8 : 4;
  while (!queue.empty()) {
    const auto [d, si, p] = queue.top();
    queue.pop();
    if (owner[p] != seeds.size()) continue;
    owner[p] = si;
    const int px = static_cast<int>(p % w);
    const int py = static_cast<int>(p / w);
    for (int k = 0; k < neighbors; ++k) {
      const int nx = px + kDx[k];
      const int ny = py + kDy[k];
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      const std::size_t np = static_cast<std::size_t>(ny) * w + nx;
      if (owner[np] != seeds.size()) continue;
      queue.emplace(joint_distance(image, nx, ny, seeds[si], params), si, np);
    }
  }
  BinaryMask out(w, h);
  auto bits = out.bits();
  for (std::size_t p = 0; p < bits.size(); ++p) {
    bits[p] = seeds[owner[p]].cls == ClassId::kFlower ? 1 : 0;
  }
  return out;
}

}  // namespace

void RgrParams::validate() const {
  if (!(0.0 <= hi_bg && hi_bg < scoremap_threshold && scoremap_threshold < hi_fg &&
        hi_fg <= 1.0)) {
    throw DataError("rgr", "thresholds must satisfy 0 <= bg < threshold < fg <= 1");
  }
  if (!(spacing >= 1.0)) throw DataError("rgr", "seed spacing must be >= 1 pixel");
  if (num_runs < 1) throw DataError("rgr", "num_runs must be >= 1");
  if (!(spatial_weight >= 0.0)) throw DataError("rgr", "spatial_weight must be >= 0");
}

std::size_t PixelPartition::count(Confidence c) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), c));
}

PixelPartition partition(const ScoreMap& probabilities, const RgrParams& params) {
  if (!probabilities.is_probability()) throw DataError("rgr", "partition needs probabilities");
  PixelPartition part{probabilities.width(), probabilities.height(), {}};
  const auto data = probabilities.planes().data();
  part.labels.resize(probabilities.planes().pixel_count());
  for (std::size_t i = 0; i < part.labels.size(); ++i) {
    const double p = data[2 * i + 1];
    if (p >= params.hi_fg) {
      part.labels[i] = Confidence::kForeground;
    } else if (p <= params.hi_bg) {
      part.labels[i] = Confidence::kBackground;
    } else {
      part.labels[i] = Confidence::kUncertain;
    }
  }
  return part;
}

std::vector<Seed> sample_seeds(const PixelPartition& part, const RgrParams& params, Rng& rng) {
  const double area = static_cast<double>(part.width) * part.height;
  const std::size_t n_fg = part.count(Confidence::kForeground);
  const std::size_t n_bg = part.count(Confidence::kBackground);
  const double s2 = params.spacing * params.spacing;
  const double keep_fg = n_fg ? std::min(1.0, area / (s2 * static_cast<double>(n_fg))) : 0.0;
  const double keep_bg = n_bg ? std::min(1.0, area / (s2 * static_cast<double>(n_bg))) : 0.0;

  std::vector<std::size_t> picked;
  bool have_fg = false;
  bool have_bg = false;
  for (std::size_t i = 0; i < part.labels.size(); ++i) {
    const Confidence c = part.labels[i];
    if (c == Confidence::kUncertain) continue;
    const double keep = c == Confidence::kForeground ? keep_fg : keep_bg;
    if (rng.bernoulli(keep)) {
      picked.push_back(i);
      (c == Confidence::kForeground ? have_fg : have_bg) = true;
    }
  }
  auto force_one = [&](Confidence c, std::size_t n) {
    std::uint64_t target = rng.below(n);
    for (std::size_t i = 0; i < part.labels.size(); ++i) {
      if (part.labels[i] != c) continue;
      if (target-- == 0) {
        picked.push_back(i);
        return;
      }
    }
  };
  if (n_fg && !have_fg) force_one(Confidence::kForeground, n_fg);
  if (n_bg && !have_bg) force_one(Confidence::kBackground, n_bg);
  std::sort(picked.begin(), picked.end());

  std::vector<Seed> seeds;
  seeds.reserve(picked.size());
  for (std::size_t i : picked) {
    seeds.push_back({static_cast<int>(i % part.width), static_cast<int>(i / part.width),
                     part.labels[i] == Confidence::kForeground ? ClassId::kFlower
                                                               : ClassId::kBackground});
  }
  return seeds;
}

BinaryMask assign_to_seeds(const Raster& image, const std::vector<Seed>& seeds,
                           const RgrParams& params) {
  if (seeds.empty()) throw DataError("rgr", "no seeds to grow from");
  for (const Seed& s : seeds) {
    if (s.x < 0 || s.y < 0 || s.x >= image.width() || s.y >= image.height()) {
      throw DataError("rgr", "seed outside image");
    }
  }
  switch (params.growth) {
    case GrowthMode::kNearestSeed:
      return assign_nearest(image, seeds, params);
    case GrowthMode::kConnected4:
      return assign_connected(image, seeds, params, false);
    case GrowthMode::kConnected8:
      return assign_connected(image, seeds, params, true);
  }
  return assign_nearest(image, seeds, params);
}

RefineResult refine_detailed(const Raster& image, const ScoreMap& probabilities,
                             const RgrParams& params, std::uint64_t seed) {
  params.validate();
  if (image.width() != probabilities.width() || image.height() != probabilities.height()) {
    throw DataError("rgr", "image and score map differ in size");
  }
  const PixelPartition part = partition(probabilities, params);
  const std::size_t n = part.labels.size();
  const std::size_t n_fg = part.count(Confidence::kForeground);
  const std::size_t n_bg = part.count(Confidence::kBackground);

  RefineResult result{BinaryMask(image.width(), image.height()), std::vector<int>(n, 0), 0};
  if (n_fg == 0 && n_bg == 0) {
    result.mask = to_mask(probabilities, params.scoremap_threshold);
    return result;
  }
  if (n_fg == 0 || n_bg == 0) {
    result.mask = BinaryMask(image.width(), image.height(), n_bg == 0);
    return result;
  }

  for (int run = 0; run < params.num_runs; ++run) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(run)}));
    const auto seeds = sample_seeds(part, params, rng);
    const BinaryMask assigned = assign_to_seeds(image, seeds, params);
    const auto bits = assigned.bits();
    for (std::size_t i = 0; i < n; ++i) result.flower_votes[i] += bits[i];
  }
  result.runs = params.num_runs;

  auto out = result.mask.bits();
  for (std::size_t i = 0; i < n; ++i) {
    switch (part.labels[i]) {
      case Confidence::kForeground:
        out[i] = 1;
        break;
      case Confidence::kBackground:
        out[i] = 0;
        break;
      case Confidence::kUncertain:
        out[i] = static_cast<double>(result.flower_votes[i]) / result.runs >=
                         params.scoremap_threshold
                     ? 1
                     : 0;
        break;
    }
  }
  return result;
}

BinaryMask refine(const Raster& image, const ScoreMap& probabilities, const RgrParams& params,
                  std::uint64_t seed) {
  return refine_detailed(image, probabilities, params, seed).mask;
}

}  // namespace pseudoseg
