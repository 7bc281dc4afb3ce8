#include "pseudoseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/image_io.hpp"
#include "pseudoseg/rng.hpp"

namespace pseudoseg {

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

double wrap_angle(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0) t += kTwoPi;
  if (t >= kTwoPi) t = 0.0;
  return t;
}

// Bilinear sample that is valid only when every corner with nonzero weight
// is itself a valid canvas pixel.
Sample sample_with_validity(const Raster& canvas, const BinaryMask& validity, double u,
                            double v) {
  Sample s = bilinear_sample(canvas, u, v);
  if (!s.valid) return s;
  const double uc = std::clamp(u, 0.0, static_cast<double>(canvas.width() - 1));
  const double vc = std::clamp(v, 0.0, static_cast<double>(canvas.height() - 1));
  const int x0 = static_cast<int>(std::floor(uc));
  const int y0 = static_cast<int>(std::floor(vc));
  const int x1 = std::min(x0 + 1, canvas.width() - 1);
  const int y1 = std::min(y0 + 1, canvas.height() - 1);
  const double fx = uc - x0;
  const double fy = vc - y0;
  const bool ok = validity.get(x0, y0) && (fx == 0.0 || validity.get(x1, y0)) &&
                  (fy == 0.0 || validity.get(x0, y1)) &&
                  (fx == 0.0 || fy == 0.0 || validity.get(x1, y1));
  if (!ok) return Sample{};
  return s;
}

Unrotated<Raster> unrotate_raster(const Raster& canvas, const BinaryMask& validity,
                                  double angle, int source_width, int source_height) {
  if (canvas.width() != validity.width() || canvas.height() != validity.height()) {
    throw DataError("augment", "view content and validity disagree in size");
  }
  const CanvasGeometry geo(source_width, source_height, angle);
  if (geo.canvas_width() != canvas.width() || geo.canvas_height() != canvas.height()) {
    throw DataError("augment", "view canvas " + std::to_string(canvas.width()) + "x" +
                                   std::to_string(canvas.height()) +
                                   " does not match rotation geometry " +
                                   std::to_string(geo.canvas_width()) + "x" +
                                   std::to_string(geo.canvas_height()));
  }
  Unrotated<Raster> out{Raster(source_width, source_height, canvas.channels()),
                        BinaryMask(source_width, source_height)};
  for (int y = 0; y < source_height; ++y) {
    for (int x = 0; x < source_width; ++x) {
      double u, v;
      geo.to_canvas(x, y, u, v);
      const Sample s = sample_with_validity(canvas, validity, u, v);
      if (!s.valid) continue;
      for (int c = 0; c < canvas.channels(); ++c) out.content.at(x, y, c) = s.values[c];
      out.validity.set(x, y, true);
    }
  }
  return out;
}

RotatedView<Raster> rotate_raster(const Raster& content, double angle) {
  if (content.width() < 1 || content.height() < 1) {
    throw DataError("augment", "cannot rotate empty content");
  }
  const CanvasGeometry geo(content.width(), content.height(), angle);
  RotatedView<Raster> view{angle,
                           Raster(geo.canvas_width(), geo.canvas_height(), content.channels()),
                           BinaryMask(geo.canvas_width(), geo.canvas_height()),
                           content.width(), content.height()};
  for (int v = 0; v < geo.canvas_height(); ++v) {
    for (int u = 0; u < geo.canvas_width(); ++u) {
      double x, y;
      geo.to_source(u, v, x, y);
      const Sample s = bilinear_sample(content, x, y);
      if (!s.valid) continue;
      for (int c = 0; c < content.channels(); ++c) view.content.at(u, v, c) = s.values[c];
      view.validity.set(u, v, true);
    }
  }
  return view;
}

int nearest(double x) { return static_cast<int>(std::floor(x + 0.5)); }

// Same domain bilinear_sample accepts, so rotated labels never land on
// pixels the rotated image leaves as padding.
bool in_sample_domain(double x, double y, int w, int h) {
  constexpr double kEps = 1e-9;
  return x >= -kEps && y >= -kEps && x <= w - 1 + kEps && y <= h - 1 + kEps;
}

}  // namespace

AngleSet sample_angles(int count, std::uint64_t seed, const SectorConfig& sectors) {
  if (count < 1) throw DataError("augment", "rotation count J must be >= 1");
  if (sectors.centers.empty()) throw DataError("augment", "no rotation sectors configured");
  AngleSet set;
  set.seed = seed;
  set.angles.reserve(static_cast<std::size_t>(count));
  set.angles.push_back(0.0);
  Rng rng(derive_seed(seed, {0x616E676C65ull}));
  for (int j = 1; j < count; ++j) {
    const double center = sectors.centers[static_cast<std::size_t>(j - 1) % sectors.centers.size()];
    set.angles.push_back(
        wrap_angle(center + rng.uniform(-sectors.half_width, sectors.half_width)));
  }
  return set;
}

bool in_sector(double theta, double center, double half_width) {
  double d = theta - center;
  d -= kTwoPi * std::floor((d + std::numbers::pi) / kTwoPi);
  return d >= -half_width && d < half_width;
}

CanvasGeometry::CanvasGeometry(int source_width, int source_height, double angle)
    : source_width_(source_width), source_height_(source_height), angle_(angle) {
  const double quarter = std::numbers::pi / 2;
  const double k = std::round(angle / quarter);
  if (std::abs(angle - k * quarter) < 1e-12) {
    // Exact trig for right angles so those rotations are pure permutations.
    const int q = ((static_cast<long long>(k) % 4) + 4) % 4;
    static constexpr double kCos[4] = {1, 0, -1, 0};
    static constexpr double kSin[4] = {0, 1, 0, -1};
    cos_ = kCos[q];
    sin_ = kSin[q];
  } else {
    cos_ = std::cos(angle);
    sin_ = std::sin(angle);
  }
  const double w = source_width;
  const double h = source_height;
  canvas_width_ = static_cast<int>(std::ceil(w * std::abs(cos_) + h * std::abs(sin_) - 1e-9));
  canvas_height_ = static_cast<int>(std::ceil(w * std::abs(sin_) + h * std::abs(cos_) - 1e-9));
  canvas_width_ = std::max(canvas_width_, 1);
  canvas_height_ = std::max(canvas_height_, 1);
}

void CanvasGeometry::to_source(double u, double v, double& x, double& y) const noexcept {
  const double ru = u - (canvas_width_ - 1) / 2.0;
  const double rv = v - (canvas_height_ - 1) / 2.0;
  x = cos_ * ru - sin_ * rv + (source_width_ - 1) / 2.0;
  y = sin_ * ru + cos_ * rv + (source_height_ - 1) / 2.0;
}

void CanvasGeometry::to_canvas(double x, double y, double& u, double& v) const noexcept {
  const double rx = x - (source_width_ - 1) / 2.0;
  const double ry = y - (source_height_ - 1) / 2.0;
  u = cos_ * rx + sin_ * ry + (canvas_width_ - 1) / 2.0;
  v = -sin_ * rx + cos_ * ry + (canvas_height_ - 1) / 2.0;
}

RotatedView<Raster> rotate(const Raster& content, double angle) {
  return rotate_raster(content, angle);
}

RotatedView<ScoreMap> rotate(const ScoreMap& content, double angle) {
  auto r = rotate_raster(content.planes(), angle);
  return {angle, ScoreMap(std::move(r.content), content.kind()), std::move(r.validity),
          r.source_width, r.source_height};
}

RotatedView<BinaryMask> rotate(const BinaryMask& content, double angle) {
  if (content.width() < 1 || content.height() < 1) {
    throw DataError("augment", "cannot rotate empty content");
  }
  const CanvasGeometry geo(content.width(), content.height(), angle);
  RotatedView<BinaryMask> view{angle, BinaryMask(geo.canvas_width(), geo.canvas_height()),
                               BinaryMask(geo.canvas_width(), geo.canvas_height()),
                               content.width(), content.height()};
  for (int v = 0; v < geo.canvas_height(); ++v) {
    for (int u = 0; u < geo.canvas_width(); ++u) {
      double x, y;
      geo.to_source(u, v, x, y);
      if (!in_sample_domain(x, y, content.width(), content.height())) continue;
      const int xi = nearest(x);
      const int yi = nearest(y);
      view.content.set(u, v, content.get(xi, yi));
      view.validity.set(u, v, true);
    }
  }
  return view;
}

Unrotated<Raster> unrotate(const RotatedView<Raster>& view) {
  return unrotate_raster(view.content, view.validity, view.angle, view.source_width,
                         view.source_height);
}

Unrotated<ScoreMap> unrotate(const RotatedView<ScoreMap>& view) {
  auto r = unrotate_raster(view.content.planes(), view.validity, view.angle, view.source_width,
                           view.source_height);
  return {ScoreMap(std::move(r.content), view.content.kind()), std::move(r.validity)};
}

Unrotated<BinaryMask> unrotate(const RotatedView<BinaryMask>& view) {
  const CanvasGeometry geo(view.source_width, view.source_height, view.angle);
  if (geo.canvas_width() != view.content.width() ||
      geo.canvas_height() != view.content.height() ||
      view.validity.width() != view.content.width() ||
      view.validity.height() != view.content.height()) {
    throw DataError("augment", "mask view does not match rotation geometry");
  }
  Unrotated<BinaryMask> out{BinaryMask(view.source_width, view.source_height),
                            BinaryMask(view.source_width, view.source_height)};
  for (int y = 0; y < view.source_height; ++y) {
    for (int x = 0; x < view.source_width; ++x) {
      double u, v;
      geo.to_canvas(x, y, u, v);
      const int ui = nearest(u);
      const int vi = nearest(v);
      if (!view.content.contains(ui, vi) || !view.validity.get(ui, vi)) continue;
      out.content.set(x, y, view.content.get(ui, vi));
      out.validity.set(x, y, true);
    }
  }
  return out;
}

AugmentationPlan::AugmentationPlan(const std::vector<ImageShape>& shapes, int window_factor,
                                   AngleSet angles)
    : angles_(std::move(angles)),
      window_factor_(window_factor),
      windows_(windows_for_factor(window_factor)) {
  grids_.reserve(shapes.size());
  for (const auto& s : shapes) grids_.push_back(plan_grid(s.rows, s.cols, window_factor));
}

std::size_t AugmentationPlan::size() const noexcept {
  return grids_.size() * windows_ * angles_.size();
}

AugmentationPlan::Key AugmentationPlan::key(std::size_t item) const {
  if (item >= size()) throw DataError("augment", "item index out of range");
  const std::size_t per_window = angles_.size();
  const std::size_t per_image = windows_ * per_window;
  const std::size_t rem = item % per_image;
  return {item / per_image, rem / per_window, rem % per_window};
}

AugmentationPlan plan_augmentation(const std::vector<ImageShape>& shapes, int window_factor,
                                   int rotations, std::uint64_t seed) {
  return AugmentationPlan(shapes, window_factor, sample_angles(rotations, seed));
}

LabeledSet::LabeledSet(std::shared_ptr<const std::vector<LabeledImage>> images,
                       AugmentationPlan plan)
    : images_(std::move(images)), plan_(std::move(plan)) {}

LabeledItem LabeledSet::item(std::size_t index) const {
  const auto key = plan_.key(index);
  const LabeledImage& img = (*images_)[key.image];
  const WindowGrid& grid = plan_.grid(key.image);
  const double angle = plan_.angles()[key.angle];
  return {Provenance{img.id, key.window, key.angle, 0},
          rotate(extract(img.image, grid, key.window), angle),
          rotate(extract(img.mask, grid, key.window), angle)};
}

LabeledSet build_labeled_set(std::vector<LabeledImage> images, int window_factor, int rotations,
                             std::uint64_t seed) {
  std::vector<ImageShape> shapes;
  shapes.reserve(images.size());
  for (const auto& img : images) {
    if (img.image.width() != img.mask.width() || img.image.height() != img.mask.height()) {
      throw DataError("augment", "mask of image '" + img.id + "' is " +
                                     std::to_string(img.mask.width()) + "x" +
                                     std::to_string(img.mask.height()) + ", image is " +
                                     std::to_string(img.image.width()) + "x" +
                                     std::to_string(img.image.height()));
    }
    shapes.push_back({img.image.height(), img.image.width()});
  }
  auto plan = plan_augmentation(shapes, window_factor, rotations, seed);
  return LabeledSet(std::make_shared<const std::vector<LabeledImage>>(std::move(images)),
                    std::move(plan));
}

void write_augmented_cache(const LabeledSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["window_factor"] = set.plan().window_factor();
  manifest["seed"] = set.plan().angles().seed;
  manifest["angles"] = set.plan().angles().angles;
  auto& items = manifest["items"] = nlohmann::json::array();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const LabeledItem item = set.item(i);
    const std::string stem = "image-" + item.provenance.image_id + "_win-" +
                             std::to_string(item.provenance.window) + "_rot-" +
                             std::to_string(item.provenance.angle);
    write_rgb(dir / (stem + ".png"), item.patch.content);
    write_mask(dir / (stem + "_mask.png"), item.label.content);
    items.push_back({{"file", stem + ".png"},
                     {"mask", stem + "_mask.png"},
                     {"image_id", item.provenance.image_id},
                     {"window", item.provenance.window},
                     {"angle_index", item.provenance.angle},
                     {"angle", item.patch.angle}});
  }
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

}  // namespace pseudoseg
