#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "pseudoseg/raster.hpp"
#include "pseudoseg/tiling.hpp"

namespace pseudoseg {

// Stratified rotation sampling. Angle 0 is always first; the remaining
// angles are dealt round-robin to the sectors and drawn uniformly inside each.
struct SectorConfig {
  std::vector<double> centers{0.0, std::numbers::pi / 2, std::numbers::pi,
                              3 * std::numbers::pi / 2, 2 * std::numbers::pi};
  double half_width = std::numbers::pi / 5;
};

struct AngleSet {
  std::vector<double> angles;  // radians in [0, 2pi); angles[0] == 0
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return angles.size(); }
  double operator[](std::size_t j) const { return angles[j]; }
};

AngleSet sample_angles(int count, std::uint64_t seed, const SectorConfig& sectors = {});

// True when theta lies in [center - half_width, center + half_width) modulo 2pi.
bool in_sector(double theta, double center, double half_width);

// Geometry of rotating a w x h source about its center onto the smallest
// axis-aligned canvas that holds the rotated rectangle.
class CanvasGeometry {
 public:
  CanvasGeometry(int source_width, int source_height, double angle);

  int source_width() const noexcept { return source_width_; }
  int source_height() const noexcept { return source_height_; }
  int canvas_width() const noexcept { return canvas_width_; }
  int canvas_height() const noexcept { return canvas_height_; }
  double angle() const noexcept { return angle_; }

  // Canvas pixel -> source position (preimage).
  void to_source(double u, double v, double& x, double& y) const noexcept;
  // Source position -> canvas position.
  void to_canvas(double x, double y, double& u, double& v) const noexcept;

 private:
  int source_width_;
  int source_height_;
  int canvas_width_;
  int canvas_height_;
  double angle_;
  double cos_;
  double sin_;
};

template <class Content>
struct RotatedView {
  double angle = 0.0;
  Content content;
  BinaryMask validity;  // canvas pixels whose preimage lies inside the source
  int source_width = 0;
  int source_height = 0;
};

template <class Content>
struct Unrotated {
  Content content;
  BinaryMask validity;
};

// Color and score content is resampled bilinearly, masks by nearest neighbor.
// Canvas pixels outside the source are 0 and invalid.
RotatedView<Raster> rotate(const Raster& content, double angle);
RotatedView<ScoreMap> rotate(const ScoreMap& content, double angle);
RotatedView<BinaryMask> rotate(const BinaryMask& content, double angle);

// Inverse remap onto the source frame. Validity is false wherever the sample
// touched an invalid or out-of-canvas pixel.
Unrotated<Raster> unrotate(const RotatedView<Raster>& view);
Unrotated<ScoreMap> unrotate(const RotatedView<ScoreMap>& view);
Unrotated<BinaryMask> unrotate(const RotatedView<BinaryMask>& view);

struct Provenance {
  std::string image_id;
  std::size_t window = 0;
  std::size_t angle = 0;
  int iteration = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ImageShape {
  int rows = 0;
  int cols = 0;
};

// Lazy (image, window, angle) enumeration; nothing is materialized.
class AugmentationPlan {
 public:
  AugmentationPlan() = default;
  AugmentationPlan(const std::vector<ImageShape>& shapes, int window_factor, AngleSet angles);

  std::size_t size() const noexcept;
  std::size_t image_count() const noexcept { return grids_.size(); }
  std::size_t windows_per_image() const noexcept { return windows_; }
  const WindowGrid& grid(std::size_t image) const { return grids_.at(image); }
  const AngleSet& angles() const noexcept { return angles_; }
  int window_factor() const noexcept { return window_factor_; }

  struct Key {
    std::size_t image = 0;
    std::size_t window = 0;
    std::size_t angle = 0;
  };
  // Image-major, then window, then angle.
  Key key(std::size_t item) const;

 private:
  std::vector<WindowGrid> grids_;
  AngleSet angles_;
  int window_factor_ = 1;
  std::size_t windows_ = 1;
};

AugmentationPlan plan_augmentation(const std::vector<ImageShape>& shapes, int window_factor,
                                   int rotations, std::uint64_t seed);

struct LabeledImage {
  std::string id;
  Raster image;
  BinaryMask mask;
};

struct LabeledItem {
  Provenance provenance;
  RotatedView<Raster> patch;
  RotatedView<BinaryMask> label;
};

// Pixel-aligned (patch view, label view) pairs for every image, window and angle.
class LabeledSet {
 public:
  LabeledSet(std::shared_ptr<const std::vector<LabeledImage>> images, AugmentationPlan plan);

  std::size_t size() const noexcept { return plan_.size(); }
  const AugmentationPlan& plan() const noexcept { return plan_; }
  const std::vector<LabeledImage>& images() const noexcept { return *images_; }
  LabeledItem item(std::size_t index) const;

 private:
  std::shared_ptr<const std::vector<LabeledImage>> images_;
  AugmentationPlan plan_;
};

LabeledSet build_labeled_set(std::vector<LabeledImage> images, int window_factor, int rotations,
                             std::uint64_t seed);

// Writes image-{id}_win-{i}_rot-{j}.png (+ _mask.png) and manifest.json.
void write_augmented_cache(const LabeledSet& set, const std::filesystem::path& dir);

}  // namespace pseudoseg
