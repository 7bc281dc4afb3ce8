#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pseudoseg/augment.hpp"
#include "pseudoseg/image_io.hpp"
#include "pseudoseg/raster.hpp"

namespace pseudoseg {

// Inclusive pixel coordinates, origin top-left.
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = -1;
  int y_max = -1;

  int width() const noexcept { return x_max - x_min + 1; }
  int height() const noexcept { return y_max - y_min + 1; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Component {
  BoundingBox bbox;
  std::vector<std::size_t> pixels;  // raster indices, ascending
};

// Maximal connected foreground regions (connectivity 4 or 8), ordered by
// (y_min, x_min) of the bounding box, then by first pixel in raster order.
std::vector<Component> connected_components(const BinaryMask& mask, int connectivity = 8);

struct InstanceAnnotation {
  BoundingBox bbox;
  BinaryMask mask;  // cropped to bbox
  ClassId cls = ClassId::kFlower;

  friend bool operator==(const InstanceAnnotation&, const InstanceAnnotation&) = default;
};

struct PanopticPseudoLabel {
  BinaryMask semantic;
  std::vector<InstanceAnnotation> instances;
  Provenance provenance;
  double angle = 0.0;
  int rotations = 1;  // J of the angle set this label belongs to

  friend bool operator==(const PanopticPseudoLabel&, const PanopticPseudoLabel&) = default;
};

struct PanopticOptions {
  int connectivity = 8;
  // Components smaller than this are dropped from both instances and the
  // semantic mask. 0 keeps everything.
  std::size_t min_area = 0;

  friend bool operator==(const PanopticOptions&, const PanopticOptions&) = default;
};

// Instances from the connected components of a semantic mask.
PanopticPseudoLabel make_panoptic_label(BinaryMask semantic, Provenance provenance,
                                        const PanopticOptions& options = {});

// One label per angle: the mask is rotated (nearest neighbor) and split into
// instances. provenance.angle is overwritten with the angle index.
std::vector<PanopticPseudoLabel> to_panoptic(const BinaryMask& semantic, const AngleSet& angles,
                                             const Provenance& provenance,
                                             const PanopticOptions& options = {});

// Semantic foreground equals the disjoint union of the instance masks and
// every bbox is tight.
bool satisfies_partition(const PanopticPseudoLabel& label);

// 0 = background, k = k-th instance (1-based).
LabelImage instance_map(const PanopticPseudoLabel& label);

std::string label_dir_name(const Provenance& provenance);

// {dir}/{image}_{win}_{rot}/semantic.png, instances.png and meta.json.
// Each label directory is written under a temporary name and renamed.
void write_label(const PanopticPseudoLabel& label, const std::filesystem::path& dir);
void write_labels(const std::vector<PanopticPseudoLabel>& labels,
                  const std::filesystem::path& dir);
PanopticPseudoLabel read_label(const std::filesystem::path& label_dir);
std::vector<PanopticPseudoLabel> read_labels(const std::filesystem::path& dir);

struct UnlabeledImage {
  std::string id;
  Raster image;
};

struct UnlabeledItem {
  Provenance provenance;
  RotatedView<Raster> patch;
  const std::optional<PanopticPseudoLabel>* label = nullptr;
};

// Augmented unlabeled patches with one pseudo-label slot per item.
class UnlabeledSet {
 public:
  UnlabeledSet(std::shared_ptr<const std::vector<UnlabeledImage>> images, AugmentationPlan plan);

  std::size_t size() const noexcept { return plan_.size(); }
  const AugmentationPlan& plan() const noexcept { return plan_; }
  UnlabeledItem item(std::size_t index) const;
  void set_label(std::size_t index, PanopticPseudoLabel label);

 private:
  std::shared_ptr<const std::vector<UnlabeledImage>> images_;
  AugmentationPlan plan_;
  std::vector<std::optional<PanopticPseudoLabel>> labels_;
};

UnlabeledSet build_unlabeled_set(std::vector<UnlabeledImage> images, int window_factor,
                                 int rotations, std::uint64_t seed);

}  // namespace pseudoseg
