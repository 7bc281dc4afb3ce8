#include "pseudoseg/pseudolabel.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>

#include "json.hpp"
#include "pseudoseg/error.hpp"

namespace pseudoseg {

namespace fs = std::filesystem;

namespace {

class DisjointSets {
 public:
  std::size_t make() {
    parent_.push_back(parent_.size());
    return parent_.size() - 1;
  }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
  }

 private:
  std::vector<std::size_t> parent_;
};

[[noreturn]] void malformed(const fs::path& path, const std::string& field,
                            const std::string& why) {
  throw DataError("pseudolabel", path.string() + ": field '" + field + "': " + why);
}

}  // namespace

std::vector<Component> connected_components(const BinaryMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) {
    throw DataError("pseudolabel", "connectivity must be 4 or 8");
  }
  const int w = mask.width();
  const int h = mask.height();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> label(mask.pixel_count(), kNone);
  DisjointSets sets;

  // First pass: provisional labels from already-visited neighbors.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.get(x, y)) continue;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      std::size_t found = kNone;
      auto visit = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= w) return;
        const std::size_t l = label[static_cast<std::size_t>(ny) * w + nx];
        if (l == kNone) return;
        if (found == kNone) {
          found = l;
        } else {
          sets.unite(found, l);
        }
      };
      visit(x - 1, y);
      visit(x, y - 1);
      if (connectivity == 8) {
        visit(x - 1, y - 1);
        visit(x + 1, y - 1);
      }
      label[i] = found == kNone ? sets.make() : found;
    }
  }

  // Second pass: gather pixels per root in raster order.
  std::vector<std::size_t> slot_of_root;
  std::vector<Component> comps;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] == kNone) continue;
    const std::size_t root = sets.find(label[i]);
    if (root >= slot_of_root.size()) slot_of_root.resize(root + 1, kNone);
    if (slot_of_root[root] == kNone) {
      slot_of_root[root] = comps.size();
      const int x = static_cast<int>(i % w);
      const int y = static_cast<int>(i / w);
      comps.push_back({BoundingBox{x, y, x, y}, {}});
    }
    Component& c = comps[slot_of_root[root]];
    const int x = static_cast<int>(i % w);
    const int y = static_cast<int>(i / w);
    c.bbox.x_min = std::min(c.bbox.x_min, x);
    c.bbox.x_max = std::max(c.bbox.x_max, x);
    c.bbox.y_max = std::max(c.bbox.y_max, y);
    c.pixels.push_back(i);
  }
  std::stable_sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    if (a.bbox.y_min != b.bbox.y_min) return a.bbox.y_min < b.bbox.y_min;
    if (a.bbox.x_min != b.bbox.x_min) return a.bbox.x_min < b.bbox.x_min;
    return a.pixels.front() < b.pixels.front();
  });
  return comps;
}

PanopticPseudoLabel make_panoptic_label(BinaryMask semantic, Provenance provenance,
                                        const PanopticOptions& options) {
  PanopticPseudoLabel label;
  label.provenance = std::move(provenance);
  const int w = semantic.width();
  auto comps = connected_components(semantic, options.connectivity);
  for (auto& c : comps) {
    if (c.pixels.size() < options.min_area) {
      for (std::size_t p : c.pixels) semantic.bits()[p] = 0;
      continue;
    }
    InstanceAnnotation inst{c.bbox, BinaryMask(c.bbox.width(), c.bbox.height()),
                            ClassId::kFlower};
    for (std::size_t p : c.pixels) {
      inst.mask.set(static_cast<int>(p % w) - c.bbox.x_min, static_cast<int>(p / w) - c.bbox.y_min,
                    true);
    }
    label.instances.push_back(std::move(inst));
  }
  label.semantic = std::move(semantic);
  return label;
}

std::vector<PanopticPseudoLabel> to_panoptic(const BinaryMask& semantic, const AngleSet& angles,
                                             const Provenance& provenance,
                                             const PanopticOptions& options) {
  std::vector<PanopticPseudoLabel> out;
  out.reserve(angles.size());
  for (std::size_t j = 0; j < angles.size(); ++j) {
    Provenance p = provenance;
    p.angle = j;
    auto view = rotate(semantic, angles[j]);
    auto label = make_panoptic_label(std::move(view.content), std::move(p), options);
    label.angle = angles[j];
    label.rotations = static_cast<int>(angles.size());
    out.push_back(std::move(label));
  }
  return out;
}

bool satisfies_partition(const PanopticPseudoLabel& label) {
  const BinaryMask& s = label.semantic;
  std::vector<int> cover(s.pixel_count(), 0);
  for (const auto& inst : label.instances) {
    const BoundingBox& b = inst.bbox;
    if (b.x_min < 0 || b.y_min < 0 || b.x_max >= s.width() || b.y_max >= s.height()) return false;
    if (inst.mask.width() != b.width() || inst.mask.height() != b.height()) return false;
    bool top = false, bottom = false, left = false, right = false;
    for (int y = 0; y < b.height(); ++y) {
      for (int x = 0; x < b.width(); ++x) {
        if (!inst.mask.get(x, y)) continue;
        cover[static_cast<std::size_t>(b.y_min + y) * s.width() + (b.x_min + x)] += 1;
        top = top || y == 0;
        bottom = bottom || y == b.height() - 1;
        left = left || x == 0;
        right = right || x == b.width() - 1;
      }
    }
    if (!(top && bottom && left && right)) return false;
  }
  const auto bits = s.bits();
  for (std::size_t i = 0; i < cover.size(); ++i) {
    if (cover[i] != static_cast<int>(bits[i])) return false;
  }
  return true;
}

LabelImage instance_map(const PanopticPseudoLabel& label) {
  if (label.instances.size() > 0xFFFF) {
    throw DataError("pseudolabel", "more than 65535 instances in one label");
  }
  LabelImage out{label.semantic.width(), label.semantic.height(), {}};
  out.values.assign(label.semantic.pixel_count(), 0);
  for (std::size_t k = 0; k < label.instances.size(); ++k) {
    const auto& inst = label.instances[k];
    for (int y = 0; y < inst.bbox.height(); ++y) {
      for (int x = 0; x < inst.bbox.width(); ++x) {
        if (inst.mask.get(x, y)) {
          out.values[static_cast<std::size_t>(inst.bbox.y_min + y) * out.width +
                     (inst.bbox.x_min + x)] = static_cast<std::uint16_t>(k + 1);
        }
      }
    }
  }
  return out;
}

std::string label_dir_name(const Provenance& provenance) {
  return provenance.image_id + "_" + std::to_string(provenance.window) + "_" +
         std::to_string(provenance.angle);
}

void write_label(const PanopticPseudoLabel& label, const fs::path& dir) {
  const std::string name = label_dir_name(label.provenance);
  const fs::path final_dir = dir / name;
  const fs::path tmp_dir = dir / (".tmp-" + name);
  fs::remove_all(tmp_dir);
  fs::create_directories(tmp_dir);

  write_mask(tmp_dir / "semantic.png", label.semantic);
  write_label_image(tmp_dir / "instances.png", instance_map(label));

  nlohmann::ordered_json meta;
  meta["image_id"] = label.provenance.image_id;
  meta["window"] = label.provenance.window;
  meta["angle_index"] = label.provenance.angle;
  meta["iteration"] = label.provenance.iteration;
  meta["angle"] = label.angle;
  meta["rotations"] = label.rotations;
  meta["width"] = label.semantic.width();
  meta["height"] = label.semantic.height();
  meta["instance_count"] = label.instances.size();
  auto& list = meta["instances"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < label.instances.size(); ++k) {
    const auto& b = label.instances[k].bbox;
    list.push_back({{"id", k + 1},
                    {"class", static_cast<int>(label.instances[k].cls)},
                    {"bbox", {b.x_min, b.y_min, b.x_max, b.y_max}},
                    {"area", label.instances[k].mask.count()}});
  }
  std::ofstream(tmp_dir / "meta.json") << meta.dump(2) << '\n';

  fs::remove_all(final_dir);
  fs::rename(tmp_dir, final_dir);
}

void write_labels(const std::vector<PanopticPseudoLabel>& labels, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& l : labels) write_label(l, dir);
}

PanopticPseudoLabel read_label(const fs::path& label_dir) {
  const fs::path meta_path = label_dir / "meta.json";
  std::ifstream in(meta_path);
  if (!in) malformed(meta_path, "meta.json", "missing");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    malformed(meta_path, "meta.json", e.what());
  }
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!meta.contains(name)) malformed(meta_path, name, "missing");
    return meta[name];
  };

  PanopticPseudoLabel label;
  try {
    label.provenance.image_id = field("image_id").get<std::string>();
    label.provenance.window = field("window").get<std::size_t>();
    label.provenance.angle = field("angle_index").get<std::size_t>();
    label.provenance.iteration = field("iteration").get<int>();
    label.angle = field("angle").get<double>();
    label.rotations = field("rotations").get<int>();
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    malformed(meta_path, "provenance", e.what());
  }

  label.semantic = read_mask(label_dir / "semantic.png");
  const LabelImage ids = read_label_image(label_dir / "instances.png");
  if (field("width").get<int>() != label.semantic.width() ||
      field("height").get<int>() != label.semantic.height()) {
    malformed(meta_path, "width/height", "does not match semantic.png");
  }
  if (ids.width != label.semantic.width() || ids.height != label.semantic.height()) {
    malformed(label_dir / "instances.png", "size", "does not match semantic.png");
  }
  const auto& list = field("instances");
  if (!list.is_array() || list.size() != field("instance_count").get<std::size_t>()) {
    malformed(meta_path, "instance_count", "does not match the instance list");
  }
  for (std::size_t k = 0; k < list.size(); ++k) {
    const auto& entry = list[k];
    if (!entry.contains("bbox") || !entry["bbox"].is_array() || entry["bbox"].size() != 4) {
      malformed(meta_path, "instances[" + std::to_string(k) + "].bbox", "expected 4 integers");
    }
    BoundingBox b{entry["bbox"][0].get<int>(), entry["bbox"][1].get<int>(),
                  entry["bbox"][2].get<int>(), entry["bbox"][3].get<int>()};
    if (b.x_min < 0 || b.y_min < 0 || b.x_max >= ids.width || b.y_max >= ids.height ||
        b.width() < 1 || b.height() < 1) {
      malformed(meta_path, "instances[" + std::to_string(k) + "].bbox", "outside the label");
    }
    InstanceAnnotation inst{b, BinaryMask(b.width(), b.height()),
                            static_cast<ClassId>(entry.value("class", 1))};
    for (int y = 0; y < b.height(); ++y) {
      for (int x = 0; x < b.width(); ++x) {
        const auto v =
            ids.values[static_cast<std::size_t>(b.y_min + y) * ids.width + (b.x_min + x)];
        inst.mask.set(x, y, v == k + 1);
      }
    }
    label.instances.push_back(std::move(inst));
  }
  for (auto v : ids.values) {
    if (v > list.size()) malformed(label_dir / "instances.png", "pixel", "unknown instance id");
  }
  if (!satisfies_partition(label)) {
    malformed(label_dir, "instances", "instance masks do not partition the semantic mask");
  }
  return label;
}

std::vector<PanopticPseudoLabel> read_labels(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw DataError("pseudolabel", dir.string() + ": not a label directory");
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && e.path().filename().string().rfind(".tmp-", 0) != 0) {
      dirs.push_back(e.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<PanopticPseudoLabel> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(read_label(d));
  return out;
}

UnlabeledSet::UnlabeledSet(std::shared_ptr<const std::vector<UnlabeledImage>> images,
                           AugmentationPlan plan)
    : images_(std::move(images)), plan_(std::move(plan)), labels_(plan_.size()) {}

UnlabeledItem UnlabeledSet::item(std::size_t index) const {
  const auto key = plan_.key(index);
  const UnlabeledImage& img = (*images_)[key.image];
  return {Provenance{img.id, key.window, key.angle, 0},
          rotate(extract(img.image, plan_.grid(key.image), key.window),
                 plan_.angles()[key.angle]),
          &labels_[index]};
}

void UnlabeledSet::set_label(std::size_t index, PanopticPseudoLabel label) {
  labels_.at(index) = std::move(label);
}

UnlabeledSet build_unlabeled_set(std::vector<UnlabeledImage> images, int window_factor,
                                 int rotations, std::uint64_t seed) {
  std::vector<ImageShape> shapes;
  shapes.reserve(images.size());
  for (const auto& img : images) shapes.push_back({img.image.height(), img.image.width()});
  auto plan = plan_augmentation(shapes, window_factor, rotations, seed);
  return UnlabeledSet(std::make_shared<const std::vector<UnlabeledImage>>(std::move(images)),
                      std::move(plan));
}

}  // namespace pseudoseg
