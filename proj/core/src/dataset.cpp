#include "pseudoseg/dataset.hpp"

#include <algorithm>

#include "pseudoseg/error.hpp"
#include "pseudoseg/image_io.hpp"

namespace pseudoseg {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void write_dataset(const fs::path& dir, const std::vector<LabeledImage>& items) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  for (const auto& item : items) {
    write_rgb(dir / "images" / (item.id + ".png"), item.image);
    write_mask(dir / "masks" / (item.id + ".png"), item.mask);
  }
}

std::vector<LabeledImage> read_labeled_dataset(const fs::path& dir) {
  const auto images = png_files(dir / "images");
  if (images.empty()) {
    throw DataError("dataset", dir.string() + ": no images/*.png found");
  }
  std::vector<LabeledImage> out;
  for (const auto& path : images) {
    const fs::path mask_path = dir / "masks" / path.filename();
    if (!fs::exists(mask_path)) {
      throw DataError("dataset", mask_path.string() + ": missing mask for " + path.string());
    }
    LabeledImage item{path.stem().string(), read_rgb(path), read_mask(mask_path)};
    if (item.image.width() != item.mask.width() || item.image.height() != item.mask.height()) {
      throw DataError("dataset", mask_path.string() + ": mask size differs from image");
    }
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<UnlabeledImage> read_unlabeled_dataset(const fs::path& dir) {
  auto images = png_files(dir / "images");
  if (images.empty()) images = png_files(dir);
  if (images.empty()) throw DataError("dataset", dir.string() + ": no .png images found");
  std::vector<UnlabeledImage> out;
  for (const auto& path : images) out.push_back({path.stem().string(), read_rgb(path)});
  return out;
}

}  // namespace pseudoseg
