#pragma once

#include <filesystem>
#include <vector>

#include "pseudoseg/augment.hpp"
#include "pseudoseg/pseudolabel.hpp"

namespace pseudoseg {

// Dataset directories hold images/{id}.png and, when labeled, masks/{id}.png.
void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledImage>& items);
std::vector<LabeledImage> read_labeled_dataset(const std::filesystem::path& dir);
// Reads images/{id}.png when present, otherwise every .png directly in dir.
std::vector<UnlabeledImage> read_unlabeled_dataset(const std::filesystem::path& dir);

}  // namespace pseudoseg
