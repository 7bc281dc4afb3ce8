#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pseudoseg/raster.hpp"

namespace pseudoseg {

// 16-bit single-channel raster, used for instance id maps.
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> values;

  friend bool operator==(const LabelImage&, const LabelImage&) = default;
};

// 8-bit PNG color image -> 3-channel raster in [0,1] (value / 255).
// Gray, palette and alpha inputs are converted to RGB.
Raster read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const Raster& image);

// Any nonzero sample is foreground on read; written as 0/255 gray.
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

// Single-channel float plane in [0,1] written as 8-bit gray.
void write_gray(const std::filesystem::path& path, const Raster& plane);

void write_label_image(const std::filesystem::path& path, const LabelImage& labels);
LabelImage read_label_image(const std::filesystem::path& path);

}  // namespace pseudoseg
