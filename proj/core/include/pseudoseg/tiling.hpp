#pragma once

#include <utility>
#include <vector>

#include "pseudoseg/raster.hpp"

namespace pseudoseg {

struct WindowOrigin {
  int row = 0;
  int col = 0;
  friend bool operator==(const WindowOrigin&, const WindowOrigin&) = default;
};

// Sliding-window decomposition of an M x N image into (2K-1)^2 overlapping
// m x n patches with half-patch stride.
struct WindowGrid {
  int rows = 0;            // M
  int cols = 0;            // N
  int window_factor = 1;   // K
  int patch_rows = 0;      // m = floor(M / K)
  int patch_cols = 0;      // n = floor(N / K)
  int stride_rows = 0;     // p = ceil(m / 2)
  int stride_cols = 0;     // q = ceil(n / 2)
  int windows_per_axis = 1;  // 2K - 1
  std::vector<WindowOrigin> origins;  // row-major over (row window, col window)

  std::size_t size() const noexcept { return origins.size(); }
};

// Patch count (2K-1)^2 without building the grid.
constexpr std::size_t windows_for_factor(int k) {
  const auto per_axis = static_cast<std::size_t>(2 * k - 1);
  return per_axis * per_axis;
}

// Origins are (r * p, c * q); the last window on each axis is placed flush
// with the image edge so every pixel is covered even when M or N is not a
// multiple of K.
WindowGrid plan_grid(int rows, int cols, int window_factor);

Raster extract(const Raster& image, const WindowGrid& grid, std::size_t index);
BinaryMask extract(const BinaryMask& mask, const WindowGrid& grid, std::size_t index);

enum class VoteMode {
  kSoft,  // mean of probability vectors
  kHard,  // strict majority of per-window argmax votes, ties -> background
};

struct PatchScores {
  std::size_t index = 0;
  ScoreMap probabilities;
};

// Combines per-window probability maps into a full-image probability map.
ScoreMap recompose(const std::vector<PatchScores>& patches, const WindowGrid& grid,
                   VoteMode mode = VoteMode::kSoft);

// Number of windows covering each pixel, row-major.
std::vector<int> coverage_counts(const WindowGrid& grid);

}  // namespace pseudoseg
