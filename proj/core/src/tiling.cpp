#include "pseudoseg/tiling.hpp"

#include <algorithm>
#include <string>

#include "pseudoseg/error.hpp"

namespace pseudoseg {

namespace {

std::vector<int> axis_origins(int extent, int patch, int stride, int count) {
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[i] = std::min(i * stride, extent - patch);
  out.back() = extent - patch;
  return out;
}

void check_index(const WindowGrid& grid, std::size_t index) {
  if (index >= grid.size()) {
    throw DataError("tiling", "window index " + std::to_string(index) + " out of range (" +
                                  std::to_string(grid.size()) + " windows)");
  }
}

void check_image(const WindowGrid& grid, int width, int height) {
  if (width != grid.cols || height != grid.rows) {
    throw DataError("tiling", "image size does not match the window grid");
  }
}

}  // namespace

WindowGrid plan_grid(int rows, int cols, int window_factor) {
  if (window_factor < 1) throw DataError("tiling", "window factor K must be >= 1");
  WindowGrid g;
  g.rows = rows;
  g.cols = cols;
  g.window_factor = window_factor;
  g.patch_rows = rows / window_factor;
  g.patch_cols = cols / window_factor;
  if (g.patch_rows < 2 || g.patch_cols < 2) {
    throw DataError("tiling", "degenerate patch size " + std::to_string(g.patch_rows) + "x" +
                                  std::to_string(g.patch_cols) + " for image " +
                                  std::to_string(rows) + "x" + std::to_string(cols) +
                                  " and K=" + std::to_string(window_factor));
  }
  g.stride_rows = (g.patch_rows + 1) / 2;
  g.stride_cols = (g.patch_cols + 1) / 2;
  g.windows_per_axis = 2 * window_factor - 1;

  const auto row_origins = axis_origins(rows, g.patch_rows, g.stride_rows, g.windows_per_axis);
  const auto col_origins = axis_origins(cols, g.patch_cols, g.stride_cols, g.windows_per_axis);
  g.origins.reserve(windows_for_factor(window_factor));
  for (int r : row_origins) {
    for (int c : col_origins) g.origins.push_back({r, c});
  }
  return g;
}

Raster extract(const Raster& image, const WindowGrid& grid, std::size_t index) {
  check_index(grid, index);
  check_image(grid, image.width(), image.height());
  const auto& o = grid.origins[index];
  return image.crop(o.col, o.row, grid.patch_cols, grid.patch_rows);
}

BinaryMask extract(const BinaryMask& mask, const WindowGrid& grid, std::size_t index) {
  check_index(grid, index);
  check_image(grid, mask.width(), mask.height());
  const auto& o = grid.origins[index];
  return mask.crop(o.col, o.row, grid.patch_cols, grid.patch_rows);
}

ScoreMap recompose(const std::vector<PatchScores>& patches, const WindowGrid& grid,
                   VoteMode mode) {
  if (patches.size() != grid.size()) {
    throw DataError("tiling", "expected " + std::to_string(grid.size()) +
                                  " patch score maps, got " + std::to_string(patches.size()));
  }
  std::vector<bool> seen(grid.size(), false);
  for (const auto& p : patches) {
    check_index(grid, p.index);
    if (seen[p.index]) {
      throw DataError("tiling", "duplicate patch index " + std::to_string(p.index));
    }
    seen[p.index] = true;
    if (p.probabilities.width() != grid.patch_cols || p.probabilities.height() != grid.patch_rows) {
      throw DataError("tiling", "patch " + std::to_string(p.index) + " has the wrong size");
    }
    if (!p.probabilities.is_probability()) {
      throw DataError("tiling", "recompose requires probability maps");
    }
  }

  const std::size_t n = static_cast<std::size_t>(grid.rows) * static_cast<std::size_t>(grid.cols);
  std::vector<double> flower_sum(n, 0.0);
  std::vector<double> background_sum(n, 0.0);
  std::vector<int> count(n, 0);
  std::vector<int> flower_votes(n, 0);

  // Accumulate in ascending window index for a fixed summation order.
  std::vector<const PatchScores*> ordered(grid.size());
  for (const auto& p : patches) ordered[p.index] = &p;

  for (const PatchScores* p : ordered) {
    const auto& o = grid.origins[p->index];
    for (int y = 0; y < grid.patch_rows; ++y) {
      for (int x = 0; x < grid.patch_cols; ++x) {
        const std::size_t i = static_cast<std::size_t>(o.row + y) * grid.cols + (o.col + x);
        const float fg = p->probabilities.at(x, y, ClassId::kFlower);
        const float bg = p->probabilities.at(x, y, ClassId::kBackground);
        flower_sum[i] += fg;
        background_sum[i] += bg;
        count[i] += 1;
        if (fg > bg) flower_votes[i] += 1;
      }
    }
  }

  ScoreMap out(grid.cols, grid.rows, ScoreKind::kProbabilities);
  auto data = out.planes().data();
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == VoteMode::kSoft) {
      data[2 * i + 1] = static_cast<float>(flower_sum[i] / count[i]);
      data[2 * i] = static_cast<float>(background_sum[i] / count[i]);
    } else {
      const bool fg = 2 * flower_votes[i] > count[i];
      data[2 * i + 1] = fg ? 1.0f : 0.0f;
      data[2 * i] = fg ? 0.0f : 1.0f;
    }
  }
  return out;
}

std::vector<int> coverage_counts(const WindowGrid& grid) {
  std::vector<int> count(static_cast<std::size_t>(grid.rows) * grid.cols, 0);
  for (const auto& o : grid.origins) {
    for (int y = 0; y < grid.patch_rows; ++y) {
      for (int x = 0; x < grid.patch_cols; ++x) {
        count[static_cast<std::size_t>(o.row + y) * grid.cols + (o.col + x)] += 1;
      }
    }
  }
  return count;
}

}  // namespace pseudoseg
