#include "pseudoseg/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pseudoseg/error.hpp"

namespace pseudoseg {

namespace {

void check_dims(int width, int height, int channels) {
  if (width < 0 || height < 0 || channels < 1 || channels > 4) {
    throw DataError("raster", "invalid raster dimensions " + std::to_string(width) + "x" +
                                  std::to_string(height) + "x" + std::to_string(channels));
  }
}

}  // namespace

Raster::Raster(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  check_dims(width, height, channels);
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

Raster::Raster(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  check_dims(width, height, channels);
  if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
    throw DataError("raster", "data length does not match width x height x channels");
  }
}

Raster Raster::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width_ || y0 + h > height_) {
    throw DataError("raster", "crop window outside raster");
  }
  Raster out(w, h, channels_);
  const std::size_t row = static_cast<std::size_t>(w) * channels_;
  for (int y = 0; y < h; ++y) {
    const float* src = &data_[index(x0, y0 + y, 0)];
    std::copy(src, src + row, &out.data_[out.index(0, y, 0)]);
  }
  return out;
}

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw DataError("raster", "invalid mask dimensions");
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
               fill ? 1 : 0);
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width_ || y0 + h > height_) {
    throw DataError("raster", "crop window outside mask");
  }
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    const auto* src = &bits_[index(x0, y0 + y)];
    std::copy(src, src + w, &out.bits_[out.index(0, y)]);
  }
  return out;
}

ScoreMap::ScoreMap(int width, int height, ScoreKind kind)
    : planes_(width, height, kNumClasses), kind_(kind) {}

ScoreMap::ScoreMap(Raster planes, ScoreKind kind) : planes_(std::move(planes)), kind_(kind) {
  if (planes_.channels() != kNumClasses) {
    throw DataError("raster", "score map needs exactly two class planes");
  }
}

ScoreMap ScoreMap::from_flower_probabilities(int width, int height,
                                             std::span<const float> flower) {
  if (flower.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw DataError("raster", "flower plane size mismatch");
  }
  ScoreMap out(width, height, ScoreKind::kProbabilities);
  auto data = out.planes_.data();
  for (std::size_t i = 0; i < flower.size(); ++i) {
    data[2 * i] = 1.0f - flower[i];
    data[2 * i + 1] = flower[i];
  }
  return out;
}

Sample bilinear_sample(const Raster& r, double x, double y) {
  Sample s;
  constexpr double kEps = 1e-9;
  const double xmax = r.width() - 1;
  const double ymax = r.height() - 1;
  if (r.empty() || !(x >= -kEps && y >= -kEps && x <= xmax + kEps && y <= ymax + kEps)) {
    return s;
  }
  x = std::clamp(x, 0.0, xmax);
  y = std::clamp(y, 0.0, ymax);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, r.width() - 1);
  const int y1 = std::min(y0 + 1, r.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  for (int c = 0; c < r.channels(); ++c) {
    const double top = (1.0 - fx) * r.at(x0, y0, c) + fx * r.at(x1, y0, c);
    const double bottom = (1.0 - fx) * r.at(x0, y1, c) + fx * r.at(x1, y1, c);
    s.values[c] = static_cast<float>((1.0 - fy) * top + fy * bottom);
  }
  s.valid = true;
  return s;
}

BinaryMask to_mask(const ScoreMap& probabilities, double threshold) {
  if (!probabilities.is_probability()) {
    throw DataError("raster", "to_mask requires a probability score map, got logits");
  }
  BinaryMask out(probabilities.width(), probabilities.height());
  auto bits = out.bits();
  const auto data = probabilities.planes().data();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    bits[i] = static_cast<double>(data[2 * i + 1]) >= threshold ? 1 : 0;
  }
  return out;
}

}  // namespace pseudoseg
