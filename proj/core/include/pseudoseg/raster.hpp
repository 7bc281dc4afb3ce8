#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace pseudoseg {

// Two-class problem: background is the stuff class, flower the thing class.
enum class ClassId : std::uint8_t { kBackground = 0, kFlower = 1 };

inline constexpr int kNumClasses = 2;

// Row-major pixel grid, origin top-left, x to the right, y downward.
// Channels are interleaved. Color images hold values in [0, 1].
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels, float fill = 0.0f);
  Raster(int width, int height, int channels, std::vector<float> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return data_.empty(); }

  float at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }
  float& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  bool same_geometry(const Raster& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  // Copy of the w x h window with top-left (x0, y0); must lie inside.
  Raster crop(int x0, int y0, int w, int h) const;

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return bits_.size(); }

  bool get(int x, int y) const noexcept { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v) noexcept { bits_[index(x, y)] = v ? 1 : 0; }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::size_t count() const noexcept;

  // One byte per pixel, 0 or 1.
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::span<std::uint8_t> bits() noexcept { return bits_; }

  BinaryMask crop(int x0, int y0, int w, int h) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

enum class ScoreKind { kLogits, kProbabilities };

// Per-class planes for the two classes, stored as a 2-channel raster.
// Probability maps sum to one per pixel; logit maps are unconstrained.
class ScoreMap {
 public:
  ScoreMap() = default;
  ScoreMap(int width, int height, ScoreKind kind);
  ScoreMap(Raster planes, ScoreKind kind);

  int width() const noexcept { return planes_.width(); }
  int height() const noexcept { return planes_.height(); }
  ScoreKind kind() const noexcept { return kind_; }
  bool is_probability() const noexcept { return kind_ == ScoreKind::kProbabilities; }

  float at(int x, int y, ClassId c) const noexcept {
    return planes_.at(x, y, static_cast<int>(c));
  }
  float& at(int x, int y, ClassId c) noexcept { return planes_.at(x, y, static_cast<int>(c)); }

  float flower(int x, int y) const noexcept { return at(x, y, ClassId::kFlower); }

  const Raster& planes() const noexcept { return planes_; }
  Raster& planes() noexcept { return planes_; }

  // Probability map with the given flower plane and background = 1 - flower.
  static ScoreMap from_flower_probabilities(int width, int height,
                                            std::span<const float> flower);

  friend bool operator==(const ScoreMap&, const ScoreMap&) = default;

 private:
  Raster planes_;
  ScoreKind kind_ = ScoreKind::kProbabilities;
};

struct Sample {
  std::array<float, 4> values{};
  bool valid = false;
};

// Bilinear interpolation of the four pixels around (x, y). Outside
// [0, width-1] x [0, height-1] the sample is invalid and all values are 0.
Sample bilinear_sample(const Raster& r, double x, double y);

// Foreground iff flower probability >= threshold. Rejects logit maps.
BinaryMask to_mask(const ScoreMap& probabilities, double threshold);

}  // namespace pseudoseg
