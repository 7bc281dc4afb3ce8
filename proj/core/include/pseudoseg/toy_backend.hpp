#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pseudoseg/backend.hpp"
#include "pseudoseg/rng.hpp"

namespace pseudoseg {

// Per-pixel features: RGB, 3x3 mean RGB, 3x3 variance RGB (scaled by 10),
// and x, y normalized to [0, 1].
inline constexpr std::size_t kToyFeatureCount = 11;

void pixel_features(const Raster& image, int x, int y, std::span<double> out);

// Two-class classifier over pixel features: linear when hidden == 0,
// otherwise one tanh hidden layer.
class ToyModel {
 public:
  explicit ToyModel(int hidden = 8);

  int hidden() const noexcept { return hidden_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  void initialize(Rng& rng);

  std::array<double, 2> logits(std::span<const double> features) const;

  // Mean cross-entropy of a batch (row-major, kToyFeatureCount per row).
  // Fills `gradient` (resized to parameter_count()) when non-null.
  double loss_and_gradient(std::span<const double> features, std::span<const int> labels,
                           std::vector<double>* gradient) const;

 private:
  int hidden_;
  std::vector<double> params_;
};

struct ToyConfig {
  int hidden = 8;
  std::uint64_t seed = 0;

  friend bool operator==(const ToyConfig&, const ToyConfig&) = default;
};

// Desk-scale stand-in for a panoptic network: only the semantic branch
// exists, so the instance loss terms are reported as zero.
class ToyBackend : public SegmentationBackend {
 public:
  explicit ToyBackend(ToyConfig config = {});

  std::string name() const override { return "toy"; }
  bool trained() const override { return trained_; }
  ScoreMap predict_logits(const Raster& patch) const override;
  TrainResult train(const TrainingData& data, const TrainSchedule& schedule,
                    const LossWeights& weights) override;
  void save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir) override;
  std::string weights_tag() const override;

  const ToyModel& model() const noexcept { return model_; }
  ToyModel& model() noexcept { return model_; }

 private:
  ToyConfig config_;
  ToyModel model_;
  bool trained_ = false;
};

}  // namespace pseudoseg
