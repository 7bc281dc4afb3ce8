#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pseudoseg/raster.hpp"

namespace pseudoseg {

struct LossWeights {
  double lambda = 0.8;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Components of the multi-task loss: classification, box regression,
// instance mask and semantic segmentation.
struct LossReport {
  double classification = 0.0;
  double box = 0.0;
  double mask = 0.0;
  double semantic = 0.0;
  double total = 0.0;
};

// lambda * (Lc + Lb + Lm) + (1 - lambda) * Ls. Throws when lambda is outside
// [0, 1] or a component is negative.
double combine_loss(double classification, double box, double mask, double semantic,
                    double lambda);
LossReport make_loss_report(double classification, double box, double mask, double semantic,
                            double lambda);

struct TrainSchedule {
  int iterations = 20000;
  int batch_size = 512;
  double base_lr = 25e-4;
  std::vector<double> decay_points{0.10, 0.25, 0.50};  // fractions of iterations
  double momentum = 0.9;
  bool frozen_feature_extractor = false;

  void validate() const;

  friend bool operator==(const TrainSchedule&, const TrainSchedule&) = default;
};

// base_lr divided by 10 for every decay point already reached.
double lr_at(const TrainSchedule& schedule, int iteration);

// One training view: pixels outside `valid` carry no supervision.
struct TrainingSample {
  Raster image;
  BinaryMask semantic;
  BinaryMask valid;
};

struct TrainingData {
  std::vector<TrainingSample> samples;
  // On-disk copy for out-of-process backends (label and patch directories).
  std::filesystem::path label_dir;
  std::filesystem::path patch_dir;
};

struct TrainResult {
  std::string weights_tag;
  LossReport loss;
};

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;

  virtual std::string name() const = 0;
  virtual bool trained() const = 0;

  // Two-class logits of the same size as the patch. Deterministic for fixed weights.
  virtual ScoreMap predict_logits(const Raster& patch) const = 0;

  virtual TrainResult train(const TrainingData& data, const TrainSchedule& schedule,
                            const LossWeights& weights) = 0;

  virtual void save(const std::filesystem::path& dir) const = 0;
  virtual void load(const std::filesystem::path& dir) = 0;
  virtual std::string weights_tag() const = 0;

  // Whether train() reads TrainingData::label_dir/patch_dir instead of samples.
  virtual bool needs_files() const { return false; }
};

// Forwards to another backend and counts predict calls.
class CountingBackend : public SegmentationBackend {
 public:
  explicit CountingBackend(SegmentationBackend& inner) : inner_(inner) {}

  std::string name() const override { return inner_.name(); }
  bool trained() const override { return inner_.trained(); }
  ScoreMap predict_logits(const Raster& patch) const override {
    predictions_.fetch_add(1, std::memory_order_relaxed);
    return inner_.predict_logits(patch);
  }
  TrainResult train(const TrainingData& data, const TrainSchedule& schedule,
                    const LossWeights& weights) override {
    return inner_.train(data, schedule, weights);
  }
  void save(const std::filesystem::path& dir) const override { inner_.save(dir); }
  void load(const std::filesystem::path& dir) override { inner_.load(dir); }
  std::string weights_tag() const override { return inner_.weights_tag(); }
  bool needs_files() const override { return inner_.needs_files(); }

  std::size_t predictions() const noexcept { return predictions_.load(); }
  void reset() noexcept { predictions_.store(0); }

 private:
  SegmentationBackend& inner_;
  mutable std::atomic<std::size_t> predictions_{0};
};

// FNV-1a 64 of a byte range, hex encoded; used for weight tags.
std::string fingerprint(std::span<const std::uint8_t> bytes);

}  // namespace pseudoseg
