#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>

#include "pseudoseg/backend.hpp"

namespace pseudoseg {

struct ExternalConfig {
  // Program launched as `<executable> <request-dir>` for every request. When
  // empty, requests are left for an already-running process to pick up.
  std::filesystem::path executable;
  std::filesystem::path exchange_dir;
  std::chrono::milliseconds timeout{std::chrono::minutes(10)};
  std::chrono::milliseconds poll_interval{5};
};

// Directory handshake with an out-of-process model. For each request the
// orchestrator writes {request}/manifest.json (+ input.btsr for predictions);
// the backend answers with output.btsr or result.json, then creates `done`.
class ExternalBackend : public SegmentationBackend {
 public:
  explicit ExternalBackend(ExternalConfig config);

  std::string name() const override { return "external"; }
  bool trained() const override { return true; }
  ScoreMap predict_logits(const Raster& patch) const override;
  TrainResult train(const TrainingData& data, const TrainSchedule& schedule,
                    const LossWeights& weights) override;
  void save(const std::filesystem::path& dir) const override;
  void load(const std::filesystem::path& dir) override;
  std::string weights_tag() const override { return tag_; }
  bool needs_files() const override { return true; }

  const ExternalConfig& config() const noexcept { return config_; }

 private:
  std::filesystem::path new_request(const std::string& op) const;
  void run_request(const std::filesystem::path& request_dir) const;

  ExternalConfig config_;
  std::string tag_ = "external-initial";
  mutable std::atomic<std::uint64_t> counter_{0};
};

}  // namespace pseudoseg
