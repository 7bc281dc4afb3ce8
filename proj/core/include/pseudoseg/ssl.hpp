#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pseudoseg/augment.hpp"
#include "pseudoseg/backend.hpp"
#include "pseudoseg/eval.hpp"
#include "pseudoseg/pseudolabel.hpp"
#include "pseudoseg/rgr.hpp"

namespace pseudoseg {

enum class Variant {
  kSsl,       // pseudo-labels by hard threshold at tau
  kSslRgr,    // pseudo-labels by region growing refinement
  kSslRgrPp,  // as kSslRgr, plus refinement of inference outputs
};

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

enum class RetrainFrom { kPrevious, kInitial };

std::string to_string(RetrainFrom r);
RetrainFrom parse_retrain_from(const std::string& name);

struct SslConfig {
  int window_factor = 4;
  int rotations = 20;
  LossWeights loss;
  RgrParams rgr;
  Variant variant = Variant::kSslRgr;
  int max_iter = 3;
  std::uint64_t seed = 0;
  TrainSchedule schedule;
  RetrainFrom retrain_from = RetrainFrom::kPrevious;
  int tau_steps = 101;
  PanopticOptions panoptic;
  int jobs = 0;  // 0 = available cores

  void validate() const;

  friend bool operator==(const SslConfig&, const SslConfig&) = default;
};

struct SslState {
  int iteration = 0;
  std::string weights_tag;
  double tau = 0.5;
  std::filesystem::path dir;         // runs/{name}/iter-{r}
  std::filesystem::path labels_dir;  // empty when no labels were written
  SslConfig config;
  LossReport loss;
  std::size_t training_samples = 0;
};

// Where a run lives and what gets written as its config snapshot. When
// `snapshot_json` is empty the SslConfig itself is rendered.
struct RunLocation {
  std::filesystem::path run_dir;  // runs/{name}
  std::string snapshot_json;
};

std::filesystem::path iteration_dir(const std::filesystem::path& run_dir, int iteration);

// Trains the initial weights on the augmented labeled set and selects tau on it.
SslState init_supervised(const std::vector<LabeledImage>& labeled, const SslConfig& config,
                         SegmentationBackend& backend, const RunLocation& location);

// One round of pseudo-labeling and retraining. `labeled`, when given, is used
// to reselect tau with the new weights. Throws DataError when r >= max_iter;
// on failure nothing is left under iteration_dir(r + 1).
SslState ssl_iterate(const SslState& state, const std::vector<UnlabeledImage>& unlabeled,
                     SegmentationBackend& backend, const RunLocation& location,
                     const std::vector<LabeledImage>* labeled = nullptr);

// Pseudo-labels for every (image, window, angle) without retraining.
std::vector<PanopticPseudoLabel> generate_pseudo_labels(
    const SslState& state, const std::vector<UnlabeledImage>& unlabeled,
    const SegmentationBackend& backend, int iteration);

// Latest iteration (or the given one) of a run; the backend is loaded with
// its weights. Throws DataError naming the ssl state when none exists.
SslState load_state(const std::filesystem::path& run_dir, SegmentationBackend& backend,
                    std::optional<int> iteration = std::nullopt);
int latest_iteration(const std::filesystem::path& run_dir);

// Threshold with the largest F1; ties go to the larger threshold. Rows with
// precision + recall == 0 are ignored; throws if no row remains.
double select_threshold(const std::vector<PrPoint>& curve);

struct InferResult {
  ScoreMap probabilities;
  BinaryMask mask;
};

struct InferOptions {
  int window_factor = 4;
  double tau = 0.5;
  bool post_process = false;
  RgrParams rgr;
  std::uint64_t seed = 0;
};

// Sliding-window prediction without rotations, soft recomposition, then a
// threshold at tau or region growing refinement.
InferResult infer(const SegmentationBackend& backend, const Raster& image,
                  const InferOptions& options);
InferOptions infer_options(const SslState& state, std::optional<bool> post_process = {});

// Labeled-set PR curve of the current weights (pooled pixels, J = 1).
std::vector<PrPoint> labeled_pr_curve(const SegmentationBackend& backend,
                                      const std::vector<LabeledImage>& labeled,
                                      const SslConfig& config);

// Runs fn(i) for i in [0, n) on up to `jobs` threads (0 = hardware
// concurrency). The first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

std::string render_ssl_config(const SslConfig& config);
SslConfig parse_ssl_config(const std::string& json);

}  // namespace pseudoseg
