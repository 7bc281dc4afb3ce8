#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pseudoseg/raster.hpp"

namespace pseudoseg {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

// All values in percent.
struct PixelMetrics {
  double iou = 0.0;
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

ConfusionCounts count_confusion(const BinaryMask& pred, const BinaryMask& gt);

// Empty prediction and empty ground truth score 100 everywhere; any other
// undefined ratio scores 0.
PixelMetrics metrics_from_counts(const ConfusionCounts& c);
PixelMetrics pixel_metrics(const BinaryMask& pred, const BinaryMask& gt);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;  // percent
  double recall = 0.0;     // percent

  double f1() const noexcept {
    return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
};

// {0.00, 0.01, ..., 1.00} for steps = 101.
std::vector<double> threshold_grid(int steps = 101);

// Precision/recall of to_mask(probs, t) for each t, in ascending threshold
// order. Thresholds that predict no foreground are skipped.
std::vector<PrPoint> pr_curve(const ScoreMap& probabilities, const BinaryMask& gt,
                              std::span<const double> thresholds);

// Pools counts over several (probabilities, gt) pairs before computing P/R.
std::vector<PrPoint> pooled_pr_curve(const std::vector<const ScoreMap*>& probabilities,
                                     const std::vector<const BinaryMask*>& gts,
                                     std::span<const double> thresholds);

// Boundary pixels are foreground pixels with a 4-neighbor in the background.
// A boundary pixel matches when a boundary pixel of the other mask lies within
// `tolerance` (Euclidean) pixels. Percent.
double boundary_f1(const BinaryMask& pred, const BinaryMask& gt, double tolerance = 2.0);

struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;
  double unlabeled_fraction = 0.7;
};

// Seeded shuffle then round-robin assignment into k folds.
FoldPlan make_folds(std::size_t item_count, int k, std::uint64_t seed);

struct HoldoutSplit {
  std::vector<std::size_t> unlabeled;
  std::vector<std::size_t> evaluation;
};

// round(fraction * n) items go to the unlabeled pool.
HoldoutSplit split_unlabeled(std::size_t item_count, double fraction, std::uint64_t seed);

enum class Aggregation {
  kPerImage,  // metrics per image, then mean and sample std-dev across images
  kPooled,    // pixel counts pooled across all images
};

struct EvalReport {
  std::string run_id;
  std::vector<std::string> image_ids;
  std::vector<PixelMetrics> per_image;
  PixelMetrics mean;    // pooled metrics when aggregation is kPooled
  PixelMetrics stddev;  // zero when pooled
  Aggregation aggregation = Aggregation::kPerImage;
};

struct EvalItem {
  std::string id;
  BinaryMask pred;
  BinaryMask gt;
};

EvalReport evaluate(const std::string& run_id, const std::vector<EvalItem>& items,
                    Aggregation aggregation = Aggregation::kPerImage);

// Mean and sample standard deviation (n - 1; 0 for a single value).
void summarize(const std::vector<PixelMetrics>& values, PixelMetrics& mean, PixelMetrics& stddev);

std::string format_report(const EvalReport& report);

// CSV with columns threshold,precision,recall,f1.
void write_pr_plot_data(const std::filesystem::path& path, const std::vector<PrPoint>& curve);

}  // namespace pseudoseg
