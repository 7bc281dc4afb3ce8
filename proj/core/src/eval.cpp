#include "pseudoseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pseudoseg/error.hpp"
#include "pseudoseg/rng.hpp"

namespace pseudoseg {

namespace {

void check_sizes(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DataError("eval", "prediction " + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs ground truth " +
                                std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

BinaryMask boundary(const BinaryMask& m) {
  BinaryMask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m.get(x, y)) continue;
      const bool edge = (x > 0 && !m.get(x - 1, y)) || (x + 1 < m.width() && !m.get(x + 1, y)) ||
                        (y > 0 && !m.get(x, y - 1)) || (y + 1 < m.height() && !m.get(x, y + 1));
      out.set(x, y, edge);
    }
  }
  return out;
}

// Fraction of `from` boundary pixels with a `to` boundary pixel within tolerance.
double matched_fraction(const BinaryMask& from, const BinaryMask& to, double tolerance,
                        std::size_t& total) {
  const int r = static_cast<int>(std::floor(tolerance));
  const double t2 = tolerance * tolerance;
  std::size_t hit = 0;
  total = 0;
  for (int y = 0; y < from.height(); ++y) {
    for (int x = 0; x < from.width(); ++x) {
      if (!from.get(x, y)) continue;
      ++total;
      bool found = false;
      for (int dy = -r; dy <= r && !found; ++dy) {
        for (int dx = -r; dx <= r && !found; ++dx) {
          if (dx * dx + dy * dy > t2) continue;
          found = to.contains(x + dx, y + dy) && to.get(x + dx, y + dy);
        }
      }
      hit += found ? 1 : 0;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

struct SortedScores {
  std::vector<double> positives;  // flower probs at gt-foreground pixels, ascending
  std::vector<double> negatives;  // flower probs at gt-background pixels, ascending
};

SortedScores sort_scores(const ScoreMap& probs, const BinaryMask& gt) {
  if (!probs.is_probability()) throw DataError("eval", "PR curve needs probabilities");
  if (probs.width() != gt.width() || probs.height() != gt.height()) {
    throw DataError("eval", "probability map and ground truth differ in size");
  }
  SortedScores s;
  const auto data = probs.planes().data();
  const auto bits = gt.bits();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    (bits[i] ? s.positives : s.negatives).push_back(static_cast<double>(data[2 * i + 1]));
  }
  std::sort(s.positives.begin(), s.positives.end());
  std::sort(s.negatives.begin(), s.negatives.end());
  return s;
}

std::uint64_t count_at_least(const std::vector<double>& sorted, double t) {
  return static_cast<std::uint64_t>(sorted.end() -
                                    std::lower_bound(sorted.begin(), sorted.end(), t));
}

std::vector<PrPoint> curve_from(const std::vector<SortedScores>& scores,
                                std::span<const double> thresholds) {
  std::vector<double> ts(thresholds.begin(), thresholds.end());
  std::sort(ts.begin(), ts.end());
  std::vector<PrPoint> out;
  for (double t : ts) {
    ConfusionCounts c;
    for (const auto& s : scores) {
      const std::uint64_t tp = count_at_least(s.positives, t);
      const std::uint64_t fp = count_at_least(s.negatives, t);
      c.tp += tp;
      c.fp += fp;
      c.fn += s.positives.size() - tp;
      c.tn += s.negatives.size() - fp;
    }
    if (c.tp + c.fp == 0) continue;
    const PixelMetrics m = metrics_from_counts(c);
    out.push_back({t, m.precision, m.recall});
  }
  return out;
}

}  // namespace

ConfusionCounts count_confusion(const BinaryMask& pred, const BinaryMask& gt) {
  check_sizes(pred, gt);
  ConfusionCounts c;
  const auto p = pred.bits();
  const auto g = gt.bits();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && g[i]) {
      ++c.tp;
    } else if (p[i]) {
      ++c.fp;
    } else if (g[i]) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

PixelMetrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.tp + c.fp + c.fn == 0) return {100.0, 100.0, 100.0, 100.0};
  PixelMetrics m;
  const double tp = static_cast<double>(c.tp);
  m.iou = 100.0 * tp / static_cast<double>(c.tp + c.fp + c.fn);
  m.precision = c.tp + c.fp ? 100.0 * tp / static_cast<double>(c.tp + c.fp) : 0.0;
  m.recall = c.tp + c.fn ? 100.0 * tp / static_cast<double>(c.tp + c.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

PixelMetrics pixel_metrics(const BinaryMask& pred, const BinaryMask& gt) {
  return metrics_from_counts(count_confusion(pred, gt));
}

std::vector<double> threshold_grid(int steps) {
  if (steps < 2) throw DataError("eval", "threshold grid needs at least two steps");
  std::vector<double> out(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) out[i] = static_cast<double>(i) / (steps - 1);
  return out;
}

std::vector<PrPoint> pr_curve(const ScoreMap& probabilities, const BinaryMask& gt,
                              std::span<const double> thresholds) {
  return curve_from({sort_scores(probabilities, gt)}, thresholds);
}

std::vector<PrPoint> pooled_pr_curve(const std::vector<const ScoreMap*>& probabilities,
                                     const std::vector<const BinaryMask*>& gts,
                                     std::span<const double> thresholds) {
  if (probabilities.size() != gts.size()) {
    throw DataError("eval", "probability maps and ground truths differ in count");
  }
  std::vector<SortedScores> scores;
  scores.reserve(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    scores.push_back(sort_scores(*probabilities[i], *gts[i]));
  }
  return curve_from(scores, thresholds);
}

double boundary_f1(const BinaryMask& pred, const BinaryMask& gt, double tolerance) {
  check_sizes(pred, gt);
  const BinaryMask bp = boundary(pred);
  const BinaryMask bg = boundary(gt);
  std::size_t np = 0;
  std::size_t ng = 0;
  const double precision = matched_fraction(bp, bg, tolerance, np);
  const double recall = matched_fraction(bg, bp, tolerance, ng);
  if (np == 0 && ng == 0) return 100.0;
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

FoldPlan make_folds(std::size_t item_count, int k, std::uint64_t seed) {
  if (k < 1 || static_cast<std::size_t>(k) > item_count) {
    throw DataError("eval", "cannot split " + std::to_string(item_count) + " items into " +
                                std::to_string(k) + " folds");
  }
  std::vector<std::size_t> ids(item_count);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x666F6C6473ull}));
  for (std::size_t i = item_count; i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  FoldPlan plan;
  plan.folds.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < ids.size(); ++i) plan.folds[i % k].push_back(ids[i]);
  return plan;
}

HoldoutSplit split_unlabeled(std::size_t item_count, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw DataError("eval", "unlabeled fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> ids(item_count);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x73706C6974ull}));
  for (std::size_t i = item_count; i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  const auto n_unlabeled =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(item_count)));
  HoldoutSplit split;
  split.unlabeled.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_unlabeled));
  split.evaluation.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_unlabeled), ids.end());
  std::sort(split.unlabeled.begin(), split.unlabeled.end());
  std::sort(split.evaluation.begin(), split.evaluation.end());
  return split;
}

void summarize(const std::vector<PixelMetrics>& values, PixelMetrics& mean,
               PixelMetrics& stddev) {
  mean = {};
  stddev = {};
  if (values.empty()) return;
  const double n = static_cast<double>(values.size());
  for (const auto& v : values) {
    mean.iou += v.iou;
    mean.f1 += v.f1;
    mean.recall += v.recall;
    mean.precision += v.precision;
  }
  mean.iou /= n;
  mean.f1 /= n;
  mean.recall /= n;
  mean.precision /= n;
  if (values.size() < 2) return;
  for (const auto& v : values) {
    stddev.iou += (v.iou - mean.iou) * (v.iou - mean.iou);
    stddev.f1 += (v.f1 - mean.f1) * (v.f1 - mean.f1);
    stddev.recall += (v.recall - mean.recall) * (v.recall - mean.recall);
    stddev.precision += (v.precision - mean.precision) * (v.precision - mean.precision);
  }
  stddev.iou = std::sqrt(stddev.iou / (n - 1));
  stddev.f1 = std::sqrt(stddev.f1 / (n - 1));
  stddev.recall = std::sqrt(stddev.recall / (n - 1));
  stddev.precision = std::sqrt(stddev.precision / (n - 1));
}

EvalReport evaluate(const std::string& run_id, const std::vector<EvalItem>& items,
                    Aggregation aggregation) {
  EvalReport report;
  report.run_id = run_id;
  report.aggregation = aggregation;
  ConfusionCounts pooled;
  for (const auto& item : items) {
    const ConfusionCounts c = count_confusion(item.pred, item.gt);
    pooled += c;
    report.image_ids.push_back(item.id);
    report.per_image.push_back(metrics_from_counts(c));
  }
  if (aggregation == Aggregation::kPooled) {
    report.mean = metrics_from_counts(pooled);
    report.stddev = {};
  } else {
    summarize(report.per_image, report.mean, report.stddev);
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  char line[160];
  out << "run: " << report.run_id << '\n';
  std::snprintf(line, sizeof(line), "%-24s %8s %8s %8s %8s\n", "image", "IoU", "F1", "Rcll",
                "Prcn");
  out << line;
  for (std::size_t i = 0; i < report.per_image.size(); ++i) {
    const auto& m = report.per_image[i];
    std::snprintf(line, sizeof(line), "%-24s %8.2f %8.2f %8.2f %8.2f\n",
                  report.image_ids[i].c_str(), m.iou, m.f1, m.recall, m.precision);
    out << line;
  }
  const auto& m = report.mean;
  const auto& s = report.stddev;
  if (report.aggregation == Aggregation::kPooled) {
    std::snprintf(line, sizeof(line), "%-24s %8.2f %8.2f %8.2f %8.2f\n", "pooled", m.iou, m.f1,
                  m.recall, m.precision);
    out << line;
    return out.str();
  }
  std::snprintf(line, sizeof(line), "%-24s %5.1f±%-4.1f %5.1f±%-4.1f %5.1f±%-4.1f %5.1f±%-4.1f\n",
                "mean", m.iou, s.iou, m.f1, s.f1, m.recall, s.recall, m.precision, s.precision);
  out << line;
  return out.str();
}

void write_pr_plot_data(const std::filesystem::path& path, const std::vector<PrPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw DataError("eval", "cannot write " + path.string());
  out << "threshold,precision,recall,f1\n";
  char line[128];
  for (const auto& p : curve) {
    std::snprintf(line, sizeof(line), "%.4f,%.6f,%.6f,%.6f\n", p.threshold, p.precision,
                  p.recall, p.f1());
    out << line;
  }
}

}  // namespace pseudoseg
