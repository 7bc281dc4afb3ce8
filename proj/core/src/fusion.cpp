#include "pseudoseg/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pseudoseg/error.hpp"

namespace pseudoseg {

std::array<double, 2> softmax(double background_logit, double flower_logit) {
  const double m = std::max(background_logit, flower_logit);
  const double eb = std::exp(background_logit - m);
  const double ef = std::exp(flower_logit - m);
  const double z = eb + ef;
  return {eb / z, ef / z};
}

ScoreMap softmax(const ScoreMap& logits) {
  if (logits.is_probability()) throw DataError("fusion", "softmax expects a logit map");
  ScoreMap out(logits.width(), logits.height(), ScoreKind::kProbabilities);
  const auto in = logits.planes().data();
  auto dst = out.planes().data();
  for (std::size_t i = 0; i < in.size(); i += 2) {
    const auto p = softmax(in[i], in[i + 1]);
    dst[i] = static_cast<float>(p[0]);
    dst[i + 1] = static_cast<float>(p[1]);
  }
  return out;
}

FusedScoreMap fuse(const std::vector<AugmentedPrediction>& views, const AngleSet& angles,
                   int source_width, int source_height) {
  if (views.empty()) throw DataError("fusion", "no views to fuse");
  std::vector<const AugmentedPrediction*> ordered(angles.size(), nullptr);
  for (const auto& v : views) {
    if (v.angle_index >= angles.size()) {
      throw DataError("fusion", "view angle index " + std::to_string(v.angle_index) +
                                    " outside the angle set");
    }
    if (ordered[v.angle_index]) {
      throw DataError("fusion", "two views for angle index " + std::to_string(v.angle_index));
    }
    if (v.logits.is_probability()) throw DataError("fusion", "views must carry logits");
    ordered[v.angle_index] = &v;
  }

  const std::size_t n =
      static_cast<std::size_t>(source_width) * static_cast<std::size_t>(source_height);
  std::vector<double> sum_bg(n, 0.0);
  std::vector<double> sum_fg(n, 0.0);
  FusedScoreMap out{ScoreMap(source_width, source_height, ScoreKind::kProbabilities),
                    std::vector<int>(n, 0)};

  for (const AugmentedPrediction* v : ordered) {
    if (!v) continue;
    RotatedView<ScoreMap> view{angles[v->angle_index], v->logits, v->validity, source_width,
                               source_height};
    const Unrotated<ScoreMap> back = unrotate(view);
    const auto data = back.content.planes().data();
    const auto valid = back.validity.bits();
    for (std::size_t i = 0; i < n; ++i) {
      if (!valid[i]) continue;
      const auto p = softmax(data[2 * i], data[2 * i + 1]);
      sum_bg[i] += p[0];
      sum_fg[i] += p[1];
      out.support[i] += 1;
    }
  }

  auto dst = out.probabilities.planes().data();
  for (std::size_t i = 0; i < n; ++i) {
    if (out.support[i] == 0) {
      throw DataError("fusion", "pixel " + std::to_string(i) + " has no valid view");
    }
    const double z = sum_bg[i] + sum_fg[i];
    dst[2 * i] = static_cast<float>(sum_bg[i] / z);
    dst[2 * i + 1] = static_cast<float>(sum_fg[i] / z);
  }
  return out;
}

}  // namespace pseudoseg
