#pragma once

#include <array>
#include <vector>

#include "pseudoseg/augment.hpp"
#include "pseudoseg/raster.hpp"

namespace pseudoseg {

// Two-class softmax, stabilized by subtracting the max logit.
std::array<double, 2> softmax(double background_logit, double flower_logit);

// Element-wise softmax of a logit map.
ScoreMap softmax(const ScoreMap& logits);

// Model logits for one rotated view of a patch, on that view's canvas.
struct AugmentedPrediction {
  std::size_t angle_index = 0;
  ScoreMap logits;
  BinaryMask validity;
};

struct FusedScoreMap {
  ScoreMap probabilities;
  std::vector<int> support;  // contributing views per pixel, row-major
};

// Reverse-rotates each view's logits, normalizes them with softmax and
// averages over the views that are valid at each pixel. Views are reduced in
// ascending angle index, so the result does not depend on list order.
FusedScoreMap fuse(const std::vector<AugmentedPrediction>& views, const AngleSet& angles,
                   int source_width, int source_height);

}  // namespace pseudoseg
