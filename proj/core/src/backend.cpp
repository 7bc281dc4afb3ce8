#include "pseudoseg/backend.hpp"

#include <cmath>
#include <cstdio>

#include "pseudoseg/error.hpp"

namespace pseudoseg {

double combine_loss(double classification, double box, double mask, double semantic,
                    double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DataError("backend", "loss weight lambda must lie in [0, 1]");
  }
  if (classification < 0 || box < 0 || mask < 0 || semantic < 0) {
    throw DataError("backend", "loss components must be non-negative");
  }
  // Same value as lambda * instance + (1 - lambda) * semantic, arranged so
  // that lambda in {0, 1} returns a single term exactly.
  const double instance = classification + box + mask;
  return semantic + lambda * (instance - semantic);
}

LossReport make_loss_report(double classification, double box, double mask, double semantic,
                            double lambda) {
  return {classification, box, mask, semantic,
          combine_loss(classification, box, mask, semantic, lambda)};
}

void TrainSchedule::validate() const {
  if (iterations < 1) throw DataError("backend", "schedule needs at least one iteration");
  if (batch_size < 1) throw DataError("backend", "batch size must be >= 1");
  if (!(base_lr > 0.0)) throw DataError("backend", "base learning rate must be positive");
  double prev = 0.0;
  for (double p : decay_points) {
    if (!(p > prev && p < 1.0)) {
      throw DataError("backend", "decay points must be strictly increasing within (0, 1)");
    }
    prev = p;
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw DataError("backend", "momentum must lie in [0, 1)");
  }
}

double lr_at(const TrainSchedule& schedule, int iteration) {
  if (iteration < 0 || iteration >= schedule.iterations) {
    throw DataError("backend", "iteration " + std::to_string(iteration) +
                                   " outside schedule of " +
                                   std::to_string(schedule.iterations));
  }
  double lr = schedule.base_lr;
  for (double p : schedule.decay_points) {
    if (static_cast<double>(iteration) >= p * schedule.iterations) lr /= 10.0;
  }
  return lr;
}

std::string fingerprint(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pseudoseg
