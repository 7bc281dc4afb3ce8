#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/toy_backend.hpp"

namespace pseudoseg {
namespace {

using testing::TempDir;

TEST(CombineLossTest, Examples) {
  EXPECT_EQ(combine_loss(1, 1, 1, 7, 1.0), 3.0);
  EXPECT_EQ(combine_loss(5, 5, 5, 2, 0.0), 2.0);
  EXPECT_EQ(combine_loss(1, 1, 1, 1, 0.8), 2.6);
}

TEST(CombineLossTest, WeightedSumAndLinearity) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    const double c = rng.uniform(0, 5), b = rng.uniform(0, 5), m = rng.uniform(0, 5),
                 s = rng.uniform(0, 5), l = rng.uniform();
    const double total = combine_loss(c, b, m, s, l);
    EXPECT_NEAR(total, l * (c + b + m) + (1 - l) * s, 1e-12);
    // Doubling one component adds exactly its weighted value once more.
    EXPECT_NEAR(combine_loss(2 * c, b, m, s, l) - total, l * c, 1e-12);
    EXPECT_NEAR(combine_loss(c, b, m, 2 * s, l) - total, (1 - l) * s, 1e-12);
  }
}

TEST(CombineLossTest, Rejects) {
  EXPECT_THROW(combine_loss(1, 1, 1, 1, 1.5), DataError);
  EXPECT_THROW(combine_loss(1, 1, 1, 1, -0.1), DataError);
  EXPECT_THROW(combine_loss(-1, 1, 1, 1, 0.5), DataError);
  const LossReport r = make_loss_report(0, 0, 0, 0.5, 0.8);
  EXPECT_NEAR(r.total, 0.1, 1e-15);
  EXPECT_EQ(r.semantic, 0.5);
}

TEST(ScheduleTest, LearningRateSteps) {
  const TrainSchedule s;
  EXPECT_EQ(lr_at(s, 0), 25e-4);
  EXPECT_EQ(lr_at(s, 1999), 25e-4);
  EXPECT_EQ(lr_at(s, 2000), 25e-5);
  EXPECT_EQ(lr_at(s, 4999), 25e-5);
  EXPECT_EQ(lr_at(s, 5000), 25e-6);
  EXPECT_EQ(lr_at(s, 10000), 25e-7);
  EXPECT_EQ(lr_at(s, 12000), 25e-7);
  EXPECT_EQ(lr_at(s, 19999), 25e-7);
  EXPECT_THROW(lr_at(s, 20000), DataError);
  EXPECT_THROW(lr_at(s, -1), DataError);
}

TEST(ScheduleTest, NonIncreasingWithThreeDrops) {
  TrainSchedule s;
  s.iterations = 997;
  int drops = 0;
  for (int i = 1; i < s.iterations; ++i) {
    ASSERT_LE(lr_at(s, i), lr_at(s, i - 1));
    drops += lr_at(s, i) < lr_at(s, i - 1);
  }
  EXPECT_EQ(drops, 3);
}

TEST(ScheduleTest, Validation) {
  TrainSchedule s;
  s.decay_points = {0.5, 0.25};
  EXPECT_THROW(s.validate(), DataError);
  s = {};
  s.decay_points = {0.1, 1.0};
  EXPECT_THROW(s.validate(), DataError);
  s = {};
  s.batch_size = 0;
  EXPECT_THROW(s.validate(), DataError);
  s = {};
  s.momentum = 1.0;
  EXPECT_THROW(s.validate(), DataError);
}

double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a) + std::abs(b), 1e-8);
  return std::abs(a - b) / scale;
}

void gradient_check(int hidden) {
  ToyModel model(hidden);
  Rng rng(17);
  model.initialize(rng);
  const std::size_t n = 32;
  std::vector<double> features(n * kToyFeatureCount);
  std::vector<int> labels(n);
  for (double& f : features) f = rng.uniform(-1, 1);
  for (int& l : labels) l = static_cast<int>(rng.below(2));
  std::vector<double> grad;
  model.loss_and_gradient(features, labels, &grad);
  auto params = model.parameters();
  for (int t = 0; t < 10; ++t) {
    const std::size_t k = rng.below(params.size());
    const double saved = params[k];
    const double h = 1e-5;
    params[k] = saved + h;
    const double up = model.loss_and_gradient(features, labels, nullptr);
    params[k] = saved - h;
    const double down = model.loss_and_gradient(features, labels, nullptr);
    params[k] = saved;
    const double numeric = (up - down) / (2 * h);
    EXPECT_LE(relative_error(grad[k], numeric), 1e-4)
        << "coordinate " << k << ": analytic " << grad[k] << " numeric " << numeric;
  }
}

TEST(ToyModelTest, GradientMatchesFiniteDifferences) {
  gradient_check(8);
  gradient_check(0);
}

TEST(ToyModelTest, FeatureLayout) {
  Raster img(3, 3, 3, 0.0f);
  img.at(1, 1, 0) = 0.9f;
  std::array<double, kToyFeatureCount> f{};
  pixel_features(img, 1, 1, f);
  EXPECT_NEAR(f[0], 0.9, 1e-6);
  EXPECT_NEAR(f[3], 0.1, 1e-6);
  EXPECT_EQ(f[9], 0.5);
  EXPECT_EQ(f[10], 0.5);
}

// Flower pixels are magenta, background green: separable by color alone.
TrainingSample separable_sample(int w, int h, Rng& rng) {
  TrainingSample s{Raster(w, h, 3), BinaryMask(w, h), BinaryMask(w, h, true)};
  const int cx = static_cast<int>(rng.below(w));
  const int cy = static_cast<int>(rng.below(h));
  const int r = 4 + static_cast<int>(rng.below(6));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool fg = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
      s.semantic.set(x, y, fg);
      const float jitter = static_cast<float>(rng.uniform(-0.05, 0.05));
      s.image.at(x, y, 0) = (fg ? 0.9f : 0.25f) + jitter;
      s.image.at(x, y, 1) = (fg ? 0.3f : 0.5f) + jitter;
      s.image.at(x, y, 2) = (fg ? 0.8f : 0.2f) + jitter;
    }
  }
  return s;
}

TrainSchedule quick_schedule(int iterations) {
  TrainSchedule s;
  s.iterations = iterations;
  s.batch_size = 256;
  s.base_lr = 0.05;
  return s;
}

TEST(ToyBackendTest, LearnsSeparableColors) {
  Rng rng(1);
  TrainingData data;
  for (int i = 0; i < 6; ++i) data.samples.push_back(separable_sample(32, 32, rng));
  ToyBackend backend(ToyConfig{8, 5});
  EXPECT_FALSE(backend.trained());
  const TrainResult r = backend.train(data, quick_schedule(2000), LossWeights{});
  EXPECT_TRUE(backend.trained());
  EXPECT_EQ(r.loss.classification, 0.0);
  EXPECT_EQ(r.loss.box, 0.0);
  EXPECT_EQ(r.loss.mask, 0.0);
  EXPECT_NEAR(r.loss.total, 0.2 * r.loss.semantic, 1e-15);

  std::size_t correct = 0;
  std::size_t total = 0;
  for (int i = 0; i < 4; ++i) {
    const TrainingSample test = separable_sample(40, 24, rng);
    const ScoreMap logits = backend.predict_logits(test.image);
    ASSERT_EQ(logits.width(), 40);
    ASSERT_EQ(logits.height(), 24);
    EXPECT_FALSE(logits.is_probability());
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 40; ++x) {
        const bool fg = logits.flower(x, y) > logits.at(x, y, ClassId::kBackground);
        correct += fg == test.semantic.get(x, y);
        ++total;
      }
    }
  }
  EXPECT_GE(static_cast<double>(correct) / total, 0.95);
}

TEST(ToyBackendTest, DeterministicAndRoundTrips) {
  Rng rng(2);
  TrainingData data;
  for (int i = 0; i < 3; ++i) data.samples.push_back(separable_sample(16, 16, rng));
  ToyBackend a(ToyConfig{4, 9});
  ToyBackend b(ToyConfig{4, 9});
  a.train(data, quick_schedule(50), {});
  b.train(data, quick_schedule(50), {});
  EXPECT_EQ(a.weights_tag(), b.weights_tag());
  EXPECT_TRUE(std::equal(a.model().parameters().begin(), a.model().parameters().end(),
                         b.model().parameters().begin()));

  TempDir tmp("toy");
  a.save(tmp.path());
  ToyBackend c;
  c.load(tmp.path());
  EXPECT_EQ(c.weights_tag(), a.weights_tag());
  EXPECT_EQ(c.model().hidden(), 4);
  const Raster probe = data.samples[0].image;
  EXPECT_EQ(c.predict_logits(probe), a.predict_logits(probe));

  ToyBackend d(ToyConfig{4, 10});
  d.train(data, quick_schedule(50), {});
  EXPECT_NE(d.weights_tag(), a.weights_tag());
}

TEST(ToyBackendTest, ArgmaxInvariantUnderPositiveScaling) {
  Rng rng(3);
  TrainingData data{{separable_sample(20, 20, rng)}, {}, {}};
  ToyBackend backend(ToyConfig{8, 1});
  backend.train(data, quick_schedule(100), {});
  const ScoreMap logits = backend.predict_logits(separable_sample(20, 20, rng).image);
  for (double c : {1e-3, 0.5, 3.0, 1e3}) {
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 20; ++x) {
        const double bg = logits.at(x, y, ClassId::kBackground);
        const double fg = logits.flower(x, y);
        EXPECT_EQ(c * fg > c * bg, fg > bg);
      }
    }
  }
}

TEST(ToyBackendTest, Errors) {
  ToyBackend backend;
  EXPECT_THROW(backend.predict_logits(Raster(4, 4, 3)), BackendError);
  TempDir tmp("toy-err");
  EXPECT_THROW(backend.save(tmp.path()), BackendError);
  EXPECT_THROW(backend.load(tmp.path()), BackendError);
  TrainingData empty{{{Raster(4, 4, 3), BinaryMask(4, 4), BinaryMask(4, 4, false)}}, {}, {}};
  EXPECT_THROW(backend.train(empty, quick_schedule(10), {}), BackendError);
  TrainingData bad{{{Raster(4, 4, 3), BinaryMask(3, 4), BinaryMask(4, 4, true)}}, {}, {}};
  EXPECT_THROW(backend.train(bad, quick_schedule(10), {}), DataError);
  TrainingData diverge{{{Raster(4, 4, 3, 1.0f), BinaryMask(4, 4, true), BinaryMask(4, 4, true)}},
                       {}, {}};
  diverge.samples[0].semantic.set(0, 0, false);
  TrainSchedule wild = quick_schedule(200);
  wild.base_lr = std::numeric_limits<double>::max();
  try {
    ToyBackend(ToyConfig{0, 0}).train(diverge, wild, {});
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos) << e.what();
  }
}

TEST(CountingBackendTest, CountsPredictions) {
  Rng rng(4);
  TrainingData data{{separable_sample(8, 8, rng)}, {}, {}};
  ToyBackend inner(ToyConfig{2, 0});
  CountingBackend counting(inner);
  counting.train(data, quick_schedule(5), {});
  for (int i = 0; i < 7; ++i) counting.predict_logits(data.samples[0].image);
  EXPECT_EQ(counting.predictions(), 7u);
  counting.reset();
  EXPECT_EQ(counting.predictions(), 0u);
  EXPECT_EQ(counting.weights_tag(), inner.weights_tag());
}

TEST(FingerprintTest, StableAndSensitive) {
  const std::vector<std::uint8_t> a{1, 2, 3};
  const std::vector<std::uint8_t> b{1, 2, 4};
  EXPECT_EQ(fingerprint(a), fingerprint(a));
  EXPECT_NE(fingerprint(a), fingerprint(b));
  // FNV-1a 64 of the empty input is the offset basis.
  EXPECT_EQ(fingerprint({}), "cbf29ce484222325");
}

}  // namespace
}  // namespace pseudoseg
