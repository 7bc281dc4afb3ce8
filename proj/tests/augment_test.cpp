#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pseudoseg/augment.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/image_io.hpp"

namespace pseudoseg {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(AngleSamplingTest, SingleAngleIsIdentity) {
  const AngleSet a = sample_angles(1, 3);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0], 0.0);
}

TEST(AngleSamplingTest, SixAnglesOnePerSector) {
  const AngleSet a = sample_angles(6, 9);
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(a[0], 0.0);
  const SectorConfig sectors;
  for (std::size_t j = 1; j < 6; ++j) {
    EXPECT_TRUE(in_sector(a[j], (kPi / 2) * static_cast<double>(j - 1), kPi / 5)) << j;
    EXPECT_GE(a[j], 0.0);
    EXPECT_LT(a[j], 2 * kPi);
  }
}

TEST(AngleSamplingTest, Deterministic) {
  EXPECT_EQ(sample_angles(20, 42).angles, sample_angles(20, 42).angles);
  EXPECT_NE(sample_angles(20, 42).angles, sample_angles(20, 43).angles);
}

TEST(AngleSamplingTest, StratificationCounts) {
  for (int j = 6; j <= 31; ++j) {
    const AngleSet a = sample_angles(j, 100 + j);
    std::vector<int> per_sector(5, 0);
    for (std::size_t i = 1; i < a.size(); ++i) {
      for (int k = 0; k < 5; ++k) {
        if (in_sector(a[i], (kPi / 2) * k, kPi / 5)) {
          ++per_sector[k];
          break;
        }
      }
    }
    // Centers 0 and 2pi coincide; draws for both land in sector 0.
    for (int k = 0; k < 4; ++k) EXPECT_GE(per_sector[k], (j - 1) / 5) << "J=" << j << " k=" << k;
  }
}

TEST(RotateTest, ZeroIsIdentity) {
  Rng rng(1);
  const Raster x = testing::random_raster(7, 5, 3, rng);
  const auto view = rotate(x, 0.0);
  EXPECT_EQ(view.content, x);
  EXPECT_EQ(view.validity.count(), 35u);
}

TEST(RotateTest, QuarterTurnPermutesTwoByTwo) {
  Raster x(2, 2, 1);
  x.at(0, 0) = 1;  // a
  x.at(1, 0) = 2;  // b
  x.at(0, 1) = 3;  // c
  x.at(1, 1) = 4;  // d
  const auto view = rotate(x, kPi / 2);
  ASSERT_EQ(view.content.width(), 2);
  ASSERT_EQ(view.content.height(), 2);
  EXPECT_EQ(view.content.at(0, 0), 2);
  EXPECT_EQ(view.content.at(1, 0), 4);
  EXPECT_EQ(view.content.at(0, 1), 1);
  EXPECT_EQ(view.content.at(1, 1), 3);
  EXPECT_EQ(view.validity.count(), 4u);
}

TEST(RotateTest, RightAnglesAreLosslessPermutations) {
  Rng rng(2);
  const Raster x = testing::random_raster(9, 6, 3, rng);
  for (int k = 0; k < 4; ++k) {
    const auto view = rotate(x, k * kPi / 2);
    const bool swapped = k % 2 == 1;
    EXPECT_EQ(view.content.width(), swapped ? 6 : 9);
    EXPECT_EQ(view.content.height(), swapped ? 9 : 6);
    EXPECT_EQ(view.validity.count(), 54u);
    const auto back = unrotate(view);
    EXPECT_EQ(back.content, x) << "k=" << k;
    EXPECT_EQ(back.validity.count(), 54u);
  }
}

TEST(RotateTest, DiagonalCanvasFromBoundingBox) {
  const int m = 40;
  const int n = 24;
  const Raster x(n, m, 3, 0.5f);
  const double theta = kPi / 4;
  const auto view = rotate(x, theta);
  const int expect_w = static_cast<int>(std::ceil(n * std::cos(theta) + m * std::sin(theta) - 1e-9));
  EXPECT_EQ(view.content.width(), expect_w);
  EXPECT_EQ(view.content.height(), expect_w);
  const double area = static_cast<double>(expect_w) * expect_w;
  const double ratio = view.validity.count() / area;
  // Boundary ring: perimeter pixels of the rotated rectangle.
  const double ring = 2.0 * (m + n) / area;
  EXPECT_NEAR(ratio, m * n / area, ring);
}

TEST(RotateTest, OutsidePixelsAreZeroAndInvalid) {
  const Raster x(10, 10, 3, 1.0f);
  const auto view = rotate(x, 0.3);
  for (int y = 0; y < view.content.height(); ++y) {
    for (int u = 0; u < view.content.width(); ++u) {
      if (!view.validity.get(u, y)) {
        for (int c = 0; c < 3; ++c) EXPECT_EQ(view.content.at(u, y, c), 0.0f);
      }
    }
  }
}

TEST(RotateTest, RoundTripSmoothImage) {
  const Raster x = testing::smooth_image(64, 64);
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const double theta = rng.uniform(0, 2 * kPi);
    const auto back = unrotate(rotate(x, theta));
    double err = 0.0;
    int n = 0;
    for (int y = 2; y < 62; ++y) {
      for (int u = 2; u < 62; ++u) {
        EXPECT_TRUE(back.validity.get(u, y)) << theta;
        for (int c = 0; c < 3; ++c) err += std::abs(back.content.at(u, y, c) - x.at(u, y, c));
        n += 3;
      }
    }
    EXPECT_LE(err / n, 0.02) << theta;
  }
}

TEST(RotateTest, MaskAreaPreserved) {
  BinaryMask blob(64, 64);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) blob.set(x, y, (x - 30) * (x - 30) + (y - 34) * (y - 34) < 200);
  }
  for (int k = 0; k < 4; ++k) EXPECT_EQ(rotate(blob, k * kPi / 2).content.count(), blob.count());
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const double theta = rng.uniform(0, 2 * kPi);
    const double c = static_cast<double>(rotate(blob, theta).content.count());
    EXPECT_NEAR(c / blob.count(), 1.0, 0.02) << theta;
  }
}

TEST(RotateTest, UnrotateRejectsGeometryMismatch) {
  auto view = rotate(Raster(8, 6, 3, 0.2f), 0.5);
  view.source_width = 9;
  EXPECT_THROW(unrotate(view), DataError);
}

TEST(RotateTest, ScoreMapsRotateBilinearly) {
  std::vector<float> f(12 * 12, 0.25f);
  const ScoreMap p = ScoreMap::from_flower_probabilities(12, 12, f);
  const auto view = rotate(p, 1.0);
  for (int y = 0; y < view.content.height(); ++y) {
    for (int x = 0; x < view.content.width(); ++x) {
      if (view.validity.get(x, y)) EXPECT_NEAR(view.content.flower(x, y), 0.25f, 1e-6);
    }
  }
}

TEST(AugmentedSetTest, FullScaleCountIsLazy) {
  const std::vector<ImageShape> shapes(100, ImageShape{3456, 5184});
  const AugmentationPlan plan = plan_augmentation(shapes, 4, 20, 1);
  EXPECT_EQ(plan.size(), 98000u);
}

TEST(AugmentedSetTest, SmallCounts) {
  std::vector<LabeledImage> one{{"a", Raster(10, 8, 3, 0.1f), BinaryMask(10, 8)}};
  const LabeledSet s1 = build_labeled_set(one, 1, 1, 0);
  ASSERT_EQ(s1.size(), 1u);
  const LabeledItem item = s1.item(0);
  EXPECT_EQ(item.patch.angle, 0.0);
  EXPECT_EQ(item.patch.content, one[0].image);

  std::vector<LabeledImage> two{{"a", Raster(16, 12, 3), BinaryMask(16, 12)},
                                {"b", Raster(20, 20, 3), BinaryMask(20, 20)}};
  EXPECT_EQ(build_labeled_set(two, 2, 3, 0).size(), 54u);
}

TEST(AugmentedSetTest, PairsAreAlignedWithProvenance) {
  Rng rng(5);
  std::vector<LabeledImage> imgs;
  for (int i = 0; i < 2; ++i) {
    LabeledImage li{"img" + std::to_string(i), testing::random_raster(24, 20, 3, rng),
                    testing::random_mask(24, 20, 0.3, rng)};
    imgs.push_back(std::move(li));
  }
  const LabeledSet set = build_labeled_set(imgs, 2, 3, 7);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const LabeledItem it = set.item(i);
    const auto key = set.plan().key(i);
    EXPECT_EQ(it.provenance.image_id, imgs[key.image].id);
    EXPECT_EQ(it.provenance.window, key.window);
    EXPECT_EQ(it.provenance.angle, key.angle);
    EXPECT_EQ(it.patch.content.width(), it.label.content.width());
    EXPECT_EQ(it.patch.content.height(), it.label.content.height());
    EXPECT_EQ(it.label.angle, set.plan().angles()[key.angle]);
    for (std::size_t p = 0; p < it.label.content.pixel_count(); ++p) {
      if (it.label.content.bits()[p]) {
        EXPECT_TRUE(it.patch.validity.bits()[p]);
      }
    }
  }
  EXPECT_EQ(set.item(5).patch.content, build_labeled_set(imgs, 2, 3, 7).item(5).patch.content);
}

TEST(AugmentedSetTest, MisalignedMaskRejected) {
  std::vector<LabeledImage> bad{{"a", Raster(10, 8, 3), BinaryMask(10, 9)}};
  EXPECT_THROW(build_labeled_set(bad, 1, 1, 0), DataError);
}

TEST(AugmentedSetTest, CacheLayout) {
  testing::TempDir dir("cache");
  std::vector<LabeledImage> imgs{{"q", Raster(8, 8, 3, 0.4f), BinaryMask(8, 8, true)}};
  write_augmented_cache(build_labeled_set(imgs, 1, 2, 0), dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir / "image-q_win-0_rot-0.png"));
  EXPECT_TRUE(std::filesystem::exists(dir / "image-q_win-0_rot-1_mask.png"));
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  EXPECT_EQ(read_rgb(dir / "image-q_win-0_rot-0.png").width(), 8);
}

}  // namespace
}  // namespace pseudoseg
