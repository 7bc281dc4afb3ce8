#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pseudoseg/dataset.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/synth.hpp"

namespace pseudoseg {
namespace {

using testing::TempDir;

double hue_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 360.0);
  return std::min(d, 360.0 - d);
}

TEST(ColorTest, HsvKnownValues) {
  const Hsv red = rgb_to_hsv({1, 0, 0});
  EXPECT_EQ(red.h, 0.0);
  EXPECT_EQ(red.s, 1.0);
  EXPECT_EQ(red.v, 1.0);
  EXPECT_NEAR(rgb_to_hsv({0, 1, 0}).h, 120.0, 1e-12);
  EXPECT_NEAR(rgb_to_hsv({0, 0, 1}).h, 240.0, 1e-12);
  EXPECT_EQ(rgb_to_hsv({0.4, 0.4, 0.4}).s, 0.0);
  const Rgb back = hsv_to_rgb({300.0, 0.5, 0.8});
  EXPECT_NEAR(back.r, 0.8, 1e-12);
  EXPECT_NEAR(back.g, 0.4, 1e-12);
  EXPECT_NEAR(back.b, 0.8, 1e-12);
}

TEST(ColorTest, RoundTripAndRotation) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Rgb c{rng.uniform(), rng.uniform(), rng.uniform()};
    const Rgb back = hsv_to_rgb(rgb_to_hsv(c));
    EXPECT_NEAR(back.r, c.r, 1e-12);
    EXPECT_NEAR(back.g, c.g, 1e-12);
    EXPECT_NEAR(back.b, c.b, 1e-12);
    const Hsv h = rgb_to_hsv(c);
    if (h.s < 1e-3) continue;
    const Hsv rotated = rgb_to_hsv(rotate_hue(c, 60.0));
    EXPECT_NEAR(hue_distance(rotated.h, h.h + 60.0), 0.0, 1e-9);
    EXPECT_NEAR(rotated.s, h.s, 1e-12);
    EXPECT_NEAR(rotated.v, h.v, 1e-12);
  }
}

TEST(BlobTest, RadiusProfile) {
  FlowerBlob b{0, 0, 10.0, 5, 0.0, {}};
  // Petal tips at phi = 2 pi k / lobes reach the full radius.
  EXPECT_NEAR(blob_radius_at(b, 0.3, 0.0), 10.0, 1e-12);
  EXPECT_NEAR(blob_radius_at(b, 0.3, 2 * std::numbers::pi / 5), 10.0, 1e-12);
  // Halfway between petals the outline is carved in by the depth.
  EXPECT_NEAR(blob_radius_at(b, 0.3, std::numbers::pi / 5), 7.0, 1e-12);
  EXPECT_NEAR(blob_area_lower(b, 0.3), std::numbers::pi * 49.0, 1e-9);
  EXPECT_NEAR(blob_area_upper(b), std::numbers::pi * 100.0, 1e-9);
}

TEST(SceneTest, DeterministicPerIndex) {
  SceneSpec spec;
  spec.seed = 5;
  const auto a = generate_one(spec, 3);
  const auto b = generate_one(spec, 3);
  EXPECT_EQ(a.id, "0003");
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_NE(generate_one(spec, 4).image, a.image);
  const auto batch = generate(spec, 3, 2);
  ASSERT_EQ(batch.size(), 3u);
  EXPECT_EQ(batch[1].image, a.image);
  EXPECT_EQ(batch[2].id, "0004");
}

TEST(SceneTest, MaskIsUnionOfBlobOutlines) {
  SceneSpec spec;
  spec.width = 96;
  spec.height = 72;
  spec.seed = 9;
  for (int i = 0; i < 10; ++i) {
    const auto s = generate_one(spec, i);
    EXPECT_GE(static_cast<int>(s.flowers.size()), spec.flowers_min);
    EXPECT_LE(static_cast<int>(s.flowers.size()), spec.flowers_max);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        bool inside = false;
        for (const auto& f : s.flowers) {
          const double dx = x - f.cx;
          const double dy = y - f.cy;
          inside = inside || std::hypot(dx, dy) <=
                                 blob_radius_at(f, spec.lobe_depth, std::atan2(dy, dx));
        }
        ASSERT_EQ(s.mask.get(x, y), inside) << "scene " << i << " at " << x << "," << y;
      }
    }
    for (float v : s.image.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(SceneTest, SingleBlobAreaWithinBounds) {
  SceneSpec spec;
  spec.flowers_min = spec.flowers_max = 1;
  spec.radius_min = 10;
  spec.radius_max = 14;
  spec.seed = 1;
  int checked = 0;
  for (int i = 0; i < 40; ++i) {
    const auto s = generate_one(spec, i);
    const auto& f = s.flowers[0];
    // Only blobs well inside the frame.
    if (f.cx < f.radius + 2 || f.cy < f.radius + 2 || f.cx > spec.width - f.radius - 2 ||
        f.cy > spec.height - f.radius - 2) {
      continue;
    }
    const double area = static_cast<double>(s.mask.count());
    const double slack = 2 * std::numbers::pi * f.radius;
    EXPECT_GE(area, blob_area_lower(f, spec.lobe_depth) - slack);
    EXPECT_LE(area, blob_area_upper(f) + slack);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(ShiftTest, Kinds) {
  const SceneSpec base;
  const SceneSpec hue = shift(base, ShiftKind::kHue);
  EXPECT_NEAR(hue_distance(rgb_to_hsv(hue.flower_color).h,
                           rgb_to_hsv(base.flower_color).h + 60.0),
              0.0, 1e-9);
  const SceneSpec scale = shift(base, ShiftKind::kScale);
  EXPECT_EQ(scale.radius_min, base.radius_min / 2);
  EXPECT_EQ(scale.radius_max, base.radius_max / 2);
  const SceneSpec clutter = shift(base, ShiftKind::kClutter);
  EXPECT_EQ(clutter.distractors, 3 * base.distractors);
  const std::vector<ShiftKind> both{ShiftKind::kScale, ShiftKind::kClutter};
  const SceneSpec combined = shift(base, both);
  EXPECT_EQ(combined.radius_max, scale.radius_max);
  EXPECT_EQ(combined.distractors, clutter.distractors);
  EXPECT_EQ(parse_shift_kind("clutter"), ShiftKind::kClutter);
  EXPECT_EQ(to_string(ShiftKind::kHue), "hue");
  EXPECT_THROW(parse_shift_kind("blur"), DataError);
}

TEST(ShiftTest, HueShiftMovesRenderedFlowers) {
  SceneSpec base;
  base.seed = 2;
  const SceneSpec moved = shift(base, ShiftKind::kHue);
  double delta = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto a = generate_one(base, i);
    const auto b = generate_one(moved, i);
    delta += hue_distance(mean_hue(a.image, a.mask), mean_hue(b.image, b.mask));
  }
  EXPECT_NEAR(delta / 5, 60.0, 5.0);
}

TEST(SceneTest, Validation) {
  SceneSpec s;
  s.flowers_max = 1;
  s.flowers_min = 2;
  EXPECT_THROW(s.validate(), DataError);
  s = {};
  s.lobe_depth = 1.0;
  EXPECT_THROW(s.validate(), DataError);
  s = {};
  s.flower_color.r = 1.5;
  EXPECT_THROW(generate_one(s, 0), DataError);
}

TEST(DatasetTest, RoundTrip) {
  TempDir tmp("dataset");
  SceneSpec spec;
  spec.width = 40;
  spec.height = 30;
  std::vector<LabeledImage> items;
  for (const auto& s : generate(spec, 3)) items.push_back({s.id, s.image, s.mask});
  write_dataset(tmp.path(), items);
  const auto back = read_labeled_dataset(tmp.path());
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].id, items[i].id);
    EXPECT_EQ(back[i].mask, items[i].mask);
    for (std::size_t k = 0; k < items[i].image.data().size(); ++k) {
      ASSERT_NEAR(back[i].image.data()[k], items[i].image.data()[k], 0.5 / 255 + 1e-6);
    }
  }
  const auto unlabeled = read_unlabeled_dataset(tmp.path());
  ASSERT_EQ(unlabeled.size(), 3u);
  EXPECT_EQ(unlabeled[2].id, "0002");

  std::filesystem::remove(tmp.path() / "masks" / "0001.png");
  try {
    read_labeled_dataset(tmp.path());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("0001"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace pseudoseg
