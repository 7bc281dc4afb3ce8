#include <fstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "oracles.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/pseudolabel.hpp"

namespace pseudoseg {
namespace {

using testing::flood_fill_components;
using testing::random_mask;
using testing::TempDir;

BinaryMask from_rows(const std::vector<std::string>& rows) {
  BinaryMask m(static_cast<int>(rows[0].size()), static_cast<int>(rows.size()));
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) m.set(x, y, rows[y][x] == '#');
  }
  return m;
}

const std::vector<std::string> kGoldenRows{
    "##....",
    "#...#.",
    "...##.",
    ".....#",
};

TEST(ComponentsTest, ConnectivityMatters) {
  const BinaryMask m = from_rows(kGoldenRows);
  const auto c8 = connected_components(m, 8);
  ASSERT_EQ(c8.size(), 2u);
  EXPECT_EQ(c8[0].bbox, (BoundingBox{0, 0, 1, 1}));
  EXPECT_EQ(c8[1].bbox, (BoundingBox{3, 1, 5, 3}));
  const auto c4 = connected_components(m, 4);
  ASSERT_EQ(c4.size(), 3u);
  EXPECT_EQ(c4[2].bbox, (BoundingBox{5, 3, 5, 3}));
  EXPECT_THROW(connected_components(m, 6), DataError);
}

TEST(ComponentsTest, UShapeMergesLate) {
  const BinaryMask m = from_rows({
      "#.#",
      "#.#",
      "###",
  });
  ASSERT_EQ(connected_components(m, 4).size(), 1u);
  EXPECT_EQ(connected_components(m, 4)[0].pixels.size(), 7u);
}

TEST(ComponentsTest, MatchesFloodFill) {
  Rng rng(21);
  for (int c = 0; c < 200; ++c) {
    const int w = 1 + static_cast<int>(rng.below(40));
    const int h = 1 + static_cast<int>(rng.below(40));
    const BinaryMask m = random_mask(w, h, rng.uniform(0.1, 0.7), rng);
    for (int conn : {4, 8}) {
      const auto got = connected_components(m, conn);
      const auto want = flood_fill_components(m, conn);
      ASSERT_EQ(got.size(), want.size()) << "case " << c << " conn " << conn;
      for (std::size_t k = 0; k < got.size(); ++k) EXPECT_EQ(got[k].pixels, want[k]);
    }
  }
}

TEST(PanopticTest, PartitionHoldsOnRandomMasks) {
  Rng rng(4);
  for (int c = 0; c < 100; ++c) {
    const BinaryMask m = random_mask(25, 17, rng.uniform(0.2, 0.8), rng);
    const auto label = make_panoptic_label(m, {"x", 0, 0, 0});
    EXPECT_TRUE(satisfies_partition(label));
    EXPECT_EQ(label.semantic, m);
  }
}

TEST(PanopticTest, PartitionCheckCatchesDefects) {
  auto label = make_panoptic_label(from_rows(kGoldenRows), {"x", 0, 0, 0});
  ASSERT_TRUE(satisfies_partition(label));
  auto loose = label;
  loose.instances[0].bbox.x_max += 1;
  loose.instances[0].mask = BinaryMask(3, 2);
  loose.instances[0].mask.set(0, 0, true);
  loose.instances[0].mask.set(1, 0, true);
  loose.instances[0].mask.set(0, 1, true);
  EXPECT_FALSE(satisfies_partition(loose));
  auto overlap = label;
  overlap.instances.push_back(overlap.instances[0]);
  EXPECT_FALSE(satisfies_partition(overlap));
  auto missing = label;
  missing.instances.pop_back();
  EXPECT_FALSE(satisfies_partition(missing));
}

TEST(PanopticTest, MinAreaDropsSmallComponents) {
  PanopticOptions opt;
  opt.connectivity = 4;
  opt.min_area = 2;
  const auto label = make_panoptic_label(from_rows(kGoldenRows), {"x", 0, 0, 0}, opt);
  EXPECT_EQ(label.instances.size(), 2u);
  EXPECT_FALSE(label.semantic.get(5, 3));
  EXPECT_TRUE(satisfies_partition(label));
}

TEST(PanopticTest, OneLabelPerAngle) {
  const BinaryMask m = from_rows(kGoldenRows);
  const AngleSet angles = sample_angles(5, 2);
  const auto labels = to_panoptic(m, angles, {"img", 3, 99, 2});
  ASSERT_EQ(labels.size(), 5u);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    EXPECT_EQ(labels[j].provenance, (Provenance{"img", 3, j, 2}));
    EXPECT_EQ(labels[j].angle, angles[j]);
    EXPECT_EQ(labels[j].rotations, 5);
    EXPECT_EQ(labels[j].semantic, rotate(m, angles[j]).content);
    EXPECT_TRUE(satisfies_partition(labels[j]));
  }
  EXPECT_EQ(labels[0].semantic, m);
}

TEST(PanopticTest, InstanceMap) {
  const auto label = make_panoptic_label(from_rows(kGoldenRows), {"x", 0, 0, 0});
  const LabelImage ids = instance_map(label);
  const std::vector<std::uint16_t> want{
      1, 1, 0, 0, 0, 0,
      1, 0, 0, 0, 2, 0,
      0, 0, 0, 2, 2, 0,
      0, 0, 0, 0, 0, 2,
  };
  EXPECT_EQ(ids.values, want);
}

TEST(LabelIoTest, MatchesGoldenMeta) {
  TempDir tmp("golden");
  auto label = make_panoptic_label(from_rows(kGoldenRows), {"img7", 2, 0, 1});
  write_label(label, tmp.path());
  const auto dir = tmp.path() / "img7_2_0";
  ASSERT_TRUE(std::filesystem::is_directory(dir));
  nlohmann::json got;
  nlohmann::json want;
  std::ifstream(dir / "meta.json") >> got;
  std::ifstream(std::filesystem::path(PSEUDOSEG_GOLDEN_DIR) / "img7_2_0" / "meta.json") >> want;
  EXPECT_EQ(got, want);
  EXPECT_EQ(read_mask(dir / "semantic.png"), from_rows(kGoldenRows));
  EXPECT_EQ(read_label_image(dir / "instances.png"), instance_map(label));
}

TEST(LabelIoTest, RoundTrip) {
  TempDir tmp("labels");
  Rng rng(6);
  std::vector<PanopticPseudoLabel> labels;
  const AngleSet angles = sample_angles(3, 1);
  for (int i = 0; i < 3; ++i) {
    auto part = to_panoptic(random_mask(19, 13, 0.4, rng), angles,
                            {"im" + std::to_string(i), static_cast<std::size_t>(i), 0, 1});
    labels.insert(labels.end(), part.begin(), part.end());
  }
  write_labels(labels, tmp.path());
  const auto back = read_labels(tmp.path());
  ASSERT_EQ(back.size(), labels.size());
  for (const auto& l : labels) {
    EXPECT_EQ(read_label(tmp.path() / label_dir_name(l.provenance)), l);
  }
}

TEST(LabelIoTest, MalformedMetaNamesField) {
  TempDir tmp("bad");
  write_label(make_panoptic_label(from_rows(kGoldenRows), {"a", 0, 0, 0}), tmp.path());
  const auto meta = tmp.path() / "a_0_0" / "meta.json";
  nlohmann::json j;
  std::ifstream(meta) >> j;
  j.erase("window");
  std::ofstream(meta) << j.dump();
  try {
    read_label(tmp.path() / "a_0_0");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("window"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("meta.json"), std::string::npos) << e.what();
  }
  EXPECT_THROW(read_labels(tmp.path() / "nope"), DataError);
}

TEST(UnlabeledSetTest, ItemsAndLabelSlots) {
  Rng rng(2);
  std::vector<UnlabeledImage> images{{"a", testing::random_raster(40, 30, 3, rng)},
                                     {"b", testing::random_raster(20, 24, 3, rng)}};
  UnlabeledSet set = build_unlabeled_set(images, 2, 4, 8);
  EXPECT_EQ(set.size(), 2u * 9u * 4u);
  const auto item = set.item(9 * 4 + 5);
  EXPECT_EQ(item.provenance.image_id, "b");
  EXPECT_EQ(item.provenance.window, 1u);
  EXPECT_EQ(item.provenance.angle, 1u);
  EXPECT_FALSE(item.label->has_value());
  set.set_label(41, make_panoptic_label(BinaryMask(3, 3), item.provenance));
  EXPECT_TRUE(set.item(41).label->has_value());
  EXPECT_THROW(set.set_label(set.size(), {}), std::out_of_range);
}

}  // namespace
}  // namespace pseudoseg
