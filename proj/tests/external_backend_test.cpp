#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/external_backend.hpp"
#include "pseudoseg/pseudolabel.hpp"

namespace pseudoseg {
namespace {

using testing::TempDir;

class EchoMode {
 public:
  explicit EchoMode(const char* mode) { ::setenv("ECHO_BACKEND_MODE", mode, 1); }
  ~EchoMode() { ::unsetenv("ECHO_BACKEND_MODE"); }
};

ExternalConfig echo_config(const TempDir& tmp) {
  ExternalConfig c;
  c.executable = PSEUDOSEG_ECHO_BACKEND;
  c.exchange_dir = tmp.path() / "exchange";
  c.timeout = std::chrono::seconds(20);
  return c;
}

TEST(ExternalBackendTest, EchoRoundTripIsBitExact) {
  TempDir tmp("echo");
  ExternalBackend backend(echo_config(tmp));
  EXPECT_TRUE(backend.needs_files());
  Rng rng(1);
  Raster patch = testing::random_raster(13, 7, 3, rng);
  patch.at(0, 0, 0) = -0.0f;
  patch.at(1, 0, 0) = 1e-40f;  // subnormal
  const ScoreMap out = backend.predict_logits(patch);
  ASSERT_EQ(out.width(), 13);
  ASSERT_EQ(out.height(), 7);
  EXPECT_FALSE(out.is_probability());
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 13; ++x) {
      const float in = patch.at(x, y, 0);
      for (ClassId c : {ClassId::kBackground, ClassId::kFlower}) {
        const float got = out.at(x, y, c);
        EXPECT_EQ(std::memcmp(&got, &in, sizeof(float)), 0) << x << "," << y;
      }
    }
  }
}

TEST(ExternalBackendTest, TimeoutNamesRequestDir) {
  TempDir tmp("hang");
  EchoMode mode("hang");
  ExternalConfig cfg = echo_config(tmp);
  cfg.timeout = std::chrono::milliseconds(200);
  ExternalBackend backend(cfg);
  try {
    backend.predict_logits(Raster(4, 4, 3));
    FAIL() << "expected TimeoutError";
  } catch (const TimeoutError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find((tmp.path() / "exchange").string()), std::string::npos) << what;
    EXPECT_NE(what.find("predict"), std::string::npos) << what;
  }
}

TEST(ExternalBackendTest, WrongPlaneCountIsDimensionMismatch) {
  TempDir tmp("dims");
  EchoMode mode("bad-dims");
  ExternalBackend backend(echo_config(tmp));
  try {
    backend.predict_logits(Raster(5, 3, 3));
    FAIL() << "expected DimensionMismatchError";
  } catch (const DimensionMismatchError& e) {
    EXPECT_NE(std::string(e.what()).find("output.btsr"), std::string::npos) << e.what();
  }
}

TEST(ExternalBackendTest, FailingProcessReportsStatus) {
  TempDir tmp("fail");
  EchoMode mode("fail");
  ExternalBackend backend(echo_config(tmp));
  EXPECT_THROW(backend.predict_logits(Raster(2, 2, 3)), BackendError);
}

TEST(ExternalBackendTest, MalformedOutputIsTensorFormatError) {
  TempDir tmp("manual");
  ExternalConfig cfg;
  cfg.exchange_dir = tmp.path() / "exchange";
  cfg.timeout = std::chrono::seconds(20);
  ExternalBackend backend(cfg);
  // No executable: answer the request from a second thread.
  std::thread responder([&] {
    for (int i = 0; i < 2000; ++i) {
      for (const auto& e : std::filesystem::directory_iterator(cfg.exchange_dir)) {
        if (std::filesystem::exists(e.path() / "manifest.json")) {
          std::ofstream(e.path() / "output.btsr") << "BTSX garbage";
          std::ofstream(e.path() / "done") << '\n';
          return;
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  });
  try {
    backend.predict_logits(Raster(2, 2, 3));
    ADD_FAILURE() << "expected TensorFormatError";
  } catch (const TensorFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("output.btsr"), std::string::npos) << e.what();
  }
  responder.join();
}

TEST(ExternalBackendTest, TrainReadsResult) {
  TempDir tmp("train");
  ExternalBackend backend(echo_config(tmp));
  TrainingData data;
  EXPECT_THROW(backend.train(data, {}, {}), BackendError);
  data.label_dir = tmp.path() / "labels";
  auto labels = to_panoptic(BinaryMask(6, 6, true), sample_angles(3, 0), {"a", 0, 0, 1});
  write_labels(labels, data.label_dir);
  const TrainResult r = backend.train(data, {}, LossWeights{0.8});
  EXPECT_EQ(r.weights_tag, "echo-3");
  EXPECT_EQ(backend.weights_tag(), "echo-3");
  EXPECT_NEAR(r.loss.total, 0.2 * 0.25, 1e-15);

  backend.save(tmp.path() / "weights");
  ExternalBackend other(echo_config(tmp));
  other.load(tmp.path() / "weights");
  EXPECT_EQ(other.weights_tag(), "echo-3");
}

TEST(ExternalBackendTest, NeedsExchangeDir) {
  EXPECT_THROW(ExternalBackend(ExternalConfig{}), BackendError);
}

}  // namespace
}  // namespace pseudoseg
