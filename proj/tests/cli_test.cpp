#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/image_io.hpp"
#include "pseudoseg/run_config.hpp"

namespace pseudoseg {
namespace {

using testing::TempDir;

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(PSEUDOSEG_CLI) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kQuickModel =
    " -K 2 -J 3 --max-iter 1 --train-iterations 200 --batch-size 128 --base-lr 0.05"
    " --rgr-spacing 20 --rgr-runs 2 --toy-hidden 4 --seed 7";

TEST(CliTest, Pipeline) {
  TempDir tmp("cli");
  const std::string d = tmp.path().string();
  auto r = run_cli("synth-gen --out " + d + "/a --count 3 --width 64 --height 48 --seed 1");
  ASSERT_EQ(r.code, 0) << r.output;
  r = run_cli("synth-gen --out " + d + "/b --count 3 --width 64 --height 48 --seed 2 --shift hue");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "b" / "masks" / "0002.png"));

  r = run_cli("init-train --labeled " + d + "/a --runs-dir " + d + "/runs --run t" + kQuickModel);
  ASSERT_EQ(r.code, 0) << r.output;
  r = run_cli("ssl-run --unlabeled " + d + "/b --labeled " + d + "/a --runs-dir " + d +
              "/runs --run t");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "runs" / "t" / "iter-1" / "state.json"));
  r = run_cli("ssl-run --unlabeled " + d + "/b --runs-dir " + d + "/runs --run t");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("nothing to do"), std::string::npos) << r.output;

  r = run_cli("pseudo-label --images " + d + "/b --out " + d + "/pl --runs-dir " + d +
              "/runs --run t");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "pl" / "0000_0_0" / "meta.json"));

  r = run_cli("infer --images " + d + "/b --out " + d + "/pred --runs-dir " + d + "/runs --run t");
  ASSERT_EQ(r.code, 0) << r.output;
  const BinaryMask m = read_mask(tmp.path() / "pred" / "0001_mask.png");
  EXPECT_EQ(m.width(), 64);
  EXPECT_EQ(m.height(), 48);
  EXPECT_TRUE(std::filesystem::exists(tmp.path() / "pred" / "0001_prob.btsr"));

  r = run_cli("eval --pred " + d + "/pred --gt " + d + "/b --run-id smoke --report " + d +
              "/report.txt --pr-plot " + d + "/pr.csv");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("run: smoke"), std::string::npos) << r.output;
  EXPECT_NE(slurp(tmp.path() / "report.txt").find("mean"), std::string::npos);
  EXPECT_EQ(slurp(tmp.path() / "pr.csv").rfind("threshold,precision,recall,f1", 0), 0u);
}

TEST(CliTest, InferWithoutStateFails) {
  TempDir tmp("cli-nostate");
  const std::string d = tmp.path().string();
  ASSERT_EQ(run_cli("synth-gen --out " + d + "/a --count 1 --width 32 --height 32").code, 0);
  const auto r = run_cli("infer --images " + d + "/a --out " + d + "/pred --runs-dir " + d +
                         "/runs --run nope");
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("ssl state"), std::string::npos) << r.output;
}

TEST(CliTest, EvalFolds) {
  TempDir tmp("cli-folds");
  const std::string d = tmp.path().string();
  ASSERT_EQ(run_cli("synth-gen --out " + d + "/a --count 10 --width 32 --height 32").code, 0);
  // Ground truth against itself: every fold scores 100.
  std::filesystem::create_directories(tmp.path() / "pred");
  for (const auto& e : std::filesystem::directory_iterator(tmp.path() / "a" / "masks")) {
    std::filesystem::copy_file(e.path(), tmp.path() / "pred" / e.path().filename());
  }
  const auto r = run_cli("eval --pred " + d + "/pred --gt " + d + "/a --folds 5 --seed 3");
  ASSERT_EQ(r.code, 0) << r.output;
  for (int k = 0; k < 5; ++k) {
    EXPECT_NE(r.output.find("fold-" + std::to_string(k)), std::string::npos) << r.output;
  }
  EXPECT_NE(r.output.find("100.00"), std::string::npos) << r.output;
  EXPECT_EQ(run_cli("eval --pred " + d + "/pred --gt " + d + "/a --folds 11").code, 3);
}

TEST(CliTest, ConfigSnapshotRoundTrips) {
  TempDir tmp("cli-config");
  const std::string d = tmp.path().string();
  ASSERT_EQ(run_cli("synth-gen --out " + d + "/a --count 2 --width 40 --height 40").code, 0);
  RunConfig base;
  base.ssl.window_factor = 2;
  base.ssl.rotations = 2;
  base.ssl.schedule.iterations = 50;
  base.ssl.schedule.batch_size = 32;
  base.ssl.schedule.base_lr = 0.05;
  base.ssl.rgr.spacing = 33;
  base.ssl.variant = Variant::kSsl;
  base.toy_hidden = 3;
  std::ofstream(tmp.path() / "base.json") << render_run_config(base);

  const auto r = run_cli("init-train --config " + d + "/base.json --labeled " + d +
                         "/a --runs-dir " + d + "/runs --run c --rotations 3");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto snap_path = tmp.path() / "runs" / "c" / "iter-0" / "config.json";
  const std::string snap = slurp(snap_path);
  const RunConfig got = read_run_config(snap_path);
  EXPECT_EQ(render_run_config(got), snap);
  EXPECT_EQ(got.ssl.window_factor, 2);
  EXPECT_EQ(got.ssl.rotations, 3);
  EXPECT_EQ(got.ssl.rgr.spacing, 33);
  EXPECT_EQ(got.ssl.variant, Variant::kSsl);
  EXPECT_EQ(got.toy_hidden, 3);
  EXPECT_EQ(got.run_name, "c");
}

TEST(CliTest, UsageAndDataErrors) {
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("init-train --bogus").code, 2);
  EXPECT_EQ(run_cli("synth-gen").code, 2);
  const auto help = run_cli("--help");
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.output.find("ssl-run"), std::string::npos);
  TempDir tmp("cli-err");
  const auto r = run_cli("init-train --labeled " + tmp.path().string() + "/missing");
  EXPECT_EQ(r.code, 3) << r.output;
  const auto shift = run_cli("synth-gen --out " + tmp.path().string() + "/x --shift blur");
  EXPECT_NE(shift.code, 0);
}

TEST(RunConfigTest, RenderParse) {
  RunConfig c;
  c.backend = "external:/bin/model";
  c.external_timeout_s = 12.5;
  c.labeled = "data/a";
  c.post_process = true;
  c.folds = 5;
  c.aggregation = "pooled";
  c.ssl.rgr.num_runs = 3;
  EXPECT_EQ(parse_run_config(render_run_config(c)), c);
  EXPECT_EQ(parse_run_config(render_run_config(RunConfig{})), RunConfig{});
  c.backend = "gpu";
  EXPECT_THROW(make_backend(c), DataError);
}

}  // namespace
}  // namespace pseudoseg
