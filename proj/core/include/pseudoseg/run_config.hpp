#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "pseudoseg/backend.hpp"
#include "pseudoseg/ssl.hpp"

namespace pseudoseg {

// Every command-line tunable. The snapshot written into each run directory is
// render_run_config() of this struct; parse(render(c)) == c.
struct RunConfig {
  SslConfig ssl;
  std::string backend = "toy";  // "toy" or "external:<executable>"
  int toy_hidden = 8;
  double external_timeout_s = 600.0;
  std::filesystem::path runs_dir = "runs";
  std::string run_name = "default";
  std::filesystem::path labeled;    // images/ + masks/
  std::filesystem::path unlabeled;  // images/
  std::filesystem::path images;     // infer input
  std::filesystem::path output;
  std::filesystem::path ground_truth;
  bool post_process = false;
  int folds = 0;
  std::string aggregation = "per-image";

  std::filesystem::path run_dir() const { return runs_dir / run_name; }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

std::string render_run_config(const RunConfig& config);
RunConfig parse_run_config(const std::string& json);
RunConfig read_run_config(const std::filesystem::path& path);

// "toy" or "external:<path>"; the external exchange directory lives under the run.
std::unique_ptr<SegmentationBackend> make_backend(const RunConfig& config);

}  // namespace pseudoseg
