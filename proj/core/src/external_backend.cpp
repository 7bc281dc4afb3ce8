#include "pseudoseg/external_backend.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/tensor_io.hpp"

extern char** environ;

namespace pseudoseg {

namespace fs = std::filesystem;

ExternalBackend::ExternalBackend(ExternalConfig config) : config_(std::move(config)) {
  if (config_.exchange_dir.empty()) {
    throw BackendError("backend", "external backend needs an exchange directory");
  }
  fs::create_directories(config_.exchange_dir);
}

fs::path ExternalBackend::new_request(const std::string& op) const {
  char name[64];
  std::snprintf(name, sizeof(name), "req-%d-%06llu-%s", static_cast<int>(::getpid()),
                static_cast<unsigned long long>(counter_.fetch_add(1)), op.c_str());
  const fs::path dir = config_.exchange_dir / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void ExternalBackend::run_request(const fs::path& request_dir) const {
  pid_t pid = -1;
  if (!config_.executable.empty()) {
    const std::string exe = config_.executable.string();
    const std::string arg = request_dir.string();
    char* argv[] = {const_cast<char*>(exe.c_str()), const_cast<char*>(arg.c_str()), nullptr};
    if (posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv, environ) != 0) {
      throw BackendError("backend", "cannot launch " + exe + " for " + request_dir.string());
    }
  }
  const auto deadline = std::chrono::steady_clock::now() + config_.timeout;
  bool running = pid > 0;
  while (!fs::exists(request_dir / "done")) {
    if (running) {
      int status = 0;
      if (::waitpid(pid, &status, WNOHANG) == pid) {
        running = false;
        const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
        if (!ok && !fs::exists(request_dir / "done")) {
          throw BackendError("backend", config_.executable.string() + " failed (status " +
                                            std::to_string(status) + ") on " +
                                            request_dir.string());
        }
      }
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      if (running) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
      }
      throw TimeoutError("backend", "no done marker in " + request_dir.string() + " after " +
                                        std::to_string(config_.timeout.count()) + " ms");
    }
    std::this_thread::sleep_for(config_.poll_interval);
  }
  if (running) ::waitpid(pid, nullptr, 0);
}

ScoreMap ExternalBackend::predict_logits(const Raster& patch) const {
  const fs::path req = new_request("predict");
  const auto h = static_cast<std::uint64_t>(patch.height());
  const auto w = static_cast<std::uint64_t>(patch.width());
  const auto c = static_cast<std::uint64_t>(patch.channels());
  write_tensor(req / "input.btsr", Tensor::from_f32({h, w, c}, patch.data()));
  nlohmann::ordered_json manifest{{"op", "predict"},
                                  {"input", "input.btsr"},
                                  {"output", "output.btsr"},
                                  {"height", h},
                                  {"width", w}};
  std::ofstream(req / "manifest.json") << manifest.dump(2) << '\n';
  run_request(req);

  const fs::path out_path = req / "output.btsr";
  const Tensor out = read_tensor(out_path);
  if (out.dims != std::vector<std::uint64_t>{h, w, 2}) {
    std::string got;
    for (auto d : out.dims) got += (got.empty() ? "" : "x") + std::to_string(d);
    throw DimensionMismatchError("backend", out_path.string() + ": dims " + got +
                                                ", expected " + std::to_string(h) + "x" +
                                                std::to_string(w) + "x2");
  }
  return ScoreMap(Raster(patch.width(), patch.height(), 2, out.to_f32()), ScoreKind::kLogits);
}

TrainResult ExternalBackend::train(const TrainingData& data, const TrainSchedule& schedule,
                                   const LossWeights& weights) {
  if (data.label_dir.empty()) {
    throw BackendError("backend", "external training needs a pseudo-label directory");
  }
  const fs::path req = new_request("train");
  nlohmann::ordered_json manifest{
      {"op", "train"},
      {"labels", fs::absolute(data.label_dir).string()},
      {"patches", data.patch_dir.empty() ? "" : fs::absolute(data.patch_dir).string()},
      {"lambda", weights.lambda},
      {"schedule",
       {{"iterations", schedule.iterations},
        {"batch_size", schedule.batch_size},
        {"base_lr", schedule.base_lr},
        {"decay_points", schedule.decay_points},
        {"momentum", schedule.momentum},
        {"frozen_feature_extractor", schedule.frozen_feature_extractor}}},
      {"result", "result.json"}};
  std::ofstream(req / "manifest.json") << manifest.dump(2) << '\n';
  run_request(req);

  const fs::path result_path = req / "result.json";
  std::ifstream in(result_path);
  if (!in) throw BackendError("backend", result_path.string() + ": missing training result");
  nlohmann::json result;
  try {
    in >> result;
    tag_ = result.at("weights_tag").get<std::string>();
    const auto& loss = result.contains("loss") ? result["loss"] : nlohmann::json::object();
    return {tag_, make_loss_report(loss.value("classification", 0.0), loss.value("box", 0.0),
                                   loss.value("mask", 0.0), loss.value("semantic", 0.0),
                                   weights.lambda)};
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("backend", result_path.string() + ": " + e.what());
  }
}

void ExternalBackend::save(const fs::path& dir) const {
  fs::create_directories(dir);
  nlohmann::ordered_json meta{{"backend", "external"},
                              {"executable", config_.executable.string()},
                              {"tag", tag_}};
  std::ofstream(dir / "weights.json") << meta.dump(2) << '\n';
}

void ExternalBackend::load(const fs::path& dir) {
  std::ifstream in(dir / "weights.json");
  if (!in) throw BackendError("backend", (dir / "weights.json").string() + ": missing");
  nlohmann::json meta;
  try {
    in >> meta;
    tag_ = meta.at("tag").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("backend", (dir / "weights.json").string() + ": " + e.what());
  }
}

}  // namespace pseudoseg
