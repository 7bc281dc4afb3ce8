// Exchange-protocol backend for tests. Invoked as `echo_backend <request-dir>`.
//
// predict: input plane 0 copied to both logit planes.
// train:   result.json with a tag counting the label directories.
// ECHO_BACKEND_MODE=hang never answers; =bad-dims answers with 3 planes;
// =fail exits with status 5.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <json.hpp>

#include "pseudoseg/tensor_io.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: echo_backend <request-dir>\n";
    return 2;
  }
  const fs::path req = argv[1];
  const char* env = std::getenv("ECHO_BACKEND_MODE");
  const std::string mode = env ? env : "";
  if (mode == "hang") {
    std::this_thread::sleep_for(std::chrono::hours(1));
    return 0;
  }
  if (mode == "fail") return 5;

  try {
    std::ifstream in(req / "manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    const std::string op = manifest.at("op").get<std::string>();
    if (op == "predict") {
      const auto input = pseudoseg::read_tensor(req / manifest.at("input").get<std::string>());
      const std::uint64_t h = input.dims.at(0);
      const std::uint64_t w = input.dims.at(1);
      const std::uint64_t c = input.dims.at(2);
      const auto values = input.to_f32();
      const std::uint64_t planes = mode == "bad-dims" ? 3 : 2;
      std::vector<float> out(h * w * planes, 0.0f);
      for (std::uint64_t i = 0; i < h * w; ++i) {
        out[i * planes] = values[i * c];
        out[i * planes + 1] = values[i * c];
      }
      pseudoseg::write_tensor(req / manifest.at("output").get<std::string>(),
                              pseudoseg::Tensor::from_f32({h, w, planes}, out));
    } else if (op == "train") {
      std::size_t labels = 0;
      for (const auto& e : fs::directory_iterator(manifest.at("labels").get<std::string>())) {
        if (e.is_directory()) ++labels;
      }
      nlohmann::json result{{"weights_tag", "echo-" + std::to_string(labels)},
                            {"loss", {{"semantic", 0.25}}}};
      std::ofstream(req / "result.json") << result.dump(2) << '\n';
    } else {
      std::cerr << "echo_backend: unknown op " << op << '\n';
      return 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "echo_backend: " << e.what() << '\n';
    return 3;
  }
  std::ofstream(req / "done").put('\n');
  return 0;
}
