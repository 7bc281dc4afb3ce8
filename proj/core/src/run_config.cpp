#include "pseudoseg/run_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pseudoseg/error.hpp"
#include "pseudoseg/external_backend.hpp"
#include "pseudoseg/toy_backend.hpp"

namespace pseudoseg {

namespace fs = std::filesystem;

std::string render_run_config(const RunConfig& c) {
  nlohmann::ordered_json j{
      {"ssl", nlohmann::ordered_json::parse(render_ssl_config(c.ssl))},
      {"backend", c.backend},
      {"toy_hidden", c.toy_hidden},
      {"external_timeout_s", c.external_timeout_s},
      {"runs_dir", c.runs_dir.string()},
      {"run_name", c.run_name},
      {"labeled", c.labeled.string()},
      {"unlabeled", c.unlabeled.string()},
      {"images", c.images.string()},
      {"output", c.output.string()},
      {"ground_truth", c.ground_truth.string()},
      {"post_process", c.post_process},
      {"folds", c.folds},
      {"aggregation", c.aggregation}};
  return j.dump(2) + "\n";
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.ssl = parse_ssl_config(j.at("ssl").dump());
    c.backend = j.at("backend").get<std::string>();
    c.toy_hidden = j.at("toy_hidden").get<int>();
    c.external_timeout_s = j.at("external_timeout_s").get<double>();
    c.runs_dir = j.at("runs_dir").get<std::string>();
    c.run_name = j.at("run_name").get<std::string>();
    c.labeled = j.at("labeled").get<std::string>();
    c.unlabeled = j.at("unlabeled").get<std::string>();
    c.images = j.at("images").get<std::string>();
    c.output = j.at("output").get<std::string>();
    c.ground_truth = j.at("ground_truth").get<std::string>();
    c.post_process = j.at("post_process").get<bool>();
    c.folds = j.at("folds").get<int>();
    c.aggregation = j.at("aggregation").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cli", std::string("bad run config: ") + e.what());
  }
  return c;
}

RunConfig read_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cli", path.string() + ": cannot open run config");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::unique_ptr<SegmentationBackend> make_backend(const RunConfig& config) {
  if (config.backend == "toy") {
    return std::make_unique<ToyBackend>(ToyConfig{config.toy_hidden, config.ssl.seed});
  }
  const std::string prefix = "external:";
  if (config.backend.rfind(prefix, 0) == 0 && config.backend.size() > prefix.size()) {
    ExternalConfig ext;
    ext.executable = config.backend.substr(prefix.size());
    ext.exchange_dir = config.run_dir() / "exchange";
    ext.timeout = std::chrono::milliseconds(
        static_cast<long long>(config.external_timeout_s * 1000.0));
    return std::make_unique<ExternalBackend>(ext);
  }
  throw DataError("cli", "unknown backend '" + config.backend + "' (toy, external:<path>)");
}

}  // namespace pseudoseg
