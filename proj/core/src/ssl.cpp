#include "pseudoseg/ssl.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pseudoseg/error.hpp"
#include "pseudoseg/fusion.hpp"
#include "pseudoseg/image_io.hpp"
#include "pseudoseg/tiling.hpp"

namespace pseudoseg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSsl: return "ssl";
    case Variant::kSslRgr: return "ssl-rgr";
    case Variant::kSslRgrPp: return "ssl-rgr-pp";
  }
  return "ssl-rgr";
}

Variant parse_variant(const std::string& name) {
  if (name == "ssl") return Variant::kSsl;
  if (name == "ssl-rgr") return Variant::kSslRgr;
  if (name == "ssl-rgr-pp") return Variant::kSslRgrPp;
  throw DataError("ssl", "unknown variant '" + name + "' (ssl, ssl-rgr, ssl-rgr-pp)");
}

std::string to_string(RetrainFrom r) { return r == RetrainFrom::kInitial ? "initial" : "previous"; }

RetrainFrom parse_retrain_from(const std::string& name) {
  if (name == "previous") return RetrainFrom::kPrevious;
  if (name == "initial") return RetrainFrom::kInitial;
  throw DataError("ssl", "unknown retrain source '" + name + "' (previous, initial)");
}

void SslConfig::validate() const {
  if (window_factor < 1) throw DataError("ssl", "window factor must be >= 1");
  if (rotations < 1) throw DataError("ssl", "rotation count must be >= 1");
  if (!(loss.lambda >= 0 && loss.lambda <= 1)) throw DataError("ssl", "lambda must lie in [0, 1]");
  if (max_iter < 0) throw DataError("ssl", "max-iter must be >= 0");
  if (tau_steps < 2) throw DataError("ssl", "tau grid needs at least 2 steps");
  if (panoptic.connectivity != 4 && panoptic.connectivity != 8) {
    throw DataError("ssl", "connectivity must be 4 or 8");
  }
  if (jobs < 0) throw DataError("ssl", "jobs must be >= 0");
  rgr.validate();
  schedule.validate();
}

fs::path iteration_dir(const fs::path& run_dir, int iteration) {
  return run_dir / ("iter-" + std::to_string(iteration));
}

// --- config and state files -------------------------------------------------

namespace {

std::string to_string(GrowthMode g) {
  switch (g) {
    case GrowthMode::kNearestSeed: return "nearest-seed";
    case GrowthMode::kConnected4: return "connected-4";
    case GrowthMode::kConnected8: return "connected-8";
  }
  return "nearest-seed";
}

GrowthMode parse_growth(const std::string& s) {
  if (s == "nearest-seed") return GrowthMode::kNearestSeed;
  if (s == "connected-4") return GrowthMode::kConnected4;
  if (s == "connected-8") return GrowthMode::kConnected8;
  throw DataError("ssl", "unknown growth mode '" + s + "'");
}

ordered_json config_json(const SslConfig& c) {
  return ordered_json{
      {"window_factor", c.window_factor},
      {"rotations", c.rotations},
      {"lambda", c.loss.lambda},
      {"rgr",
       {{"spacing", c.rgr.spacing},
        {"runs", c.rgr.num_runs},
        {"threshold", c.rgr.scoremap_threshold},
        {"fg", c.rgr.hi_fg},
        {"bg", c.rgr.hi_bg},
        {"spatial_weight", c.rgr.spatial_weight},
        {"growth", to_string(c.rgr.growth)}}},
      {"variant", to_string(c.variant)},
      {"max_iter", c.max_iter},
      {"seed", c.seed},
      {"schedule",
       {{"iterations", c.schedule.iterations},
        {"batch_size", c.schedule.batch_size},
        {"base_lr", c.schedule.base_lr},
        {"decay_points", c.schedule.decay_points},
        {"momentum", c.schedule.momentum},
        {"frozen_feature_extractor", c.schedule.frozen_feature_extractor}}},
      {"retrain_from", to_string(c.retrain_from)},
      {"tau_steps", c.tau_steps},
      {"connectivity", c.panoptic.connectivity},
      {"min_area", c.panoptic.min_area},
      {"jobs", c.jobs}};
}

SslConfig config_from_json(const nlohmann::json& j) {
  SslConfig c;
  c.window_factor = j.at("window_factor").get<int>();
  c.rotations = j.at("rotations").get<int>();
  c.loss.lambda = j.at("lambda").get<double>();
  const auto& r = j.at("rgr");
  c.rgr.spacing = r.at("spacing").get<double>();
  c.rgr.num_runs = r.at("runs").get<int>();
  c.rgr.scoremap_threshold = r.at("threshold").get<double>();
  c.rgr.hi_fg = r.at("fg").get<double>();
  c.rgr.hi_bg = r.at("bg").get<double>();
  c.rgr.spatial_weight = r.at("spatial_weight").get<double>();
  c.rgr.growth = parse_growth(r.at("growth").get<std::string>());
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.max_iter = j.at("max_iter").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& s = j.at("schedule");
  c.schedule.iterations = s.at("iterations").get<int>();
  c.schedule.batch_size = s.at("batch_size").get<int>();
  c.schedule.base_lr = s.at("base_lr").get<double>();
  c.schedule.decay_points = s.at("decay_points").get<std::vector<double>>();
  c.schedule.momentum = s.at("momentum").get<double>();
  c.schedule.frozen_feature_extractor = s.at("frozen_feature_extractor").get<bool>();
  c.retrain_from = parse_retrain_from(j.at("retrain_from").get<std::string>());
  c.tau_steps = j.at("tau_steps").get<int>();
  c.panoptic.connectivity = j.at("connectivity").get<int>();
  c.panoptic.min_area = j.at("min_area").get<std::size_t>();
  c.jobs = j.at("jobs").get<int>();
  return c;
}

ordered_json loss_json(const LossReport& l) {
  return {{"classification", l.classification},
          {"box", l.box},
          {"mask", l.mask},
          {"semantic", l.semantic},
          {"total", l.total}};
}

ordered_json curve_json(const std::vector<PrPoint>& curve) {
  ordered_json rows = ordered_json::array();
  for (const auto& p : curve) rows.push_back({p.threshold, p.precision, p.recall});
  return rows;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("ssl", path.string() + ": cannot write");
}

// Writes state.json, metrics.json and config.json into `staging`.
void write_state_files(const fs::path& staging, const SslState& state,
                       const std::vector<PrPoint>& curve, std::size_t pseudo_labels,
                       const RunLocation& location) {
  ordered_json st{{"iteration", state.iteration},
                  {"weights_tag", state.weights_tag},
                  {"tau", state.tau},
                  {"labels", state.labels_dir.empty() ? "" : "labels"},
                  {"config", config_json(state.config)}};
  write_text(staging / "state.json", st.dump(2) + "\n");
  ordered_json metrics{{"iteration", state.iteration},
                       {"weights_tag", state.weights_tag},
                       {"tau", state.tau},
                       {"loss", loss_json(state.loss)},
                       {"training_samples", state.training_samples},
                       {"pseudo_labels", pseudo_labels},
                       {"labeled_pr_curve", curve_json(curve)}};
  write_text(staging / "metrics.json", metrics.dump(2) + "\n");
  write_text(staging / "config.json", location.snapshot_json.empty()
                                          ? render_ssl_config(state.config)
                                          : location.snapshot_json);
}

// Staging directory that is removed unless commit() renames it into place.
class StagedDir {
 public:
  StagedDir(const fs::path& run_dir, int iteration)
      : final_(iteration_dir(run_dir, iteration)),
        staging_(run_dir / (".staging-iter-" + std::to_string(iteration))) {
    if (fs::exists(final_)) {
      throw DataError("ssl", final_.string() + ": iteration already exists (artifacts are immutable)");
    }
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  const fs::path& path() const noexcept { return staging_; }
  const fs::path& final_path() const noexcept { return final_; }
  void commit() {
    fs::rename(staging_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path staging_;
  bool committed_ = false;
};

void write_patches(const fs::path& dir, const std::vector<PanopticPseudoLabel>& labels,
                   const std::vector<TrainingSample>& samples) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string name = label_dir_name(labels[i].provenance);
    write_rgb(dir / (name + ".png"), samples[i].image);
    write_mask(dir / (name + "_valid.png"), samples[i].valid);
  }
}

TrainResult train_with_context(SegmentationBackend& backend, const TrainingData& data,
                               const SslConfig& config, int iteration) {
  try {
    return backend.train(data, config.schedule, config.loss);
  } catch (const BackendError& e) {
    throw BackendError("ssl", "training for iteration " + std::to_string(iteration) +
                                  " failed: " + e.what());
  }
}

double tau_from_labeled(const SegmentationBackend& backend,
                        const std::vector<LabeledImage>& labeled, const SslConfig& config,
                        std::vector<PrPoint>& curve) {
  curve = labeled_pr_curve(backend, labeled, config);
  bool any = std::any_of(curve.begin(), curve.end(),
                         [](const PrPoint& p) { return p.precision + p.recall > 0; });
  // No usable row: the model misses every labeled flower. Keep the default.
  return any ? select_threshold(curve) : 0.5;
}

}  // namespace

std::string render_ssl_config(const SslConfig& config) { return config_json(config).dump(2) + "\n"; }

SslConfig parse_ssl_config(const std::string& text) {
  try {
    return config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("ssl", std::string("bad config: ") + e.what());
  }
}

// --- threading ----------------------------------------------------------------

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs)
                                 : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// --- threshold selection and inference ------------------------------------------

double select_threshold(const std::vector<PrPoint>& curve) {
  if (curve.empty()) throw DataError("ssl", "cannot select a threshold from an empty PR curve");
  bool found = false;
  double best_f1 = 0.0;
  double best_t = 0.0;
  for (const auto& p : curve) {
    if (p.precision + p.recall <= 0) continue;
    const double f1 = p.f1();
    if (!found || f1 > best_f1 || (f1 == best_f1 && p.threshold > best_t)) {
      found = true;
      best_f1 = f1;
      best_t = p.threshold;
    }
  }
  if (!found) throw DataError("ssl", "every PR row has zero precision and recall");
  return best_t;
}

InferResult infer(const SegmentationBackend& backend, const Raster& image,
                  const InferOptions& options) {
  if (!backend.trained()) {
    throw DataError("ssl", "backend '" + backend.name() + "' has no trained ssl state");
  }
  const WindowGrid grid = plan_grid(image.height(), image.width(), options.window_factor);
  std::vector<PatchScores> patches;
  patches.reserve(grid.size());
  for (std::size_t w = 0; w < grid.size(); ++w) {
    patches.push_back({w, softmax(backend.predict_logits(extract(image, grid, w)))});
  }
  InferResult out;
  out.probabilities = recompose(patches, grid, VoteMode::kSoft);
  out.mask = options.post_process ? refine(image, out.probabilities, options.rgr, options.seed)
                                  : to_mask(out.probabilities, options.tau);
  return out;
}

InferOptions infer_options(const SslState& state, std::optional<bool> post_process) {
  InferOptions o;
  o.window_factor = state.config.window_factor;
  o.tau = state.tau;
  o.post_process = post_process.value_or(state.config.variant == Variant::kSslRgrPp);
  o.rgr = state.config.rgr;
  o.seed = derive_seed(state.config.seed, {0x696E666572ull, static_cast<std::uint64_t>(state.iteration)});
  return o;
}

std::vector<PrPoint> labeled_pr_curve(const SegmentationBackend& backend,
                                      const std::vector<LabeledImage>& labeled,
                                      const SslConfig& config) {
  std::vector<ScoreMap> probs(labeled.size());
  InferOptions opts;
  opts.window_factor = config.window_factor;
  parallel_for(labeled.size(), config.jobs, [&](std::size_t i) {
    probs[i] = infer(backend, labeled[i].image, opts).probabilities;
  });
  std::vector<const ScoreMap*> p;
  std::vector<const BinaryMask*> g;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    p.push_back(&probs[i]);
    g.push_back(&labeled[i].mask);
  }
  const auto grid = threshold_grid(config.tau_steps);
  return pooled_pr_curve(p, g, grid);
}

// --- Alg. 1 ---------------------------------------------------------------------------

SslState init_supervised(const std::vector<LabeledImage>& labeled, const SslConfig& config,
                         SegmentationBackend& backend, const RunLocation& location) {
  config.validate();
  if (labeled.empty()) throw DataError("ssl", "init-train needs at least one labeled image");
  for (const auto& item : labeled) {
    if (item.image.width() != item.mask.width() || item.image.height() != item.mask.height()) {
      throw DataError("ssl", "labeled image '" + item.id + "' and its mask differ in size");
    }
  }

  const LabeledSet set = build_labeled_set(labeled, config.window_factor, config.rotations,
                                           config.seed);
  const AugmentationPlan& plan = set.plan();
  const std::size_t per_image = plan.windows_per_image();

  // Manual masks go through the same panoptic conversion as pseudo-labels.
  std::vector<std::vector<PanopticPseudoLabel>> labels(labeled.size() * per_image);
  std::vector<std::vector<TrainingSample>> samples(labeled.size() * per_image);
  parallel_for(labeled.size() * per_image, config.jobs, [&](std::size_t slot) {
    const std::size_t img = slot / per_image;
    const std::size_t win = slot % per_image;
    const BinaryMask window_mask = extract(labeled[img].mask, plan.grid(img), win);
    labels[slot] = to_panoptic(window_mask, plan.angles(), {labeled[img].id, win, 0, 0},
                               config.panoptic);
    for (std::size_t j = 0; j < plan.angles().size(); ++j) {
      LabeledItem item = set.item(slot * plan.angles().size() + j);
      samples[slot].push_back(
          {std::move(item.patch.content), labels[slot][j].semantic, std::move(item.patch.validity)});
    }
  });

  TrainingData data;
  std::vector<PanopticPseudoLabel> flat_labels;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    for (auto& sample : samples[s]) data.samples.push_back(std::move(sample));
    for (auto& label : labels[s]) flat_labels.push_back(std::move(label));
  }

  fs::create_directories(location.run_dir);
  StagedDir staged(location.run_dir, 0);
  SslState state;
  state.iteration = 0;
  state.config = config;
  if (backend.needs_files()) {
    write_labels(flat_labels, staged.path() / "labels");
    write_patches(staged.path() / "patches", flat_labels, data.samples);
    data.label_dir = staged.path() / "labels";
    data.patch_dir = staged.path() / "patches";
    state.labels_dir = staged.final_path() / "labels";
  }

  const TrainResult result = train_with_context(backend, data, config, 0);
  backend.save(staged.path() / "weights");
  state.weights_tag = result.weights_tag;
  state.loss = result.loss;
  state.training_samples = data.samples.size();

  std::vector<PrPoint> curve;
  state.tau = tau_from_labeled(backend, labeled, config, curve);
  state.dir = staged.final_path();
  write_state_files(staged.path(), state, curve, 0, location);
  staged.commit();
  return state;
}

namespace {

struct WindowLabels {
  std::vector<PanopticPseudoLabel> labels;
  std::vector<TrainingSample> samples;
};

WindowLabels label_window(const SslState& state, const SegmentationBackend& backend,
                          const Raster& patch, const AngleSet& angles, const Provenance& prov,
                          std::uint64_t refine_seed) {
  const SslConfig& cfg = state.config;
  std::vector<AugmentedPrediction> views;
  std::vector<RotatedView<Raster>> rotated;
  views.reserve(angles.size());
  rotated.reserve(angles.size());
  for (std::size_t j = 0; j < angles.size(); ++j) {
    rotated.push_back(rotate(patch, angles[j]));
    views.push_back({j, backend.predict_logits(rotated.back().content), rotated.back().validity});
  }
  const FusedScoreMap fused = fuse(views, angles, patch.width(), patch.height());
  BinaryMask semantic = cfg.variant == Variant::kSsl
                            ? to_mask(fused.probabilities, state.tau)
                            : refine(patch, fused.probabilities, cfg.rgr, refine_seed);

  WindowLabels out;
  out.labels = to_panoptic(semantic, angles, prov, cfg.panoptic);
  for (std::size_t j = 0; j < angles.size(); ++j) {
    out.samples.push_back(
        {std::move(rotated[j].content), out.labels[j].semantic, std::move(rotated[j].validity)});
  }
  return out;
}

std::vector<WindowLabels> label_all(const SslState& state,
                                    const std::vector<UnlabeledImage>& unlabeled,
                                    const SegmentationBackend& backend, int iteration) {
  const SslConfig& cfg = state.config;
  std::vector<ImageShape> shapes;
  for (const auto& u : unlabeled) shapes.push_back({u.image.height(), u.image.width()});
  const AugmentationPlan plan =
      plan_augmentation(shapes, cfg.window_factor, cfg.rotations, cfg.seed);
  const std::size_t per_image = plan.windows_per_image();
  std::vector<WindowLabels> out(unlabeled.size() * per_image);
  parallel_for(out.size(), cfg.jobs, [&](std::size_t slot) {
    const std::size_t img = slot / per_image;
    const std::size_t win = slot % per_image;
    const Raster patch = extract(unlabeled[img].image, plan.grid(img), win);
    const std::uint64_t seed =
        derive_seed(cfg.seed, {static_cast<std::uint64_t>(iteration), img, win});
    out[slot] = label_window(state, backend, patch, plan.angles(),
                             {unlabeled[img].id, win, 0, iteration}, seed);
  });
  return out;
}

}  // namespace

std::vector<PanopticPseudoLabel> generate_pseudo_labels(
    const SslState& state, const std::vector<UnlabeledImage>& unlabeled,
    const SegmentationBackend& backend, int iteration) {
  if (!backend.trained()) throw DataError("ssl", "pseudo-labeling needs a trained ssl state");
  std::vector<PanopticPseudoLabel> labels;
  for (auto& w : label_all(state, unlabeled, backend, iteration)) {
    for (auto& l : w.labels) labels.push_back(std::move(l));
  }
  return labels;
}

SslState ssl_iterate(const SslState& state, const std::vector<UnlabeledImage>& unlabeled,
                     SegmentationBackend& backend, const RunLocation& location,
                     const std::vector<LabeledImage>* labeled) {
  const SslConfig& cfg = state.config;
  if (state.iteration >= cfg.max_iter) {
    throw DataError("ssl", "ssl state is at iteration " + std::to_string(state.iteration) +
                               " and max-iter is " + std::to_string(cfg.max_iter));
  }
  if (unlabeled.empty()) throw DataError("ssl", "ssl-run needs at least one unlabeled image");
  if (!backend.trained()) throw DataError("ssl", "ssl-run needs a trained ssl state");
  const int r = state.iteration + 1;

  std::vector<WindowLabels> windows = label_all(state, unlabeled, backend, r);
  TrainingData data;
  std::vector<PanopticPseudoLabel> labels;
  for (auto& w : windows) {
    for (auto& s : w.samples) data.samples.push_back(std::move(s));
    for (auto& l : w.labels) labels.push_back(std::move(l));
  }
  windows.clear();

  StagedDir staged(location.run_dir, r);
  write_labels(labels, staged.path() / "labels");
  if (backend.needs_files()) {
    write_patches(staged.path() / "patches", labels, data.samples);
    data.patch_dir = staged.path() / "patches";
  }
  data.label_dir = staged.path() / "labels";

  if (cfg.retrain_from == RetrainFrom::kInitial) {
    backend.load(iteration_dir(location.run_dir, 0) / "weights");
  }
  SslState next;
  next.iteration = r;
  next.config = cfg;
  next.tau = state.tau;
  const TrainResult result = train_with_context(backend, data, cfg, r);
  backend.save(staged.path() / "weights");
  next.weights_tag = result.weights_tag;
  next.loss = result.loss;
  next.training_samples = data.samples.size();

  std::vector<PrPoint> curve;
  if (labeled != nullptr && !labeled->empty()) {
    next.tau = tau_from_labeled(backend, *labeled, cfg, curve);
  }
  next.dir = staged.final_path();
  next.labels_dir = staged.final_path() / "labels";
  write_state_files(staged.path(), next, curve, labels.size(), location);
  staged.commit();
  return next;
}

int latest_iteration(const fs::path& run_dir) {
  int best = -1;
  if (fs::is_directory(run_dir)) {
    for (const auto& e : fs::directory_iterator(run_dir)) {
      const std::string name = e.path().filename().string();
      if (!e.is_directory() || name.rfind("iter-", 0) != 0) continue;
      try {
        std::size_t used = 0;
        const int r = std::stoi(name.substr(5), &used);
        if (used == name.size() - 5 && fs::exists(e.path() / "state.json")) best = std::max(best, r);
      } catch (const std::exception&) {
      }
    }
  }
  return best;
}

SslState load_state(const fs::path& run_dir, SegmentationBackend& backend,
                    std::optional<int> iteration) {
  const int r = iteration.value_or(latest_iteration(run_dir));
  const fs::path dir = iteration_dir(run_dir, r);
  const fs::path state_path = dir / "state.json";
  if (r < 0 || !fs::exists(state_path)) {
    throw DataError("ssl", "no ssl state found in " + run_dir.string() +
                               " (run init-train first)");
  }
  SslState state;
  try {
    std::ifstream in(state_path);
    const auto j = nlohmann::json::parse(in);
    state.iteration = j.at("iteration").get<int>();
    state.weights_tag = j.at("weights_tag").get<std::string>();
    state.tau = j.at("tau").get<double>();
    const std::string labels = j.at("labels").get<std::string>();
    if (!labels.empty()) state.labels_dir = dir / labels;
    state.config = config_from_json(j.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("ssl", state_path.string() + ": bad ssl state: " + e.what());
  }
  state.dir = dir;
  backend.load(dir / "weights");
  return state;
}

}  // namespace pseudoseg
