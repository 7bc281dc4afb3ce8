// pseudoseg: synthetic data, supervised init, self-training rounds,
// pseudo-labeling, inference and evaluation, one subcommand per stage.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pseudoseg/dataset.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/eval.hpp"
#include "pseudoseg/image_io.hpp"
#include "pseudoseg/pseudolabel.hpp"
#include "pseudoseg/run_config.hpp"
#include "pseudoseg/ssl.hpp"
#include "pseudoseg/synth.hpp"
#include "pseudoseg/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace pseudoseg;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitBackend = 4;

void log(const std::string& msg) { std::cerr << "[pseudoseg] " << msg << '\n'; }

const std::map<std::string, GrowthMode> kGrowthModes{
    {"nearest-seed", GrowthMode::kNearestSeed},
    {"connected-4", GrowthMode::kConnected4},
    {"connected-8", GrowthMode::kConnected8}};

std::string growth_name(GrowthMode g) {
  for (const auto& [name, mode] : kGrowthModes) {
    if (mode == g) return name;
  }
  return "nearest-seed";
}

// String-valued flags converted after parsing.
struct Pending {
  std::string variant;
  std::string retrain_from;
  std::string growth;
};

void add_run_location(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--run", c.run_name, "Run name (state lives in <runs-dir>/<run>)");
  cmd->add_option("--runs-dir", c.runs_dir, "Directory holding all runs");
}

void add_model_options(CLI::App* cmd, RunConfig& c, Pending& p) {
  auto& s = c.ssl;
  cmd->add_option("-K,--window-factor", s.window_factor, "Sliding window factor K")
      ->check(CLI::PositiveNumber);
  cmd->add_option("-J,--rotations", s.rotations, "Rotations per window J")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lambda", s.loss.lambda, "Instance/semantic loss weight")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--rgr-spacing", s.rgr.spacing, "RGR mean seed spacing (pixels)");
  cmd->add_option("--rgr-runs", s.rgr.num_runs, "RGR Monte Carlo runs");
  cmd->add_option("--rgr-fg", s.rgr.hi_fg, "High-confidence foreground probability");
  cmd->add_option("--rgr-bg", s.rgr.hi_bg, "High-confidence background probability");
  cmd->add_option("--rgr-threshold", s.rgr.scoremap_threshold, "RGR foreground vote fraction");
  cmd->add_option("--rgr-spatial-weight", s.rgr.spatial_weight, "RGR spatial distance weight");
  cmd->add_option("--rgr-growth", p.growth, "RGR growth mode")
      ->check(CLI::IsMember({"nearest-seed", "connected-4", "connected-8"}));
  cmd->add_option("--variant", p.variant, "Pseudo-labeling variant")
      ->check(CLI::IsMember({"ssl", "ssl-rgr", "ssl-rgr-pp"}));
  cmd->add_option("--max-iter", s.max_iter, "Self-training rounds")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", s.seed, "Base seed");
  cmd->add_option("--backend", c.backend, "toy or external:<executable>");
  cmd->add_option("--toy-hidden", c.toy_hidden, "Hidden units of the toy model (0 = linear)");
  cmd->add_option("--external-timeout", c.external_timeout_s, "External request timeout (s)");
  cmd->add_option("--train-iterations", s.schedule.iterations, "SGD iterations per training");
  cmd->add_option("--batch-size", s.schedule.batch_size, "Pixels (toy) or images per batch");
  cmd->add_option("--base-lr", s.schedule.base_lr, "Initial learning rate");
  cmd->add_option("--momentum", s.schedule.momentum, "SGD momentum");
  cmd->add_flag("--freeze-backbone,!--no-freeze-backbone", s.schedule.frozen_feature_extractor,
                "Ask the backend to freeze its feature extractor");
  cmd->add_option("--retrain-from", p.retrain_from, "Weights each round starts from")
      ->check(CLI::IsMember({"previous", "initial"}));
  cmd->add_option("--tau-steps", s.tau_steps, "Threshold grid size for tau selection");
  cmd->add_option("--connectivity", s.panoptic.connectivity, "Instance connectivity")
      ->check(CLI::IsMember({4, 8}));
  cmd->add_option("--min-area", s.panoptic.min_area, "Drop instances smaller than this");
}

void add_jobs(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--jobs", c.ssl.jobs, "Worker threads (0 = available cores)")
      ->check(CLI::NonNegativeNumber);
}

void apply_pending(RunConfig& c, const Pending& p) {
  c.ssl.variant = parse_variant(p.variant);
  c.ssl.retrain_from = parse_retrain_from(p.retrain_from);
  c.ssl.rgr.growth = kGrowthModes.at(p.growth);
}

Pending pending_from(const RunConfig& c) {
  return {to_string(c.ssl.variant), to_string(c.ssl.retrain_from), growth_name(c.ssl.rgr.growth)};
}

// --config is read before the main parse so explicit flags override it.
std::optional<fs::path> config_flag(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0 && i + 1 < argc) return fs::path(argv[i + 1]);
    if (std::strncmp(argv[i], "--config=", 9) == 0) return fs::path(argv[i] + 9);
  }
  return std::nullopt;
}

void write_snapshot(const fs::path& path, const RunConfig& c) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << render_run_config(c);
}

RunConfig stored_config(const RunConfig& c) {
  const fs::path path = iteration_dir(c.run_dir(), 0) / "config.json";
  if (!fs::exists(path)) {
    throw DataError("ssl", "no ssl state for run '" + c.run_name + "' in " +
                               c.runs_dir.string() + " (run init-train first)");
  }
  return read_run_config(path);
}

// --- synth-gen -----------------------------------------------------------------

struct SynthArgs {
  SceneSpec spec;
  int count = 8;
  int first_index = 0;
  std::vector<std::string> shifts;
  fs::path out;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* cmd = app.add_subcommand("synth-gen", "Generate a synthetic flower dataset");
  cmd->add_option("--out", a.out, "Dataset directory (images/ and masks/)")->required();
  cmd->add_option("--count", a.count, "Number of images")->check(CLI::NonNegativeNumber);
  cmd->add_option("--first-index", a.first_index, "Index of the first image");
  cmd->add_option("--seed", a.spec.seed, "Scene seed");
  cmd->add_option("--width", a.spec.width, "Image width");
  cmd->add_option("--height", a.spec.height, "Image height");
  cmd->add_option("--flowers-min", a.spec.flowers_min, "Minimum flowers per image");
  cmd->add_option("--flowers-max", a.spec.flowers_max, "Maximum flowers per image");
  cmd->add_option("--radius-min", a.spec.radius_min, "Minimum flower radius");
  cmd->add_option("--radius-max", a.spec.radius_max, "Maximum flower radius");
  cmd->add_option("--lobe-depth", a.spec.lobe_depth, "Petal notch depth in [0,1)");
  cmd->add_option("--distractors", a.spec.distractors, "Distractor blobs per image");
  cmd->add_option("--noise", a.spec.noise, "Pixel noise std-dev");
  cmd->add_option("--texture", a.spec.texture_amplitude, "Background texture amplitude");
  cmd->add_option("--shift", a.shifts, "Domain shift(s) to apply: hue, scale, clutter")
      ->check(CLI::IsMember({"hue", "scale", "clutter"}));
  cmd->callback([&a] {
    std::vector<ShiftKind> kinds;
    for (const auto& s : a.shifts) kinds.push_back(parse_shift_kind(s));
    const SceneSpec spec = shift(a.spec, kinds);
    std::vector<LabeledImage> items;
    for (auto& img : generate(spec, a.count, a.first_index)) {
      items.push_back({std::move(img.id), std::move(img.image), std::move(img.mask)});
    }
    write_dataset(a.out, items);
    log("wrote " + std::to_string(items.size()) + " images to " + a.out.string());
  });
}

// --- init-train / ssl-run / pseudo-label ------------------------------------------

void add_init(CLI::App& app, RunConfig& c, Pending& p) {
  auto* cmd = app.add_subcommand("init-train", "Train initial weights on a labeled dataset");
  cmd->add_option("--labeled", c.labeled, "Labeled dataset (images/ and masks/)");
  cmd->add_option("--config", "Run config file whose values serve as defaults");
  add_run_location(cmd, c);
  add_model_options(cmd, c, p);
  add_jobs(cmd, c);
  cmd->callback([&c, &p] {
    apply_pending(c, p);
    if (c.labeled.empty()) throw CLI::RequiredError("--labeled");
    const auto labeled = read_labeled_dataset(c.labeled);
    auto backend = make_backend(c);
    log("init-train: " + std::to_string(labeled.size()) + " labeled images, K=" +
        std::to_string(c.ssl.window_factor) + ", J=" + std::to_string(c.ssl.rotations));
    const SslState state =
        init_supervised(labeled, c.ssl, *backend, {c.run_dir(), render_run_config(c)});
    log("iteration 0 written to " + state.dir.string() + " (weights " + state.weights_tag +
        ", tau " + std::to_string(state.tau) + ")");
  });
}

void add_ssl_run(CLI::App& app, RunConfig& c, std::optional<int>& max_iter) {
  auto* cmd = app.add_subcommand("ssl-run", "Self-training rounds on unlabeled images");
  cmd->add_option("--unlabeled", c.unlabeled, "Unlabeled dataset (images/ or *.png)")->required();
  cmd->add_option("--labeled", c.labeled, "Labeled dataset for tau reselection");
  cmd->add_option("--max-iter", max_iter, "Stop after this iteration");
  add_run_location(cmd, c);
  add_jobs(cmd, c);
  cmd->callback([&c, &max_iter] {
    RunConfig run = stored_config(c);
    run.unlabeled = c.unlabeled;
    if (!c.labeled.empty()) run.labeled = c.labeled;
    if (c.ssl.jobs != 0) run.ssl.jobs = c.ssl.jobs;
    if (max_iter) run.ssl.max_iter = *max_iter;
    run.runs_dir = c.runs_dir;
    run.run_name = c.run_name;

    auto backend = make_backend(run);
    SslState state = load_state(run.run_dir(), *backend);
    state.config.max_iter = run.ssl.max_iter;
    state.config.jobs = run.ssl.jobs;
    const auto unlabeled = read_unlabeled_dataset(run.unlabeled);
    std::optional<std::vector<LabeledImage>> labeled;
    if (!run.labeled.empty() && fs::exists(run.labeled)) labeled = read_labeled_dataset(run.labeled);
    if (state.iteration >= state.config.max_iter) {
      log("run is already at iteration " + std::to_string(state.iteration) + "; nothing to do");
      return;
    }
    while (state.iteration < state.config.max_iter) {
      state = ssl_iterate(state, unlabeled, *backend, {run.run_dir(), render_run_config(run)},
                          labeled ? &*labeled : nullptr);
      log("iteration " + std::to_string(state.iteration) + " written to " + state.dir.string() +
          " (weights " + state.weights_tag + ", tau " + std::to_string(state.tau) + ")");
    }
  });
}

void add_pseudo_label(CLI::App& app, RunConfig& c, std::optional<int>& iteration) {
  auto* cmd = app.add_subcommand("pseudo-label", "Write pseudo-labels without retraining");
  cmd->add_option("--images", c.images, "Unlabeled images (images/ or *.png)")->required();
  cmd->add_option("--out", c.output, "Label directory")->required();
  cmd->add_option("--iteration", iteration, "State iteration to use (default latest)");
  add_run_location(cmd, c);
  add_jobs(cmd, c);
  cmd->callback([&c, &iteration] {
    RunConfig run = stored_config(c);
    run.runs_dir = c.runs_dir;
    run.run_name = c.run_name;
    auto backend = make_backend(run);
    SslState state = load_state(run.run_dir(), *backend, iteration);
    if (c.ssl.jobs != 0) state.config.jobs = c.ssl.jobs;
    const auto images = read_unlabeled_dataset(c.images);
    const auto labels = generate_pseudo_labels(state, images, *backend, state.iteration + 1);
    write_labels(labels, c.output);
    log("wrote " + std::to_string(labels.size()) + " pseudo-labels to " + c.output.string());
  });
}

// --- infer -----------------------------------------------------------------------------

void add_infer(CLI::App& app, RunConfig& c, std::optional<int>& iteration,
               std::optional<bool>& pp) {
  auto* cmd = app.add_subcommand("infer", "Sliding-window inference with a trained state");
  cmd->add_option("--images", c.images, "Images (images/ or *.png)")->required();
  cmd->add_option("--out", c.output, "Output directory")->required();
  cmd->add_option("--iteration", iteration, "State iteration to use (default latest)");
  cmd->add_flag("--pp,!--no-pp", pp, "Region growing refinement of the output");
  add_run_location(cmd, c);
  add_jobs(cmd, c);
  cmd->callback([&c, &iteration, &pp] {
    RunConfig run = stored_config(c);
    run.runs_dir = c.runs_dir;
    run.run_name = c.run_name;
    auto backend = make_backend(run);
    const SslState state = load_state(run.run_dir(), *backend, iteration);
    const InferOptions opts = infer_options(state, pp);
    const auto images = read_unlabeled_dataset(c.images);
    fs::create_directories(c.output);
    parallel_for(images.size(), c.ssl.jobs, [&](std::size_t i) {
      const InferResult r = infer(*backend, images[i].image, opts);
      const auto& probs = r.probabilities;
      Raster flower(probs.width(), probs.height(), 1);
      for (int y = 0; y < probs.height(); ++y) {
        for (int x = 0; x < probs.width(); ++x) flower.at(x, y, 0) = probs.flower(x, y);
      }
      const fs::path base = c.output / images[i].id;
      write_mask(base.string() + "_mask.png", r.mask);
      write_gray(base.string() + "_prob.png", flower);
      write_tensor(base.string() + "_prob.btsr",
                   Tensor::from_f32({static_cast<std::uint64_t>(probs.height()),
                                     static_cast<std::uint64_t>(probs.width())},
                                    flower.data()));
    });
    log("inferred " + std::to_string(images.size()) + " images with iteration " +
        std::to_string(state.iteration) + (opts.post_process ? " (+pp)" : "") + " into " +
        c.output.string());
  });
}

// --- eval --------------------------------------------------------------------------------

struct EvalArgs {
  fs::path pred;
  fs::path gt;
  int folds = 0;
  std::uint64_t seed = 0;
  std::string aggregation = "per-image";
  std::string run_id = "eval";
  fs::path report;
  fs::path pr_plot;
};

BinaryMask read_prediction(const fs::path& dir, const std::string& id) {
  for (const std::string name : {id + "_mask.png", id + ".png"}) {
    if (fs::exists(dir / name)) return read_mask(dir / name);
  }
  throw DataError("eval", "no prediction for '" + id + "' in " + dir.string());
}

std::optional<ScoreMap> read_probabilities(const fs::path& dir, const std::string& id) {
  const fs::path path = dir / (id + "_prob.btsr");
  if (!fs::exists(path)) return std::nullopt;
  const Tensor t = read_tensor(path);
  if (t.dims.size() != 2) throw DataError("eval", path.string() + ": expected an HxW tensor");
  const auto values = t.to_f32();
  return ScoreMap::from_flower_probabilities(static_cast<int>(t.dims[1]),
                                             static_cast<int>(t.dims[0]), values);
}

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  cmd->add_option("--pred", a.pred, "Prediction directory ({id}_mask.png or {id}.png)")
      ->required();
  cmd->add_option("--gt", a.gt, "Ground-truth dataset (masks/{id}.png)")->required();
  cmd->add_option("--folds", a.folds, "Report per fold plus the aggregate")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", a.seed, "Fold shuffle seed");
  cmd->add_option("--aggregation", a.aggregation, "per-image or pooled")
      ->check(CLI::IsMember({"per-image", "pooled"}));
  cmd->add_option("--run-id", a.run_id, "Name printed in the report");
  cmd->add_option("--report", a.report, "Also write the report text here");
  cmd->add_option("--pr-plot", a.pr_plot, "PR plot data (CSV) from {id}_prob.btsr maps");
  cmd->callback([&a] {
    const auto gt = read_labeled_dataset(a.gt);
    std::vector<EvalItem> items;
    for (const auto& g : gt) items.push_back({g.id, read_prediction(a.pred, g.id), g.mask});
    const Aggregation agg =
        a.aggregation == "pooled" ? Aggregation::kPooled : Aggregation::kPerImage;

    std::ostringstream text;
    if (a.folds > 0) {
      const FoldPlan plan = make_folds(items.size(), a.folds, a.seed);
      std::vector<PixelMetrics> fold_means;
      for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        std::vector<EvalItem> subset;
        for (std::size_t i : plan.folds[f]) subset.push_back(items[i]);
        const EvalReport r = evaluate(a.run_id + "/fold-" + std::to_string(f), subset, agg);
        fold_means.push_back(r.mean);
        text << format_report(r) << '\n';
      }
      EvalReport aggregate;
      aggregate.run_id = a.run_id + "/folds";
      for (std::size_t f = 0; f < fold_means.size(); ++f) {
        aggregate.image_ids.push_back("fold-" + std::to_string(f));
      }
      aggregate.per_image = fold_means;
      summarize(fold_means, aggregate.mean, aggregate.stddev);
      text << format_report(aggregate);
    } else {
      text << format_report(evaluate(a.run_id, items, agg));
    }
    std::cout << text.str();
    if (!a.report.empty()) std::ofstream(a.report) << text.str();

    if (!a.pr_plot.empty()) {
      std::vector<ScoreMap> probs;
      std::vector<const BinaryMask*> masks;
      for (const auto& g : gt) {
        auto p = read_probabilities(a.pred, g.id);
        if (!p) throw DataError("eval", "--pr-plot needs " + g.id + "_prob.btsr in " + a.pred.string());
        probs.push_back(std::move(*p));
        masks.push_back(&g.mask);
      }
      std::vector<const ScoreMap*> ptrs;
      for (const auto& p : probs) ptrs.push_back(&p);
      const auto curve = pooled_pr_curve(ptrs, masks, threshold_grid());
      write_pr_plot_data(a.pr_plot, curve);
      if (!curve.empty()) {
        log("PR plot data written to " + a.pr_plot.string() + "; max-F1 threshold " +
            std::to_string(select_threshold(curve)));
      }
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudoseg: self-training flower segmentation with pseudo-labels"};
  app.require_subcommand(1);

  RunConfig config;
  try {
    if (auto path = config_flag(argc, argv)) config = read_run_config(*path);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kExitData;
  }
  Pending pending = pending_from(config);
  SynthArgs synth;
  EvalArgs eval;
  std::optional<int> max_iter;
  std::optional<int> iteration;
  std::optional<bool> pp;

  add_synth(app, synth);
  add_init(app, config, pending);
  add_ssl_run(app, config, max_iter);
  add_pseudo_label(app, config, iteration);
  add_infer(app, config, iteration, pp);
  add_eval(app, eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const BackendError& e) {
    std::cerr << e.what() << '\n';
    return kExitBackend;
  } catch (const DataError& e) {
    std::cerr << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "pseudoseg: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
