#include "pseudoseg/toy_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "pseudoseg/error.hpp"
#include "pseudoseg/tensor_io.hpp"

namespace pseudoseg {

namespace {

constexpr std::size_t kF = kToyFeatureCount;

std::size_t parameter_count_for(int hidden) {
  if (hidden == 0) return 2 * kF + 2;
  const auto h = static_cast<std::size_t>(hidden);
  return h * kF + h + 2 * h + 2;
}

struct PixelRef {
  std::uint32_t sample;
  std::uint32_t pixel;
};

}  // namespace

void pixel_features(const Raster& image, int x, int y, std::span<double> out) {
  const int w = image.width();
  const int h = image.height();
  double sum[3] = {0, 0, 0};
  double sq[3] = {0, 0, 0};
  int n = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    const int yy = y + dy;
    if (yy < 0 || yy >= h) continue;
    for (int dx = -1; dx <= 1; ++dx) {
      const int xx = x + dx;
      if (xx < 0 || xx >= w) continue;
      for (int c = 0; c < 3; ++c) {
        const double v = image.at(xx, yy, c);
        sum[c] += v;
        sq[c] += v * v;
      }
      ++n;
    }
  }
  for (int c = 0; c < 3; ++c) {
    const double mean = sum[c] / n;
    out[c] = image.at(x, y, c);
    out[3 + c] = mean;
    out[6 + c] = 10.0 * std::max(0.0, sq[c] / n - mean * mean);
  }
  out[9] = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
  out[10] = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
}

ToyModel::ToyModel(int hidden) : hidden_(hidden) {
  if (hidden < 0) throw DataError("backend", "hidden width must be >= 0");
  params_.assign(parameter_count_for(hidden), 0.0);
}

void ToyModel::initialize(Rng& rng) {
  if (hidden_ == 0) {
    for (std::size_t i = 0; i < 2 * kF; ++i) params_[i] = rng.normal(0.0, 0.1);
    params_[2 * kF] = params_[2 * kF + 1] = 0.0;
    return;
  }
  const auto h = static_cast<std::size_t>(hidden_);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(kF));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
  std::size_t i = 0;
  for (; i < h * kF; ++i) params_[i] = rng.normal(0.0, s1);
  for (; i < h * kF + h; ++i) params_[i] = 0.0;
  for (; i < h * kF + h + 2 * h; ++i) params_[i] = rng.normal(0.0, s2);
  params_[i] = params_[i + 1] = 0.0;
}

std::array<double, 2> ToyModel::logits(std::span<const double> f) const {
  if (hidden_ == 0) {
    std::array<double, 2> z{params_[2 * kF], params_[2 * kF + 1]};
    for (std::size_t k = 0; k < kF; ++k) {
      z[0] += params_[k] * f[k];
      z[1] += params_[kF + k] * f[k];
    }
    return z;
  }
  const auto h = static_cast<std::size_t>(hidden_);
  const double* w1 = params_.data();
  const double* b1 = w1 + h * kF;
  const double* w2 = b1 + h;
  const double* b2 = w2 + 2 * h;
  std::array<double, 2> z{b2[0], b2[1]};
  for (std::size_t u = 0; u < h; ++u) {
    double a = b1[u];
    for (std::size_t k = 0; k < kF; ++k) a += w1[u * kF + k] * f[k];
    const double t = std::tanh(a);
    z[0] += w2[u] * t;
    z[1] += w2[h + u] * t;
  }
  return z;
}

double ToyModel::loss_and_gradient(std::span<const double> features, std::span<const int> labels,
                                   std::vector<double>* gradient) const {
  const std::size_t n = labels.size();
  if (features.size() != n * kF) throw DataError("backend", "feature batch size mismatch");
  if (gradient) gradient->assign(params_.size(), 0.0);
  if (n == 0) return 0.0;
  const auto h = static_cast<std::size_t>(hidden_);
  std::vector<double> act(h);
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const double* f = &features[s * kF];
    std::array<double, 2> z;
    if (hidden_ == 0) {
      z = logits(std::span<const double>(f, kF));
    } else {
      const double* w1 = params_.data();
      const double* b1 = w1 + h * kF;
      const double* w2 = b1 + h;
      const double* b2 = w2 + 2 * h;
      z = {b2[0], b2[1]};
      for (std::size_t u = 0; u < h; ++u) {
        double a = b1[u];
        for (std::size_t k = 0; k < kF; ++k) a += w1[u * kF + k] * f[k];
        act[u] = std::tanh(a);
        z[0] += w2[u] * act[u];
        z[1] += w2[h + u] * act[u];
      }
    }
    const double m = std::max(z[0], z[1]);
    const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
    const int y = labels[s];
    total += lse - z[static_cast<std::size_t>(y)];
    if (!gradient) continue;

    const double p1 = std::exp(z[1] - lse);
    const double dz[2] = {(1.0 - p1) - (y == 0 ? 1.0 : 0.0), p1 - (y == 1 ? 1.0 : 0.0)};
    auto& g = *gradient;
    if (hidden_ == 0) {
      for (std::size_t k = 0; k < kF; ++k) {
        g[k] += dz[0] * f[k];
        g[kF + k] += dz[1] * f[k];
      }
      g[2 * kF] += dz[0];
      g[2 * kF + 1] += dz[1];
      continue;
    }
    const double* w2 = params_.data() + h * kF + h;
    double* gw1 = g.data();
    double* gb1 = gw1 + h * kF;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + 2 * h;
    gb2[0] += dz[0];
    gb2[1] += dz[1];
    for (std::size_t u = 0; u < h; ++u) {
      gw2[u] += dz[0] * act[u];
      gw2[h + u] += dz[1] * act[u];
      const double da = (w2[u] * dz[0] + w2[h + u] * dz[1]) * (1.0 - act[u] * act[u]);
      gb1[u] += da;
      for (std::size_t k = 0; k < kF; ++k) gw1[u * kF + k] += da * f[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  if (gradient) {
    for (double& v : *gradient) v *= inv;
  }
  return total * inv;
}

ToyBackend::ToyBackend(ToyConfig config) : config_(config), model_(config.hidden) {}

ScoreMap ToyBackend::predict_logits(const Raster& patch) const {
  if (!trained_) throw BackendError("backend", "toy backend used for prediction before training");
  if (patch.channels() != 3) throw DataError("backend", "toy backend expects RGB patches");
  ScoreMap out(patch.width(), patch.height(), ScoreKind::kLogits);
  std::array<double, kF> f;
  for (int y = 0; y < patch.height(); ++y) {
    for (int x = 0; x < patch.width(); ++x) {
      pixel_features(patch, x, y, f);
      const auto z = model_.logits(f);
      out.at(x, y, ClassId::kBackground) = static_cast<float>(z[0]);
      out.at(x, y, ClassId::kFlower) = static_cast<float>(z[1]);
    }
  }
  return out;
}

TrainResult ToyBackend::train(const TrainingData& data, const TrainSchedule& schedule,
                              const LossWeights& weights) {
  schedule.validate();
  std::vector<PixelRef> pools[2];
  for (std::size_t s = 0; s < data.samples.size(); ++s) {
    const auto& sample = data.samples[s];
    if (sample.semantic.width() != sample.image.width() ||
        sample.semantic.height() != sample.image.height() ||
        sample.valid.width() != sample.image.width() ||
        sample.valid.height() != sample.image.height()) {
      throw DataError("backend", "training sample " + std::to_string(s) +
                                     " has misaligned image/label/validity");
    }
    const auto sem = sample.semantic.bits();
    const auto valid = sample.valid.bits();
    for (std::size_t p = 0; p < sem.size(); ++p) {
      if (valid[p]) {
        pools[sem[p]].push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(p)});
      }
    }
  }
  if (pools[0].empty() && pools[1].empty()) {
    throw BackendError("backend", "no supervised pixels in the training data");
  }

  Rng rng(derive_seed(config_.seed, {0x747261696Eull}));
  if (!trained_) model_.initialize(rng);

  const std::size_t batch = static_cast<std::size_t>(schedule.batch_size);
  std::vector<double> features(batch * kF);
  std::vector<int> labels(batch);
  std::vector<double> grad;
  std::vector<double> velocity(model_.parameter_count(), 0.0);
  auto params = model_.parameters();

  double recent = 0.0;
  int recent_count = 0;
  const int tail = std::max(1, std::min(100, schedule.iterations / 10));
  for (int it = 0; it < schedule.iterations; ++it) {
    // Half of each batch from each class when both are present.
    for (std::size_t b = 0; b < batch; ++b) {
      int cls = b < batch / 2 ? 1 : 0;
      if (pools[cls].empty()) cls = 1 - cls;
      const PixelRef ref = pools[cls][rng.below(pools[cls].size())];
      const Raster& img = data.samples[ref.sample].image;
      pixel_features(img, static_cast<int>(ref.pixel % img.width()),
                     static_cast<int>(ref.pixel / img.width()),
                     std::span<double>(&features[b * kF], kF));
      labels[b] = cls;
    }
    const double loss = model_.loss_and_gradient(features, labels, &grad);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite semantic loss at iteration " << it << " (lr " << lr_at(schedule, it)
          << ", batch " << batch << ")";
      throw BackendError("backend", msg.str());
    }
    const double lr = lr_at(schedule, it);
    for (std::size_t k = 0; k < params.size(); ++k) {
      velocity[k] = schedule.momentum * velocity[k] - lr * grad[k];
      params[k] += velocity[k];
    }
    if (it >= schedule.iterations - tail) {
      recent += loss;
      ++recent_count;
    }
  }
  trained_ = true;
  const double semantic = recent / std::max(1, recent_count);
  return {weights_tag(), make_loss_report(0.0, 0.0, 0.0, semantic, weights.lambda)};
}

void ToyBackend::save(const std::filesystem::path& dir) const {
  if (!trained_) throw BackendError("backend", "cannot save an untrained toy backend");
  std::filesystem::create_directories(dir);
  const auto params = model_.parameters();
  write_tensor(dir / "weights.btsr",
               Tensor::from_f64({static_cast<std::uint64_t>(params.size())}, params));
  nlohmann::ordered_json meta{{"backend", "toy"},
                              {"hidden", model_.hidden()},
                              {"features", kToyFeatureCount},
                              {"seed", config_.seed},
                              {"tag", weights_tag()}};
  std::ofstream(dir / "weights.json") << meta.dump(2) << '\n';
}

void ToyBackend::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "weights.json");
  if (!in) throw BackendError("backend", (dir / "weights.json").string() + ": missing");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("backend", (dir / "weights.json").string() + ": " + e.what());
  }
  if (meta.value("backend", "") != "toy") {
    throw BackendError("backend", (dir / "weights.json").string() + ": not toy weights");
  }
  const int hidden = meta.value("hidden", -1);
  ToyModel model(hidden);
  const Tensor t = read_tensor(dir / "weights.btsr");
  const auto values = t.to_f64();
  if (t.dims.size() != 1 || values.size() != model.parameter_count()) {
    throw DimensionMismatchError("backend", (dir / "weights.btsr").string() +
                                                ": expected " +
                                                std::to_string(model.parameter_count()) +
                                                " parameters");
  }
  std::copy(values.begin(), values.end(), model.parameters().begin());
  model_ = std::move(model);
  config_.hidden = hidden;
  trained_ = true;
}

std::string ToyBackend::weights_tag() const {
  const auto params = model_.parameters();
  const auto bytes = std::as_bytes(params);
  return "toy-" + fingerprint(std::span<const std::uint8_t>(
                      reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

}  // namespace pseudoseg
