#include "wastegan/segmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "wastegan/adam.hpp"
#include "wastegan/errors.hpp"
#include "wastegan/hash.hpp"
#include "wastegan/ops.hpp"

namespace wastegan {

void SegModelConfig::validate() const {
  if (classes < 2) throw ConfigError("seg model: need at least 2 classes");
  if (widths.size() != 4) throw ConfigError("seg model: widths must list stem and three down blocks");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("seg model: widths must be positive");
  }
}

SegModel::SegModel(SegModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    const double std = std::sqrt(2.0 / static_cast<double>(in * k * k));
    return ConvLayer{params_.add(name + ".weight", {out, in, k, k}, rng, std),
                     params_.add(name + ".bias", {out}, rng, 0.0)};
  };
  const auto& w = config_.widths;
  stem_ = conv("seg.stem", 3, w[0], 3);
  for (std::size_t i = 0; i < 3; ++i) down_[i] = conv("seg.down" + std::to_string(i), w[i], w[i + 1], 3);
  // up0 fuses down3 (upsampled) with down2, up1 with down1, up2 with the stem.
  std::size_t in = w[3];
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t skip = w[2 - i];
    up_[i] = conv("seg.up" + std::to_string(i), in + skip, skip, 3);
    in = skip;
  }
  head_ = conv("seg.head", in, config_.classes, 1);
}

Tensor SegModel::forward(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) % 8 != 0 || images.dim(3) % 8 != 0) {
    throw DimensionError("seg model: expected [N, 3, H, W] with H, W divisible by 8, got " +
                         shape_str(images.shape()));
  }
  auto act = [](const Tensor& x) { return ops::leaky_relu(x, 0.2f); };
  std::vector<Tensor> skips;
  Tensor x = act(ops::conv2d(images, stem_.w, stem_.b));
  skips.push_back(x);
  for (std::size_t i = 0; i < 3; ++i) {
    x = act(ops::conv2d(x, down_[i].w, down_[i].b, 2));
    if (i < 2) skips.push_back(x);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    x = ops::concat_channels(ops::upsample2x(x), skips[2 - i]);
    x = act(ops::conv2d(x, up_[i].w, up_[i].b));
  }
  return ops::conv2d(x, head_.w, head_.b);
}

std::vector<std::vector<std::uint8_t>> SegModel::predict(const Tensor& images) const {
  NoGradGuard guard;
  const auto labels = ops::argmax_channels(forward(images));
  const std::size_t n = images.dim(0), hw = images.dim(2) * images.dim(3);
  std::vector<std::vector<std::uint8_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].assign(labels.begin() + i * hw, labels.begin() + (i + 1) * hw);
  return out;
}

namespace {

Tensor stack_images(const std::vector<const Tensor*>& images) {
  const Shape& s = images.front()->shape();
  const std::size_t sz = shape_numel(s);
  std::vector<float> v(images.size() * sz);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape() != s) throw DimensionError("seg batch: mixed image shapes");
    std::copy(images[i]->data().begin(), images[i]->data().end(), v.begin() + i * sz);
  }
  return Tensor::from({images.size(), s[0], s[1], s[2]}, std::move(v));
}

}  // namespace

std::vector<std::vector<std::uint8_t>> SegModel::predict(const std::vector<SceneSample>& scenes) const {
  constexpr std::size_t kChunk = 32;
  std::vector<std::vector<std::uint8_t>> out;
  out.reserve(scenes.size());
  for (std::size_t start = 0; start < scenes.size(); start += kChunk) {
    std::vector<const Tensor*> imgs;
    for (std::size_t i = start; i < std::min(scenes.size(), start + kChunk); ++i) imgs.push_back(&scenes[i].image);
    for (auto& m : predict(stack_images(imgs))) out.push_back(std::move(m));
  }
  return out;
}

Tensor SegModel::logits(const SceneSample& scene) const {
  NoGradGuard guard;
  auto l = forward(stack_images({&scene.image}));
  return Tensor::from({l.dim(1), l.dim(2), l.dim(3)}, std::vector<float>(l.data().begin(), l.data().end()));
}

std::vector<NamedTensor> SegModel::state() const {
  std::vector<NamedTensor> out;
  std::vector<float> widths;
  for (auto w : config_.widths) widths.push_back(static_cast<float>(w));
  out.push_back({"config.seg.classes", {1}, {static_cast<float>(config_.classes)}});
  out.push_back({"config.seg.widths", {widths.size()}, widths});
  for (const auto& p : params_.items()) out.push_back(to_named(p.name, p.tensor));
  return out;
}

void SegModel::load_state(std::span<const NamedTensor> tensors) {
  for (auto& p : params_.items()) {
    const NamedTensor& t = require_tensor(tensors, p.name);
    if (t.shape != p.tensor.shape()) {
      throw ContractError("checkpoint tensor " + p.name + " has shape " + shape_str(t.shape) +
                          ", model expects " + shape_str(p.tensor.shape()));
    }
    std::copy(t.values.begin(), t.values.end(), p.tensor.mutable_data().begin());
  }
}

std::size_t MixDataset::size() const { return (real ? real->size() : 0) + synthetic.size(); }

void MixDataset::validate() const {
  if (!real || real->empty()) throw ContractError("mix dataset: no real scenes");
  if (synthetic.size() != ratio * real->size()) {
    throw ContractError("mix dataset: expected " + std::to_string(ratio * real->size()) +
                        " synthetic samples, got " + std::to_string(synthetic.size()));
  }
}

void SegTrainConfig::validate() const {
  model.validate();
  if (epochs == 0) throw ConfigError("seg training: epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("seg training: batch_size must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("seg training: learning_rate must be finite and non-negative");
  }
}

SegModel train_seg(const MixDataset& mix, const SegTrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (mix.size() == 0) throw ContractError("train_seg: empty mix");
  mix.validate();
  const auto& real = *mix.real;
  const std::size_t res = real.front().resolution;
  const std::size_t hw = res * res;

  // Synthetic labels are hardened once up front.
  std::vector<std::vector<std::uint8_t>> synth_labels;
  synth_labels.reserve(mix.synthetic.size());
  for (const auto& s : mix.synthetic) {
    if (s.image.dim(1) != res || s.image.dim(2) != res) {
      throw ContractError("train_seg: synthetic resolution differs from the real scenes");
    }
    synth_labels.push_back(ops::argmax_channels(ops::reshape(s.soft_mask, {1, s.soft_mask.dim(0), res, res})));
  }

  SegModel model(cfg.model, mix_seed(seed, 0x5E6));
  Adam<float> opt(model.params().tensors(), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});

  std::vector<std::size_t> order(mix.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed, 0x1000 + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Tensor*> imgs;
      std::vector<std::uint8_t> targets;
      targets.reserve((end - start) * hw);
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t k = order[i];
        if (k < real.size()) {
          imgs.push_back(&real[k].image);
          targets.insert(targets.end(), real[k].mask.begin(), real[k].mask.end());
        } else {
          imgs.push_back(&mix.synthetic[k - real.size()].image);
          const auto& l = synth_labels[k - real.size()];
          targets.insert(targets.end(), l.begin(), l.end());
        }
      }
      opt.zero_grad();
      auto loss = ops::cross_entropy(model.forward(stack_images(imgs)), std::span<const std::uint8_t>(targets));
      if (!std::isfinite(loss.item())) throw TrainingDiverged(static_cast<long>(epoch), "seg cross-entropy");
      loss.backward();
      opt.step();
    }
  }
  return model;
}

}  // namespace wastegan
