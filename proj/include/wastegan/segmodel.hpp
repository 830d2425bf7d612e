#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wastegan/checkpoint.hpp"
#include "wastegan/gan.hpp"
#include "wastegan/scenegen.hpp"

namespace wastegan {

// Compact encoder-decoder: stem, three stride-2 down blocks, three upsampling
// blocks that concatenate the matching encoder features, 1x1 class head.
struct SegModelConfig {
  std::size_t classes = kSceneClasses;
  std::vector<std::size_t> widths{16, 32, 64, 64};  // stem, down1, down2, down3
  void validate() const;
};

class SegModel {
 public:
  SegModel(SegModelConfig config, std::uint64_t seed);

  // images [N, 3, H, W] -> logits [N, C, H, W]; H and W divisible by 8.
  Tensor forward(const Tensor& images) const;
  std::vector<std::vector<std::uint8_t>> predict(const Tensor& images) const;
  // Batched prediction over scenes, chunked to bound memory.
  std::vector<std::vector<std::uint8_t>> predict(const std::vector<SceneSample>& scenes) const;
  Tensor logits(const SceneSample& scene) const;  // [C, H, W]

  const SegModelConfig& config() const { return config_; }
  ParamSet<float>& params() { return params_; }
  const ParamSet<float>& params() const { return params_; }
  std::vector<NamedTensor> state() const;
  void load_state(std::span<const NamedTensor> tensors);

 private:
  struct ConvLayer {
    Tensor w, b;
  };
  SegModelConfig config_;
  ParamSet<float> params_;
  ConvLayer stem_, down_[3], up_[3], head_;
};

// Training mix: every real scene plus ratio * |real| synthetic samples.
struct MixDataset {
  const std::vector<SceneSample>* real = nullptr;
  std::vector<GeneratedSample> synthetic;
  std::size_t ratio = 0;

  std::size_t size() const;
  // Throws ContractError unless |synthetic| == ratio * |real| and the mix is nonempty.
  void validate() const;
};

struct SegTrainConfig {
  SegModelConfig model;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  void validate() const;
};

// Per-pixel cross-entropy over the shuffled union; synthetic labels are the
// argmax of the generated soft mask.
SegModel train_seg(const MixDataset& mix, const SegTrainConfig& cfg, std::uint64_t seed);

}  // namespace wastegan
