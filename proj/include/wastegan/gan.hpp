#pragma once

#include <atomic>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wastegan/checkpoint.hpp"
#include "wastegan/tensor.hpp"

namespace wastegan {

inline constexpr std::size_t kNumClasses = 5;

struct GanConfig {
  std::size_t resolution = 32;
  std::size_t classes = kNumClasses;
  std::size_t z_dim = 64;
  std::size_t w_dim = 64;
  std::size_t mapping_layers = 4;
  // One entry per upsampling block (4x4 -> 8x8 -> ...).
  std::vector<std::size_t> gen_channels{128, 64, 32};
  // Style-modulated convolutions per block; 3 is the extended block, 2 the base one.
  std::size_t style_layers_per_block = 3;
  // Width at the input resolution followed by one entry per downsampling block.
  std::vector<std::size_t> disc_channels{16, 32, 64, 128};
  std::size_t disc_hidden = 128;
  double slog_a = 1.0;
  std::uint64_t init_seed = 0;

  std::size_t num_blocks() const;
  // Throws ConfigError on inconsistent settings.
  void validate() const;
};

template <typename T>
struct Param {
  std::string name;
  BasicTensor<T> tensor;
};

// Ordered, named parameter collection with deterministic initialisation.
template <typename T>
class ParamSet {
 public:
  BasicTensor<T> add(std::string name, Shape shape, std::mt19937_64& rng, double stddev,
                     double offset = 0.0);
  std::vector<Param<T>>& items() { return items_; }
  const std::vector<Param<T>>& items() const { return items_; }
  std::vector<BasicTensor<T>> tensors() const;
  std::size_t count() const;
  void set_requires_grad(bool on);
  void zero_grad();

 private:
  std::vector<Param<T>> items_;
};

struct LatentCode {
  std::vector<float> z;
};

struct StyleCode {
  std::vector<float> w;
};

template <typename T>
struct GeneratedBatch {
  BasicTensor<T> image;         // [N, 3, H, W] in [-1, 1]
  BasicTensor<T> label_logits;  // [N, C, H, W]
  BasicTensor<T> soft_mask;     // [N, C, H, W], channelwise softmax of the logits
};

struct GeneratedSample {
  Tensor image;         // [3, H, W]
  Tensor label_logits;  // [C, H, W]
  Tensor soft_mask;     // [C, H, W]
};

template <typename T>
class MappingNetwork {
 public:
  MappingNetwork(const GanConfig& config, std::mt19937_64& rng);
  // z [N, z_dim] -> w [N, w_dim]; the last layer is affine without activation.
  BasicTensor<T> forward(const BasicTensor<T>& z) const;
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

 private:
  std::size_t layers_;
  std::size_t z_dim_;
  ParamSet<T> params_;
  std::vector<BasicTensor<T>> weights_, biases_;
};

template <typename T>
class Generator {
 public:
  Generator(const GanConfig& config, std::mt19937_64& rng);
  // w [N, w_dim] -> image and label logits at the configured resolution.
  GeneratedBatch<T> forward(const BasicTensor<T>& w) const;
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  // Number of style-modulated convolutions found in each block's parameter names.
  std::vector<std::size_t> style_layer_audit() const;

 private:
  struct StyleConv {
    BasicTensor<T> affine_w, affine_b, conv_w, conv_b;
  };
  GanConfig config_;
  ParamSet<T> params_;
  BasicTensor<T> const_input_;
  std::vector<std::vector<StyleConv>> blocks_;
  BasicTensor<T> rgb_w_, rgb_b_, label_w_, label_b_;
};

// Residual discriminator with a symmetric-logarithm output head.
template <typename T>
class Discriminator {
 public:
  Discriminator(std::string prefix, std::size_t in_channels, const GanConfig& config,
                std::mt19937_64& rng);
  // x [N, in_channels, R, R] -> scores [N]
  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  // Output before the slog activation, [N].
  BasicTensor<T> forward_linear(const BasicTensor<T>& x) const;
  std::size_t in_channels() const { return in_channels_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

 private:
  struct ResBlock {
    BasicTensor<T> conv0_w, conv0_b, conv1_w, conv1_b, skip_w;
  };
  GanConfig config_;
  std::size_t in_channels_;
  ParamSet<T> params_;
  BasicTensor<T> from_w_, from_b_;
  std::vector<ResBlock> blocks_;
  BasicTensor<T> fc_w_, fc_b_, out_w_, out_b_;
};

template <typename T>
class GanModel {
 public:
  explicit GanModel(GanConfig config);

  const GanConfig& config() const { return config_; }
  MappingNetwork<T>& mapping() { return mapping_; }
  Generator<T>& generator() { return generator_; }
  Discriminator<T>& d_rgb() { return d_rgb_; }
  Discriminator<T>& d_seg() { return d_seg_; }
  const MappingNetwork<T>& mapping() const { return mapping_; }
  const Generator<T>& generator() const { return generator_; }
  const Discriminator<T>& d_rgb() const { return d_rgb_; }
  const Discriminator<T>& d_seg() const { return d_seg_; }

  // Batched z -> (image, logits, soft mask); counts generated samples. Only the
  // first `used` rows count when the batch carries padding (default: all).
  GeneratedBatch<T> generate(const BasicTensor<T>& z, std::size_t used = SIZE_MAX) const;

  StyleCode mapping_forward(const LatentCode& z) const;
  GeneratedSample generator_forward(const StyleCode& w) const;
  // Single-image scores. image [3, H, W]; label [C, H, W].
  double d_rgb_forward(const BasicTensor<T>& image) const;
  double d_seg_forward(const BasicTensor<T>& image, const BasicTensor<T>& label) const;
  // Scores for batches: [N, 3, H, W] and [N, C, H, W].
  BasicTensor<T> score_rgb(const BasicTensor<T>& images) const;
  BasicTensor<T> score_seg(const BasicTensor<T>& images, const BasicTensor<T>& labels) const;

  // n i.i.d. standard-normal latents from `seed`, one generator forward each.
  // Runs fixed-size chunks (the last one zero-padded) so a sample's values do
  // not depend on n: a shorter request returns a bitwise prefix of a longer one.
  std::vector<GeneratedSample> sample_batch(std::size_t n, std::uint64_t seed) const;

  std::vector<Param<T>> named_parameters() const;
  std::vector<NamedTensor> state() const;
  void load_state(std::span<const NamedTensor> tensors);

  std::uint64_t generated_samples() const { return generated_samples_.load(); }
  std::uint64_t generator_calls() const { return generator_calls_.load(); }

 private:
  GanConfig config_;
  std::mt19937_64 init_rng_;
  MappingNetwork<T> mapping_;
  Generator<T> generator_;
  Discriminator<T> d_rgb_;
  Discriminator<T> d_seg_;
  mutable std::atomic<std::uint64_t> generated_samples_{0};
  mutable std::atomic<std::uint64_t> generator_calls_{0};
};

// Standard-normal latent batch [n, z_dim] from a seeded stream.
template <typename T>
BasicTensor<T> sample_latents(std::size_t n, std::size_t z_dim, std::mt19937_64& rng);

std::vector<NamedTensor> gan_config_tensors(const GanConfig& config);
// Inverse of gan_config_tensors; init_seed is not stored and stays 0.
GanConfig gan_config_from_tensors(std::span<const NamedTensor> tensors);

}  // namespace wastegan
