#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wastegan/adam.hpp"
#include "wastegan/gan.hpp"
#include "wastegan/losses.hpp"
#include "wastegan/scenegen.hpp"

namespace wastegan {

struct GanTrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  double lr_d = 1e-4;
  double lr_g = 1e-4;
  double lr_mapping = 1e-6;
  HingeConfig hinge;
  double ema_decay = 0.99;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  // Generated-vs-real label histogram distance is logged at this cadence and
  // at the final step, measured on `hist_samples` samples from a fixed stream.
  std::size_t hist_every = 200;
  std::size_t hist_samples = 64;

  void validate() const;
};

struct GanStepMetrics {
  std::size_t step = 0;
  double loss_drgb = 0, loss_dseg = 0, loss_h = 0, loss_q = 0, loss_imc = 0, loss_g = 0;
};

// Stacked real minibatch: images [N, 3, R, R], one-hot labels [N, C, R, R].
struct RealBatch {
  Tensor images;
  Tensor labels;
};
RealBatch make_real_batch(const std::vector<SceneSample>& scenes, std::span<const std::size_t> indices,
                          std::size_t classes);

// One optimizer per network: both discriminators at lr_d, generator body at
// lr_g, mapping network at lr_mapping.
class GanTrainer {
 public:
  GanTrainer(GanModel<float>& model, GanTrainConfig cfg);

  // Runs step() + 1: discriminator phase then generator phase, each with its
  // own fake batch drawn from the per-step stream.
  GanStepMetrics train_step(const RealBatch& real);
  void discriminator_phase(const RealBatch& real, std::mt19937_64& rng, GanStepMetrics& m);
  void generator_phase(const RealBatch& real, std::mt19937_64& rng, GanStepMetrics& m);

  std::size_t step() const { return step_; }
  const GanTrainConfig& config() const { return cfg_; }
  const CondPixelLabelDist<float>& ema_real() const { return ema_real_; }
  bool ema_initialised() const { return ema_init_; }
  Adam<float>& opt_d_rgb() { return *opt_d_rgb_; }
  Adam<float>& opt_d_seg() { return *opt_d_seg_; }
  Adam<float>& opt_generator() { return *opt_gen_; }
  Adam<float>& opt_mapping() { return *opt_map_; }

  // Optimizer moments, EMA table and step counter (model weights excluded).
  std::vector<NamedTensor> state() const;
  void load_state(std::span<const NamedTensor> tensors);

 private:
  GanModel<float>& model_;
  GanTrainConfig cfg_;
  FeatureExtractor<float> features_;
  std::unique_ptr<Adam<float>> opt_d_rgb_, opt_d_seg_, opt_gen_, opt_map_;
  CondPixelLabelDist<float> ema_real_;
  bool ema_init_ = false;
  std::size_t step_ = 0;
};

struct HistogramPoint {
  std::size_t step = 0;
  double distance = 0.0;
};

struct GanTrainResult {
  std::vector<GanStepMetrics> metrics;       // every step of this run (resumed runs include earlier rows)
  std::vector<HistogramPoint> hist_distance;
  std::size_t final_step = 0;
};

struct GanTrainIo {
  std::optional<std::filesystem::path> out_dir;  // checkpoint.wtk, metrics.csv, hist_distance.csv
  std::optional<std::filesystem::path> resume_from;
};

// Trains on the scenes (all of them are candidates for every minibatch).
// Throws ConfigError when fewer scenes than batch_size are supplied.
GanTrainResult train_gan(GanModel<float>& model, const std::vector<SceneSample>& scenes,
                         const GanTrainConfig& cfg, const GanTrainIo& io = {});

inline constexpr const char* kMetricsHeader = "step,loss_drgb,loss_dseg,loss_h,loss_q,loss_imc,loss_g";
std::string metrics_csv(std::span<const GanStepMetrics> rows);
std::vector<GanStepMetrics> parse_metrics_csv(const std::string& text);

// Rebuilds a model from a WTK1 file written by train_gan. Missing file raises IoError.
std::unique_ptr<GanModel<float>> load_gan_checkpoint(const std::filesystem::path& path);

// Distance between the label histogram of `samples` generated from a fixed
// stream and the real scenes' label histogram.
double generated_histogram_distance(const GanModel<float>& model, const std::vector<SceneSample>& scenes,
                                    std::size_t samples, std::uint64_t seed);

}  // namespace wastegan
