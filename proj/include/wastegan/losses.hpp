#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "wastegan/tensor.hpp"

namespace wastegan {

struct HingeConfig {
  double k = 0.5;
  double alpha = 0.8;
  void validate() const;
};

// Adversarial hinge for a discriminator: mean(relu(k - real)) + mean(relu(k + fake)).
// Used for both the image and the image+label discriminator.
template <typename T>
BasicTensor<T> loss_d_hinge(const BasicTensor<T>& real_scores, const BasicTensor<T>& fake_scores,
                            const HingeConfig& cfg);
template <typename T>
BasicTensor<T> loss_d_rgb(const BasicTensor<T>& real_scores, const BasicTensor<T>& fake_scores,
                          const HingeConfig& cfg) {
  return loss_d_hinge(real_scores, fake_scores, cfg);
}
template <typename T>
BasicTensor<T> loss_d_seg(const BasicTensor<T>& real_scores, const BasicTensor<T>& fake_scores,
                          const HingeConfig& cfg) {
  return loss_d_hinge(real_scores, fake_scores, cfg);
}

// Unbalanced generator hinge:
// -a*mean(rgb_fake) + (1-a)*mean(rgb_real) - a*mean(seg_fake) + (1-a)*mean(seg_real).
template <typename T>
BasicTensor<T> loss_g_hinge(const BasicTensor<T>& drgb_fake, const BasicTensor<T>& drgb_real,
                            const BasicTensor<T>& dseg_fake, const BasicTensor<T>& dseg_real,
                            const HingeConfig& cfg);

// RGB [N, 3, H, W] -> luminance [N, 1, H, W] (0.299, 0.587, 0.114).
template <typename T>
BasicTensor<T> luminance(const BasicTensor<T>& images);

// Sobel gradient magnitude of the luminance, [N, 1, H, W], zero padding.
template <typename T>
BasicTensor<T> sobel_sharpness(const BasicTensor<T>& images);
// Single-channel variant: x [N, 1, H, W].
template <typename T>
BasicTensor<T> sobel_magnitude(const BasicTensor<T>& gray);

// Frozen convolutional features used by the perceptual term. Three stride-2
// stages with seeded random weights; parameters never require grad.
template <typename T>
class FeatureExtractor {
 public:
  explicit FeatureExtractor(std::uint64_t seed = 7, std::vector<std::size_t> widths = {16, 32, 64});
  std::vector<BasicTensor<T>> forward(const BasicTensor<T>& images) const;
  std::size_t stages() const { return weights_.size(); }

 private:
  std::vector<BasicTensor<T>> weights_, biases_;
};

template <typename T>
struct QualityLoss {
  BasicTensor<T> perceptual;
  BasicTensor<T> sharpness;
  BasicTensor<T> total;
};

// Batch-statistic quality loss: perceptual (feature means) + Sobel sharpness means.
template <typename T>
QualityLoss<T> loss_quality(const BasicTensor<T>& real_images, const BasicTensor<T>& fake_images,
                            const FeatureExtractor<T>& fx);

// Conditional distribution P(luminance bin | label), one column per class.
template <typename T>
struct CondPixelLabelDist {
  BasicTensor<T> table;                    // [bins, classes]
  std::vector<std::size_t> empty_columns;  // classes with no mass (set to uniform)
  std::size_t bins() const { return table.dim(0); }
  std::size_t classes() const { return table.dim(1); }
};

inline constexpr std::size_t kDefaultBins = 32;

// Soft-binned estimate from images [N, 3, H, W] in [-1, 1] and per-pixel label
// distributions [N, C, H, W]. Differentiable in both inputs.
template <typename T>
CondPixelLabelDist<T> estimate_cond_dist(const BasicTensor<T>& images, const BasicTensor<T>& labels,
                                         std::size_t bins = kDefaultBins);

// decay*state + (1-decay)*batch, columns renormalised. Columns the batch
// flagged empty keep their previous value. Result carries no history.
template <typename T>
CondPixelLabelDist<T> ema_update(const CondPixelLabelDist<T>& state, const CondPixelLabelDist<T>& batch,
                                 double decay);

template <typename T>
CondPixelLabelDist<T> uniform_cond_dist(std::size_t bins, std::size_t classes);

// Mean absolute difference over all bins x classes.
template <typename T>
BasicTensor<T> loss_imc(const CondPixelLabelDist<T>& p_real, const CondPixelLabelDist<T>& p_gen);

// Unweighted sum of the three generator terms; each must be a finite scalar.
template <typename T>
BasicTensor<T> loss_g_total(const BasicTensor<T>& hinge, const BasicTensor<T>& quality,
                            const BasicTensor<T>& imc);

}  // namespace wastegan
