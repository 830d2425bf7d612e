#include "wastegan/losses.hpp"

#include <cmath>

#include "wastegan/errors.hpp"
#include "wastegan/ops.hpp"

namespace wastegan {

void HingeConfig::validate() const {
  if (!(k >= 0.0 && k <= 1.0)) throw ConfigError("hinge: k must lie in [0, 1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("hinge: alpha must lie in [0, 1]");
}

namespace {

template <typename T>
void require_scores(const BasicTensor<T>& s, const char* what) {
  if (!s.defined() || s.numel() == 0) throw ContractError(std::string(what) + ": empty score list");
}

template <typename T>
BasicTensor<T> sobel_kernel(bool horizontal) {
  // Horizontal derivative [[-1,0,1],[-2,0,2],[-1,0,1]] and its transpose.
  static const double sx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  static const double sy[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  std::vector<T> v(9);
  for (int i = 0; i < 9; ++i) v[i] = static_cast<T>(horizontal ? sx[i] : sy[i]);
  return BasicTensor<T>::from({1, 1, 3, 3}, std::move(v));
}

}  // namespace

template <typename T>
BasicTensor<T> loss_d_hinge(const BasicTensor<T>& real_scores, const BasicTensor<T>& fake_scores,
                            const HingeConfig& cfg) {
  cfg.validate();
  require_scores(real_scores, "discriminator hinge (real)");
  require_scores(fake_scores, "discriminator hinge (fake)");
  const T k = static_cast<T>(cfg.k);
  auto real_term = ops::mean(ops::relu(ops::add_scalar(ops::scale(real_scores, T(-1)), k)));
  auto fake_term = ops::mean(ops::relu(ops::add_scalar(fake_scores, k)));
  return ops::add(real_term, fake_term);
}

template <typename T>
BasicTensor<T> loss_g_hinge(const BasicTensor<T>& drgb_fake, const BasicTensor<T>& drgb_real,
                            const BasicTensor<T>& dseg_fake, const BasicTensor<T>& dseg_real,
                            const HingeConfig& cfg) {
  cfg.validate();
  for (const auto* s : {&drgb_fake, &drgb_real, &dseg_fake, &dseg_real}) require_scores(*s, "generator hinge");
  const T a = static_cast<T>(cfg.alpha);
  auto rgb = ops::add(ops::scale(ops::mean(drgb_fake), -a), ops::scale(ops::mean(drgb_real), T(1) - a));
  auto seg = ops::add(ops::scale(ops::mean(dseg_fake), -a), ops::scale(ops::mean(dseg_real), T(1) - a));
  return ops::add(rgb, seg);
}

template <typename T>
BasicTensor<T> luminance(const BasicTensor<T>& images) {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw DimensionError("luminance: expected [N, 3, H, W], got " + shape_str(images.shape()));
  }
  auto weights = BasicTensor<T>::from({1, 3, 1, 1}, {T(0.299), T(0.587), T(0.114)});
  return ops::conv2d(images, weights, BasicTensor<T>{});
}

template <typename T>
BasicTensor<T> sobel_magnitude(const BasicTensor<T>& gray) {
  if (gray.rank() != 4 || gray.dim(1) != 1) {
    throw DimensionError("sobel: expected [N, 1, H, W], got " + shape_str(gray.shape()));
  }
  auto gx = ops::conv2d(gray, sobel_kernel<T>(true), BasicTensor<T>{});
  auto gy = ops::conv2d(gray, sobel_kernel<T>(false), BasicTensor<T>{});
  return ops::magnitude(gx, gy);
}

template <typename T>
BasicTensor<T> sobel_sharpness(const BasicTensor<T>& images) {
  return sobel_magnitude(luminance(images));
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(std::uint64_t seed, std::vector<std::size_t> widths) {
  if (widths.empty()) throw ConfigError("feature extractor needs at least one stage");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t in = 3;
  for (std::size_t out : widths) {
    const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
    std::vector<T> w(out * in * 9);
    for (T& v : w) v = static_cast<T>(std * normal(rng));
    std::vector<T> b(out);
    for (T& v : b) v = static_cast<T>(0.1 * normal(rng));
    weights_.push_back(BasicTensor<T>::from({out, in, 3, 3}, std::move(w)));
    biases_.push_back(BasicTensor<T>::from({out}, std::move(b)));
    in = out;
  }
}

template <typename T>
std::vector<BasicTensor<T>> FeatureExtractor<T>::forward(const BasicTensor<T>& images) const {
  std::vector<BasicTensor<T>> feats;
  BasicTensor<T> x = images;
  for (std::size_t s = 0; s < weights_.size(); ++s) {
    x = ops::leaky_relu(ops::conv2d(x, weights_[s], biases_[s], 2), T(0.2));
    feats.push_back(x);
  }
  return feats;
}

template <typename T>
QualityLoss<T> loss_quality(const BasicTensor<T>& real_images, const BasicTensor<T>& fake_images,
                            const FeatureExtractor<T>& fx) {
  if (!real_images.defined() || !fake_images.defined() || real_images.rank() != 4 ||
      fake_images.rank() != 4) {
    throw ContractError("quality loss: expected image batches [N, 3, H, W]");
  }
  auto fr = fx.forward(real_images);
  auto ff = fx.forward(fake_images);
  BasicTensor<T> perceptual;
  for (std::size_t s = 0; s < fr.size(); ++s) {
    auto term = ops::mae(ops::mean_batch(fr[s]), ops::mean_batch(ff[s]));
    perceptual = perceptual.defined() ? ops::add(perceptual, term) : term;
  }
  auto sharp = ops::mae(ops::mean_batch(sobel_sharpness(real_images)),
                        ops::mean_batch(sobel_sharpness(fake_images)));
  return {perceptual, sharp, ops::add(perceptual, sharp)};
}

template <typename T>
CondPixelLabelDist<T> estimate_cond_dist(const BasicTensor<T>& images, const BasicTensor<T>& labels,
                                         std::size_t bins) {
  if (labels.rank() != 4 || images.rank() != 4 || labels.dim(0) != images.dim(0) ||
      labels.dim(2) != images.dim(2) || labels.dim(3) != images.dim(3)) {
    throw DimensionError("estimate_cond_dist: images " + shape_str(images.shape()) + " vs labels " +
                         shape_str(labels.shape()));
  }
  CondPixelLabelDist<T> out;
  auto joint = ops::soft_histogram(luminance(images), labels, bins);
  out.table = ops::normalize_columns(joint, &out.empty_columns);
  return out;
}

template <typename T>
CondPixelLabelDist<T> ema_update(const CondPixelLabelDist<T>& state, const CondPixelLabelDist<T>& batch,
                                 double decay) {
  if (state.table.shape() != batch.table.shape()) {
    throw ContractError("ema_update: state " + shape_str(state.table.shape()) + " vs batch " +
                        shape_str(batch.table.shape()));
  }
  if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("ema_update: decay must lie in [0, 1)");
  const std::size_t rows = state.bins(), cols = state.classes();
  std::vector<bool> skip(cols, false);
  for (std::size_t c : batch.empty_columns) skip.at(c) = true;
  const T d = static_cast<T>(decay);
  std::vector<T> v(rows * cols);
  for (std::size_t c = 0; c < cols; ++c) {
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const T s = state.table.data()[r * cols + c];
      v[r * cols + c] = skip[c] ? s : d * s + (T(1) - d) * batch.table.data()[r * cols + c];
      total += v[r * cols + c];
    }
    for (std::size_t r = 0; r < rows; ++r) v[r * cols + c] /= total;
  }
  CondPixelLabelDist<T> out;
  out.table = BasicTensor<T>::from({rows, cols}, std::move(v));
  for (std::size_t c : state.empty_columns) {
    if (skip[c]) out.empty_columns.push_back(c);
  }
  return out;
}

template <typename T>
CondPixelLabelDist<T> uniform_cond_dist(std::size_t bins, std::size_t classes) {
  CondPixelLabelDist<T> out;
  out.table = BasicTensor<T>::full({bins, classes}, T(1) / static_cast<T>(bins));
  for (std::size_t c = 0; c < classes; ++c) out.empty_columns.push_back(c);
  return out;
}

template <typename T>
BasicTensor<T> loss_imc(const CondPixelLabelDist<T>& p_real, const CondPixelLabelDist<T>& p_gen) {
  if (p_real.table.shape() != p_gen.table.shape()) {
    throw ContractError("loss_imc: real " + shape_str(p_real.table.shape()) + " vs generated " +
                        shape_str(p_gen.table.shape()));
  }
  return ops::mae(p_real.table.detach(), p_gen.table);
}

template <typename T>
BasicTensor<T> loss_g_total(const BasicTensor<T>& hinge, const BasicTensor<T>& quality,
                            const BasicTensor<T>& imc) {
  for (const auto* t : {&hinge, &quality, &imc}) {
    if (!t->defined() || t->numel() != 1) throw ContractError("loss_g_total: terms must be scalars");
    if (!std::isfinite(static_cast<double>(t->item()))) {
      throw ContractError("loss_g_total: non-finite term");
    }
  }
  return ops::add(ops::add(hinge, quality), imc);
}

#define WASTEGAN_INSTANTIATE_LOSSES(T)                                                                   \
  template BasicTensor<T> loss_d_hinge(const BasicTensor<T>&, const BasicTensor<T>&, const HingeConfig&); \
  template BasicTensor<T> loss_g_hinge(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                       const BasicTensor<T>&, const HingeConfig&);                       \
  template BasicTensor<T> luminance(const BasicTensor<T>&);                                              \
  template BasicTensor<T> sobel_magnitude(const BasicTensor<T>&);                                        \
  template BasicTensor<T> sobel_sharpness(const BasicTensor<T>&);                                        \
  template class FeatureExtractor<T>;                                                                    \
  template QualityLoss<T> loss_quality(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                       const FeatureExtractor<T>&);                                      \
  template CondPixelLabelDist<T> estimate_cond_dist(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                                    std::size_t);                                        \
  template CondPixelLabelDist<T> ema_update(const CondPixelLabelDist<T>&, const CondPixelLabelDist<T>&,  \
                                            double);                                                     \
  template CondPixelLabelDist<T> uniform_cond_dist(std::size_t, std::size_t);                            \
  template BasicTensor<T> loss_imc(const CondPixelLabelDist<T>&, const CondPixelLabelDist<T>&);          \
  template BasicTensor<T> loss_g_total(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);

WASTEGAN_INSTANTIATE_LOSSES(float)
WASTEGAN_INSTANTIATE_LOSSES(double)

}  // namespace wastegan
