#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wastegan/tensor.hpp"

// Differentiable tensor operations. Every op records a backward rule when
// gradient recording is enabled and at least one input requires grad.
// Image tensors are laid out [N, C, H, W].
namespace wastegan::ops {

template <typename T> using TensorT = BasicTensor<T>;

// Elementwise, identical shapes.
template <typename T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> add_scalar(const TensorT<T>& x, T c);
template <typename T> TensorT<T> scale(const TensorT<T>& x, T c);

template <typename T> TensorT<T> relu(const TensorT<T>& x);
template <typename T> TensorT<T> leaky_relu(const TensorT<T>& x, T slope = T(0.2));
template <typename T> TensorT<T> tanh(const TensorT<T>& x);
// Symmetric logarithm sign(x) * log(a|x| + 1); a must be positive.
template <typename T> TensorT<T> slog(const TensorT<T>& x, T a);
// sqrt(gx^2 + gy^2); the gradient is taken as zero where the magnitude is zero.
template <typename T> TensorT<T> magnitude(const TensorT<T>& gx, const TensorT<T>& gy);

// Reductions to a [1] scalar.
template <typename T> TensorT<T> sum(const TensorT<T>& x);
template <typename T> TensorT<T> mean(const TensorT<T>& x);
// Mean absolute error between equally shaped tensors.
template <typename T> TensorT<T> mae(const TensorT<T>& a, const TensorT<T>& b);
// Mean over the leading axis: [N, ...] -> [...] (or [1] for rank-1 input).
template <typename T> TensorT<T> mean_batch(const TensorT<T>& x);

template <typename T> TensorT<T> reshape(const TensorT<T>& x, Shape shape);
// [1, ...] -> [n, ...]
template <typename T> TensorT<T> broadcast_batch(const TensorT<T>& x, std::size_t n);

// [m, k] x [k, n] -> [m, n]
template <typename T> TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);
// x [N, in], weight [out, in], bias [out] (may be undefined) -> [N, out]
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& weight, const TensorT<T>& bias);

// Cross-correlation with zero padding. weight [Co, Ci, K, K], bias [Co] or
// undefined. Output extent (H + 2*pad - K) / stride + 1.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& weight, const TensorT<T>& bias,
                  std::size_t stride = 1, std::size_t pad = SIZE_MAX);

template <typename T> TensorT<T> upsample2x(const TensorT<T>& x);
// Softmax over axis 1 of [N, C, H, W].
template <typename T> TensorT<T> softmax_channels(const TensorT<T>& x);
template <typename T> TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);
// x [N, C, H, W] scaled by s [N, C].
template <typename T> TensorT<T> scale_channels(const TensorT<T>& x, const TensorT<T>& s);

// Joint soft histogram of luminance (any shape, P values in [lo, hi]) and
// per-pixel label weights [N, C, H, W] with N*H*W == P. Each value splits its
// label weight between the two nearest bin centres (triangular kernel).
// Result [bins, C], unnormalised.
template <typename T>
TensorT<T> soft_histogram(const TensorT<T>& luminance, const TensorT<T>& labels,
                          std::size_t bins, T lo = T(-1), T hi = T(1));

// Divides each column of [B, C] by its sum. Columns with zero mass become
// uniform 1/B and carry no gradient; their indices are appended to `empty`.
template <typename T>
TensorT<T> normalize_columns(const TensorT<T>& x, std::vector<std::size_t>* empty = nullptr);

// Mean per-pixel cross-entropy of logits [N, C, H, W] against class indices.
template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& logits, std::span<const std::uint8_t> targets);

// Non-differentiable helpers.
template <typename T>
TensorT<T> one_hot(std::span<const std::uint8_t> masks, std::size_t n, std::size_t classes,
                   std::size_t height, std::size_t width);
template <typename T> std::vector<std::uint8_t> argmax_channels(const TensorT<T>& x);
template <typename T> bool all_finite(const TensorT<T>& x);

}  // namespace wastegan::ops
