#include "wastegan/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "wastegan/errors.hpp"

namespace wastegan::ops {

namespace {

template <typename T>
using Node = TensorNode<T>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
TensorT<T> finish(Shape shape, std::vector<T> data, std::string_view op,
                  std::initializer_list<const TensorT<T>*> inputs,
                  std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (grad_enabled()) {
    bool any = false;
    for (const auto* in : inputs) {
      if (in->defined() && in->requires_grad()) any = true;
    }
    if (any) {
      node->requires_grad = true;
      for (const auto* in : inputs) {
        if (in->defined()) node->parents.push_back(in->node());
      }
      node->backward_fn = std::move(backward);
    }
  }
  return TensorT<T>(std::move(node));
}

[[noreturn]] void mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                       shape_str(b));
}

template <typename T>
void require_same(std::string_view op, const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape()) mismatch(op, a.shape(), b.shape());
}

template <typename T>
void require_rank(std::string_view op, const TensorT<T>& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(x.shape()));
  }
}

// Unary elementwise op with derivative expressed through input and output.
template <typename T, typename F, typename D>
TensorT<T> unary(const TensorT<T>& x, std::string_view op, F f, D dfdx) {
  std::vector<T> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Node<T>* xn = x.node().get();
  return finish<T>(x.shape(), std::move(out), op, {&x}, [xn, dfdx](Node<T>& self) {
    if (!xn->requires_grad) return;
    auto g = xn->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * dfdx(xn->data[i], self.data[i]);
    }
  });
}

}  // namespace

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  require_same("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>(a.shape(), std::move(out), "add", {&a, &b}, [an, bn](Node<T>& self) {
    for (Node<T>* p : {an, bn}) {
      if (!p->requires_grad) continue;
      auto g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  require_same("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>(a.shape(), std::move(out), "sub", {&a, &b}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      auto g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  require_same("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>(a.shape(), std::move(out), "mul", {&a, &b}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      auto g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& x, T c) {
  return unary<T>(
      x, "add_scalar", [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& x, T c) {
  return unary<T>(
      x, "scale", [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  return unary<T>(
      x, "relu", [](T v) { return v < T(0) ? T(0) : v; },  // NaN passes through
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorT<T> leaky_relu(const TensorT<T>& x, T slope) {
  return unary<T>(
      x, "leaky_relu", [slope](T v) { return v < T(0) ? slope * v : v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
TensorT<T> tanh(const TensorT<T>& x) {
  return unary<T>(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
TensorT<T> slog(const TensorT<T>& x, T a) {
  if (!(a > T(0))) throw ConfigError("slog: hyperparameter a must be positive");
  return unary<T>(
      x, "slog", [a](T v) { return std::copysign(std::log1p(a * std::abs(v)), v); },
      [a](T v, T) { return a / (a * std::abs(v) + T(1)); });
}

template <typename T>
TensorT<T> magnitude(const TensorT<T>& gx, const TensorT<T>& gy) {
  require_same("magnitude", gx, gy);
  std::vector<T> out(gx.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::sqrt(gx.data()[i] * gx.data()[i] + gy.data()[i] * gy.data()[i]);
  }
  Node<T>* xn = gx.node().get();
  Node<T>* yn = gy.node().get();
  return finish<T>(gx.shape(), std::move(out), "magnitude", {&gx, &gy},
                   [xn, yn](Node<T>& self) {
                     for (Node<T>* p : {xn, yn}) {
                       if (!p->requires_grad) continue;
                       auto g = p->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (self.data[i] > T(0)) g[i] += self.grad[i] * p->data[i] / self.data[i];
                       }
                     }
                   });
}

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  Node<T>* xn = x.node().get();
  return finish<T>({1}, {s}, "sum", {&x}, [xn](Node<T>& self) {
    if (!xn->requires_grad) return;
    for (T& g : xn->ensure_grad()) g += self.grad[0];
  });
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  Node<T>* xn = x.node().get();
  return finish<T>({1}, {s * inv}, "mean", {&x}, [xn, inv](Node<T>& self) {
    if (!xn->requires_grad) return;
    for (T& g : xn->ensure_grad()) g += self.grad[0] * inv;
  });
}

template <typename T>
TensorT<T> mae(const TensorT<T>& a, const TensorT<T>& b) {
  require_same("mae", a, b);
  T s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  const T inv = T(1) / static_cast<T>(a.numel());
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>({1}, {s * inv}, "mae", {&a, &b}, [an, bn, inv](Node<T>& self) {
    const T g0 = self.grad[0] * inv;
    auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
    if (an->requires_grad) {
      auto g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * sign(an->data[i] - bn->data[i]);
    }
    if (bn->requires_grad) {
      auto g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= g0 * sign(an->data[i] - bn->data[i]);
    }
  });
}

template <typename T>
TensorT<T> mean_batch(const TensorT<T>& x) {
  const std::size_t n = x.dim(0);
  const std::size_t inner = x.numel() / n;
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  if (out_shape.empty()) out_shape = {1};
  std::vector<T> out(inner, T(0));
  const T inv = T(1) / static_cast<T>(n);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < inner; ++i) out[i] += x.data()[b * inner + i];
  }
  for (T& v : out) v *= inv;
  Node<T>* xn = x.node().get();
  return finish<T>(std::move(out_shape), std::move(out), "mean_batch", {&x},
                   [xn, n, inner, inv](Node<T>& self) {
                     if (!xn->requires_grad) return;
                     auto g = xn->ensure_grad();
                     for (std::size_t b = 0; b < n; ++b) {
                       for (std::size_t i = 0; i < inner; ++i) g[b * inner + i] += self.grad[i] * inv;
                     }
                   });
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) mismatch("reshape", x.shape(), shape);
  std::vector<T> out(x.data().begin(), x.data().end());
  Node<T>* xn = x.node().get();
  return finish<T>(std::move(shape), std::move(out), "reshape", {&x}, [xn](Node<T>& self) {
    if (!xn->requires_grad) return;
    auto g = xn->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
TensorT<T> broadcast_batch(const TensorT<T>& x, std::size_t n) {
  if (x.rank() == 0 || x.dim(0) != 1) {
    throw DimensionError("broadcast_batch: leading extent must be 1, got " + shape_str(x.shape()));
  }
  const std::size_t inner = x.numel();
  Shape shape = x.shape();
  shape[0] = n;
  std::vector<T> out(n * inner);
  for (std::size_t b = 0; b < n; ++b) std::copy(x.data().begin(), x.data().end(), out.begin() + b * inner);
  Node<T>* xn = x.node().get();
  return finish<T>(std::move(shape), std::move(out), "broadcast_batch", {&x},
                   [xn, n, inner](Node<T>& self) {
                     if (!xn->requires_grad) return;
                     auto g = xn->ensure_grad();
                     for (std::size_t b = 0; b < n; ++b) {
                       for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[b * inner + i];
                     }
                   });
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) mismatch("matmul", a.shape(), b.shape());
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m * n));
  Eigen::Map<const RowMat<T>> A(a.data().data(), m, k);
  Eigen::Map<const RowMat<T>> B(b.data().data(), k, n);
  Eigen::Map<RowMat<T>>(out.data(), m, n).noalias() = A * B;
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>({a.dim(0), b.dim(1)}, std::move(out), "matmul", {&a, &b},
                   [an, bn, m, k, n](Node<T>& self) {
                     Eigen::Map<const RowMat<T>> G(self.grad.data(), m, n);
                     if (an->requires_grad) {
                       Eigen::Map<RowMat<T>>(an->ensure_grad().data(), m, k).noalias() +=
                           G * Eigen::Map<const RowMat<T>>(bn->data.data(), k, n).transpose();
                     }
                     if (bn->requires_grad) {
                       Eigen::Map<RowMat<T>>(bn->ensure_grad().data(), k, n).noalias() +=
                           Eigen::Map<const RowMat<T>>(an->data.data(), m, k).transpose() * G;
                     }
                   });
}

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& weight, const TensorT<T>& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  if (x.dim(1) != weight.dim(1)) mismatch("linear", x.shape(), weight.shape());
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out_dim = static_cast<Eigen::Index>(weight.dim(0));
  if (bias.defined() && bias.numel() != weight.dim(0)) mismatch("linear", weight.shape(), bias.shape());
  std::vector<T> out(static_cast<std::size_t>(n * out_dim));
  Eigen::Map<RowMat<T>> Y(out.data(), n, out_dim);
  Y.noalias() = Eigen::Map<const RowMat<T>>(x.data().data(), n, in) *
                Eigen::Map<const RowMat<T>>(weight.data().data(), out_dim, in).transpose();
  if (bias.defined()) {
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < out_dim; ++c) Y(r, c) += bias.data()[static_cast<std::size_t>(c)];
    }
  }
  Node<T>* xn = x.node().get();
  Node<T>* wn = weight.node().get();
  Node<T>* bn = bias.defined() ? bias.node().get() : nullptr;
  return finish<T>({x.dim(0), weight.dim(0)}, std::move(out), "linear", {&x, &weight, &bias},
                   [xn, wn, bn, n, in, out_dim](Node<T>& self) {
                     Eigen::Map<const RowMat<T>> G(self.grad.data(), n, out_dim);
                     if (xn->requires_grad) {
                       Eigen::Map<RowMat<T>>(xn->ensure_grad().data(), n, in).noalias() +=
                           G * Eigen::Map<const RowMat<T>>(wn->data.data(), out_dim, in);
                     }
                     if (wn->requires_grad) {
                       Eigen::Map<RowMat<T>>(wn->ensure_grad().data(), out_dim, in).noalias() +=
                           G.transpose() * Eigen::Map<const RowMat<T>>(xn->data.data(), n, in);
                     }
                     if (bn && bn->requires_grad) {
                       auto g = bn->ensure_grad();
                       for (Eigen::Index r = 0; r < n; ++r) {
                         for (Eigen::Index c = 0; c < out_dim; ++c) g[static_cast<std::size_t>(c)] += G(r, c);
                       }
                     }
                   });
}

namespace {

struct ConvGeom {
  std::size_t n, ci, h, w, co, k, stride, pad, ho, wo;
  std::size_t rows() const { return ci * k * k; }
  std::size_t cols() const { return n * ho * wo; }
};

// Output positions [lo, hi) whose tap at kernel offset `off` lands inside an
// input extent of `size`.
inline void tap_range(std::size_t off, std::size_t size, std::size_t out, const ConvGeom& g, std::size_t& lo,
                      std::size_t& hi) {
  lo = off >= g.pad ? 0 : (g.pad - off + g.stride - 1) / g.stride;
  hi = size + g.pad > off ? std::min(out, (size + g.pad - off + g.stride - 1) / g.stride) : 0;
  lo = std::min(lo, hi);
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      std::size_t oh_lo, oh_hi;
      tap_range(kh, g.h, g.ho, g, oh_lo, oh_hi);
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        std::size_t ow_lo, ow_hi;
        tap_range(kw, g.w, g.wo, g, ow_lo, ow_hi);
        T* row = cols + ((c * g.k + kh) * g.k + kw) * ncols;
        for (std::size_t b = 0; b < g.n; ++b) {
          const T* plane = x + (b * g.ci + c) * g.h * g.w;
          T* dst = row + b * g.ho * g.wo;
          std::fill(dst, dst + oh_lo * g.wo, T(0));
          for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
            const T* srow = plane + (oh * g.stride + kh - g.pad) * g.w;
            T* drow = dst + oh * g.wo;
            std::fill(drow, drow + ow_lo, T(0));
            if (g.stride == 1) {
              std::copy(srow + (ow_lo + kw - g.pad), srow + (ow_hi + kw - g.pad), drow + ow_lo);
            } else {
              for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) drow[ow] = srow[ow * g.stride + kw - g.pad];
            }
            std::fill(drow + ow_hi, drow + g.wo, T(0));
          }
          std::fill(dst + oh_hi * g.wo, dst + g.ho * g.wo, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* dx) {
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.ci; ++c) {
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      std::size_t oh_lo, oh_hi;
      tap_range(kh, g.h, g.ho, g, oh_lo, oh_hi);
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        std::size_t ow_lo, ow_hi;
        tap_range(kw, g.w, g.wo, g, ow_lo, ow_hi);
        const T* row = cols + ((c * g.k + kh) * g.k + kw) * ncols;
        for (std::size_t b = 0; b < g.n; ++b) {
          T* plane = dx + (b * g.ci + c) * g.h * g.w;
          const T* src = row + b * g.ho * g.wo;
          for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
            T* drow = plane + (oh * g.stride + kh - g.pad) * g.w;
            const T* srow = src + oh * g.wo;
            for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) drow[ow * g.stride + kw - g.pad] += srow[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& weight, const TensorT<T>& bias,
                  std::size_t stride, std::size_t pad) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  if (weight.dim(1) != x.dim(1) || weight.dim(2) != weight.dim(3)) {
    mismatch("conv2d", x.shape(), weight.shape());
  }
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  ConvGeom g{};
  g.n = x.dim(0);
  g.ci = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.co = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = pad == SIZE_MAX ? g.k / 2 : pad;
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) mismatch("conv2d", x.shape(), weight.shape());
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  if (bias.defined() && bias.numel() != g.co) mismatch("conv2d", weight.shape(), bias.shape());

  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto ncols = static_cast<Eigen::Index>(g.cols());
  const auto co = static_cast<Eigen::Index>(g.co);
  const std::size_t plane = g.ho * g.wo;

  RowMat<T> cols(rows, ncols);
  im2col(x.data().data(), g, cols.data());
  RowMat<T> y(co, ncols);
  y.noalias() = Eigen::Map<const RowMat<T>>(weight.data().data(), co, rows) * cols;
  cols.resize(0, 0);
  std::vector<T> out(g.n * g.co * plane);
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t c = 0; c < g.co; ++c) {
      const T bv = bias.defined() ? bias.data()[c] : T(0);
      const T* src = y.data() + c * g.cols() + b * plane;
      T* dst = out.data() + (b * g.co + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + bv;
    }
  }
  Node<T>* xn = x.node().get();
  Node<T>* wn = weight.node().get();
  Node<T>* bn = bias.defined() ? bias.node().get() : nullptr;
  return finish<T>(
      {g.n, g.co, g.ho, g.wo}, std::move(out), "conv2d", {&x, &weight, &bias},
      [xn, wn, bn, g, rows, ncols, co, plane](Node<T>& self) {
        // Gather output grads into [Co, N*Ho*Wo].
        RowMat<T> gy(co, ncols);
        for (std::size_t b = 0; b < g.n; ++b) {
          for (std::size_t c = 0; c < g.co; ++c) {
            const T* src = self.grad.data() + (b * g.co + c) * plane;
            std::copy(src, src + plane, gy.data() + c * g.cols() + b * plane);
          }
        }
        if (bn && bn->requires_grad) {
          auto gb = bn->ensure_grad();
          for (std::size_t c = 0; c < g.co; ++c) gb[c] += gy.row(static_cast<Eigen::Index>(c)).sum();
        }
        if (wn->requires_grad) {
          RowMat<T> cols(rows, ncols);
          im2col(xn->data.data(), g, cols.data());
          Eigen::Map<RowMat<T>>(wn->ensure_grad().data(), co, rows).noalias() += gy * cols.transpose();
        }
        if (xn->requires_grad) {
          RowMat<T> gcols(rows, ncols);
          gcols.noalias() = Eigen::Map<const RowMat<T>>(wn->data.data(), co, rows).transpose() * gy;
          col2im(gcols.data(), g, xn->ensure_grad().data());
        }
      });
}

template <typename T>
TensorT<T> upsample2x(const TensorT<T>& x) {
  require_rank("upsample2x", x, 4);
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<T> out(nc * 4 * h * w);
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = x.data().data() + p * h * w;
    T* dst = out.data() + p * 4 * h * w;
    for (std::size_t i = 0; i < 2 * h; ++i) {
      for (std::size_t j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
    }
  }
  Node<T>* xn = x.node().get();
  return finish<T>({x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out), "upsample2x", {&x},
                   [xn, nc, h, w](Node<T>& self) {
                     if (!xn->requires_grad) return;
                     auto g = xn->ensure_grad();
                     for (std::size_t p = 0; p < nc; ++p) {
                       const T* src = self.grad.data() + p * 4 * h * w;
                       T* dst = g.data() + p * h * w;
                       for (std::size_t i = 0; i < 2 * h; ++i) {
                         for (std::size_t j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
                       }
                     }
                   });
}

template <typename T>
TensorT<T> softmax_channels(const TensorT<T>& x) {
  require_rank("softmax_channels", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t base = b * c * hw + p;
      T mx = in[base];
      for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, in[base + k * hw]);
      T s = 0;
      for (std::size_t k = 0; k < c; ++k) {
        const T e = std::exp(in[base + k * hw] - mx);
        out[base + k * hw] = e;
        s += e;
      }
      for (std::size_t k = 0; k < c; ++k) out[base + k * hw] /= s;
    }
  }
  Node<T>* xn = x.node().get();
  return finish<T>(x.shape(), std::move(out), "softmax_channels", {&x},
                   [xn, n, c, hw](Node<T>& self) {
                     if (!xn->requires_grad) return;
                     auto g = xn->ensure_grad();
                     for (std::size_t b = 0; b < n; ++b) {
                       for (std::size_t p = 0; p < hw; ++p) {
                         const std::size_t base = b * c * hw + p;
                         T dot = 0;
                         for (std::size_t k = 0; k < c; ++k) dot += self.grad[base + k * hw] * self.data[base + k * hw];
                         for (std::size_t k = 0; k < c; ++k) {
                           g[base + k * hw] += self.data[base + k * hw] * (self.grad[base + k * hw] - dot);
                         }
                       }
                     }
                   });
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  require_rank("concat_channels", a, 4);
  require_rank("concat_channels", b, 4);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    mismatch("concat_channels", a.shape(), b.shape());
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<T> out(n * (ca + cb) * hw);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.data().data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), "concat_channels", {&a, &b},
                   [an, bn, n, ca, cb, hw](Node<T>& self) {
                     for (std::size_t i = 0; i < n; ++i) {
                       const T* src = self.grad.data() + i * (ca + cb) * hw;
                       if (an->requires_grad) {
                         T* g = an->ensure_grad().data() + i * ca * hw;
                         for (std::size_t j = 0; j < ca * hw; ++j) g[j] += src[j];
                       }
                       if (bn->requires_grad) {
                         T* g = bn->ensure_grad().data() + i * cb * hw;
                         for (std::size_t j = 0; j < cb * hw; ++j) g[j] += src[ca * hw + j];
                       }
                     }
                   });
}

template <typename T>
TensorT<T> scale_channels(const TensorT<T>& x, const TensorT<T>& s) {
  require_rank("scale_channels", x, 4);
  require_rank("scale_channels", s, 2);
  if (s.dim(0) != x.dim(0) || s.dim(1) != x.dim(1)) mismatch("scale_channels", x.shape(), s.shape());
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(x.numel());
  for (std::size_t p = 0; p < nc; ++p) {
    const T f = s.data()[p];
    for (std::size_t j = 0; j < hw; ++j) out[p * hw + j] = x.data()[p * hw + j] * f;
  }
  Node<T>* xn = x.node().get();
  Node<T>* sn = s.node().get();
  return finish<T>(x.shape(), std::move(out), "scale_channels", {&x, &s},
                   [xn, sn, nc, hw](Node<T>& self) {
                     if (xn->requires_grad) {
                       auto g = xn->ensure_grad();
                       for (std::size_t p = 0; p < nc; ++p) {
                         for (std::size_t j = 0; j < hw; ++j) g[p * hw + j] += self.grad[p * hw + j] * sn->data[p];
                       }
                     }
                     if (sn->requires_grad) {
                       auto g = sn->ensure_grad();
                       for (std::size_t p = 0; p < nc; ++p) {
                         T acc = 0;
                         for (std::size_t j = 0; j < hw; ++j) acc += self.grad[p * hw + j] * xn->data[p * hw + j];
                         g[p] += acc;
                       }
                     }
                   });
}

template <typename T>
TensorT<T> soft_histogram(const TensorT<T>& luminance, const TensorT<T>& labels, std::size_t bins,
                          T lo, T hi) {
  require_rank("soft_histogram", labels, 4);
  if (bins < 2) throw ConfigError("soft_histogram: need at least 2 bins");
  if (!(hi > lo)) throw ConfigError("soft_histogram: empty value range");
  const std::size_t n = labels.dim(0), c = labels.dim(1), hw = labels.dim(2) * labels.dim(3);
  if (luminance.numel() != n * hw) mismatch("soft_histogram", luminance.shape(), labels.shape());
  const T width = (hi - lo) / static_cast<T>(bins);
  const T top = static_cast<T>(bins - 1);

  // Per-pixel lower bin and upper-bin weight; `slope` is d(frac)/d(lum), 0 when clamped.
  struct Split {
    std::size_t lower;
    T frac;
    T slope;
  };
  std::vector<Split> split(n * hw);
  for (std::size_t i = 0; i < split.size(); ++i) {
    const T u = (luminance.data()[i] - lo) / width - T(0.5);
    if (!std::isfinite(u)) throw ContractError("soft_histogram: non-finite luminance");
    if (u <= T(0)) {
      split[i] = {0, T(0), T(0)};
    } else if (u >= top) {
      split[i] = {bins - 2, T(1), T(0)};
    } else {
      const T fl = std::floor(u);
      split[i] = {static_cast<std::size_t>(fl), u - fl, T(1) / width};
    }
  }
  std::vector<T> out(bins * c, T(0));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < c; ++k) {
      const T* lab = labels.data().data() + (b * c + k) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const Split& s = split[b * hw + p];
        out[s.lower * c + k] += lab[p] * (T(1) - s.frac);
        out[(s.lower + 1) * c + k] += lab[p] * s.frac;
      }
    }
  }
  Node<T>* ln = luminance.node().get();
  Node<T>* yn = labels.node().get();
  return finish<T>({bins, c}, std::move(out), "soft_histogram", {&luminance, &labels},
                   [ln, yn, split = std::move(split), n, c, hw](Node<T>& self) {
                     std::span<T> gl = ln->requires_grad ? ln->ensure_grad() : std::span<T>{};
                     std::span<T> gy = yn->requires_grad ? yn->ensure_grad() : std::span<T>{};
                     for (std::size_t b = 0; b < n; ++b) {
                       for (std::size_t k = 0; k < c; ++k) {
                         const std::size_t off = (b * c + k) * hw;
                         for (std::size_t p = 0; p < hw; ++p) {
                           const Split& s = split[b * hw + p];
                           const T g_lo = self.grad[s.lower * c + k];
                           const T g_hi = self.grad[(s.lower + 1) * c + k];
                           if (!gy.empty()) gy[off + p] += g_lo * (T(1) - s.frac) + g_hi * s.frac;
                           if (!gl.empty()) gl[b * hw + p] += yn->data[off + p] * (g_hi - g_lo) * s.slope;
                         }
                       }
                     }
                   });
}

template <typename T>
TensorT<T> normalize_columns(const TensorT<T>& x, std::vector<std::size_t>* empty) {
  require_rank("normalize_columns", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> totals(cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) totals[c] += x.data()[r * cols + c];
  }
  std::vector<T> out(x.numel());
  for (std::size_t c = 0; c < cols; ++c) {
    if (!(totals[c] > T(0))) {
      if (empty) empty->push_back(c);
      for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] = T(1) / static_cast<T>(rows);
    } else {
      for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] = x.data()[r * cols + c] / totals[c];
    }
  }
  Node<T>* xn = x.node().get();
  return finish<T>(x.shape(), std::move(out), "normalize_columns", {&x},
                   [xn, rows, cols, totals = std::move(totals)](Node<T>& self) {
                     if (!xn->requires_grad) return;
                     auto g = xn->ensure_grad();
                     for (std::size_t c = 0; c < cols; ++c) {
                       if (!(totals[c] > T(0))) continue;
                       T dot = 0;
                       for (std::size_t r = 0; r < rows; ++r) dot += self.grad[r * cols + c] * self.data[r * cols + c];
                       for (std::size_t r = 0; r < rows; ++r) {
                         g[r * cols + c] += (self.grad[r * cols + c] - dot) / totals[c];
                       }
                     }
                   });
}

template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& logits, std::span<const std::uint8_t> targets) {
  require_rank("cross_entropy", logits, 4);
  const std::size_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  if (targets.size() != n * hw) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(logits.shape()));
  }
  std::vector<T> prob(logits.numel());
  T total = 0;
  const T* in = logits.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t base = b * c * hw + p;
      const std::uint8_t t = targets[b * hw + p];
      if (t >= c) throw ContractError("cross_entropy: class index out of range");
      T mx = in[base];
      for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, in[base + k * hw]);
      T s = 0;
      for (std::size_t k = 0; k < c; ++k) {
        prob[base + k * hw] = std::exp(in[base + k * hw] - mx);
        s += prob[base + k * hw];
      }
      for (std::size_t k = 0; k < c; ++k) prob[base + k * hw] /= s;
      total += -(in[base + t * hw] - mx - std::log(s));
    }
  }
  const T inv = T(1) / static_cast<T>(n * hw);
  std::vector<std::uint8_t> tgt(targets.begin(), targets.end());
  Node<T>* xn = logits.node().get();
  return finish<T>({1}, {total * inv}, "cross_entropy", {&logits},
                   [xn, prob = std::move(prob), tgt = std::move(tgt), n, c, hw, inv](Node<T>& self) {
                     if (!xn->requires_grad) return;
                     auto g = xn->ensure_grad();
                     const T g0 = self.grad[0] * inv;
                     for (std::size_t b = 0; b < n; ++b) {
                       for (std::size_t p = 0; p < hw; ++p) {
                         const std::size_t base = b * c * hw + p;
                         for (std::size_t k = 0; k < c; ++k) {
                           const T onehot = (k == tgt[b * hw + p]) ? T(1) : T(0);
                           g[base + k * hw] += g0 * (prob[base + k * hw] - onehot);
                         }
                       }
                     }
                   });
}

template <typename T>
TensorT<T> one_hot(std::span<const std::uint8_t> masks, std::size_t n, std::size_t classes,
                   std::size_t height, std::size_t width) {
  const std::size_t hw = height * width;
  if (masks.size() != n * hw) throw DimensionError("one_hot: mask size does not match extents");
  std::vector<T> out(n * classes * hw, T(0));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::uint8_t k = masks[b * hw + p];
      if (k >= classes) throw ContractError("one_hot: class index out of range");
      out[(b * classes + k) * hw + p] = T(1);
    }
  }
  return TensorT<T>::from({n, classes, height, width}, std::move(out));
}

template <typename T>
std::vector<std::uint8_t> argmax_channels(const TensorT<T>& x) {
  require_rank("argmax_channels", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<std::uint8_t> out(n * hw);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (x.data()[(b * c + k) * hw + p] > x.data()[(b * c + best) * hw + p]) best = k;
      }
      out[b * hw + p] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template <typename T>
bool all_finite(const TensorT<T>& x) {
  for (T v : x.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

#define WASTEGAN_INSTANTIATE_OPS(T)                                                          \
  template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);                             \
  template TensorT<T> sub(const TensorT<T>&, const TensorT<T>&);                             \
  template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);                             \
  template TensorT<T> add_scalar(const TensorT<T>&, T);                                      \
  template TensorT<T> scale(const TensorT<T>&, T);                                           \
  template TensorT<T> relu(const TensorT<T>&);                                               \
  template TensorT<T> leaky_relu(const TensorT<T>&, T);                                      \
  template TensorT<T> tanh(const TensorT<T>&);                                               \
  template TensorT<T> slog(const TensorT<T>&, T);                                            \
  template TensorT<T> magnitude(const TensorT<T>&, const TensorT<T>&);                       \
  template TensorT<T> sum(const TensorT<T>&);                                                \
  template TensorT<T> mean(const TensorT<T>&);                                               \
  template TensorT<T> mae(const TensorT<T>&, const TensorT<T>&);                             \
  template TensorT<T> mean_batch(const TensorT<T>&);                                         \
  template TensorT<T> reshape(const TensorT<T>&, Shape);                                     \
  template TensorT<T> broadcast_batch(const TensorT<T>&, std::size_t);                       \
  template TensorT<T> matmul(const TensorT<T>&, const TensorT<T>&);                          \
  template TensorT<T> linear(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);       \
  template TensorT<T> conv2d(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,        \
                             std::size_t, std::size_t);                                      \
  template TensorT<T> upsample2x(const TensorT<T>&);                                         \
  template TensorT<T> softmax_channels(const TensorT<T>&);                                   \
  template TensorT<T> concat_channels(const TensorT<T>&, const TensorT<T>&);                 \
  template TensorT<T> scale_channels(const TensorT<T>&, const TensorT<T>&);                  \
  template TensorT<T> soft_histogram(const TensorT<T>&, const TensorT<T>&, std::size_t, T, T); \
  template TensorT<T> normalize_columns(const TensorT<T>&, std::vector<std::size_t>*);       \
  template TensorT<T> cross_entropy(const TensorT<T>&, std::span<const std::uint8_t>);       \
  template TensorT<T> one_hot(std::span<const std::uint8_t>, std::size_t, std::size_t,       \
                              std::size_t, std::size_t);                                     \
  template std::vector<std::uint8_t> argmax_channels(const TensorT<T>&);                     \
  template bool all_finite(const TensorT<T>&);

WASTEGAN_INSTANTIATE_OPS(float)
WASTEGAN_INSTANTIATE_OPS(double)

}  // namespace wastegan::ops
