// Finite-difference oracle for every differentiable op and loss (float64).
#include <gtest/gtest.h>

#include <random>

#include "support/gradcheck.hpp"
#include "wastegan/gan.hpp"
#include "wastegan/losses.hpp"
#include "wastegan/ops.hpp"

namespace wastegan {
namespace {

using testing::avoid_kinks;
using testing::gradcheck;
using testing::random_tensor;
using testing::weighted_sum;
using Inputs = std::vector<Tensor64>;

constexpr int kInstances = 20;
constexpr double kTol = 1e-4;

#define EXPECT_GRAD_OK(expr)                                      \
  do {                                                            \
    const auto gc_res_ = (expr);                                  \
    EXPECT_LE(gc_res_.max_rel_err, kTol) << gc_res_.worst;        \
    EXPECT_LE(gc_res_.kinks * 20, gc_res_.checked + gc_res_.kinks) \
        << gc_res_.kinks << " non-smooth elements";               \
  } while (0)

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

TEST(Gradcheck, ElementwiseBinary) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < kInstances; ++i) {
    Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
    auto a = random_tensor(s, rng), b = random_tensor(s, rng);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& x) { return weighted_sum(ops::add(x[0], x[1]), i); }, {a, b}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& x) { return weighted_sum(ops::sub(x[0], x[1]), i); }, {a, b}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& x) { return weighted_sum(ops::mul(x[0], x[1]), i); }, {a, b}));
  }
}

TEST(Gradcheck, ElementwiseUnary) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < kInstances; ++i) {
    Shape s{pick(rng, 1, 3), pick(rng, 1, 5)};
    auto x = random_tensor(s, rng, -2.0, 2.0);
    avoid_kinks(x, {0.0}, 1e-3);
    const double c = std::uniform_real_distribution<double>(-2, 2)(rng);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::add_scalar(v[0], c), i); }, {x}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::scale(v[0], c), i); }, {x}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::relu(v[0]), i); }, {x}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::leaky_relu(v[0], 0.2), i); }, {x}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::tanh(v[0]), i); }, {x}));
  }
}

TEST(Gradcheck, Slog) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < kInstances; ++i) {
    auto x = random_tensor({pick(rng, 1, 4), pick(rng, 1, 4)}, rng, -5.0, 5.0);
    avoid_kinks(x, {0.0}, 1e-3);
    const double a = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::slog(v[0], a), i); }, {x}));
  }
}

TEST(Gradcheck, Magnitude) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < kInstances; ++i) {
    Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
    auto gx = random_tensor(s, rng), gy = random_tensor(s, rng);
    avoid_kinks(gx, {0.0}, 1e-2);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::magnitude(v[0], v[1]), i); }, {gx, gy}));
  }
}

TEST(Gradcheck, Reductions) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < kInstances; ++i) {
    Shape s{pick(rng, 1, 4), pick(rng, 1, 3), pick(rng, 1, 3)};
    auto a = random_tensor(s, rng), b = random_tensor(s, rng);
    // Keep |a - b| away from the kink of the absolute value.
    for (std::size_t j = 0; j < a.numel(); ++j) {
      if (std::abs(a.data()[j] - b.data()[j]) < 1e-3) a.mutable_data()[j] += 2e-3;
    }
    EXPECT_GRAD_OK(gradcheck([](const Inputs& v) { return ops::sum(v[0]); }, {a}));
    EXPECT_GRAD_OK(gradcheck([](const Inputs& v) { return ops::mean(v[0]); }, {a}));
    EXPECT_GRAD_OK(gradcheck([](const Inputs& v) { return ops::mae(v[0], v[1]); }, {a, b}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::mean_batch(v[0]), i); }, {a}));
  }
}

TEST(Gradcheck, ShapeOps) {
  std::mt19937_64 rng(16);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 4), c = pick(rng, 1, 3), h = pick(rng, 1, 3);
    auto x = random_tensor({1, c, h}, rng);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::broadcast_batch(v[0], n), i); }, {x}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::reshape(v[0], {c * h}), i); }, {x}));
  }
}

TEST(Gradcheck, MatmulAndLinear) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 5), n = pick(rng, 1, 4);
    auto a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::matmul(v[0], v[1]), i); }, {a, b}));
    auto w = random_tensor({n, k}, rng), bias = random_tensor({n}, rng);
    EXPECT_GRAD_OK(
        gradcheck([&](const Inputs& v) { return weighted_sum(ops::linear(v[0], v[1], v[2]), i); }, {a, w, bias}));
  }
}

TEST(Gradcheck, Conv2d) {
  std::mt19937_64 rng(18);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
    const std::size_t k = (i % 3 == 0) ? 1 : 3, stride = (i % 2) ? 2 : 1;
    const std::size_t hw = pick(rng, 3, 6);
    auto x = random_tensor({n, ci, hw, hw}, rng), w = random_tensor({co, ci, k, k}, rng),
         b = random_tensor({co}, rng);
    EXPECT_GRAD_OK(gradcheck(
        [&](const Inputs& v) { return weighted_sum(ops::conv2d(v[0], v[1], v[2], stride), i); }, {x, w, b}));
    // Unpadded, no bias.
    EXPECT_GRAD_OK(gradcheck(
        [&](const Inputs& v) { return weighted_sum(ops::conv2d(v[0], v[1], Tensor64{}, stride, 0), i); }, {x, w}));
  }
}

TEST(Gradcheck, ImageOps) {
  std::mt19937_64 rng(19);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 4), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
    auto x = random_tensor({n, c, h, w}, rng, -2, 2), y = random_tensor({n, pick(rng, 1, 3), h, w}, rng);
    auto s = random_tensor({n, c}, rng);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::upsample2x(v[0]), i); }, {x}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(ops::softmax_channels(v[0]), i); }, {x}));
    EXPECT_GRAD_OK(
        gradcheck([&](const Inputs& v) { return weighted_sum(ops::concat_channels(v[0], v[1]), i); }, {x, y}));
    EXPECT_GRAD_OK(
        gradcheck([&](const Inputs& v) { return weighted_sum(ops::scale_channels(v[0], v[1]), i); }, {x, s}));
  }
}

// Bin centres of the default histogram, where the triangular kernel has kinks.
std::vector<double> bin_centres(std::size_t bins) {
  std::vector<double> c;
  for (std::size_t b = 0; b < bins; ++b) c.push_back(-1.0 + (2.0 * static_cast<double>(b) + 1.0) / static_cast<double>(bins));
  return c;
}

TEST(Gradcheck, SoftHistogramAndNormalisation) {
  std::mt19937_64 rng(20);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 2, 4), h = pick(rng, 2, 4), bins = pick(rng, 4, 12);
    auto lum = random_tensor({n, 1, h, h}, rng, -0.95, 0.95);
    avoid_kinks(lum, bin_centres(bins), 1e-3);
    auto labels = random_tensor({n, c, h, h}, rng, 0.05, 1.0);
    EXPECT_GRAD_OK(gradcheck(
        [&](const Inputs& v) { return weighted_sum(ops::soft_histogram(v[0], v[1], bins), i); }, {lum, labels}));
    auto joint = random_tensor({bins, c}, rng, 0.1, 1.0);
    EXPECT_GRAD_OK(
        gradcheck([&](const Inputs& v) { return weighted_sum(ops::normalize_columns(v[0]), i); }, {joint}));
  }
}

TEST(Gradcheck, CrossEntropy) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 2, 5), h = pick(rng, 1, 3);
    auto logits = random_tensor({n, c, h, h}, rng, -3, 3);
    std::vector<std::uint8_t> targets(n * h * h);
    for (auto& t : targets) t = static_cast<std::uint8_t>(pick(rng, 0, c - 1));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return ops::cross_entropy(v[0], targets); }, {logits}));
  }
}

TEST(Gradcheck, LuminanceAndSobel) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 2), h = pick(rng, 3, 6);
    auto img = random_tensor({n, 3, h, h}, rng);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(luminance(v[0]), i); }, {img}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return weighted_sum(sobel_sharpness(v[0]), i); }, {img}));
  }
}

TEST(Gradcheck, DiscriminatorHingeLosses) {
  std::mt19937_64 rng(23);
  HingeConfig cfg;
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 6);
    auto real = random_tensor({n}, rng, -2, 2), fake = random_tensor({n}, rng, -2, 2);
    avoid_kinks(real, {cfg.k}, 1e-3);
    avoid_kinks(fake, {-cfg.k}, 1e-3);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return loss_d_rgb(v[0], v[1], cfg); }, {real, fake}));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return loss_d_seg(v[0], v[1], cfg); }, {real, fake}));
  }
}

TEST(Gradcheck, GeneratorHingeLoss) {
  std::mt19937_64 rng(24);
  HingeConfig cfg;
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 6);
    Inputs in;
    for (int k = 0; k < 4; ++k) in.push_back(random_tensor({n}, rng, -2, 2));
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return loss_g_hinge(v[0], v[1], v[2], v[3], cfg); }, in));
  }
}

GanConfig tiny_gan() {
  GanConfig c;
  c.resolution = 8;
  c.z_dim = 4;
  c.w_dim = 4;
  c.mapping_layers = 2;
  c.gen_channels = {4};
  c.disc_channels = {3, 4};
  c.disc_hidden = 4;
  c.init_seed = 5;
  return c;
}

// Feature extractor + Sobel statistics of the quality loss.
TEST(Gradcheck, QualityLoss) {
  std::mt19937_64 rng(25);
  FeatureExtractor<double> fx(7, {3, 4, 4});
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 2);
    auto real = random_tensor({n, 3, 8, 8}, rng), fake = random_tensor({n, 3, 8, 8}, rng);
    auto res = gradcheck([&](const Inputs& v) { return loss_quality(real, v[0], fx).total; }, {fake}, 40, i);
    EXPECT_GRAD_OK(res);
  }
}

TEST(Gradcheck, ImageLabelCorrelationLoss) {
  std::mt19937_64 rng(26);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 1, 2), bins = pick(rng, 6, 16);
    auto real_img = random_tensor({n, 3, 4, 4}, rng), real_lab = random_tensor({n, 5, 4, 4}, rng, 0.1, 1);
    const auto p_real = estimate_cond_dist(real_img, real_lab, bins);
    auto img = random_tensor({n, 3, 4, 4}, rng, -0.9, 0.9);
    auto logits = random_tensor({n, 5, 4, 4}, rng, -2, 2);
    auto f = [&](const Inputs& v) {
      const auto p_gen = estimate_cond_dist(v[0], ops::softmax_channels(v[1]), bins);
      return loss_imc(p_real, p_gen);
    };
    EXPECT_GRAD_OK(gradcheck(f, {img, logits}));
  }
}

// Full generator objective: hinge (both discriminators) + quality + image-label
// correlation through the soft histogram, differentiated w.r.t. the generator
// outputs and a sample of generator and mapping parameters.
TEST(Gradcheck, GeneratorObjectiveComposite) {
  std::mt19937_64 rng(27);
  HingeConfig hinge;
  FeatureExtractor<double> fx(7, {3, 4, 4});
  for (int i = 0; i < kInstances; ++i) {
    GanConfig cfg = tiny_gan();
    cfg.init_seed = static_cast<std::uint64_t>(100 + i);
    GanModel<double> model(cfg);
    const std::size_t n = 2;
    auto real_img = random_tensor({n, 3, 8, 8}, rng);
    auto real_lab = ops::softmax_channels(random_tensor({n, 5, 8, 8}, rng, -2, 2));
    const auto p_real = estimate_cond_dist(real_img, real_lab, 16);
    const auto drgb_real = model.score_rgb(real_img).detach();
    const auto dseg_real = model.score_seg(real_img, real_lab).detach();
    auto objective = [&](const Tensor64& image, const Tensor64& logits) {
      const auto soft = ops::softmax_channels(logits);
      const auto h = loss_g_hinge(model.score_rgb(image), drgb_real, model.score_seg(image, soft), dseg_real, hinge);
      const auto q = loss_quality(real_img, image, fx).total;
      const auto imc = loss_imc(p_real, estimate_cond_dist(image, soft, 16));
      return loss_g_total(h, q, imc);
    };
    auto img = random_tensor({n, 3, 8, 8}, rng, -0.9, 0.9);
    auto logits = random_tensor({n, 5, 8, 8}, rng, -2, 2);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs& v) { return objective(v[0], v[1]); }, {img, logits}, 30, i));

    // Through the generator and mapping network.
    std::mt19937_64 zr(static_cast<std::uint64_t>(i));
    const auto z = sample_latents<double>(n, cfg.z_dim, zr);
    Inputs params;
    for (auto& p : model.generator().params().items()) params.push_back(p.tensor);
    params.push_back(model.mapping().params().items().front().tensor);
    model.d_rgb().params().set_requires_grad(false);
    model.d_seg().params().set_requires_grad(false);
    auto through_g = [&](const Inputs&) {
      const auto g = model.generate(z);
      return objective(g.image, g.label_logits);
    };
    EXPECT_GRAD_OK(gradcheck(through_g, params, 3, i));
  }
}

TEST(Gradcheck, DiscriminatorNetworks) {
  std::mt19937_64 rng(28);
  for (int i = 0; i < kInstances; ++i) {
    GanConfig cfg = tiny_gan();
    cfg.init_seed = static_cast<std::uint64_t>(200 + i);
    GanModel<double> model(cfg);
    auto img = random_tensor({2, 3, 8, 8}, rng), lab = random_tensor({2, 5, 8, 8}, rng, 0, 1);
    auto real = random_tensor({2, 3, 8, 8}, rng);
    HingeConfig hinge;
    auto f = [&](const Inputs& v) {
      return ops::add(loss_d_rgb(model.score_rgb(real), model.score_rgb(v[0]), hinge),
                      loss_d_seg(model.score_seg(real, lab), model.score_seg(v[0], v[1]), hinge));
    };
    EXPECT_GRAD_OK(gradcheck(f, {img, lab}, 25, i));
    Inputs params;
    for (auto& p : model.d_rgb().params().items()) params.push_back(p.tensor);
    for (auto& p : model.d_seg().params().items()) params.push_back(p.tensor);
    EXPECT_GRAD_OK(gradcheck([&](const Inputs&) { return f({img, lab}); }, params, 3, i));
  }
}

}  // namespace
}  // namespace wastegan
