#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wastegan/errors.hpp"
#include "wastegan/losses.hpp"
#include "wastegan/ops.hpp"

namespace wastegan {
namespace {

constexpr double kExact = 1e-6;

Tensor64 scores(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor64::from({n}, std::move(v));
}

// Gray image [1, 3, H, W] whose three channels share `v` (row-major H*W).
Tensor64 gray_image(std::size_t h, std::size_t w, const std::vector<double>& v) {
  std::vector<double> d;
  for (int c = 0; c < 3; ++c) d.insert(d.end(), v.begin(), v.end());
  return Tensor64::from({1, 3, h, w}, std::move(d));
}

Tensor64 step_edge(std::size_t n, std::size_t split) {
  std::vector<double> v(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) v[r * n + c] = c >= split ? 1.0 : 0.0;
  }
  return gray_image(n, n, v);
}

TEST(HingeD, HandValues) {
  HingeConfig h;
  EXPECT_NEAR(loss_d_rgb(scores({0.2}), scores({0.1}), h).item(), 0.9, kExact);
  EXPECT_NEAR(loss_d_rgb(scores({0.5}), scores({-0.5}), h).item(), 0.0, kExact);
  EXPECT_NEAR(loss_d_rgb(scores({10}), scores({-10}), h).item(), 0.0, kExact);
  EXPECT_NEAR(loss_d_seg(scores({0.2}), scores({0.1}), h).item(), 0.9, kExact);
  EXPECT_NEAR(loss_d_seg(scores({0.0}), scores({0.0}), h).item(), 1.0, kExact);
}

TEST(HingeD, ZeroMarginIsAbsoluteValuePerSide) {
  HingeConfig h;
  h.k = 0.0;
  EXPECT_NEAR(loss_d_seg(scores({-0.3}), scores({0.4}), h).item(), 0.7, kExact);
  EXPECT_NEAR(loss_d_seg(scores({0.3}), scores({-0.4}), h).item(), 0.0, kExact);
}

TEST(HingeD, ZeroExactlyWhenScoresPastMargin) {
  HingeConfig h;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 200; ++i) {
    const double r = u(rng), f = u(rng);
    const double loss = loss_d_rgb(scores({r}), scores({f}), h).item();
    EXPECT_GE(loss, 0.0);
    EXPECT_EQ(loss == 0.0, r >= 0.5 && f <= -0.5) << r << " " << f;
  }
}

TEST(HingeD, EmptyScoresAreContractError) {
  EXPECT_THROW(loss_d_rgb(Tensor64(), scores({0.1}), HingeConfig{}), ContractError);
}

TEST(HingeG, HandValues) {
  HingeConfig h;
  auto z = scores({0.0});
  EXPECT_NEAR(loss_g_hinge(scores({1.0}), z, z, z, h).item(), -0.8, kExact);
  EXPECT_NEAR(loss_g_hinge(z, z, z, z, h).item(), 0.0, kExact);
  h.alpha = 1.0;
  EXPECT_NEAR(loss_g_hinge(scores({0.3}), scores({5.0}), scores({0.2}), scores({-7.0}), h).item(), -0.5, kExact);
}

TEST(HingeConfig, RangesValidated) {
  HingeConfig h;
  h.k = 1.5;
  EXPECT_THROW(h.validate(), ConfigError);
  h.k = 0.5;
  h.alpha = -0.1;
  EXPECT_THROW(h.validate(), ConfigError);
}

TEST(Sobel, ConstantImageIsZero) {
  auto img = gray_image(6, 6, std::vector<double>(36, 0.4));
  auto s = sobel_sharpness(img);
  // Zero padding makes the border respond; the interior is flat.
  for (std::size_t r = 1; r < 5; ++r) {
    for (std::size_t c = 1; c < 5; ++c) EXPECT_NEAR(s.at(r * 6 + c), 0.0, kExact);
  }
}

TEST(Sobel, StepEdgeMagnitudeIsFour) {
  auto s = sobel_sharpness(step_edge(8, 4));
  for (std::size_t r = 1; r < 7; ++r) {
    EXPECT_NEAR(s.at(r * 8 + 3), 4.0, kExact);
    EXPECT_NEAR(s.at(r * 8 + 4), 4.0, kExact);
    EXPECT_NEAR(s.at(r * 8 + 1), 0.0, kExact);
    EXPECT_NEAR(s.at(r * 8 + 6), 0.0, kExact);
  }
  for (double v : s.data()) EXPECT_GE(v, 0.0);
}

TEST(Sobel, InteriorTranslationEquivariance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::size_t n = 10;
  std::vector<double> a(n * n), b(n * n, 0.0);
  for (auto& v : a) v = u(rng);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 1; c < n; ++c) b[r * n + c] = a[r * n + c - 1];
  }
  auto sa = sobel_sharpness(gray_image(n, n, a));
  auto sb = sobel_sharpness(gray_image(n, n, b));
  for (std::size_t r = 1; r + 1 < n; ++r) {
    for (std::size_t c = 2; c + 1 < n; ++c) EXPECT_NEAR(sb.at(r * n + c), sa.at(r * n + c - 1), 1e-12);
  }
}

TEST(QualityLoss, IdenticalBatchesGiveZero) {
  FeatureExtractor<double> fx;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(2 * 3 * 16 * 16);
  for (auto& x : v) x = u(rng);
  auto real = Tensor64::from({2, 3, 16, 16}, v);
  auto q = loss_quality(real, real.clone(), fx);
  EXPECT_NEAR(q.total.item(), 0.0, kExact);
}

TEST(QualityLoss, SharpnessTermAgainstFlatFakes) {
  FeatureExtractor<double> fx;
  auto real = step_edge(8, 4);
  auto fake = Tensor64::zeros({3, 3, 8, 8});
  auto q = loss_quality(real, fake, fx);
  // Flat fakes have zero sharpness, so L_s is the mean sharpness of the real batch.
  EXPECT_NEAR(q.sharpness.item(), ops::mean(sobel_sharpness(real)).item(), kExact);
  EXPECT_GE(q.total.item(), 0.0);
  EXPECT_NEAR(q.total.item(), q.perceptual.item() + q.sharpness.item(), kExact);
}

TEST(CondDist, DegenerateBatch) {
  const std::size_t bins = 32;
  const double centre = -1.0 + (7 + 0.5) * (2.0 / bins);
  auto img = gray_image(2, 2, std::vector<double>(4, centre));
  auto lab = ops::one_hot<double>(std::vector<std::uint8_t>(4, 2), 1, 5, 2, 2);
  auto d = estimate_cond_dist(img, lab, bins);
  for (std::size_t b = 0; b < bins; ++b) {
    for (std::size_t c = 0; c < 5; ++c) {
      const double want = c == 2 ? (b == 7 ? 1.0 : 0.0) : 1.0 / bins;
      EXPECT_NEAR(d.table.at(b * 5 + c), want, 1e-12) << b << "," << c;
    }
  }
  EXPECT_EQ(d.empty_columns, (std::vector<std::size_t>{0, 1, 3, 4}));
}

TEST(CondDist, MidpointSplitsEvenly) {
  const std::size_t bins = 32;
  const double mid = -1.0 + 10 * (2.0 / bins);  // between centres 9 and 10
  auto img = gray_image(1, 1, {mid});
  auto lab = ops::one_hot<double>(std::vector<std::uint8_t>{0}, 1, 2, 1, 1);
  auto d = estimate_cond_dist(img, lab, bins);
  EXPECT_NEAR(d.table.at(9 * 2), 0.5, 1e-12);
  EXPECT_NEAR(d.table.at(10 * 2), 0.5, 1e-12);
}

TEST(CondDist, MatchesCountingOracleOnBinCentres) {
  const std::size_t bins = 8, classes = 5;
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> bin(16);
    std::vector<std::uint8_t> mask(16);
    std::vector<double> lum(16);
    for (std::size_t p = 0; p < 16; ++p) {
      bin[p] = rng() % bins;
      mask[p] = static_cast<std::uint8_t>(rng() % classes);
      lum[p] = -1.0 + (static_cast<double>(bin[p]) + 0.5) * (2.0 / bins);
    }
    auto d = estimate_cond_dist(gray_image(4, 4, lum), ops::one_hot<double>(mask, 1, classes, 4, 4), bins);
    std::vector<double> count(bins * classes, 0.0), total(classes, 0.0);
    for (std::size_t p = 0; p < 16; ++p) {
      count[bin[p] * classes + mask[p]] += 1;
      total[mask[p]] += 1;
    }
    for (std::size_t b = 0; b < bins; ++b) {
      for (std::size_t c = 0; c < classes; ++c) {
        const double want = total[c] > 0 ? count[b * classes + c] / total[c] : 1.0 / bins;
        EXPECT_NEAR(d.table.at(b * classes + c), want, 1e-12);
      }
    }
  }
}

TEST(CondDist, ColumnsOnSimplex) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(2 * 3 * 8 * 8), l(2 * 5 * 8 * 8);
  for (auto& x : v) x = u(rng);
  for (auto& x : l) x = u(rng);
  auto labels = ops::softmax_channels(Tensor64::from({2, 5, 8, 8}, l));
  auto d = estimate_cond_dist(Tensor64::from({2, 3, 8, 8}, v), labels, 32);
  for (std::size_t c = 0; c < 5; ++c) {
    double s = 0;
    for (std::size_t b = 0; b < 32; ++b) {
      EXPECT_GE(d.table.at(b * 5 + c), 0.0);
      s += d.table.at(b * 5 + c);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

CondPixelLabelDist<double> dist(std::size_t bins, std::size_t classes, std::vector<double> v) {
  CondPixelLabelDist<double> d;
  d.table = Tensor64::from({bins, classes}, std::move(v));
  return d;
}

TEST(Ema, HandArithmeticAndFixedPoint) {
  auto state = dist(3, 1, {1, 0, 0});
  auto batch = dist(3, 1, {0, 1, 0});
  auto next = ema_update(state, batch, 0.99);
  EXPECT_NEAR(next.table.at(0), 0.99, 1e-12);
  EXPECT_NEAR(next.table.at(1), 0.01, 1e-12);
  EXPECT_NEAR(next.table.at(2), 0.0, 1e-12);
  auto same = ema_update(state, state, 0.99);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(same.table.at(i), state.table.at(i), 1e-12);
  EXPECT_THROW(ema_update(state, dist(1, 3, {1, 1, 1}), 0.99), ContractError);
}

TEST(Ema, EmptyBatchColumnsKeepState) {
  auto state = dist(2, 2, {0.25, 1.0, 0.75, 0.0});
  auto batch = dist(2, 2, {1.0, 0.5, 0.0, 0.5});
  batch.empty_columns = {1};
  auto next = ema_update(state, batch, 0.5);
  EXPECT_NEAR(next.table.at(0), 0.625, 1e-12);
  EXPECT_NEAR(next.table.at(1), 1.0, 1e-12);
  EXPECT_NEAR(next.table.at(3), 0.0, 1e-12);
}

TEST(Imc, HandValuesAndSymmetry) {
  auto a = dist(2, 1, {1, 0});
  auto b = dist(2, 1, {0, 1});
  EXPECT_NEAR(loss_imc(a, a).item(), 0.0, kExact);
  EXPECT_NEAR(loss_imc(a, b).item(), 1.0, kExact);
  auto c = dist(2, 1, {0.3, 0.7});
  EXPECT_DOUBLE_EQ(loss_imc(a, c).item(), loss_imc(c, a).item());
  EXPECT_THROW(loss_imc(a, dist(1, 2, {1, 1})), ContractError);
}

TEST(Imc, GradientReachesOnlyGeneratedSide) {
  auto real = dist(2, 1, {1, 0});
  auto gen = dist(2, 1, {0.4, 0.6});
  real.table.set_requires_grad();
  gen.table.set_requires_grad();
  loss_imc(real, gen).backward();
  EXPECT_FALSE(real.table.has_grad());
  ASSERT_TRUE(gen.table.has_grad());
  EXPECT_NEAR(gen.table.grad()[0], -0.5, 1e-12);
}

TEST(GTotal, SumAndErrors) {
  auto s = [](double v) { return Tensor64::scalar(v); };
  EXPECT_NEAR(loss_g_total(s(0), s(0), s(0)).item(), 0.0, kExact);
  EXPECT_NEAR(loss_g_total(s(-0.8), s(0.3), s(0.1)).item(), -0.4, kExact);
  EXPECT_THROW(loss_g_total(s(NAN), s(0), s(0)), ContractError);
}

TEST(Audit, DiscriminatorLossHasNoPenaltyTerm) {
  auto r = scores({0.1, 0.2}).set_requires_grad();
  auto f = scores({-0.1, 0.3}).set_requires_grad();
  auto loss = loss_d_rgb(r, f, HingeConfig{});
  for (const auto& label : graph_op_labels(loss)) {
    EXPECT_EQ(label.find("penalty"), std::string::npos);
    EXPECT_EQ(label.find("grad"), std::string::npos);
  }
}

}  // namespace
}  // namespace wastegan
