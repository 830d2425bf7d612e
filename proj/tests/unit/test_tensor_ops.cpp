#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "wastegan/adam.hpp"
#include "wastegan/errors.hpp"
#include "wastegan/ops.hpp"
#include "wastegan/tensor.hpp"

namespace wastegan {
namespace {

TEST(Tensor, ShapeAndDataLengthAgree) {
  auto t = Tensor64::zeros({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(shape_numel(t.shape()), t.numel());
  EXPECT_THROW(Tensor64::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST(Tensor, ReluAndMaeHandValues) {
  auto x = Tensor64::from({3}, {-0.3, 0.0, 0.7});
  auto r = ops::relu(x);
  EXPECT_EQ(r.at(0), 0.0);
  EXPECT_EQ(r.at(2), 0.7);
  auto a = Tensor64::from({2}, {1.0, 2.0});
  EXPECT_EQ(ops::mae(a, a.clone()).item(), 0.0);
  EXPECT_DOUBLE_EQ(ops::mae(a, Tensor64::from({2}, {2.0, 0.0})).item(), 1.5);
}

TEST(Tensor, SobelKernelOnConstantPatchIsZero) {
  auto x = Tensor64::full({1, 1, 3, 3}, 1.0);
  auto k = Tensor64::from({1, 1, 3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1});
  auto y = ops::conv2d(x, k, Tensor64(), 1, 0);
  ASSERT_EQ(y.numel(), 1u);
  EXPECT_EQ(y.item(), 0.0);
}

TEST(Tensor, ConvZeroPaddingHandValue) {
  auto x = Tensor64::full({1, 1, 2, 2}, 1.0);
  auto k = Tensor64::full({1, 1, 3, 3}, 1.0);
  auto y = ops::conv2d(x, k, Tensor64::from({1}, {0.5}));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 4.5);
}

TEST(Tensor, MatmulHandValue) {
  auto a = Tensor64::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor64::from({2, 1}, {5, 6});
  auto c = ops::matmul(a, b);
  EXPECT_EQ(c.at(0), 17.0);
  EXPECT_EQ(c.at(1), 39.0);
}

TEST(Tensor, UpsampleIsNearestNeighbour) {
  auto x = Tensor64::from({1, 1, 1, 2}, {1.0, 2.0});
  auto y = ops::upsample2x(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 4}));
  const std::vector<double> want{1, 1, 2, 2, 1, 1, 2, 2};
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(y.at(i), want[i]);
}

TEST(Tensor, SoftmaxChannelsSumToOne) {
  auto x = Tensor64::from({1, 3, 1, 2}, {1, -2, 0.5, 3, 2, -1});
  auto s = ops::softmax_channels(x);
  for (std::size_t p = 0; p < 2; ++p) {
    double total = 0;
    for (std::size_t c = 0; c < 3; ++c) total += s.at(c * 2 + p);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Tensor, LeakyReluSlope) {
  auto y = ops::leaky_relu(Tensor64::from({2}, {-1.0, 2.0}));
  EXPECT_DOUBLE_EQ(y.at(0), -0.2);
  EXPECT_DOUBLE_EQ(y.at(1), 2.0);
}

TEST(Tensor, NanPropagatesThroughActivations) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_TRUE(std::isnan(ops::relu(Tensor64::from({1}, {nan})).item()));
  EXPECT_TRUE(std::isnan(ops::leaky_relu(Tensor64::from({1}, {nan})).item()));
  auto lum = Tensor64::from({1, 1, 1, 2}, {0.1, nan});
  auto lab = Tensor64::full({1, 2, 1, 2}, 0.5);
  EXPECT_THROW(ops::soft_histogram(lum, lab, 4), ContractError);
}

TEST(Tensor, ShapeMismatchReportsBothShapes) {
  auto a = Tensor64::zeros({2, 3});
  auto b = Tensor64::zeros({3, 2});
  try {
    ops::add(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
  EXPECT_THROW(ops::matmul(a, a), DimensionError);
}

TEST(Backward, SumGivesOnes) {
  auto x = Tensor64::from({4}, {1, 2, 3, 4}).set_requires_grad();
  ops::sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, MeanOfSquares) {
  auto x = Tensor64::from({2}, {1, 2}).set_requires_grad();
  ops::mean(ops::mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 2.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  auto x = Tensor64::from({2}, {1, 2}).set_requires_grad();
  auto y = ops::sum(ops::scale(x, 3.0));
  y.backward();
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, NonScalarIsContractError) {
  auto x = Tensor64::from({2}, {1, 2}).set_requires_grad();
  EXPECT_THROW(ops::scale(x, 2.0).backward(), ContractError);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = Tensor64::from({2}, {1, 2}).set_requires_grad();
  Tensor64 y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = ops::sum(ops::mul(x, x));
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Backward, ReplayIsBitwiseDeterministic) {
  auto run = [] {
    auto x = Tensor64::from({1, 2, 4, 4}, std::vector<double>(32, 0.0));
    for (std::size_t i = 0; i < 32; ++i) x.mutable_data()[i] = std::sin(0.37 * static_cast<double>(i));
    auto w = Tensor64::from({3, 2, 3, 3}, std::vector<double>(54, 0.0));
    for (std::size_t i = 0; i < 54; ++i) w.mutable_data()[i] = std::cos(0.11 * static_cast<double>(i));
    w.set_requires_grad();
    auto y = ops::mean(ops::tanh(ops::conv2d(x, w, Tensor64())));
    y.backward();
    return std::make_pair(y.item(), std::vector<double>(w.grad().begin(), w.grad().end()));
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  auto p = Tensor::from({3}, {1.f, -2.f, 0.5f}).set_requires_grad();
  p.mutable_grad();
  Adam<float> opt({p}, {0.1, 0.0, 0.99, 1e-8});
  opt.step();
  EXPECT_EQ(p.at(0), 1.f);
  EXPECT_EQ(p.at(1), -2.f);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Adam, DegenerateBetasActLikeSignSgd) {
  auto p = Tensor64::from({1}, {1.0}).set_requires_grad();
  p.mutable_grad()[0] = 1.0;
  Adam<double> opt({p}, {0.1, 0.0, 0.0, 1e-8});
  opt.step();
  EXPECT_NEAR(p.at(0), 0.9, 1e-7);
  EXPECT_EQ(p.grad()[0], 1.0);  // gradients are left for the caller to reset
}

TEST(Adam, MissingGradientIsContractError) {
  auto p = Tensor64::from({1}, {1.0}).set_requires_grad();
  Adam<double> opt({p}, {1e-4, 0.0, 0.99, 1e-8});
  EXPECT_THROW(opt.step(), ContractError);
}

TEST(Adam, RejectsBadHyperparameters) {
  auto p = Tensor64::from({1}, {1.0});
  EXPECT_THROW(Adam<double>({p}, {1e-4, 1.0, 0.99, 1e-8}), ConfigError);
  EXPECT_THROW(Adam<double>({p}, {1e-4, 0.0, 0.99, 0.0}), ConfigError);
  EXPECT_NO_THROW(Adam<double>({p}, {1e-6, 0.0, 0.99, 1e-8}));
}

}  // namespace
}  // namespace wastegan
