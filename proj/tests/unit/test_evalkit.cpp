#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "support/small_gan.hpp"
#include "wastegan/errors.hpp"
#include "wastegan/evalkit.hpp"

namespace wastegan {
namespace {

TEST(Miou, HandExamples) {
  Mask a{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(miou({a}, {a}, 5).miou, 1.0);

  auto disjoint = miou({Mask(4, 1)}, {Mask(4, 2)}, 5);
  EXPECT_EQ(disjoint.iou[1], 0.0);
  EXPECT_EQ(disjoint.iou[2], 0.0);
  EXPECT_TRUE(std::isnan(disjoint.iou[0]));
  EXPECT_DOUBLE_EQ(disjoint.miou, 0.0);

  Mask pred(16, 0), gt(16, 0);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      if (c < 2) pred[r * 4 + c] = 1;
      if (r < 2) gt[r * 4 + c] = 1;
    }
  }
  auto res = miou({pred}, {gt}, 2);
  EXPECT_DOUBLE_EQ(res.iou[1], 4.0 / 12.0);
  EXPECT_DOUBLE_EQ(res.iou[0], 4.0 / 12.0);
  EXPECT_DOUBLE_EQ(res.miou, 1.0 / 3.0);
}

TEST(Miou, Errors) {
  EXPECT_THROW(miou({Mask(4, 0)}, {}, 5), ContractError);
  EXPECT_THROW(miou({Mask(4, 0)}, {Mask(5, 0)}, 5), ContractError);
  EXPECT_THROW(miou({Mask(4, 7)}, {Mask(4, 0)}, 5), ContractError);
}

TEST(Miou, MatchesConfusionMatrixOracle) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 100; ++t) {
    // A skewed label source so that some classes are absent in some pairs.
    const std::size_t present = 2 + rng() % 4;
    Mask pred(64), gt(64);
    for (auto& v : pred) v = static_cast<std::uint8_t>(rng() % present);
    for (auto& v : gt) v = static_cast<std::uint8_t>(rng() % present);
    std::uint64_t cm[5][5] = {};
    for (std::size_t p = 0; p < 64; ++p) ++cm[gt[p]][pred[p]];
    double total = 0;
    int n = 0;
    std::vector<double> want(5, NAN);
    for (int c = 0; c < 5; ++c) {
      std::uint64_t row = 0, col = 0;
      for (int k = 0; k < 5; ++k) {
        row += cm[c][k];
        col += cm[k][c];
      }
      const std::uint64_t uni = row + col - cm[c][c];
      if (uni == 0) continue;
      want[c] = static_cast<double>(cm[c][c]) / static_cast<double>(uni);
      total += want[c];
      ++n;
    }
    const auto got = miou({pred}, {gt}, 5);
    EXPECT_EQ(got.miou, total / n);
    for (int c = 0; c < 5; ++c) {
      if (std::isnan(want[c])) {
        EXPECT_TRUE(std::isnan(got.iou[c]));
      } else {
        EXPECT_EQ(got.iou[c], want[c]);
      }
    }
    // Joint pixel permutation leaves the score unchanged.
    std::vector<std::size_t> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Mask pp(64), gp(64);
    for (std::size_t p = 0; p < 64; ++p) {
      pp[p] = pred[perm[p]];
      gp[p] = gt[perm[p]];
    }
    EXPECT_EQ(miou({pp}, {gp}, 5).miou, got.miou);
    EXPECT_GE(got.miou, 0.0);
    EXPECT_LE(got.miou, 1.0);
  }
}

TEST(Histogram, HandExamplesAndOracle) {
  auto h = label_histogram({Mask{0, 0, 1, 2}});
  EXPECT_EQ(h.freq, (std::vector<double>{0.5, 0.25, 0.25, 0, 0}));
  EXPECT_EQ(label_histogram({Mask(9, 0), Mask(3, 0)}).freq, (std::vector<double>{1, 0, 0, 0, 0}));
  EXPECT_THROW(label_histogram({}), ContractError);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    std::vector<Mask> masks(3, Mask(1 + rng() % 30));
    std::vector<std::uint64_t> counts(5, 0);
    std::uint64_t total = 0;
    for (auto& m : masks) {
      for (auto& v : m) {
        v = static_cast<std::uint8_t>(rng() % 5);
        ++counts[v];
        ++total;
      }
    }
    auto got = label_histogram(masks);
    double sum = 0;
    for (int c = 0; c < 5; ++c) {
      EXPECT_EQ(got.freq[c], static_cast<double>(counts[c]) / static_cast<double>(total));
      sum += got.freq[c];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Histogram, Distance) {
  ClassHistogram a{{1, 0, 0}}, b{{0, 1, 0}};
  EXPECT_EQ(histogram_distance(a, a), 0.0);
  EXPECT_EQ(histogram_distance(a, b), 2.0);
  EXPECT_NEAR(histogram_distance(ClassHistogram{{0.7, 0.3}}, ClassHistogram{{0.6, 0.4}}), 0.2, 1e-12);
  EXPECT_THROW(histogram_distance(a, ClassHistogram{{1, 0}}), ContractError);
}

TEST(SweepConfig, Validation) {
  SweepConfig c;
  EXPECT_NO_THROW(c.validate());
  c.ratios = {0, 5, 5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = SweepConfig{};
  c.seeds.clear();
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SweepReport, MediansAndCsv) {
  SweepReport r;
  r.rows = {{0, 0, 0.5, {0.5, NAN}}, {0, 1, 0.7, {0.7, 0.1}}, {0, 2, 0.6, {0.6, 0.2}}, {5, 0, 0.8, {0.8, 0.3}}};
  auto med = median_miou_by_ratio(r);
  ASSERT_EQ(med.size(), 2u);
  EXPECT_DOUBLE_EQ(med[0].second, 0.6);
  EXPECT_DOUBLE_EQ(med[1].second, 0.8);
  const auto csv = sweep_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "ratio,seed,miou,iou_c0,iou_c1");
  EXPECT_NE(csv.find("0,0,0.500000,0.500000,nan\n"), std::string::npos);
}

TEST(Sweep, RowsOrderAndDeterminism) {
  CorpusConfig cc;
  cc.resolution = 16;
  Corpus corpus;
  corpus.resolution = 16;
  for (std::size_t i = 0; i < 6; ++i) corpus.train.push_back(generate_scene(cc, i));
  for (std::size_t i = 6; i < 9; ++i) corpus.test.push_back(generate_scene(cc, i));
  GanModel<float> model(testing::small_gan_config());
  SweepConfig sc;
  sc.ratios = {0, 2};
  sc.seeds = {4, 1};
  sc.seg.epochs = 1;
  sc.seg.model.widths = {4, 4, 4, 4};
  const auto a = augmentation_sweep(model, corpus, sc);
  ASSERT_EQ(a.rows.size(), 4u);
  EXPECT_EQ(a.rows[0].ratio, 0u);
  EXPECT_EQ(a.rows[0].seed, 4u);
  EXPECT_EQ(a.rows[1].seed, 1u);
  EXPECT_EQ(a.rows[3].ratio, 2u);
  EXPECT_EQ(a.synthetic_histogram_samples, 12u);
  sc.jobs = 2;
  const auto b = augmentation_sweep(model, corpus, sc);
  EXPECT_EQ(sweep_csv(a), sweep_csv(b));
  EXPECT_EQ(a.config_hash, b.config_hash);
  EXPECT_THROW(augmentation_sweep(std::filesystem::path("/nonexistent/ckpt.wtk"), corpus, sc), IoError);
}

}  // namespace
}  // namespace wastegan
