#include "anoseg/losses.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace anoseg;

namespace {

FeaturePyramid random_pyramid(int64_t h, uint64_t seed) {
  torch::manual_seed(seed);
  return {torch::randn({1, 4, h, h}), torch::randn({1, 6, h / 2, h / 2}),
          torch::randn({1, 8, h / 4, h / 4})};
}

}  // namespace

TEST(SimilarityMap, SelfSimilarityIsOne) {
  torch::manual_seed(0);
  auto f = torch::randn({8, 4, 4});
  auto sums = similarity_map(f, f).sum(0);
  EXPECT_LT((sums - 1.0).abs().max().item<double>(), 1e-5);
}

TEST(SimilarityMap, AntipodalIsMinusOne) {
  torch::manual_seed(1);
  auto f = torch::randn({8, 4, 4});
  auto sums = similarity_map(f, -f).sum(0);
  EXPECT_LT((sums + 1.0).abs().max().item<double>(), 1e-5);
}

TEST(SimilarityMap, MatchesScalarCosineOracle) {
  torch::manual_seed(2);
  auto a = torch::randn({3, 2, 2});
  auto b = torch::randn({3, 2, 2});
  auto sums = similarity_map(a, b).sum(0);
  for (int64_t y = 0; y < 2; ++y)
    for (int64_t x = 0; x < 2; ++x)
      EXPECT_NEAR(sums[y][x].item<double>(), oracle::cosine_at(a, b, y, x), 1e-6);
}

TEST(SimilarityMap, ScaleInvariant) {
  torch::manual_seed(3);
  auto a = torch::randn({5, 3, 3});
  auto b = torch::randn({5, 3, 3});
  auto x1 = similarity_map(a, b);
  auto x2 = similarity_map(a, b * 37.5);
  EXPECT_LT((x1 - x2).abs().max().item<double>(), 1e-6);
}

TEST(SimilarityMap, ZeroVectorsAreEpsGuarded) {
  auto a = torch::zeros({4, 2, 2});
  auto b = torch::randn({4, 2, 2});
  auto x = similarity_map(a, b);
  EXPECT_TRUE(x.isfinite().all().item<bool>());
}

TEST(DistanceMap, IdenticalAndAntipodal) {
  torch::manual_seed(4);
  auto f = torch::randn({8, 4, 4});
  EXPECT_LT(distance_map(similarity_map(f, f)).abs().max().item<double>(), 1e-5);
  EXPECT_LT((distance_map(similarity_map(f, -f)) - 2.0).abs().max().item<double>(), 1e-5);
}

TEST(DistanceMap, OneMinusCosineOracle) {
  torch::manual_seed(5);
  auto a = torch::randn({3, 2, 2});
  auto b = torch::randn({3, 2, 2});
  auto d = distance_map(similarity_map(a, b));
  for (int64_t y = 0; y < 2; ++y)
    for (int64_t x = 0; x < 2; ++x)
      EXPECT_NEAR(d[y][x].item<double>(), 1.0 - oracle::cosine_at(a, b, y, x), 1e-6);
  EXPECT_GE(d.min().item<double>(), 0.0);
  EXPECT_LE(d.max().item<double>(), 2.0);
}

TEST(DistillationLoss, IdenticalPyramidsGiveZero) {
  auto p = random_pyramid(8, 6);
  EXPECT_LT(distillation_loss(p, p).item<double>(), 1e-5);
}

TEST(DistillationLoss, AntipodalPyramidsGiveSix) {
  auto p = random_pyramid(8, 7);
  FeaturePyramid n{-p[0], -p[1], -p[2]};
  EXPECT_NEAR(distillation_loss(p, n).item<double>(), 6.0, 1e-4);
}

TEST(DistillationLoss, LevelMismatchThrows) {
  auto p = random_pyramid(8, 8);
  FeaturePyramid q{p[0], p[1], torch::randn({1, 8, 3, 3})};
  EXPECT_THROW(distillation_loss(p, q), std::invalid_argument);
}

TEST(DistillationLoss, MatchesDirectEvaluationAndFiniteDifferences) {
  // float64 keeps central-difference roundoff far below the 1e-4 tolerance
  torch::manual_seed(9);
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  FeaturePyramid teacher{torch::randn({1, 3, 4, 4}, opts), torch::randn({1, 3, 2, 2}, opts),
                         torch::randn({1, 3, 1, 1}, opts)};
  auto student0 = torch::randn({1, 3, 4, 4}, opts);

  // Direct evaluation of the three-level mean-distance sum.
  auto direct = [&](const FeaturePyramid& s) {
    double total = 0;
    for (int k = 0; k < 3; ++k) {
      double level = 0;
      int64_t hw = 0;
      for (int64_t y = 0; y < teacher[k].size(2); ++y)
        for (int64_t x = 0; x < teacher[k].size(3); ++x) {
          level += 1.0 - oracle::cosine_at(teacher[k][0], s[k][0], y, x);
          ++hw;
        }
      total += level / double(hw);
    }
    return total;
  };
  FeaturePyramid student{student0, torch::randn({1, 3, 2, 2}, opts),
                         torch::randn({1, 3, 1, 1}, opts)};
  EXPECT_NEAR(distillation_loss(teacher, student).item<double>(), direct(student), 1e-5);

  // Gradient on the first level vs central differences.
  auto leaf = student[0].clone().set_requires_grad(true);
  FeaturePyramid sg{leaf, student[1], student[2]};
  auto loss = distillation_loss(teacher, sg);
  loss.backward();
  auto fd = oracle::finite_difference_grad(
      [&](const torch::Tensor& v) {
        FeaturePyramid s{v, student[1], student[2]};
        return distillation_loss(teacher, s).item<double>();
      },
      student[0]);
  EXPECT_LT(oracle::max_rel_error(leaf.grad(), fd, 1e-3), 1e-4);
}

TEST(FocalLoss, GammaZeroIsBinaryCrossEntropy) {
  torch::manual_seed(10);
  auto y = torch::rand({4, 4}) * 0.98 + 0.01;
  auto m = (torch::rand({4, 4}) > 0.5).to(torch::kFloat32);
  auto focal = focal_loss(y, m, 0.0);
  auto bce = torch::binary_cross_entropy(y, m);
  EXPECT_NEAR(focal.item<double>(), bce.item<double>(), 1e-6);
}

TEST(FocalLoss, PerfectPredictionNearZero) {
  auto m = (torch::rand({4, 4}) > 0.5).to(torch::kFloat32);
  EXPECT_LT(focal_loss(m, m, 4.0).item<double>(), 1e-6);
}

TEST(FocalLoss, HandComputedCase) {
  // Y=0.5 everywhere, M=[[1,0],[0,1]], gamma=2 -> 0.25 * ln 2.
  auto y = torch::full({2, 2}, 0.5f);
  auto m = torch::tensor({{1.0f, 0.0f}, {0.0f, 1.0f}});
  EXPECT_NEAR(focal_loss(y, m, 2.0).item<double>(), 0.25 * std::log(2.0), 1e-6);
}

TEST(L1Loss, KnownCasesAndOracle) {
  torch::manual_seed(11);
  auto m = (torch::rand({5, 5}) > 0.5).to(torch::kFloat32);
  EXPECT_EQ(anoseg::l1_loss(m, m).item<double>(), 0.0);
  EXPECT_NEAR(anoseg::l1_loss(1.0 - m, m).item<double>(), 1.0, 1e-7);
  auto y = torch::rand({5, 5});
  EXPECT_NEAR(anoseg::l1_loss(y, m).item<double>(), (m - y).abs().mean().item<double>(), 1e-7);
}

TEST(SegmentationLoss, SumsComponentsExactly) {
  torch::manual_seed(12);
  auto y = torch::rand({4, 4}) * 0.9 + 0.05;
  auto m = (torch::rand({4, 4}) > 0.7).to(torch::kFloat32);
  auto total = segmentation_loss(y, m, 4.0).item<double>();
  auto parts = focal_loss(y, m, 4.0).item<double>() + anoseg::l1_loss(y, m).item<double>();
  EXPECT_NEAR(total, parts, 1e-6);  // float32 summation order differs
  EXPECT_LT(segmentation_loss(m * 0.999998 + 1e-6, m, 4.0).item<double>(), 1e-4);
}

TEST(SegmentationLoss, GradientMatchesFiniteDifferences) {
  torch::manual_seed(13);
  auto y0 = (torch::rand({4, 4}) * 0.8 + 0.1).to(torch::kFloat64);
  auto m = (torch::rand({4, 4}) > 0.5).to(torch::kFloat64);
  auto y = y0.clone().set_requires_grad(true);
  segmentation_loss(y, m, 4.0).backward();
  auto fd = oracle::finite_difference_grad(
      [&](const torch::Tensor& v) { return segmentation_loss(v, m, 4.0).item<double>(); }, y0);
  EXPECT_LT(oracle::max_rel_error(y.grad(), fd, 1e-3), 1e-4);
}

TEST(FocalLoss, GradientMatchesFiniteDifferences) {
  torch::manual_seed(14);
  auto y0 = (torch::rand({4, 4}) * 0.8 + 0.1).to(torch::kFloat64);
  auto m = (torch::rand({4, 4}) > 0.5).to(torch::kFloat64);
  auto y = y0.clone().set_requires_grad(true);
  focal_loss(y, m, 4.0).backward();
  auto fd = oracle::finite_difference_grad(
      [&](const torch::Tensor& v) { return focal_loss(v, m, 4.0).item<double>(); }, y0);
  EXPECT_LT(oracle::max_rel_error(y.grad(), fd, 1e-3), 1e-4);
}
