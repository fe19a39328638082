#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "densitydist/inference.hpp"

using namespace densitydist;

TEST(Fuse, HandEvaluatedConfidence) {
  const std::vector<double> v1{0, 1}, v2{0.5, 1.5}, p{0.8, 0.2}, q{0.4, 0.6};
  // w = 0.8 / (0.8 + 0.6); expectations 0.2 and 1.1
  const double w = 0.8 / 1.4;
  EXPECT_NEAR(fuse_density(p, q, v1, v2, FusionMode::confidence), w * 0.2 + (1 - w) * 1.1, 1e-12);
  EXPECT_NEAR(fuse_density(p, q, v1, v2, FusionMode::average), 0.65, 1e-12);
  EXPECT_NEAR(fuse_density(p, q, v1, v2, FusionMode::max_category), 0.5 * (0.0 + 1.5), 1e-12);
}

TEST(Fuse, EqualPeaksMakeConfidenceAnAverage) {
  const std::vector<double> v1{0, 1, 2}, v2{0.2, 1.2, 2.2}, p{0.5, 0.3, 0.2}, q{0.1, 0.4, 0.5};
  EXPECT_NEAR(fuse_density(p, q, v1, v2, FusionMode::confidence), fuse_density(p, q, v1, v2, FusionMode::average),
              1e-15);
}

TEST(Fuse, MaxCategoryUsesRepresentation) {
  const std::vector<double> v1{0, 1, 7}, v2{0, 1, 7}, p{0, 0, 1};
  EXPECT_DOUBLE_EQ(fuse_density(p, p, v1, v2, FusionMode::max_category), 7.0);
  const std::vector<double> tie{0.5, 0.5, 0.0};
  EXPECT_DOUBLE_EQ(fuse_density(tie, tie, v1, v2, FusionMode::max_category), 0.0);
}

TEST(Fuse, ModeNames) {
  for (auto m : {FusionMode::confidence, FusionMode::average, FusionMode::max_category})
    EXPECT_EQ(parse_fusion_mode(to_string(m)), m);
  EXPECT_THROW(parse_fusion_mode("median"), std::invalid_argument);
}

TEST(PredictScene, BackgroundGivesZeroCount) {
  DualPartition d = build_dual_partition(PartitionStrategy::uep, true, 1.0);
  d.branch1 = d.branch1.with_reps([&] {
    auto r = d.branch1.reps();
    r[0] = 0.0;
    return r;
  }());
  d.branch2 = d.branch2.with_reps([&] {
    auto r = d.branch2.reps();
    r[0] = 0.0;
    return r;
  }());
  Tensor o1 = Tensor::matrix(10, 25), o2 = Tensor::matrix(10, 26);
  for (std::size_t n = 0; n < 10; ++n) o1(n, 0) = o2(n, 0) = 1.0;
  for (auto mode : {FusionMode::confidence, FusionMode::average, FusionMode::max_category})
    EXPECT_EQ(predict_scene(o1, o2, d, mode).count, 0.0);
}

TEST(PredictScene, CountWithinRepresentationBounds) {
  const DualPartition d = build_dual_partition(PartitionStrategy::uep, true, 1.0);
  std::mt19937_64 rng(4);
  std::gamma_distribution<double> g(0.7, 1.0);
  const double lo = std::min(*std::min_element(d.branch1.reps().begin(), d.branch1.reps().end()),
                             *std::min_element(d.branch2.reps().begin(), d.branch2.reps().end()));
  const double hi = std::max(*std::max_element(d.branch1.reps().begin(), d.branch1.reps().end()),
                             *std::max_element(d.branch2.reps().begin(), d.branch2.reps().end()));
  for (int t = 0; t < 20; ++t) {
    Tensor o1 = Tensor::matrix(16, 25), o2 = Tensor::matrix(16, 26);
    for (Tensor* o : {&o1, &o2})
      for (std::size_t n = 0; n < 16; ++n) {
        double s = 0.0;
        for (auto& v : o->row(n)) s += (v = g(rng));
        for (auto& v : o->row(n)) v /= s;
      }
    for (auto mode : {FusionMode::confidence, FusionMode::average, FusionMode::max_category}) {
      const auto r = predict_scene(o1, o2, d, mode);
      EXPECT_EQ(r.density.size(), 16u);
      EXPECT_GE(r.count, 16 * lo - 1e-9);
      EXPECT_LE(r.count, 16 * hi + 1e-9);
      double s = 0.0;
      for (double v : r.density) s += v;
      EXPECT_NEAR(r.count, s, 1e-9);
    }
  }
}

TEST(Metrics, Examples) {
  const std::vector<double> p{10, 20}, y{12, 16};
  const auto m = counting_metrics(p, y);
  EXPECT_NEAR(m.mae, 3.0, 1e-12);
  EXPECT_NEAR(m.mse, std::sqrt(10.0), 1e-12);
  const auto perfect = counting_metrics(y, y);
  EXPECT_EQ(perfect.mae, 0.0);
  EXPECT_EQ(perfect.mse, 0.0);
  const std::vector<double> a{5}, b{9};
  EXPECT_NEAR(counting_metrics(a, b).mae, 4.0, 1e-12);
  EXPECT_NEAR(counting_metrics(a, b).mse, 4.0, 1e-12);
  EXPECT_THROW(counting_metrics(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(counting_metrics(a, y), std::invalid_argument);
}
