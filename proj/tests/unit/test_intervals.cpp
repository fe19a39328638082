#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "densitydist/intervals.hpp"

using namespace densitydist;

TEST(Uep, BranchListsMatchPublishedValues) {
  const std::vector<double> b1 = {0,     0.0019, 0.0081, 0.0165, 0.0272, 0.0404, 0.056, 0.076, 0.099,
                                  0.126, 0.159,  0.199,  0.246,  0.303,  0.371,  0.454, 0.556, 0.684,
                                  0.848, 1.06,   1.36,   1.8,    2.5,    3.9,    8.2};
  const std::vector<double> b2 = {0,     0.00087, 0.0046, 0.0119, 0.0214, 0.0333, 0.048, 0.065, 0.086,
                                  0.112, 0.142,   0.178,  0.221,  0.272,  0.334,  0.409, 0.501, 0.615,
                                  0.759, 0.945,   1.197,  1.55,   2.1,    3.0,    4.5,   8.5};
  EXPECT_EQ(build_uep_partition(1).borders(), b1);
  EXPECT_EQ(build_uep_partition(2).borders(), b2);
  EXPECT_EQ(build_uep_partition(1).count(), 25u);
  EXPECT_EQ(build_uep_partition(2).count(), 26u);
}

TEST(Uep, ScaleDoublesBorders) {
  const auto base = build_uep_partition(1);
  const auto scaled = build_uep_partition(1, 2.0);
  ASSERT_EQ(scaled.count(), base.count());
  for (std::size_t j = 0; j < base.count(); ++j) EXPECT_DOUBLE_EQ(scaled.borders()[j], 2 * base.borders()[j]);
  EXPECT_THROW(build_uep_partition(1, 0.0), std::invalid_argument);
  EXPECT_THROW(build_uep_partition(3), std::invalid_argument);
}

TEST(Uep, BranchesInterleave) {
  EXPECT_TRUE(borders_interleave(build_uep_partition(1), build_uep_partition(2)));
  EXPECT_FALSE(borders_interleave(build_uep_partition(1), build_uep_partition(1)));
}

TEST(Quantize, Examples) {
  const auto p = build_uep_partition(1);
  EXPECT_EQ(p.quantize(0.0), 0u);
  EXPECT_EQ(p.quantize(0.05), 5u);
  EXPECT_EQ(p.quantize(10.0), 24u);
  EXPECT_EQ(quantize(0.0404, p), 5u);  // on a border
  EXPECT_THROW(p.quantize(-1e-3), std::invalid_argument);
  EXPECT_THROW(p.quantize(std::nan("")), std::invalid_argument);
}

TEST(Quantize, RandomDensitiesLandInsideTheirInterval) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 12.0);
  for (int b = 1; b <= 2; ++b) {
    const auto p = build_uep_partition(b);
    const auto& br = p.borders();
    for (int i = 0; i < 2000; ++i) {
      const double d = u(rng);
      const auto j = p.quantize(d);
      EXPECT_LE(br[j], d);
      if (j + 1 < br.size()) EXPECT_LT(d, br[j + 1]);
      // linear scan oracle
      std::size_t k = 0;
      while (k + 1 < br.size() && br[k + 1] <= d) ++k;
      EXPECT_EQ(j, k);
    }
  }
}

TEST(Partition, RepsDefaultToMidpoints) {
  IntervalPartition p({0, 1, 3});
  EXPECT_EQ(p.reps(), (std::vector<double>{0.5, 2.0, 3.0}));
  EXPECT_THROW(p.with_reps({0.5, 3.5, 3.0}), std::invalid_argument);
  EXPECT_EQ(p.with_reps({0, 1, 10}).reps()[2], 10.0);
}

TEST(Partition, RejectsBadBorders) {
  EXPECT_THROW(IntervalPartition({}), std::invalid_argument);
  EXPECT_THROW(IntervalPartition({0.1, 1}), std::invalid_argument);
  EXPECT_THROW(IntervalPartition({0, 1, 1}), std::invalid_argument);
  EXPECT_THROW(IntervalPartition({0, 2, 1}), std::invalid_argument);
  EXPECT_THROW(IntervalPartition({0, 1}, std::vector<double>{0.5}), std::invalid_argument);
}

TEST(Partition, JsonRoundTrip) {
  const auto p = build_uep_partition(2, 1.5);
  EXPECT_EQ(IntervalPartition::from_json(p.to_json()), p);
}

TEST(UniformLen, Examples) {
  EXPECT_EQ(build_uniform_len(4, 5).borders(), (std::vector<double>{0, 1, 2, 3, 4}));
  EXPECT_EQ(build_uniform_len(1, 2).borders(), (std::vector<double>{0, 1}));
  const auto p = build_uniform_len(8.2, 25);
  for (std::size_t j = 1; j < p.count(); ++j) EXPECT_NEAR(p.borders()[j] - p.borders()[j - 1], 8.2 / 24, 1e-12);
  EXPECT_THROW(build_uniform_len(4, 1), std::invalid_argument);
}

TEST(UniformNum, MedianSplit) {
  const std::vector<double> s{1, 2, 3, 4};
  EXPECT_EQ(build_uniform_num(s, 2).borders(), (std::vector<double>{0, 2.5}));
  const std::vector<double> flat{5, 5, 5};
  EXPECT_THROW(build_uniform_num(flat, 2), std::invalid_argument);
}

TEST(UniformNum, QuantilesOfUniformSample) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(20000);
  for (auto& v : s) v = u(rng);
  const auto p = build_uniform_num(s, 4);
  ASSERT_EQ(p.count(), 4u);
  EXPECT_NEAR(p.borders()[1], 0.25, 0.02);
  EXPECT_NEAR(p.borders()[2], 0.50, 0.02);
  EXPECT_NEAR(p.borders()[3], 0.75, 0.02);
}

TEST(DualPartition, UniformStrategiesInterleaveWhenAsked) {
  std::vector<double> s;
  for (int i = 1; i <= 400; ++i) s.push_back(0.01 * i);
  for (auto strategy : {PartitionStrategy::uniform_len, PartitionStrategy::uniform_num, PartitionStrategy::uep}) {
    const auto d = build_dual_partition(strategy, true, 1.0, s);
    EXPECT_TRUE(d.interleaved);
    EXPECT_TRUE(borders_interleave(d.branch1, d.branch2)) << to_string(strategy);
    const auto same = build_dual_partition(strategy, false, 1.0, s);
    EXPECT_EQ(same.branch1, same.branch2);
  }
  EXPECT_EQ(parse_partition_strategy("uniform_num"), PartitionStrategy::uniform_num);
  EXPECT_THROW(parse_partition_strategy("bogus"), std::invalid_argument);
}
