#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "panodiff/error.hpp"
#include "panodiff/stats.hpp"

using namespace panodiff;
using namespace panodiff::stats;

TEST(Stats, MeanAndStddev) {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean(v), 5.0);
  EXPECT_NEAR(stddev(v), std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_THROW(mean(std::vector<double>{}), InvalidArgument);
}

TEST(PairedTTest, ReferenceValue) {
  // Differences {-1, -2, -3, -2}: mean -2, sd sqrt(2/3), t = -2 / (sqrt(2/3) / 2) = -4.89898.
  // One-sided p for t(3) = -4.89898 is 0.008138 (scipy.stats.t.cdf).
  const std::vector<double> treatment{1, 2, 3, 4};
  const std::vector<double> control{2, 4, 6, 6};
  const PairedTest r = paired_t_test_less(treatment, control);
  EXPECT_EQ(r.degrees_of_freedom, 3);
  EXPECT_NEAR(r.mean_difference, -2.0, 1e-12);
  EXPECT_NEAR(r.t_statistic, -4.898979, 1e-5);
  EXPECT_NEAR(r.p_value, 0.008138, 1e-5);
}

TEST(PairedTTest, DirectionAndErrors) {
  const std::vector<double> a{5, 6, 7};
  const std::vector<double> b{1, 2, 4};
  EXPECT_GT(paired_t_test_less(a, b).p_value, 0.9);
  EXPECT_THROW(paired_t_test_less(a, std::vector<double>{1, 2}), InvalidArgument);
}

TEST(KsTwoSample, SameAndShiftedDistributions) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(400), b(400), c(400);
  for (auto& v : a) v = g(rng);
  for (auto& v : b) v = g(rng);
  for (auto& v : c) v = g(rng) + 1.0;
  EXPECT_GT(ks_two_sample(a, b).p_value, 0.01);
  EXPECT_LT(ks_two_sample(a, c).p_value, 1e-6);
}

TEST(KsTwoSample, StatisticByHand) {
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> b{4, 5, 6};
  EXPECT_DOUBLE_EQ(ks_two_sample(a, b).statistic, 1.0);
  const std::vector<double> c{1, 3, 5};
  const std::vector<double> d{2, 4, 6};
  EXPECT_NEAR(ks_two_sample(c, d).statistic, 1.0 / 3.0, 1e-12);
}
