#pragma once

#include <span>

namespace panodiff::stats {

double mean(std::span<const double> values);
// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> values);

struct PairedTest {
  double mean_difference = 0.0;  // mean(treatment - control)
  double t_statistic = 0.0;
  double p_value = 1.0;
  int degrees_of_freedom = 0;
};

// One-sided paired t-test of H1: mean(treatment - control) < 0.
PairedTest paired_t_test_less(std::span<const double> treatment, std::span<const double> control);

struct TwoSampleTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov distribution
// and the Stephens small-sample correction.
TwoSampleTest ks_two_sample(std::span<const double> a, std::span<const double> b);

}  // namespace panodiff::stats
