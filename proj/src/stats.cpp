#include "panodiff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "panodiff/error.hpp"

namespace panodiff::stats {

double mean(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mean: empty input");
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
  if (values.size() < 2) throw InvalidArgument("stddev: need at least two values");
  const double mu = mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - mu) * (v - mu);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

PairedTest paired_t_test_less(std::span<const double> treatment, std::span<const double> control) {
  if (treatment.size() != control.size()) throw InvalidArgument("paired_t_test_less: size mismatch");
  if (treatment.size() < 2) throw InvalidArgument("paired_t_test_less: need at least two pairs");
  std::vector<double> diff(treatment.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = treatment[i] - control[i];
  PairedTest out;
  out.degrees_of_freedom = static_cast<int>(diff.size()) - 1;
  out.mean_difference = mean(diff);
  const double sd = stddev(diff);
  if (sd == 0.0) {
    out.t_statistic = out.mean_difference < 0.0 ? -INFINITY : out.mean_difference > 0.0 ? INFINITY : 0.0;
    out.p_value = out.mean_difference < 0.0 ? 0.0 : out.mean_difference > 0.0 ? 1.0 : 0.5;
    return out;
  }
  out.t_statistic = out.mean_difference / (sd / std::sqrt(static_cast<double>(diff.size())));
  const boost::math::students_t dist(out.degrees_of_freedom);
  out.p_value = boost::math::cdf(dist, out.t_statistic);
  return out;
}

TwoSampleTest ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("ks_two_sample: empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const auto n = static_cast<double>(x.size());
  const auto m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double ne = std::sqrt(n * m / (n + m));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  // Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)
  double q = 0.0;
  if (lambda < 1e-3) {
    q = 1.0;
  } else {
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
      const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
      q += term;
      if (std::abs(term) < 1e-12) break;
      sign = -sign;
    }
    q = std::clamp(2.0 * q, 0.0, 1.0);
  }
  return {d, q};
}

}  // namespace panodiff::stats
