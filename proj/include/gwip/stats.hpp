#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gwip/errors.hpp"

namespace gwip {

// Empirical CDF summary: sorted copy of the samples plus the paired analytic
// CDF values when a reference was supplied.
struct EcdfSummary {
  std::vector<double> sorted;
  std::vector<double> analytic;  // cdf evaluated at sorted points, may be empty
  double ks = 0.0;
};

// Two-sided Kolmogorov-Smirnov distance between the empirical CDF and an
// analytic reference; both one-sided gaps are taken at every sample point.
inline double ks_analytic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  GWIP_ASSERT(!samples.empty());
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    double f = cdf(samples[i]);
    d = std::max(d, std::max((double(i) + 1.0) / n - f, f - double(i) / n));
  }
  return d;
}

inline EcdfSummary ecdf_vs_analytic(std::vector<double> samples,
                                    const std::function<double(double)>& cdf) {
  EcdfSummary out;
  out.sorted = std::move(samples);
  std::sort(out.sorted.begin(), out.sorted.end());
  out.analytic.reserve(out.sorted.size());
  const double n = static_cast<double>(out.sorted.size());
  for (size_t i = 0; i < out.sorted.size(); ++i) {
    double f = cdf(out.sorted[i]);
    out.analytic.push_back(f);
    out.ks = std::max(out.ks, std::max((double(i) + 1.0) / n - f, f - double(i) / n));
  }
  return out;
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  GWIP_ASSERT(!a.empty() && !b.empty());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(double(i) / na - double(j) / nb));
  }
  return d;
}

struct WilsonInterval {
  double lo;
  double hi;
  double center;
};

inline WilsonInterval wilson_ci(uint64_t successes, uint64_t trials, double z) {
  GWIP_ASSERT(trials > 0 && successes <= trials);
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (phat + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, center - half), std::min(1.0, center + half), center};
}

// Strict decreasing trend: each consecutive pair of confidence intervals
// must be separated (next upper bound below previous lower bound).
inline bool trend_decreasing(const std::vector<WilsonInterval>& series) {
  for (size_t i = 1; i < series.size(); ++i)
    if (!(series[i].hi < series[i - 1].lo)) return false;
  return true;
}

}  // namespace gwip
