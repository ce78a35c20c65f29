#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "segsense/errors.hpp"

namespace segsense {

struct BoxStats {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) deviation; 0 for a single value
  std::size_t n = 0;
};

/// Quantile of sorted data by linear interpolation between the closest
/// ranks: position (n - 1) * p.
inline double sorted_quantile(std::span<const double> sorted, double p) {
  const double pos = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

inline double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  // Deviations are taken from the first value so constant input gives 0 exactly.
  const double shift = values.front();
  double mean = 0.0;
  for (double v : values) mean += v - shift;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - shift - mean) * (v - shift - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

inline BoxStats reproducibility_stats(std::span<const double> values) {
  if (values.empty()) throw DataError("box statistics of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  BoxStats b;
  b.n = sorted.size();
  b.min = sorted.front();
  b.max = sorted.back();
  b.q1 = sorted_quantile(sorted, 0.25);
  b.median = sorted_quantile(sorted, 0.5);
  b.q3 = sorted_quantile(sorted, 0.75);
  double sum = 0.0;
  for (double v : values) sum += v;
  b.mean = sum / static_cast<double>(values.size());
  b.stddev = sample_stddev(values);
  return b;
}

}  // namespace segsense
