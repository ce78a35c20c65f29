#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "segsense/errors.hpp"
#include "segsense/mask.hpp"

namespace segsense {

enum class Modality { oct, octa };

inline std::string modality_name(Modality m) { return m == Modality::oct ? "OCT" : "OCT-A"; }

inline Modality parse_modality(const std::string& s) {
  if (s == "OCT" || s == "oct") return Modality::oct;
  if (s == "OCT-A" || s == "oct-a" || s == "OCTA" || s == "octa") return Modality::octa;
  throw DataError("unknown modality '" + s + "' (expected OCT or OCT-A)");
}

struct VolumeSample {
  int day = 0;  // days since xenograft
  std::string stack_id;
  std::size_t voxel_count = 0;
  double normalized_volume = 0.0;
};

/// Samples of one modality, days strictly increasing.
class VolumeSeries {
 public:
  explicit VolumeSeries(Modality modality = Modality::oct) : modality_(modality) {}
  VolumeSeries(Modality modality, std::vector<VolumeSample> samples) : modality_(modality) {
    for (auto& s : samples) add(std::move(s));
  }

  void add(VolumeSample s) {
    if (!samples_.empty() && s.day <= samples_.back().day) {
      throw DataError(modality_name(modality_) + " series: day " + std::to_string(s.day) +
                      " is not after day " + std::to_string(samples_.back().day));
    }
    samples_.push_back(std::move(s));
  }

  Modality modality() const noexcept { return modality_; }
  std::span<const VolumeSample> samples() const noexcept { return samples_; }
  std::span<VolumeSample> samples() noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }

 private:
  Modality modality_;
  std::vector<VolumeSample> samples_;
};

/// Foreground voxels summed over every slice.
inline std::size_t stack_volume(const MaskStack& s) {
  std::size_t total = 0;
  for (const auto& slice : s.slices()) total += foreground_count(slice);
  return total;
}

/// Physical volume given voxel extents (e.g. µm per axis).
inline double physical_volume(std::size_t voxels, double dz, double dy, double dx) {
  return static_cast<double>(voxels) * dz * dy * dx;
}

/// Each sample divided by the series maximum, which maps to exactly 1.
inline VolumeSeries normalize_series(const VolumeSeries& s) {
  std::size_t peak = 0;
  for (const auto& v : s.samples()) peak = std::max(peak, v.voxel_count);
  if (peak == 0) throw DataError(modality_name(s.modality()) + " series has no foreground voxels");
  VolumeSeries out = s;
  for (auto& v : out.samples()) {
    v.normalized_volume = static_cast<double>(v.voxel_count) / static_cast<double>(peak);
  }
  return out;
}

struct DayRatio {
  int day = 0;
  double ratio = 0.0;
};

struct RatioResult {
  std::vector<DayRatio> ratios;
  std::vector<int> skipped_days;  // shared days where the OCT count is zero
};

/// OCT-A over OCT raw voxel counts, on days present in both series.
inline RatioResult modality_ratio(const VolumeSeries& octa, const VolumeSeries& oct) {
  std::map<int, std::size_t> oct_by_day;
  for (const auto& v : oct.samples()) oct_by_day.emplace(v.day, v.voxel_count);
  RatioResult out;
  for (const auto& v : octa.samples()) {
    auto it = oct_by_day.find(v.day);
    if (it == oct_by_day.end()) continue;
    if (it->second == 0) {
      out.skipped_days.push_back(v.day);
      continue;
    }
    out.ratios.push_back({v.day, static_cast<double>(v.voxel_count) / static_cast<double>(it->second)});
  }
  return out;
}

}  // namespace segsense
