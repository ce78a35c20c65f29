#pragma once

#include <string>
#include <vector>

#include "segsense/csv.hpp"
#include "segsense/volume.hpp"

namespace segsense {

inline std::string series_csv(std::span<const VolumeSeries> series) {
  CsvTable t({"day", "modality", "stack_id", "voxel_count", "normalized_volume"});
  for (const auto& s : series) {
    for (const auto& v : s.samples()) {
      t.row({std::to_string(v.day), modality_name(s.modality()), v.stack_id, std::to_string(v.voxel_count),
             format_double(v.normalized_volume)});
    }
  }
  return t.str();
}

inline std::string ratio_csv(const RatioResult& r) {
  CsvTable t({"day", "ratio"});
  for (const auto& d : r.ratios) t.row({std::to_string(d.day), format_double(d.ratio)});
  return t.str();
}

/// Splits a series CSV into its OCT and OCT-A series. normalized_volume is
/// optional on input.
inline std::pair<VolumeSeries, VolumeSeries> series_from_csv(const CsvDocument& doc) {
  const auto c_day = doc.column("day");
  const auto c_mod = doc.column("modality");
  const auto c_id = doc.column("stack_id");
  const auto c_count = doc.column("voxel_count");
  std::vector<std::vector<std::string>> rows = doc.rows;
  std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
    return parse_int(a[c_day]) < parse_int(b[c_day]);
  });
  VolumeSeries oct(Modality::oct), octa(Modality::octa);
  for (const auto& f : rows) {
    const long long count = parse_int(f[c_count]);
    if (count < 0) throw DataError("negative voxel_count for stack '" + f[c_id] + "'");
    VolumeSample s{static_cast<int>(parse_int(f[c_day])), f[c_id], static_cast<std::size_t>(count), 0.0};
    (parse_modality(f[c_mod]) == Modality::oct ? oct : octa).add(std::move(s));
  }
  return {oct, octa};
}

}  // namespace segsense
