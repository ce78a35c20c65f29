#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "segsense/csv.hpp"
#include "segsense/image_io.hpp"
#include "segsense/metrics.hpp"

namespace segsense {

inline const std::vector<std::string>& metric_csv_header() {
  static const std::vector<std::string> h = {"pair_id",  "dice",      "f_score",   "iou",       "rmse",
                                             "loss_bce", "loss_dice", "hausdorff", "hd_defined"};
  return h;
}

inline std::vector<std::string> metric_csv_row(const MetricRecord& r, std::size_t hd_defined) {
  return {r.pair_id,
          format_double(r.dice),
          format_double(r.f_score),
          format_double(r.iou),
          format_double(r.rmse),
          format_double(r.loss_bce),
          format_double(r.loss_dice),
          format_optional(r.hausdorff),
          std::to_string(hd_defined)};
}

struct EvaluateOptions {
  int cutoff = kDefaultBinaryCutoff;
  bool soft_predictions = false;  // read prediction intensity / 255 as probability
  MetricConfig metrics;
  Spacing spacing;
};

struct EvaluationReport {
  std::vector<MetricRecord> rows;
  std::optional<BatchMean> summary;
  std::vector<std::string> unmatched;    // ids present in only one directory
  std::vector<std::string> pair_errors;  // "id: reason"

  bool ok() const { return unmatched.empty() && pair_errors.empty(); }

  /// Per-pair rows, then a "batch_mean" row whose hd_defined column counts
  /// the pairs with a finite Hausdorff distance.
  std::string csv() const {
    CsvTable t(metric_csv_header());
    for (const auto& r : rows) t.row(metric_csv_row(r, r.hausdorff ? 1 : 0));
    if (summary) t.row(metric_csv_row(summary->mean, summary->count - summary->hausdorff_undefined));
    return t.str();
  }
};

inline std::map<std::string, fs::path> rasters_by_id(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("directory '" + dir.string() + "' not found");
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || !is_raster_path(e.path())) continue;
    if (!out.emplace(e.path().stem().string(), e.path()).second) {
      throw DataError("id '" + e.path().stem().string() + "' appears twice in '" + dir.string() + "'");
    }
  }
  return out;
}

/// Scores every prediction in pr_dir against the same-named mask in gt_dir.
/// Ids missing on either side and per-pair failures are collected rather
/// than thrown; the summary covers the pairs that scored.
inline EvaluationReport evaluate_directories(const fs::path& gt_dir, const fs::path& pr_dir,
                                             const EvaluateOptions& opt = {}) {
  opt.metrics.validate();
  const auto gts = rasters_by_id(gt_dir);
  const auto prs = rasters_by_id(pr_dir);
  EvaluationReport rep;
  for (const auto& [id, path] : gts) {
    if (!prs.count(id)) rep.unmatched.push_back(id);
  }
  for (const auto& [id, path] : prs) {
    if (!gts.count(id)) rep.unmatched.push_back(id);
  }
  for (const auto& [id, gt_path] : gts) {
    auto it = prs.find(id);
    if (it == prs.end()) continue;
    try {
      const Mask gt = load_mask(gt_path, opt.cutoff);
      const GrayImage pr_img = load_gray(it->second);
      const SoftMask pr = opt.soft_predictions ? to_soft(pr_img) : SoftMask(to_binary(pr_img, opt.cutoff));
      rep.rows.push_back(evaluate_pair(gt, pr, opt.metrics, opt.spacing, id));
    } catch (const Error& e) {
      rep.pair_errors.push_back(id + ": " + e.what());
    }
  }
  if (!rep.rows.empty()) rep.summary = batch_mean(rep.rows, "batch_mean");
  return rep;
}

}  // namespace segsense
