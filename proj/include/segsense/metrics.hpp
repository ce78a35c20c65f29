#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segsense/errors.hpp"
#include "segsense/mask.hpp"

namespace segsense {

/// Soft confusion sums over all pixels: tp = sum(gt * pr), fp = sum(pr) - tp,
/// fn = sum(gt) - tp.
struct ConfusionCounts {
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
};

struct MetricConfig {
  double beta = 1.0;
  double delta = 1e-5;  // slack added to keep every ratio finite
  double bce_clamp = 1e-7;

  void validate() const {
    if (!(delta > 0)) throw UsageError("metric slack delta must be > 0");
    if (!(beta > 0)) throw UsageError("F-score beta must be > 0");
    if (!(bce_clamp > 0 && bce_clamp < 0.5)) throw UsageError("BCE clamp must lie in (0, 0.5)");
  }
};

/// Physical pixel size along rows (dy) and columns (dx).
struct Spacing {
  double dy = 1.0;
  double dx = 1.0;
};

struct MetricRecord {
  std::string pair_id;
  double dice = 0.0;
  double f_score = 0.0;
  double iou = 0.0;
  double rmse = 0.0;
  double loss_bce = 0.0;
  double loss_dice = 0.0;
  // Empty when exactly one of the two foreground sets is empty.
  std::optional<double> hausdorff;
};

enum class MetricIndex { dice, f_score, iou, rmse, loss_bce, loss_dice, hausdorff };

inline constexpr std::array<MetricIndex, 7> kAllIndices = {
    MetricIndex::dice, MetricIndex::f_score,   MetricIndex::iou,      MetricIndex::rmse,
    MetricIndex::loss_bce, MetricIndex::loss_dice, MetricIndex::hausdorff};

inline constexpr std::string_view index_name(MetricIndex i) {
  switch (i) {
    case MetricIndex::dice: return "dice";
    case MetricIndex::f_score: return "f_score";
    case MetricIndex::iou: return "iou";
    case MetricIndex::rmse: return "rmse";
    case MetricIndex::loss_bce: return "loss_bce";
    case MetricIndex::loss_dice: return "loss_dice";
    case MetricIndex::hausdorff: return "hausdorff";
  }
  return "?";
}

inline MetricIndex parse_index(std::string_view name) {
  for (auto i : kAllIndices) {
    if (index_name(i) == name) return i;
  }
  // Short aliases used in reports.
  if (name == "loss") return MetricIndex::loss_bce;
  if (name == "hd") return MetricIndex::hausdorff;
  if (name == "f" || name == "fscore") return MetricIndex::f_score;
  throw UsageError("unknown metric index '" + std::string(name) + "'");
}

/// Overlap indices improve upward; losses and distances improve downward.
inline constexpr bool higher_is_better(MetricIndex i) {
  return i == MetricIndex::dice || i == MetricIndex::f_score || i == MetricIndex::iou;
}

inline std::optional<double> metric_value(const MetricRecord& r, MetricIndex i) {
  switch (i) {
    case MetricIndex::dice: return r.dice;
    case MetricIndex::f_score: return r.f_score;
    case MetricIndex::iou: return r.iou;
    case MetricIndex::rmse: return r.rmse;
    case MetricIndex::loss_bce: return r.loss_bce;
    case MetricIndex::loss_dice: return r.loss_dice;
    case MetricIndex::hausdorff: return r.hausdorff;
  }
  return std::nullopt;
}

namespace detail {

template <PixelGrid A, PixelGrid B>
void require_same_shape(const A& a, const B& b, std::string_view what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw DataError(std::string(what) + ": dimension mismatch " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                    std::to_string(b.height()));
  }
}

}  // namespace detail

template <PixelGrid G, PixelGrid P>
ConfusionCounts confusion(const G& gt, const P& pr) {
  detail::require_same_shape(gt, pr, "confusion");
  const auto g = gt.values();
  const auto p = pr.values();
  double tp = 0.0, sum_gt = 0.0, sum_pr = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double gv = static_cast<double>(g[k]);
    const double pv = static_cast<double>(p[k]);
    tp += gv * pv;
    sum_gt += gv;
    sum_pr += pv;
  }
  return {tp, std::max(0.0, sum_pr - tp), std::max(0.0, sum_gt - tp)};
}

inline double dice(const ConfusionCounts& c, const MetricConfig& cfg = {}) {
  return (2.0 * c.tp + cfg.delta) / (c.fn + c.fp + 2.0 * c.tp + cfg.delta);
}

inline double f_score(const ConfusionCounts& c, const MetricConfig& cfg = {}) {
  const double b2 = cfg.beta * cfg.beta;
  const double weighted_tp = (1.0 + b2) * (c.tp + cfg.delta);
  return weighted_tp / (weighted_tp + b2 * c.fn + c.fp + cfg.delta);
}

inline double iou(const ConfusionCounts& c, const MetricConfig& cfg = {}) {
  return (c.tp + cfg.delta) / (c.fn + c.fp + c.tp + cfg.delta);
}

inline double dice_loss(const ConfusionCounts& c, const MetricConfig& cfg = {}) {
  return 1.0 - dice(c, cfg);
}

template <PixelGrid G, PixelGrid P>
double rmse(const G& gt, const P& pr) {
  detail::require_same_shape(gt, pr, "rmse");
  const auto g = gt.values();
  const auto p = pr.values();
  if (g.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double d = static_cast<double>(g[k]) - static_cast<double>(p[k]);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(g.size()));
}

/// Mean binary cross-entropy with predictions clamped to
/// [bce_clamp, 1 - bce_clamp].
template <PixelGrid G, PixelGrid P>
double bce_loss(const G& gt, const P& pr, const MetricConfig& cfg = {}) {
  detail::require_same_shape(gt, pr, "bce_loss");
  const auto g = gt.values();
  const auto p = pr.values();
  if (g.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double gv = static_cast<double>(g[k]);
    const double pv = std::clamp(static_cast<double>(p[k]), cfg.bce_clamp, 1.0 - cfg.bce_clamp);
    sum -= gv * std::log(pv) + (1.0 - gv) * std::log(1.0 - pv);
  }
  return sum / static_cast<double>(g.size());
}

/// Squared Euclidean distance from every pixel to the nearest foreground
/// pixel of `target`, honouring anisotropic spacing. Separable exact
/// transform: a nearest-row scan per column, then a lower envelope of
/// parabolas per row. Infinity everywhere when `target` is empty.
inline std::vector<double> squared_distance_map(const Mask& target, Spacing spacing = {}) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t w = target.width();
  const std::size_t h = target.height();
  std::vector<double> col(w * h, inf);

  for (std::size_t x = 0; x < w; ++x) {
    // Distance in rows to the nearest foreground pixel, two sweeps.
    long last = -1;
    std::vector<long> nearest(h, -1);
    for (std::size_t y = 0; y < h; ++y) {
      if (target(y, x)) last = static_cast<long>(y);
      nearest[y] = last;
    }
    last = -1;
    for (std::size_t yy = h; yy-- > 0;) {
      if (target(yy, x)) last = static_cast<long>(yy);
      if (last >= 0 && (nearest[yy] < 0 || last - static_cast<long>(yy) <
                                               static_cast<long>(yy) - nearest[yy])) {
        nearest[yy] = last;
      }
      if (nearest[yy] >= 0) {
        const double d = spacing.dy * static_cast<double>(static_cast<long>(yy) - nearest[yy]);
        col[yy * w + x] = d * d;
      }
    }
  }

  std::vector<double> out(w * h, inf);
  std::vector<std::size_t> hull(w);
  std::vector<double> bounds(w + 1);
  for (std::size_t y = 0; y < h; ++y) {
    const double* f = &col[y * w];
    const auto pos = [&](std::size_t q) { return spacing.dx * static_cast<double>(q); };
    const auto meet = [&](std::size_t q, std::size_t v) {
      return ((f[q] + pos(q) * pos(q)) - (f[v] + pos(v) * pos(v))) / (2.0 * (pos(q) - pos(v)));
    };
    std::size_t k = 0;
    bool any = false;
    for (std::size_t q = 0; q < w; ++q) {
      if (f[q] == inf) continue;
      if (!any) {
        any = true;
        hull[0] = q;
        bounds[0] = -inf;
        bounds[1] = inf;
        continue;
      }
      double s = meet(q, hull[k]);
      while (s <= bounds[k]) {
        --k;
        s = meet(q, hull[k]);
      }
      ++k;
      hull[k] = q;
      bounds[k] = s;
      bounds[k + 1] = inf;
    }
    if (!any) continue;
    k = 0;
    for (std::size_t x = 0; x < w; ++x) {
      while (bounds[k + 1] < pos(x)) ++k;
      const double d = pos(x) - pos(hull[k]);
      out[y * w + x] = d * d + f[hull[k]];
    }
  }
  return out;
}

/// Directed distance: max over foreground pixels of `from` of the distance
/// to the nearest foreground pixel of `to`. Requires both sets nonempty.
inline double directed_hausdorff(const Mask& from, const Mask& to, Spacing spacing = {}) {
  detail::require_same_shape(from, to, "hausdorff");
  const auto dist = squared_distance_map(to, spacing);
  double worst = 0.0;
  const auto v = from.values();
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (v[k]) worst = std::max(worst, dist[k]);
  }
  return std::sqrt(worst);
}

/// Symmetric Hausdorff distance between foreground sets. Both empty gives 0;
/// exactly one empty has no finite answer and yields nullopt.
inline std::optional<double> hausdorff(const Mask& gt, const Mask& pr, Spacing spacing = {}) {
  detail::require_same_shape(gt, pr, "hausdorff");
  const bool gt_empty = foreground_count(gt) == 0;
  const bool pr_empty = foreground_count(pr) == 0;
  if (gt_empty && pr_empty) return 0.0;
  if (gt_empty || pr_empty) return std::nullopt;
  return std::max(directed_hausdorff(gt, pr, spacing), directed_hausdorff(pr, gt, spacing));
}

/// All indices for one pair. Overlap indices and losses use the soft
/// prediction directly; the Hausdorff distance uses it thresholded at 0.5.
inline MetricRecord evaluate_pair(const Mask& gt, const SoftMask& pr, const MetricConfig& cfg = {},
                                  Spacing spacing = {}, std::string pair_id = {}) {
  cfg.validate();
  const auto c = confusion(gt, pr);
  MetricRecord r;
  r.pair_id = pair_id.empty() ? gt.source_id() : std::move(pair_id);
  r.dice = dice(c, cfg);
  r.f_score = f_score(c, cfg);
  r.iou = iou(c, cfg);
  r.rmse = rmse(gt, pr);
  r.loss_bce = bce_loss(gt, pr, cfg);
  r.loss_dice = dice_loss(c, cfg);
  r.hausdorff = hausdorff(gt, pr.threshold(0.5), spacing);
  return r;
}

inline MetricRecord evaluate_pair(const Mask& gt, const Mask& pr, const MetricConfig& cfg = {},
                                  Spacing spacing = {}, std::string pair_id = {}) {
  return evaluate_pair(gt, SoftMask(pr), cfg, spacing, std::move(pair_id));
}

struct BatchMean {
  MetricRecord mean;
  std::size_t count = 0;
  std::size_t hausdorff_undefined = 0;
};

/// Per-index arithmetic mean in input order, no rounding. Undefined
/// Hausdorff entries are excluded from its mean and counted instead.
inline BatchMean batch_mean(std::span<const MetricRecord> records, std::string id = "mean") {
  if (records.empty()) throw DataError("batch_mean of an empty batch");
  BatchMean out;
  out.count = records.size();
  out.mean.pair_id = std::move(id);
  double hd_sum = 0.0;
  std::size_t hd_n = 0;
  for (const auto& r : records) {
    out.mean.dice += r.dice;
    out.mean.f_score += r.f_score;
    out.mean.iou += r.iou;
    out.mean.rmse += r.rmse;
    out.mean.loss_bce += r.loss_bce;
    out.mean.loss_dice += r.loss_dice;
    if (r.hausdorff) {
      hd_sum += *r.hausdorff;
      ++hd_n;
    } else {
      ++out.hausdorff_undefined;
    }
  }
  const auto n = static_cast<double>(records.size());
  out.mean.dice /= n;
  out.mean.f_score /= n;
  out.mean.iou /= n;
  out.mean.rmse /= n;
  out.mean.loss_bce /= n;
  out.mean.loss_dice /= n;
  if (hd_n > 0) out.mean.hausdorff = hd_sum / static_cast<double>(hd_n);
  return out;
}

}  // namespace segsense
