#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <tuple>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "segsense/csv.hpp"
#include "segsense/errors.hpp"
#include "segsense/external.hpp"
#include "segsense/fitting.hpp"
#include "segsense/metrics.hpp"
#include "segsense/partition.hpp"
#include "segsense/rng.hpp"
#include "segsense/stats.hpp"
#include "segsense/synthetic.hpp"

namespace segsense {

enum class PredictorKind { synthetic, external };

struct PredictorSpec {
  PredictorKind kind = PredictorKind::synthetic;
  std::string name;
  bool trainable = true;

  // synthetic
  Degradation degradation;
  // Noise multiplier (smallest N-Train count / this N-Train count)^train_gain,
  // so larger training sets give cleaner predictions. 0 disables the effect.
  double train_gain = 0.0;

  // external
  std::string command_template;
  std::chrono::milliseconds timeout{std::chrono::minutes(30)};

  void validate() const {
    if (name.empty()) throw UsageError("predictor name must not be empty");
    if (name.find_first_of("/\\") != std::string::npos) {
      throw UsageError("predictor name '" + name + "' must not contain path separators");
    }
    if (kind == PredictorKind::external && command_template.empty()) {
      throw UsageError("external predictor '" + name + "' needs a command template");
    }
    if (kind == PredictorKind::synthetic) {
      degradation.validate();
      if (!(train_gain >= 0.0)) throw UsageError("train_gain must be >= 0");
    }
  }
};

struct SweepConfig {
  std::vector<PredictorSpec> models;
  GridAxis ntrain_axis;
  GridAxis ntest_axis;
  int trials = 8;
  int epochs = 100;
  int batch_size = 8;
  std::uint64_t seed = 0;
  MetricConfig metrics;
  Spacing spacing;
  unsigned threads = 1;

  void validate() const {
    if (models.empty()) throw UsageError("sweep needs at least one model");
    std::vector<std::string> names;
    for (const auto& m : models) {
      m.validate();
      names.push_back(m.name);
    }
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
      throw UsageError("model names must be unique");
    }
    if (ntrain_axis.size() == 0 || ntest_axis.size() == 0) throw UsageError("sweep axes must be nonempty");
    if (trials < 1) throw UsageError("trials must be >= 1");
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    metrics.validate();
  }
};

/// Grid coordinates of one work unit. Axis indices and trials are 1-based.
struct CellKey {
  std::size_t model = 0;
  std::size_t ntrain_idx = 1;
  std::size_t ntest_idx = 1;
  std::size_t trial = 1;

  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct EpochRow {
  int epoch = 0;
  MetricRecord mean;
  std::size_t hausdorff_undefined = 0;
};

struct CellResult {
  CellKey key;
  bool failed = false;
  std::string failure;
  std::vector<EpochRow> epochs;

  Trace trace(MetricIndex index) const {
    Trace t;
    for (const auto& row : epochs) {
      if (auto v = metric_value(row.mean, index)) t.push_back({static_cast<double>(row.epoch), *v});
    }
    return t;
  }
};

enum class EpochSelection { final_epoch, best_epoch };

/// Value of one index for a cell at the selected epoch; empty for failed
/// cells or when the index is undefined at every candidate epoch.
inline std::optional<double> cell_value(const CellResult& cell, MetricIndex index,
                                        EpochSelection sel = EpochSelection::final_epoch) {
  if (cell.failed || cell.epochs.empty()) return std::nullopt;
  if (sel == EpochSelection::final_epoch) return metric_value(cell.epochs.back().mean, index);
  std::optional<double> best;
  for (const auto& row : cell.epochs) {
    auto v = metric_value(row.mean, index);
    if (!v) continue;
    if (!best || (higher_is_better(index) ? *v > *best : *v < *best)) best = v;
  }
  return best;
}

struct SweepResult {
  SweepConfig config;
  std::vector<CellResult> cells;  // ordered model, ntrain, ntest, trial
  std::string started_at;
  std::string finished_at;

  std::size_t failed_count() const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return c.failed; }));
  }
  const std::string& model_name(const CellResult& c) const { return config.models.at(c.key.model).name; }
};

/// Masks available to the sweep, keyed by id, plus raster locations handed to
/// external predictors.
struct SweepData {
  DatasetSplit split;
  std::unordered_map<std::string, Mask> masks;
  fs::path mask_dir;
  fs::path image_dir;
  fs::path workdir = fs::temp_directory_path() / "segsense-work";
};

/// Stable per-cell seed, independent of execution order.
inline std::uint64_t cell_seed(std::uint64_t master, const std::string& model, const CellKey& k) {
  return hash_combine(master, {fnv1a(model), k.ntrain_idx, k.ntest_idx, k.trial});
}

/// Ids drawn for one trial along one axis: a seeded permutation of the pool
/// truncated to `count`. The permutation ignores the axis index, so subsets
/// are nested as the count grows.
inline std::vector<std::string> nested_subset(std::span<const std::string> pool, std::size_t count,
                                              std::uint64_t master, std::string_view axis,
                                              std::size_t trial) {
  if (count > pool.size()) {
    throw DataError("requested " + std::to_string(count) + " ids from a pool of " + std::to_string(pool.size()));
  }
  std::vector<std::string> order(pool.begin(), pool.end());
  Rng rng(hash_combine(master, {fnv1a(axis), trial}));
  rng.shuffle(std::span<std::string>(order));
  order.resize(count);
  return order;
}

namespace detail {

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Mean of per-batch means, batches taken in test-list order.
inline EpochRow aggregate_epoch(int epoch, std::span<const MetricRecord> records, std::size_t batch_size) {
  std::vector<MetricRecord> batch_means;
  std::size_t undefined = 0;
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const auto len = std::min(batch_size, records.size() - start);
    auto bm = batch_mean(records.subspan(start, len), "batch");
    undefined += bm.hausdorff_undefined;
    batch_means.push_back(std::move(bm.mean));
  }
  EpochRow row;
  row.epoch = epoch;
  row.mean = batch_mean(batch_means, "epoch").mean;
  row.hausdorff_undefined = undefined;
  return row;
}

inline const Mask& mask_for(const SweepData& data, const std::string& id) {
  auto it = data.masks.find(id);
  if (it == data.masks.end()) throw DataError("no mask loaded for id '" + id + "'");
  return it->second;
}

inline CellResult run_synthetic_cell(const SweepConfig& cfg, const SweepData& data,
                                     const PredictorSpec& model, const CellKey& key,
                                     const std::vector<std::string>& test_ids, std::uint64_t seed) {
  CellResult cell;
  cell.key = key;
  Degradation deg = model.degradation;
  if (model.train_gain > 0.0) {
    const double shrink = std::pow(static_cast<double>(cfg.ntrain_axis.count_at(1)) /
                                       static_cast<double>(cfg.ntrain_axis.count_at(key.ntrain_idx)),
                                   model.train_gain);
    deg.flip_rate *= shrink;
    deg.boundary_jitter *= shrink;
  }
  std::vector<MetricRecord> records(test_ids.size());
  for (int ep = 1; ep <= cfg.epochs; ++ep) {
    for (std::size_t i = 0; i < test_ids.size(); ++i) {
      const Mask& gt = mask_for(data, test_ids[i]);
      const auto pr = synthetic_predict(gt, deg, hash_combine(seed, {fnv1a(test_ids[i])}), ep);
      records[i] = evaluate_pair(gt, pr, cfg.metrics, cfg.spacing, test_ids[i]);
    }
    cell.epochs.push_back(aggregate_epoch(ep, records, static_cast<std::size_t>(cfg.batch_size)));
  }
  return cell;
}

/// The external process trains and predicts once; its predictions are scored
/// as the final epoch.
inline CellResult run_external_cell(const SweepConfig& cfg, const SweepData& data,
                                    const PredictorSpec& model, const CellKey& key,
                                    const std::vector<std::string>& train_ids,
                                    const std::vector<std::string>& test_ids, std::uint64_t seed) {
  CellResult cell;
  cell.key = key;
  ExternalInvocation inv;
  inv.command_template = model.command_template;
  inv.workdir = data.workdir / model.name / std::to_string(key.ntrain_idx) / std::to_string(key.ntest_idx) /
                std::to_string(key.trial);
  inv.train = {train_ids, data.mask_dir, data.image_dir};
  inv.test = {test_ids, data.mask_dir, data.image_dir};
  inv.seed = seed;
  inv.epochs = cfg.epochs;
  inv.timeout = model.timeout;
  const fs::path out = run_external(inv);

  std::vector<MetricRecord> records;
  for (const auto& id : test_ids) {
    const Mask& gt = mask_for(data, id);
    const SoftMask pr = to_soft(load_gray(prediction_path(out, id)));
    records.push_back(evaluate_pair(gt, pr, cfg.metrics, cfg.spacing, id));
  }
  cell.epochs.push_back(aggregate_epoch(cfg.epochs, records, static_cast<std::size_t>(cfg.batch_size)));
  return cell;
}

inline CellResult run_cell(const SweepConfig& cfg, const SweepData& data, const CellKey& key) {
  const PredictorSpec& model = cfg.models.at(key.model);
  const auto train_ids = nested_subset(data.split.train, cfg.ntrain_axis.count_at(key.ntrain_idx), cfg.seed,
                                       "train", key.trial);
  const auto test_ids =
      nested_subset(data.split.test, cfg.ntest_axis.count_at(key.ntest_idx), cfg.seed, "test", key.trial);
  const std::uint64_t seed = cell_seed(cfg.seed, model.name, key);
  try {
    if (model.kind == PredictorKind::synthetic) {
      return run_synthetic_cell(cfg, data, model, key, test_ids, seed);
    }
    return run_external_cell(cfg, data, model, key, train_ids, test_ids, seed);
  } catch (const std::exception& e) {
    CellResult failed;
    failed.key = key;
    failed.failed = true;
    failed.failure = e.what();
    return failed;
  }
}

}  // namespace detail

/// Checks that every axis count fits in the split before any work starts.
inline void preflight(const SweepConfig& cfg, const SweepData& data) {
  std::vector<std::string> problems;
  for (std::size_t i = 1; i <= cfg.ntrain_axis.size(); ++i) {
    if (cfg.ntrain_axis.count_at(i) > data.split.train.size()) {
      problems.push_back("N-Train index " + std::to_string(i) + " needs " +
                         std::to_string(cfg.ntrain_axis.count_at(i)) + " images, train split has " +
                         std::to_string(data.split.train.size()));
    }
  }
  for (std::size_t i = 1; i <= cfg.ntest_axis.size(); ++i) {
    if (cfg.ntest_axis.count_at(i) > data.split.test.size()) {
      problems.push_back("N-Test index " + std::to_string(i) + " needs " +
                         std::to_string(cfg.ntest_axis.count_at(i)) + " images, test split has " +
                         std::to_string(data.split.test.size()));
    }
  }
  for (const auto& id : data.split.test) {
    if (!data.masks.count(id)) {
      problems.push_back("test id '" + id + "' has no loaded mask");
      break;
    }
  }
  if (!problems.empty()) {
    std::string msg = "insufficient data for sweep:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
}

using CellObserver = std::function<void(const CellResult&)>;

/// Every (model, N-Train index, N-Test index, trial) cell, in that nesting
/// order. Cells run on up to cfg.threads workers; each writes only its own
/// slot, so the result is independent of scheduling. Failed cells are kept
/// and marked, never aborting the sweep.
inline SweepResult run_sweep(const SweepConfig& cfg, const SweepData& data, const CellObserver& on_cell = {}) {
  cfg.validate();
  preflight(cfg, data);

  std::vector<CellKey> keys;
  for (std::size_t m = 0; m < cfg.models.size(); ++m)
    for (std::size_t tr = 1; tr <= cfg.ntrain_axis.size(); ++tr)
      for (std::size_t te = 1; te <= cfg.ntest_axis.size(); ++te)
        for (std::size_t t = 1; t <= static_cast<std::size_t>(cfg.trials); ++t) keys.push_back({m, tr, te, t});

  SweepResult result;
  result.config = cfg;
  result.started_at = detail::utc_now();
  result.cells.resize(keys.size());

  std::atomic<std::size_t> next{0};
  std::mutex observer_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      result.cells[i] = detail::run_cell(cfg, data, keys[i]);
      if (on_cell) {
        std::lock_guard lock(observer_mutex);
        on_cell(result.cells[i]);
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(keys.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  result.finished_at = detail::utc_now();
  return result;
}

struct SensitivityEntry {
  std::string index;
  double mean_stddev = 0.0;
  std::size_t groups = 0;  // (model, N-Train, N-Test) groups contributing
};

/// Ranks indices by their across-trial standard deviation, averaged over
/// every (model, N-Train, N-Test) group; most sensitive first, ties by name.
inline std::vector<SensitivityEntry> index_sensitivity_ranking(
    const SweepResult& result, std::span<const MetricIndex> indices = kAllIndices,
    EpochSelection sel = EpochSelection::final_epoch) {
  if (result.config.trials < 2) {
    throw DataError("sensitivity ranking needs at least 2 trials per cell, sweep has " +
                    std::to_string(result.config.trials));
  }
  // group key -> per-index trial values
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::map<MetricIndex, std::vector<double>>> groups;
  for (const auto& cell : result.cells) {
    auto& g = groups[{cell.key.model, cell.key.ntrain_idx, cell.key.ntest_idx}];
    for (auto idx : indices) {
      if (auto v = cell_value(cell, idx, sel)) g[idx].push_back(*v);
    }
  }
  std::vector<SensitivityEntry> out;
  for (auto idx : indices) {
    SensitivityEntry e;
    e.index = std::string(index_name(idx));
    double sum = 0.0;
    for (const auto& [key, per_index] : groups) {
      auto it = per_index.find(idx);
      if (it == per_index.end() || it->second.size() < 2) continue;
      sum += sample_stddev(it->second);
      ++e.groups;
    }
    e.mean_stddev = e.groups ? sum / static_cast<double>(e.groups) : 0.0;
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const SensitivityEntry& a, const SensitivityEntry& b) {
    if (a.mean_stddev != b.mean_stddev) return a.mean_stddev > b.mean_stddev;
    return a.index < b.index;
  });
  return out;
}

}  // namespace segsense
