#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "segsense/csv.hpp"
#include "segsense/fitting.hpp"
#include "segsense/metrics.hpp"
#include "segsense/stats.hpp"
#include "segsense/sweep.hpp"
#include "segsense/sweep_io.hpp"

namespace segsense {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Model recommendation from fitted scaling surfaces

enum class DataCategory { low_variation, high_variation };

inline std::string category_name(DataCategory c) {
  return c == DataCategory::low_variation ? "low-variation" : "high-variation";
}

inline DataCategory parse_category(const std::string& s) {
  if (s == "low-variation" || s == "low") return DataCategory::low_variation;
  if (s == "high-variation" || s == "high") return DataCategory::high_variation;
  throw UsageError("category must be 'low-variation' or 'high-variation', got '" + s + "'");
}

/// One fitted surface for a (model, index) pair, optionally tagged with the
/// data category it was fitted on.
struct SurfaceEntry {
  std::string model;
  MetricIndex index = MetricIndex::dice;
  std::optional<DataCategory> category;
  SurfaceFit fit;
};

struct RankedModel {
  std::string model;
  double predicted = 0.0;
};

struct Recommendation {
  std::vector<RankedModel> ranked_models;
  MetricIndex index = MetricIndex::dice;
  double ntrain = 0.0;
  double ntest = 0.0;
  AxisUnits units = AxisUnits::index;
  std::optional<DataCategory> category;
};

/// Evaluates every model's surface for `index` at (ntrain, ntest) and ranks
/// best first: descending for overlap indices, ascending for losses and
/// distances, ties by model name. Every model named anywhere in `fits` must
/// have a surface for `index`.
inline Recommendation recommend(std::span<const SurfaceEntry> fits, double ntrain, double ntest,
                                MetricIndex index, AxisUnits units,
                                std::optional<DataCategory> category = std::nullopt) {
  std::set<std::string> models;
  for (const auto& e : fits) {
    if (!category || !e.category || *e.category == *category) models.insert(e.model);
  }
  if (models.empty()) throw DataError("no surface fits available for recommendation");

  Recommendation rec;
  rec.index = index;
  rec.ntrain = ntrain;
  rec.ntest = ntest;
  rec.units = units;
  rec.category = category;
  for (const auto& model : models) {
    const SurfaceEntry* found = nullptr;
    for (const auto& e : fits) {
      if (e.model != model || e.index != index) continue;
      if (category && e.category && *e.category != *category) continue;
      if (!found || (category && e.category)) found = &e;
    }
    if (!found) {
      throw DataError("model '" + model + "' has no surface fit for index '" + std::string(index_name(index)) + "'");
    }
    rec.ranked_models.push_back({model, eval_surface(found->fit, ntrain, ntest, units)});
  }
  const bool descending = higher_is_better(index);
  std::sort(rec.ranked_models.begin(), rec.ranked_models.end(), [descending](const RankedModel& a, const RankedModel& b) {
    if (a.predicted != b.predicted) return descending ? a.predicted > b.predicted : a.predicted < b.predicted;
    return a.model < b.model;
  });
  return rec;
}

inline nlohmann::json to_json(const Recommendation& r) {
  nlohmann::json ranked = nlohmann::json::array();
  for (std::size_t i = 0; i < r.ranked_models.size(); ++i) {
    ranked.push_back({{"rank", i + 1}, {"model", r.ranked_models[i].model}, {"predicted", r.ranked_models[i].predicted}});
  }
  nlohmann::json j{{"index", index_name(r.index)},
                   {"ntrain", r.ntrain},
                   {"ntest", r.ntest},
                   {"units", units_name(r.units)},
                   {"ranked_models", ranked}};
  if (r.category) j["category"] = category_name(*r.category);
  return j;
}

// ---------------------------------------------------------------------------
// Fits over a sweep

struct CellExpFit {
  std::string model;
  CellKey key;
  MetricIndex index = MetricIndex::dice;
  std::optional<ExpFit> fit;
  std::string problem;  // degenerate / non-convergence / too few points
};

struct FitBundle {
  std::vector<CellExpFit> cell_fits;
  std::vector<std::pair<std::pair<std::string, MetricIndex>, ExpFit>> mean_trace_fits;
  std::vector<SurfaceEntry> surfaces;
  std::vector<std::string> surface_problems;  // "(model, index): reason"
};

namespace detail {

inline std::optional<ExpFit> try_fit(const Trace& t, std::string& problem) {
  try {
    ExpFit f = fit_exponential(t);
    if (f.degenerate) problem = "degenerate";
    return f;
  } catch (const FitError& e) {
    problem = e.what();
    return e.best();
  } catch (const Error& e) {
    problem = e.what();
    return std::nullopt;
  }
}

/// Epoch-wise mean over traces with identical epochs.
inline Trace mean_trace(const std::vector<Trace>& traces) {
  Trace out;
  if (traces.empty()) return out;
  const auto n = traces.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& t : traces) {
      if (t.size() != n) continue;
      s += t.points()[i].value;
      ++k;
    }
    out.push_back({traces.front().points()[i].epoch, s / static_cast<double>(k)});
  }
  return out;
}

}  // namespace detail

/// Exponential fits per successful cell and per model mean trace, and a
/// scaling surface per (model, index) over the selected-epoch values of
/// every successful trial. Degenerate or failed fits are flagged, not fatal.
inline FitBundle fit_sweep(const SweepResult& r, AxisUnits units = AxisUnits::index,
                           EpochSelection sel = EpochSelection::final_epoch,
                           std::span<const MetricIndex> indices = kAllIndices) {
  FitBundle b;
  for (std::size_t m = 0; m < r.config.models.size(); ++m) {
    const std::string& name = r.config.models[m].name;
    for (auto idx : indices) {
      std::vector<Trace> traces;
      std::vector<SurfaceSample> samples;
      for (const auto& c : r.cells) {
        if (c.key.model != m || c.failed) continue;
        CellExpFit cf{name, c.key, idx, std::nullopt, {}};
        Trace t = c.trace(idx);
        cf.fit = detail::try_fit(t, cf.problem);
        b.cell_fits.push_back(std::move(cf));
        if (t.size() == static_cast<std::size_t>(r.config.epochs)) traces.push_back(std::move(t));
        if (auto v = cell_value(c, idx, sel)) {
          const double x = units == AxisUnits::index ? static_cast<double>(c.key.ntrain_idx)
                                                     : static_cast<double>(r.config.ntrain_axis.count_at(c.key.ntrain_idx));
          const double y = units == AxisUnits::index ? static_cast<double>(c.key.ntest_idx)
                                                     : static_cast<double>(r.config.ntest_axis.count_at(c.key.ntest_idx));
          samples.push_back({x, y, *v});
        }
      }
      if (!traces.empty()) {
        std::string problem;
        if (auto f = detail::try_fit(detail::mean_trace(traces), problem)) {
          b.mean_trace_fits.push_back({{name, idx}, *f});
        }
      }
      try {
        b.surfaces.push_back({name, idx, std::nullopt, fit_surface(samples, units)});
      } catch (const Error& e) {
        b.surface_problems.push_back(name + "/" + std::string(index_name(idx)) + ": " + e.what());
      }
    }
  }
  return b;
}

inline nlohmann::json to_json(const FitBundle& b) {
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& s : b.surfaces) {
    auto j = to_json(s.fit);
    j["model"] = s.model;
    j["index"] = index_name(s.index);
    if (s.category) j["category"] = category_name(*s.category);
    fits.push_back(std::move(j));
  }
  for (const auto& [key, f] : b.mean_trace_fits) {
    auto j = to_json(f);
    j["model"] = key.first;
    j["index"] = index_name(key.second);
    j["trace"] = "mean";
    fits.push_back(std::move(j));
  }
  return {{"fits", fits}, {"surface_problems", b.surface_problems}};
}

/// Surface entries from a fits document; exponential entries are skipped.
inline std::vector<SurfaceEntry> surfaces_from_json(const nlohmann::json& j) {
  std::vector<SurfaceEntry> out;
  try {
    for (const auto& f : j.at("fits")) {
      if (f.at("kind") != "surface") continue;
      SurfaceEntry e;
      e.model = f.at("model").get<std::string>();
      e.index = parse_index(f.at("index").get<std::string>());
      if (f.contains("category")) e.category = parse_category(f.at("category").get<std::string>());
      e.fit = surface_fit_from_json(f);
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed fits document: ") + e.what());
  }
  return out;
}

inline std::string cell_fit_csv(const FitBundle& b) {
  CsvTable t({"model", "ntrain_idx", "ntest_idx", "trial", "index", "a", "esr", "c", "residual_rms", "status"});
  for (const auto& cf : b.cell_fits) {
    std::vector<std::string> row = {cf.model, std::to_string(cf.key.ntrain_idx), std::to_string(cf.key.ntest_idx),
                                    std::to_string(cf.key.trial), std::string(index_name(cf.index))};
    if (cf.fit) {
      row.insert(row.end(), {format_double(cf.fit->a), format_double(cf.fit->esr), format_double(cf.fit->c),
                             format_double(cf.fit->residual_rms)});
    } else {
      row.insert(row.end(), {"nan", "nan", "nan", "nan"});
    }
    row.push_back(cf.problem.empty() ? "ok" : cf.problem);
    t.row(row);
  }
  return t.str();
}

inline std::string surface_csv(const FitBundle& b) {
  CsvTable t({"model", "index", "units", "p00", "p10", "p01", "residual_rms"});
  for (const auto& s : b.surfaces) {
    t.row({s.model, std::string(index_name(s.index)), units_name(s.fit.units), format_double(s.fit.p00),
           format_double(s.fit.p10), format_double(s.fit.p01), format_double(s.fit.residual_rms)});
  }
  return t.str();
}

// ---------------------------------------------------------------------------
// Report tables

struct ReportBundle {
  std::map<std::string, std::string> tables;  // file name -> CSV text
  nlohmann::json provenance;
};

/// Plot-ready tables for a sweep: mean index over the (N-Train, N-Test) grid,
/// box statistics per (model, N-Train index) pooled over trials and N-Test,
/// mean across-trial deviation per model, the index sensitivity ranking and
/// the failed-cell manifest.
inline ReportBundle build_report(const SweepResult& r, EpochSelection sel = EpochSelection::final_epoch) {
  ReportBundle out;
  const auto& cfg = r.config;

  CsvTable grid({"model", "index", "ntrain_idx", "ntrain_count", "ntest_idx", "ntest_count", "mean", "n", "n_failed"});
  CsvTable box({"model", "index", "ntrain_idx", "ntrain_count", "n", "min", "q1", "median", "q3", "max", "mean",
                "stddev"});
  CsvTable model_sd({"model", "index", "mean_stddev", "groups"});
  CsvTable failed({"model", "ntrain_idx", "ntest_idx", "trial", "failure"});

  for (const auto& c : r.cells) {
    if (c.failed) {
      failed.row({r.model_name(c), std::to_string(c.key.ntrain_idx), std::to_string(c.key.ntest_idx),
                  std::to_string(c.key.trial), c.failure});
    }
  }

  for (std::size_t m = 0; m < cfg.models.size(); ++m) {
    const auto& name = cfg.models[m].name;
    for (auto idx : kAllIndices) {
      const std::string iname(index_name(idx));
      double sd_sum = 0.0;
      std::size_t sd_groups = 0;
      for (std::size_t tr = 1; tr <= cfg.ntrain_axis.size(); ++tr) {
        std::vector<double> pooled;
        for (std::size_t te = 1; te <= cfg.ntest_axis.size(); ++te) {
          std::vector<double> vals;
          std::size_t n_failed = 0;
          for (const auto& c : r.cells) {
            if (c.key.model != m || c.key.ntrain_idx != tr || c.key.ntest_idx != te) continue;
            if (c.failed) {
              ++n_failed;
            } else if (auto v = cell_value(c, idx, sel)) {
              vals.push_back(*v);
            }
          }
          if (vals.empty() && n_failed == 0) continue;
          double mean = std::nan("");
          if (!vals.empty()) mean = reproducibility_stats(vals).mean;
          grid.row({name, iname, std::to_string(tr), std::to_string(cfg.ntrain_axis.count_at(tr)), std::to_string(te),
                    std::to_string(cfg.ntest_axis.count_at(te)), format_double(mean), std::to_string(vals.size()),
                    std::to_string(n_failed)});
          if (vals.size() >= 2) {
            sd_sum += sample_stddev(vals);
            ++sd_groups;
          }
          pooled.insert(pooled.end(), vals.begin(), vals.end());
        }
        if (pooled.empty()) continue;
        const auto b = reproducibility_stats(pooled);
        box.row({name, iname, std::to_string(tr), std::to_string(cfg.ntrain_axis.count_at(tr)), std::to_string(b.n),
                 format_double(b.min), format_double(b.q1), format_double(b.median), format_double(b.q3),
                 format_double(b.max), format_double(b.mean), format_double(b.stddev)});
      }
      model_sd.row({name, iname, format_double(sd_groups ? sd_sum / static_cast<double>(sd_groups) : std::nan("")),
                    std::to_string(sd_groups)});
    }
  }

  CsvTable sens({"rank", "index", "mean_stddev", "groups"});
  if (cfg.trials >= 2 && r.failed_count() < r.cells.size()) {
    const auto ranking = index_sensitivity_ranking(r, kAllIndices, sel);
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      sens.row({std::to_string(i + 1), ranking[i].index, format_double(ranking[i].mean_stddev),
                std::to_string(ranking[i].groups)});
    }
  }

  out.tables["index_grid.csv"] = grid.str();
  out.tables["box_stats.csv"] = box.str();
  out.tables["model_stddev.csv"] = model_sd.str();
  out.tables["sensitivity.csv"] = sens.str();
  out.tables["failed_cells.csv"] = failed.str();

  const std::string config_dump = to_json(cfg).dump();
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(config_dump)));
  out.provenance = {{"tool", "segsense"},
                    {"version", kToolVersion},
                    {"config_hash", hash},
                    {"epoch_selection", sel == EpochSelection::final_epoch ? "final" : "best"},
                    {"cells", r.cells.size()},
                    {"failed_cells", r.failed_count()},
                    {"sweep_started_at", r.started_at},
                    {"sweep_finished_at", r.finished_at}};
  return out;
}

inline void write_report(const ReportBundle& b, const fs::path& dir) {
  for (const auto& [name, text] : b.tables) write_text(dir / name, text);
  write_text(dir / "report.json", b.provenance.dump(2) + "\n");
}

}  // namespace segsense
