#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segsense/csv.hpp"
#include "segsense/sweep.hpp"

namespace segsense {

// On-disk layout of a sweep:
//   <root>/sweep.json                                       config, timestamps, cell status
//   <root>/results/<model>/<ntr>/<nte>/<trial>/metrics.csv  per-epoch batch means
//   <root>/results/<model>/<ntr>/<nte>/<trial>/failure.txt  diagnostics of a failed cell

inline const std::vector<std::string>& epoch_csv_header() {
  static const std::vector<std::string> h = {"epoch",    "dice",      "f_score",   "iou",         "rmse",
                                             "loss_bce", "loss_dice", "hausdorff", "hd_undefined"};
  return h;
}

inline nlohmann::json to_json(const PredictorSpec& p) {
  nlohmann::json j{{"name", p.name}, {"trainable", p.trainable}};
  if (p.kind == PredictorKind::synthetic) {
    j["kind"] = "synthetic";
    j["flip_rate"] = p.degradation.flip_rate;
    j["boundary_jitter"] = p.degradation.boundary_jitter;
    j["epoch_decay"] = p.degradation.epoch_decay;
    j["train_gain"] = p.train_gain;
  } else {
    j["kind"] = "external";
    j["command"] = p.command_template;
    j["timeout_ms"] = p.timeout.count();
  }
  return j;
}

inline PredictorSpec predictor_from_json(const nlohmann::json& j) {
  PredictorSpec p;
  p.name = j.at("name").get<std::string>();
  p.trainable = j.value("trainable", true);
  const auto kind = j.value("kind", std::string("synthetic"));
  if (kind == "synthetic") {
    p.kind = PredictorKind::synthetic;
    p.degradation.flip_rate = j.value("flip_rate", p.degradation.flip_rate);
    p.degradation.boundary_jitter = j.value("boundary_jitter", p.degradation.boundary_jitter);
    p.degradation.epoch_decay = j.value("epoch_decay", p.degradation.epoch_decay);
    p.train_gain = j.value("train_gain", 0.0);
  } else if (kind == "external") {
    p.kind = PredictorKind::external;
    p.command_template = j.at("command").get<std::string>();
    if (j.contains("timeout_ms")) {
      p.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<long long>());
    } else if (j.contains("timeout_s")) {
      p.timeout = std::chrono::milliseconds(static_cast<long long>(j.at("timeout_s").get<double>() * 1000));
    }
  } else {
    throw UsageError("unknown predictor kind '" + kind + "'");
  }
  return p;
}

inline nlohmann::json to_json(const SweepConfig& c) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : c.models) models.push_back(to_json(m));
  const auto axis = [](const GridAxis& a) { return std::vector<std::size_t>(a.counts().begin(), a.counts().end()); };
  return {{"models", models},
          {"ntrain_axis", axis(c.ntrain_axis)},
          {"ntest_axis", axis(c.ntest_axis)},
          {"trials", c.trials},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"threads", c.threads},
          {"metrics",
           {{"beta", c.metrics.beta},
            {"delta", c.metrics.delta},
            {"bce_clamp", c.metrics.bce_clamp},
            {"spacing", {c.spacing.dy, c.spacing.dx}}}}};
}

/// Accepts the keys written by to_json; anything absent keeps its default.
inline SweepConfig sweep_config_from_json(const nlohmann::json& j) {
  try {
    SweepConfig c;
    for (const auto& m : j.at("models")) c.models.push_back(predictor_from_json(m));
    c.ntrain_axis = GridAxis(j.at("ntrain_axis").get<std::vector<std::size_t>>());
    c.ntest_axis = GridAxis(j.at("ntest_axis").get<std::vector<std::size_t>>());
    c.trials = j.value("trials", c.trials);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      c.metrics.beta = m.value("beta", c.metrics.beta);
      c.metrics.delta = m.value("delta", c.metrics.delta);
      c.metrics.bce_clamp = m.value("bce_clamp", c.metrics.bce_clamp);
      if (m.contains("spacing")) {
        const auto sp = m.at("spacing").get<std::vector<double>>();
        if (sp.size() != 2) throw UsageError("metrics.spacing must be [dy, dx]");
        c.spacing = {sp[0], sp[1]};
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed sweep config: ") + e.what());
  }
}

inline std::string epoch_csv(const CellResult& cell) {
  CsvTable t(epoch_csv_header());
  for (const auto& row : cell.epochs) {
    const auto& m = row.mean;
    t.row({std::to_string(row.epoch), format_double(m.dice), format_double(m.f_score), format_double(m.iou),
           format_double(m.rmse), format_double(m.loss_bce), format_double(m.loss_dice),
           format_optional(m.hausdorff), std::to_string(row.hausdorff_undefined)});
  }
  return t.str();
}

inline std::vector<EpochRow> epochs_from_csv(const CsvDocument& doc) {
  if (doc.header != epoch_csv_header()) throw DataError("metrics.csv has an unexpected header");
  std::vector<EpochRow> rows;
  for (const auto& f : doc.rows) {
    EpochRow r;
    r.epoch = static_cast<int>(parse_int(f[0]));
    r.mean.dice = parse_double(f[1]);
    r.mean.f_score = parse_double(f[2]);
    r.mean.iou = parse_double(f[3]);
    r.mean.rmse = parse_double(f[4]);
    r.mean.loss_bce = parse_double(f[5]);
    r.mean.loss_dice = parse_double(f[6]);
    const double hd = parse_double(f[7]);
    if (!std::isnan(hd)) r.mean.hausdorff = hd;
    r.hausdorff_undefined = static_cast<std::size_t>(parse_int(f[8]));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline fs::path cell_dir(const fs::path& root, const SweepResult& r, const CellResult& c) {
  return root / "results" / r.model_name(c) / std::to_string(c.key.ntrain_idx) /
         std::to_string(c.key.ntest_idx) / std::to_string(c.key.trial);
}

inline nlohmann::json provenance_json(const SweepResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json e{{"model", r.model_name(c)},
                     {"ntrain_idx", c.key.ntrain_idx},
                     {"ntest_idx", c.key.ntest_idx},
                     {"trial", c.key.trial},
                     {"status", c.failed ? "failed" : "ok"}};
    if (c.failed) e["failure"] = c.failure;
    cells.push_back(std::move(e));
  }
  return {{"config", to_json(r.config)},
          {"started_at", r.started_at},
          {"finished_at", r.finished_at},
          {"cell_count", r.cells.size()},
          {"failed_count", r.failed_count()},
          {"cells", cells}};
}

inline void write_sweep(const SweepResult& r, const fs::path& root) {
  for (const auto& c : r.cells) {
    const fs::path dir = cell_dir(root, r, c);
    fs::remove_all(dir);
    if (c.failed) {
      write_text(dir / "failure.txt", c.failure + "\n");
    } else {
      write_text(dir / "metrics.csv", epoch_csv(c));
    }
  }
  write_text(root / "sweep.json", provenance_json(r).dump(2) + "\n");
}

inline SweepResult load_sweep(const fs::path& root) {
  const fs::path manifest = root / "sweep.json";
  std::ifstream in(manifest);
  if (!in) throw DataError("no sweep.json under '" + root.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse '" + manifest.string() + "': " + e.what());
  }
  SweepResult r;
  r.config = sweep_config_from_json(j.at("config"));
  r.started_at = j.value("started_at", std::string{});
  r.finished_at = j.value("finished_at", std::string{});
  std::map<std::string, std::size_t> model_index;
  for (std::size_t i = 0; i < r.config.models.size(); ++i) model_index[r.config.models[i].name] = i;
  for (const auto& e : j.at("cells")) {
    CellResult c;
    const auto name = e.at("model").get<std::string>();
    auto it = model_index.find(name);
    if (it == model_index.end()) throw DataError("sweep.json cell names unknown model '" + name + "'");
    c.key = {it->second, e.at("ntrain_idx").get<std::size_t>(), e.at("ntest_idx").get<std::size_t>(),
             e.at("trial").get<std::size_t>()};
    c.failed = e.at("status").get<std::string>() == "failed";
    c.failure = e.value("failure", std::string{});
    r.cells.push_back(std::move(c));
    if (!r.cells.back().failed) {
      r.cells.back().epochs = epochs_from_csv(read_csv(cell_dir(root, r, r.cells.back()) / "metrics.csv"));
    }
  }
  return r;
}

}  // namespace segsense
