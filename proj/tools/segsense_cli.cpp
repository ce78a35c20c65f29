// segsense: command-line front end.
//
//   segsense [--config FILE] [--seed N] [--out DIR] [--units index|images] <command> ...
//
// Exit codes: 0 ok, 1 usage error, 2 data error, 3 predictor failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "segsense/segsense.hpp"

namespace {

using namespace segsense;
using nlohmann::json;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string units = "index";
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw UsageError("config '" + path + "': " + e.what());
  }
}

fs::path require_out(const Globals& g, const char* command) {
  if (g.out.empty()) throw UsageError(std::string(command) + " needs --out <dir>");
  fs::create_directories(g.out);
  return g.out;
}

/// Writes to <out>/<name> when --out is given, stdout otherwise.
void emit(const Globals& g, const std::string& name, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
  } else {
    fs::create_directories(g.out);
    write_text(fs::path(g.out) / name, text);
  }
}

MetricConfig metric_config(const json& cfg, Spacing& spacing) {
  MetricConfig m;
  if (cfg.contains("metrics")) {
    const auto& j = cfg.at("metrics");
    m.beta = j.value("beta", m.beta);
    m.delta = j.value("delta", m.delta);
    m.bce_clamp = j.value("bce_clamp", m.bce_clamp);
    if (j.contains("spacing")) {
      const auto sp = j.at("spacing").get<std::vector<double>>();
      if (sp.size() != 2) throw UsageError("metrics.spacing must be [dy, dx]");
      spacing = {sp[0], sp[1]};
    }
  }
  m.validate();
  return m;
}

EpochSelection parse_selection(const std::string& s) {
  if (s == "final") return EpochSelection::final_epoch;
  if (s == "best") return EpochSelection::best_epoch;
  throw UsageError("--epoch must be 'final' or 'best'");
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string gt_dir, pr_dir;
  std::optional<int> cutoff;
  bool soft = false;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  const json cfg = load_config(g.config_path);
  EvaluateOptions opt;
  opt.metrics = metric_config(cfg, opt.spacing);
  if (cfg.contains("data")) opt.cutoff = cfg.at("data").value("cutoff", opt.cutoff);
  if (a.cutoff) opt.cutoff = *a.cutoff;
  opt.soft_predictions = a.soft;
  const auto rep = evaluate_directories(a.gt_dir, a.pr_dir, opt);
  emit(g, "metrics.csv", rep.csv());
  for (const auto& id : rep.unmatched) std::cerr << "unmatched id: " << id << "\n";
  for (const auto& e : rep.pair_errors) std::cerr << "pair error: " << e << "\n";
  return rep.ok() ? 0 : static_cast<int>(ErrorKind::data);
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string data_dir;
  std::optional<unsigned> threads;
};

int cmd_sweep(const Globals& g, const SweepArgs& a) {
  if (g.config_path.empty()) throw UsageError("sweep needs --config <file>");
  const json cfg_json = load_config(g.config_path);
  SweepConfig cfg = sweep_config_from_json(cfg_json);
  if (g.seed) cfg.seed = *g.seed;
  if (a.threads) cfg.threads = *a.threads;
  cfg.validate();
  const fs::path out = require_out(g, "sweep");

  const json data_cfg = cfg_json.value("data", json::object());
  const int cutoff = data_cfg.value("cutoff", kDefaultBinaryCutoff);
  const std::size_t min_fg = data_cfg.value("min_foreground", kDefaultMinForeground);
  const double resize = data_cfg.value("resize", 1.0);
  SplitRatios ratios;
  if (data_cfg.contains("split")) {
    const auto& s = data_cfg.at("split");
    ratios.train = s.value("train", ratios.train);
    ratios.test = s.value("test", ratios.test);
    ratios.validation = s.value("validation", ratios.validation);
  }

  // Preprocess once; external predictors read the prepared masks.
  const fs::path src = fs::path(a.data_dir) / "masks";
  const auto files = rasters_by_id(src);
  SweepData data;
  data.mask_dir = out / "prepared" / "masks";
  data.workdir = out / "work";
  const fs::path images = fs::path(a.data_dir) / "images";
  if (fs::is_directory(images)) data.image_dir = images;
  fs::create_directories(data.mask_dir);
  std::vector<std::string> ids;
  std::size_t dropped = 0;
  for (const auto& [id, path] : files) {
    Mask m = load_mask(path, cutoff);
    if (foreground_count(m) < min_fg) {
      ++dropped;
      continue;
    }
    if (resize != 1.0) m = resize_mask(m, resize);
    save_gray(to_gray(m), data.mask_dir / (id + ".png"));
    ids.push_back(id);
    data.masks.emplace(id, std::move(m));
  }
  std::cerr << "loaded " << files.size() << " masks, " << dropped << " below " << min_fg
            << " foreground pixels dropped\n";
  data.split = partition(ids, ratios, cfg.seed);
  write_text(out / "split.json", to_json(data.split).dump(2) + "\n");

  const std::size_t total =
      cfg.models.size() * cfg.ntrain_axis.size() * cfg.ntest_axis.size() * static_cast<std::size_t>(cfg.trials);
  std::size_t done = 0;
  const auto result = run_sweep(cfg, data, [&](const CellResult& c) {
    std::cerr << "[" << ++done << "/" << total << "] " << cfg.models[c.key.model].name << " ntr=" << c.key.ntrain_idx
              << " nte=" << c.key.ntest_idx << " trial=" << c.key.trial << (c.failed ? " FAILED: " + c.failure : " ok")
              << "\n";
  });
  write_sweep(result, out);
  if (result.failed_count() == result.cells.size()) {
    std::cerr << "every cell failed\n";
    return static_cast<int>(ErrorKind::predictor);
  }
  if (result.failed_count() > 0) std::cerr << result.failed_count() << " cells failed, see sweep.json\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string sweep_dir;
  std::string epoch = "final";
};

int cmd_fit(const Globals& g, const FitArgs& a) {
  const auto result = load_sweep(a.sweep_dir);
  const auto bundle = fit_sweep(result, parse_units(g.units), parse_selection(a.epoch));
  const fs::path out = require_out(g, "fit");
  write_text(out / "fits.json", to_json(bundle).dump(2) + "\n");
  write_text(out / "cell_fits.csv", cell_fit_csv(bundle));
  write_text(out / "surfaces.csv", surface_csv(bundle));
  for (const auto& p : bundle.surface_problems) std::cerr << "surface not fitted: " << p << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct RecommendArgs {
  std::vector<std::string> fits;
  double ntrain = 0, ntest = 0;
  std::string index = "dice";
  std::string category;
};

int cmd_recommend(const Globals& g, const RecommendArgs& a) {
  std::vector<SurfaceEntry> surfaces;
  for (const auto& path : a.fits) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open fits '" + path + "'");
    json j;
    try {
      j = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
      throw DataError("fits '" + path + "': " + e.what());
    }
    auto more = surfaces_from_json(j);
    surfaces.insert(surfaces.end(), more.begin(), more.end());
  }
  std::optional<DataCategory> category;
  if (!a.category.empty()) category = parse_category(a.category);
  const auto rec = recommend(surfaces, a.ntrain, a.ntest, parse_index(a.index), parse_units(g.units), category);
  emit(g, "recommendation.json", to_json(rec).dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string sweep_dir;
  std::string epoch = "final";
};

int cmd_report(const Globals& g, const ReportArgs& a) {
  const auto result = load_sweep(a.sweep_dir);
  const auto bundle = build_report(result, parse_selection(a.epoch));
  write_report(bundle, require_out(g, "report"));
  if (!result.cells.empty() && result.failed_count() == result.cells.size()) {
    std::cerr << "every cell in the sweep failed; see failed_cells.csv\n";
    return static_cast<int>(ErrorKind::data);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct VolumeArgs {
  std::string listing;
  std::string series;
  std::optional<int> cutoff;
};

int cmd_volume(const Globals& g, const VolumeArgs& a) {
  if (a.listing.empty() == a.series.empty()) throw UsageError("volume needs exactly one of --listing or --series");
  VolumeSeries oct(Modality::oct), octa(Modality::octa);
  if (!a.series.empty()) {
    std::tie(oct, octa) = series_from_csv(read_csv(a.series));
  } else {
    const json cfg = load_config(g.config_path);
    int cutoff = kDefaultBinaryCutoff;
    if (cfg.contains("data")) cutoff = cfg.at("data").value("cutoff", cutoff);
    if (a.cutoff) cutoff = *a.cutoff;
    auto doc = read_csv(a.listing);
    const auto c_day = doc.column("day"), c_mod = doc.column("modality"), c_dir = doc.column("stack_dir");
    const fs::path base = fs::path(a.listing).parent_path();
    std::stable_sort(doc.rows.begin(), doc.rows.end(),
                     [&](const auto& x, const auto& y) { return parse_int(x[c_day]) < parse_int(y[c_day]); });
    for (const auto& row : doc.rows) {
      fs::path dir = row[c_dir];
      if (dir.is_relative()) dir = base / dir;
      const auto stack = load_stack(dir, cutoff);
      VolumeSample s{static_cast<int>(parse_int(row[c_day])), stack.stack_id(), stack_volume(stack), 0.0};
      (parse_modality(row[c_mod]) == Modality::oct ? oct : octa).add(std::move(s));
    }
  }
  std::vector<VolumeSeries> normalized;
  for (const auto* s : {&oct, &octa}) {
    if (s->size() > 0) normalized.push_back(normalize_series(*s));
  }
  emit(g, "series.csv", series_csv(normalized));
  if (oct.size() > 0 && octa.size() > 0) {
    const auto ratio = modality_ratio(octa, oct);
    for (int day : ratio.skipped_days) std::cerr << "day " << day << ": OCT count is zero, ratio skipped\n";
    if (!g.out.empty()) emit(g, "ratio.csv", ratio_csv(ratio));
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t count = 40;
  std::size_t width = 64, height = 64;
};

/// Random elliptical blobs, for trying the pipeline without real data.
int cmd_synth_data(const Globals& g, const SynthArgs& a) {
  const fs::path out = require_out(g, "synth-data");
  const fs::path masks = out / "masks";
  fs::create_directories(masks);
  Rng rng(g.seed.value_or(0));
  for (std::size_t i = 0; i < a.count; ++i) {
    Mask m(a.width, a.height);
    const double cy = rng.uniform(0.3, 0.7) * static_cast<double>(a.height);
    const double cx = rng.uniform(0.3, 0.7) * static_cast<double>(a.width);
    const double ry = rng.uniform(0.1, 0.3) * static_cast<double>(a.height);
    const double rx = rng.uniform(0.1, 0.3) * static_cast<double>(a.width);
    for (std::size_t y = 0; y < a.height; ++y) {
      for (std::size_t x = 0; x < a.width; ++x) {
        const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
        m.set(y, x, dy * dy + dx * dx <= 1.0);
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "mask_%04zu.png", i);
    save_gray(to_gray(m), masks / name);
  }
  std::cerr << "wrote " << a.count << " masks to " << masks.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segsense: segmentation index evaluation, sensitivity sweeps and model selection"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON config file (comments allowed)");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed, overrides the config");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--units", g.units, "Surface axis units")->check(CLI::IsMember({"index", "images"}));

  int rc = 0;

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score prediction masks against ground truth");
  evaluate->add_option("--gt", ev.gt_dir, "Ground-truth mask directory")->required();
  evaluate->add_option("--pred", ev.pr_dir, "Prediction directory")->required();
  evaluate->add_option("--cutoff", ev.cutoff, "Binarization cutoff (foreground iff intensity > cutoff)");
  evaluate->add_flag("--soft", ev.soft, "Read predictions as probabilities (intensity / 255)");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Run a sensitivity sweep over N-Train x N-Test x trials");
  sweep->add_option("--data", sw.data_dir, "Dataset root containing masks/ (and optionally images/)")->required();
  sweep->add_option("--threads", sw.threads, "Worker threads");

  FitArgs ft;
  auto* fit = app.add_subcommand("fit", "Fit saturation curves and scaling surfaces to a sweep");
  fit->add_option("--sweep", ft.sweep_dir, "Sweep output directory")->required();
  fit->add_option("--epoch", ft.epoch, "Epoch whose value feeds the surfaces")->check(CLI::IsMember({"final", "best"}));

  RecommendArgs rc_args;
  auto* rec = app.add_subcommand("recommend", "Rank models by a fitted surface at a data budget");
  rec->add_option("--fits", rc_args.fits, "fits.json files")->required();
  rec->add_option("--ntrain", rc_args.ntrain, "N-Train (index or image count, see --units)")->required();
  rec->add_option("--ntest", rc_args.ntest, "N-Test (index or image count, see --units)")->required();
  rec->add_option("--index", rc_args.index, "Performance index to rank by");
  rec->add_option("--category", rc_args.category, "low-variation or high-variation");

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Emit plot-ready tables for a sweep");
  report->add_option("--sweep", rp.sweep_dir, "Sweep output directory")->required();
  report->add_option("--epoch", rp.epoch, "Epoch reported per cell")->check(CLI::IsMember({"final", "best"}));

  VolumeArgs vo;
  auto* volume = app.add_subcommand("volume", "Normalized volumes and OCT-A/OCT ratios");
  volume->add_option("--listing", vo.listing, "CSV with day,modality,stack_dir");
  volume->add_option("--series", vo.series, "CSV with day,modality,stack_id,voxel_count");
  volume->add_option("--cutoff", vo.cutoff, "Binarization cutoff");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth-data", "Write a random blob dataset for trying the pipeline");
  synth->add_option("--count", sy.count, "Number of masks");
  synth->add_option("--width", sy.width, "Mask width");
  synth->add_option("--height", sy.height, "Mask height");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::usage);
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*evaluate) rc = cmd_evaluate(g, ev);
    else if (*sweep) rc = cmd_sweep(g, sw);
    else if (*fit) rc = cmd_fit(g, ft);
    else if (*rec) rc = cmd_recommend(g, rc_args);
    else if (*report) rc = cmd_report(g, rp);
    else if (*volume) rc = cmd_volume(g, vo);
    else if (*synth) rc = cmd_synth_data(g, sy);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::usage);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  }
  return rc;
}
