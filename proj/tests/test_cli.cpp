#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "segsense/csv.hpp"
#include "segsense/image_io.hpp"
#include "test_helpers.hpp"

using namespace segsense;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

Run cli(const std::string& args, const fs::path& scratch) {
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(SEGSENSE_CLI_PATH) + " " + args + " >" + (scratch / "stdout.txt").string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  std::ostringstream s;
  s << in.rdbuf();
  r.err = s.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_config(const fs::path& path, const std::string& models) {
  write_text(path, R"({
  // small sweep
  "seed": 11,
  "data": {"min_foreground": 10, "split": {"train": 0.6, "test": 0.3, "validation": 0.1}},
  "ntrain_axis": [4, 8], "ntest_axis": [3, 5],
  "trials": 2, "epochs": 12, "batch_size": 2,
  "models": )" + models + "}\n");
}

const char* kSynthModels =
    R"([{"name": "a", "flip_rate": 0.3}, {"name": "b", "flip_rate": 0.5, "boundary_jitter": 1}])";

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  const auto dir = testing_helpers::scratch_dir("cli-usage");
  EXPECT_EQ(cli("", dir).code, 1);
  EXPECT_EQ(cli("frobnicate", dir).code, 1);
  EXPECT_EQ(cli("--units furlongs fit --sweep x", dir).code, 1);
  EXPECT_EQ(cli("evaluate --gt only", dir).code, 1);
  EXPECT_EQ(cli("--out " + q(dir / "o") + " sweep --data " + q(dir), dir).code, 1);  // no --config
  EXPECT_EQ(cli("--help", dir).code, 0);
}

TEST(Cli, EvaluateSameDirectoryAndUnmatched) {
  const auto dir = testing_helpers::scratch_dir("cli-evaluate");
  fs::create_directories(dir / "gt");
  fs::create_directories(dir / "pr");
  save_gray(to_gray(testing_helpers::rect(8, 8, 1, 1, 6, 6)), dir / "gt" / "x.png");
  save_gray(to_gray(testing_helpers::rect(8, 8, 0, 0, 3, 3)), dir / "gt" / "y.png");
  save_gray(to_gray(testing_helpers::rect(8, 8, 1, 1, 6, 6)), dir / "pr" / "x.png");

  auto r = cli("--out " + q(dir / "same") + " evaluate --gt " + q(dir / "gt") + " --pred " + q(dir / "gt"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_csv(dir / "same" / "metrics.csv");
  ASSERT_EQ(doc.rows.size(), 3u);
  EXPECT_EQ(doc.rows.back()[doc.column("pair_id")], "batch_mean");
  EXPECT_EQ(parse_double(doc.rows.back()[doc.column("dice")]), 1.0);
  EXPECT_EQ(parse_double(doc.rows.back()[doc.column("rmse")]), 0.0);

  r = cli("evaluate --gt " + q(dir / "gt") + " --pred " + q(dir / "pr"), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("unmatched id: y"), std::string::npos) << r.err;
}

TEST(Cli, SweepFitReportRecommendPipeline) {
  const auto dir = testing_helpers::scratch_dir("cli-pipeline");
  ASSERT_EQ(cli("--seed 2 --out " + q(dir / "data") + " synth-data --count 24 --width 32 --height 32", dir).code, 0);
  write_config(dir / "cfg.jsonc", kSynthModels);

  for (const char* run : {"s1", "s2"}) {
    const auto r = cli("--config " + q(dir / "cfg.jsonc") + " --out " + q(dir / run) + " sweep --data " + q(dir / "data"),
                       dir);
    ASSERT_EQ(r.code, 0) << r.err;
  }
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "s1" / "results")) {
    if (e.path().filename() != "metrics.csv") continue;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "s2" / fs::relative(e.path(), dir / "s1")));
    ++files;
  }
  EXPECT_EQ(files, 2u * 2 * 2 * 2);
  EXPECT_EQ(slurp(dir / "s1" / "split.json"), slurp(dir / "s2" / "split.json"));

  auto r = cli("--out " + q(dir / "fits") + " fit --sweep " + q(dir / "s1"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "fits" / "fits.json"));
  EXPECT_TRUE(fs::exists(dir / "fits" / "cell_fits.csv"));

  r = cli("--out " + q(dir / "report") + " report --sweep " + q(dir / "s1"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* t : {"index_grid.csv", "box_stats.csv", "sensitivity.csv", "failed_cells.csv", "report.json"}) {
    EXPECT_TRUE(fs::exists(dir / "report" / t)) << t;
  }

  r = cli("--out " + q(dir / "rec") + " recommend --fits " + q(dir / "fits" / "fits.json") +
              " --ntrain 2 --ntest 1 --index dice",
          dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = nlohmann::json::parse(slurp(dir / "rec" / "recommendation.json"));
  EXPECT_EQ(rec.at("ranked_models").size(), 2u);
  EXPECT_EQ(rec.at("ranked_models")[0].at("model"), "a");

  // Surfaces were fitted on indices; asking in image counts is a usage error.
  r = cli("--units images recommend --fits " + q(dir / "fits" / "fits.json") + " --ntrain 8 --ntest 3", dir);
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, InsufficientDataExitsTwo) {
  const auto dir = testing_helpers::scratch_dir("cli-short");
  ASSERT_EQ(cli("--out " + q(dir / "data") + " synth-data --count 12 --width 32 --height 32", dir).code, 0);
  write_config(dir / "cfg.jsonc", kSynthModels);
  const auto r = cli("--config " + q(dir / "cfg.jsonc") + " --out " + q(dir / "s") + " sweep --data " + q(dir / "data"), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("N-Test index 2 needs 5"), std::string::npos) << r.err;
}

TEST(Cli, FailingPredictorExitsThreeAndReportListsCells) {
  const auto dir = testing_helpers::scratch_dir("cli-predictor");
  ASSERT_EQ(cli("--out " + q(dir / "data") + " synth-data --count 24 --width 32 --height 32", dir).code, 0);
  write_config(dir / "cfg.jsonc", R"([{"name": "ext", "kind": "external", "timeout_s": 20, "command": ")" +
                                      std::string(SEGSENSE_STUB_PATH) + R"( fail {test_manifest} {out_dir}"}])");
  auto r = cli("--config " + q(dir / "cfg.jsonc") + " --out " + q(dir / "s") + " sweep --data " + q(dir / "data"), dir);
  EXPECT_EQ(r.code, 3) << r.err;
  r = cli("--out " + q(dir / "report") + " report --sweep " + q(dir / "s"), dir);
  EXPECT_EQ(r.code, 2);
  const auto failed = read_csv(dir / "report" / "failed_cells.csv");
  EXPECT_EQ(failed.rows.size(), 8u);
}

TEST(Cli, ExternalCopyPredictorScoresPerfectly) {
  const auto dir = testing_helpers::scratch_dir("cli-external");
  ASSERT_EQ(cli("--out " + q(dir / "data") + " synth-data --count 24 --width 32 --height 32", dir).code, 0);
  write_config(dir / "cfg.jsonc", R"([{"name": "ext", "kind": "external", "command": ")" +
                                      std::string(SEGSENSE_STUB_PATH) + R"( copy {test_manifest} {out_dir}"}])");
  const auto r = cli("--config " + q(dir / "cfg.jsonc") + " --out " + q(dir / "s") + " sweep --data " + q(dir / "data"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = read_csv(dir / "s" / "results" / "ext" / "2" / "2" / "1" / "metrics.csv");
  ASSERT_EQ(doc.rows.size(), 1u);
  EXPECT_EQ(doc.rows[0][doc.column("epoch")], "12");
  EXPECT_EQ(parse_double(doc.rows[0][doc.column("dice")]), 1.0);
}

TEST(Cli, VolumeFromStacks) {
  const auto dir = testing_helpers::scratch_dir("cli-volume");
  // OCT-A exceeds OCT on day 8 only.
  const std::vector<std::tuple<int, std::string, std::size_t>> stacks = {
      {1, "OCT", 20}, {1, "OCT-A", 20}, {8, "OCT", 30}, {8, "OCT-A", 45}, {15, "OCT", 40}, {15, "OCT-A", 10}};
  std::string listing = "day,modality,stack_dir\n";
  for (const auto& [day, mod, rows] : stacks) {
    const std::string name = mod + "_d" + std::to_string(day);
    fs::create_directories(dir / name);
    for (int s = 0; s < 2; ++s) {
      save_gray(to_gray(testing_helpers::rect(10, 50, 0, 0, rows / 2 + 0, 10)),
                dir / name / ("slice_" + std::to_string(s) + ".png"));
    }
    listing += std::to_string(day) + "," + mod + "," + name + "\n";
  }
  write_text(dir / "listing.csv", listing);
  const auto r = cli("--out " + q(dir / "out") + " volume --listing " + q(dir / "listing.csv"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ratio = read_csv(dir / "out" / "ratio.csv");
  ASSERT_EQ(ratio.rows.size(), 3u);
  for (const auto& row : ratio.rows) {
    EXPECT_EQ(parse_double(row[1]) > 1.0, row[0] == "8") << row[0];
  }
  const auto series = read_csv(dir / "out" / "series.csv");
  double peak = 0;
  for (const auto& row : series.rows) peak = std::max(peak, parse_double(row[series.column("normalized_volume")]));
  EXPECT_EQ(peak, 1.0);

  const auto again = cli("--out " + q(dir / "out2") + " volume --series " + q(dir / "out" / "series.csv"), dir);
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(dir / "out" / "ratio.csv"), slurp(dir / "out2" / "ratio.csv"));
}
