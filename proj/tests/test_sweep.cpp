#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "segsense/partition.hpp"
#include "segsense/sweep.hpp"
#include "segsense/sweep_io.hpp"
#include "test_helpers.hpp"

using namespace segsense;

namespace {

SweepData make_data(std::size_t n, std::uint64_t seed = 1) {
  Rng rng(seed);
  SweepData d;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "img" + std::to_string(i);
    ids.push_back(id);
    const std::size_t y0 = rng.below(6), x0 = rng.below(6);
    auto m = testing_helpers::rect(24, 24, y0, x0, y0 + 8 + rng.below(10), x0 + 8 + rng.below(10));
    m.set_source_id(id);
    d.masks.emplace(id, std::move(m));
  }
  d.split = partition(ids, {0.6, 0.3, 0.1}, seed);
  return d;
}

PredictorSpec synthetic(const std::string& name, double flip, double jitter = 0.0) {
  PredictorSpec p;
  p.name = name;
  p.degradation = {flip, jitter, 0.1};
  return p;
}

SweepConfig small_config() {
  SweepConfig c;
  c.models = {synthetic("alpha", 0.3, 1.0), synthetic("beta", 0.5)};
  c.ntrain_axis = GridAxis({4, 8});
  c.ntest_axis = GridAxis({3, 6});
  c.trials = 2;
  c.epochs = 5;
  c.batch_size = 2;
  c.seed = 42;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Sweep, IdentityPredictorScoresPerfectly) {
  auto cfg = small_config();
  cfg.models = {synthetic("identity", 0.0)};
  const auto r = run_sweep(cfg, make_data(30));
  for (const auto& c : r.cells) {
    ASSERT_FALSE(c.failed) << c.failure;
    for (const auto& e : c.epochs) {
      EXPECT_EQ(e.mean.dice, 1.0);
      EXPECT_EQ(e.mean.iou, 1.0);
      EXPECT_EQ(e.mean.rmse, 0.0);
      ASSERT_TRUE(e.mean.hausdorff.has_value());
      EXPECT_EQ(*e.mean.hausdorff, 0.0);
    }
  }
}

TEST(Sweep, CellCountIsCompleteAndOrdered) {
  const auto cfg = small_config();
  std::size_t observed = 0;
  const auto r = run_sweep(cfg, make_data(30), [&](const CellResult&) { ++observed; });
  ASSERT_EQ(r.cells.size(), 2u * 2 * 2 * 2);
  EXPECT_EQ(observed, r.cells.size());
  std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> keys;
  for (const auto& c : r.cells) {
    keys.insert({c.key.model, c.key.ntrain_idx, c.key.ntest_idx, c.key.trial});
    EXPECT_EQ(c.epochs.size(), 5u);
    EXPECT_EQ(c.epochs.front().epoch, 1);
    EXPECT_EQ(c.epochs.back().epoch, 5);
  }
  EXPECT_EQ(keys.size(), r.cells.size());
  EXPECT_EQ(r.cells.front().key, (CellKey{0, 1, 1, 1}));
  EXPECT_EQ(r.cells.back().key, (CellKey{1, 2, 2, 2}));
}

TEST(Sweep, SameSeedGivesByteIdenticalFiles) {
  auto cfg = small_config();
  const auto data = make_data(30);
  const auto a = testing_helpers::scratch_dir("sweep-a");
  const auto b = testing_helpers::scratch_dir("sweep-b");
  write_sweep(run_sweep(cfg, data), a);
  cfg.threads = 3;
  write_sweep(run_sweep(cfg, data), b);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a / "results")) {
    if (e.path().filename() != "metrics.csv") continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++compared;
  }
  EXPECT_EQ(compared, 16u);
}

TEST(Sweep, DifferentSeedChangesResults) {
  auto cfg = small_config();
  const auto data = make_data(30);
  const auto a = run_sweep(cfg, data);
  cfg.seed = 43;
  const auto b = run_sweep(cfg, data);
  EXPECT_NE(epoch_csv(a.cells[0]), epoch_csv(b.cells[0]));
}

TEST(Sweep, RoundTripsThroughDisk) {
  const auto r = run_sweep(small_config(), make_data(30));
  const auto dir = testing_helpers::scratch_dir("sweep-io");
  write_sweep(r, dir);
  const auto back = load_sweep(dir);
  ASSERT_EQ(back.cells.size(), r.cells.size());
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    EXPECT_EQ(back.cells[i].key, r.cells[i].key);
    EXPECT_EQ(epoch_csv(back.cells[i]), epoch_csv(r.cells[i]));
  }
  EXPECT_EQ(back.config.models[1].name, "beta");
  EXPECT_EQ(back.config.trials, 2);
}

TEST(NestedSubset, GrowsByExtension) {
  std::vector<std::string> pool;
  for (int i = 0; i < 50; ++i) pool.push_back("id" + std::to_string(i));
  for (std::size_t trial = 1; trial <= 4; ++trial) {
    const auto small = nested_subset(pool, 10, 9, "train", trial);
    const auto big = nested_subset(pool, 30, 9, "train", trial);
    EXPECT_TRUE(std::equal(small.begin(), small.end(), big.begin()));
    EXPECT_EQ(std::set<std::string>(big.begin(), big.end()).size(), 30u);
  }
  EXPECT_NE(nested_subset(pool, 10, 9, "train", 1), nested_subset(pool, 10, 9, "train", 2));
  EXPECT_THROW(nested_subset(pool, 51, 9, "train", 1), DataError);
}

TEST(Preflight, NamesEveryShortfall) {
  auto cfg = small_config();
  cfg.ntrain_axis = GridAxis({4, 500});
  cfg.ntest_axis = GridAxis({3, 400});
  try {
    run_sweep(cfg, make_data(30));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("N-Train index 2 needs 500"), std::string::npos) << msg;
    EXPECT_NE(msg.find("N-Test index 2 needs 400"), std::string::npos) << msg;
  }
}

TEST(SweepConfig, RejectsBadSettings) {
  auto cfg = small_config();
  cfg.models.push_back(synthetic("alpha", 0.1));
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = small_config();
  cfg.trials = 0;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = small_config();
  cfg.models[0].name = "a/b";
  EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(Sweep, FailedCellIsRecordedNotFatal) {
  auto cfg = small_config();
  PredictorSpec broken;
  broken.kind = PredictorKind::external;
  broken.name = "broken";
  broken.command_template = "exit 3 # {out_dir} {test_manifest}";
  cfg.models.push_back(broken);
  auto data = make_data(30);
  data.workdir = testing_helpers::scratch_dir("sweep-broken");
  const auto r = run_sweep(cfg, data);
  EXPECT_EQ(r.failed_count(), 8u);
  for (const auto& c : r.cells) {
    if (r.model_name(c) == "broken") {
      EXPECT_TRUE(c.failed);
      EXPECT_NE(c.failure.find("nonzero_exit"), std::string::npos) << c.failure;
    }
  }
}

namespace {

// Sweep whose final-epoch values per index carry chosen across-trial spreads.
SweepResult injected(const std::map<MetricIndex, double>& spread, int trials) {
  SweepResult r;
  r.config.models = {synthetic("m", 0.1)};
  r.config.ntrain_axis = GridAxis({1, 2});
  r.config.ntest_axis = GridAxis({1});
  r.config.trials = trials;
  for (std::size_t tr = 1; tr <= 2; ++tr) {
    for (int t = 1; t <= trials; ++t) {
      CellResult c;
      c.key = {0, tr, 1, static_cast<std::size_t>(t)};
      EpochRow row;
      row.epoch = 1;
      const double sign = (t % 2) ? 1.0 : -1.0;
      auto v = [&](MetricIndex i) { return 0.5 + sign * spread.at(i) * static_cast<double>(tr); };
      row.mean.dice = v(MetricIndex::dice);
      row.mean.f_score = v(MetricIndex::f_score);
      row.mean.iou = v(MetricIndex::iou);
      row.mean.rmse = v(MetricIndex::rmse);
      row.mean.loss_bce = v(MetricIndex::loss_bce);
      row.mean.loss_dice = v(MetricIndex::loss_dice);
      row.mean.hausdorff = v(MetricIndex::hausdorff);
      c.epochs.push_back(row);
      r.cells.push_back(c);
    }
  }
  return r;
}

}  // namespace

TEST(SensitivityRanking, ReproducesInjectedOrdering) {
  const std::map<MetricIndex, double> spread = {
      {MetricIndex::loss_bce, 0.07}, {MetricIndex::hausdorff, 0.06}, {MetricIndex::loss_dice, 0.05},
      {MetricIndex::iou, 0.04},      {MetricIndex::f_score, 0.03},   {MetricIndex::dice, 0.02},
      {MetricIndex::rmse, 0.01}};
  const auto ranking = index_sensitivity_ranking(injected(spread, 4));
  const std::vector<std::string> expected = {"loss_bce", "hausdorff", "loss_dice", "iou",
                                             "f_score",  "dice",      "rmse"};
  ASSERT_EQ(ranking.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(ranking[i].index, expected[i]);
  // Trials alternate 0.5 +- s*tr, so each group's sample deviation is known.
  const double per_tr = std::sqrt(4.0 / 3.0);
  EXPECT_NEAR(ranking[0].mean_stddev, 0.07 * per_tr * 1.5, 1e-12);
  EXPECT_EQ(ranking[0].groups, 2u);
}

TEST(SensitivityRanking, TiesBreakAlphabetically) {
  std::map<MetricIndex, double> spread;
  for (auto i : kAllIndices) spread[i] = 0.0;
  const auto ranking = index_sensitivity_ranking(injected(spread, 2));
  const std::vector<std::string> expected = {"dice", "f_score", "hausdorff", "iou",
                                             "loss_bce", "loss_dice", "rmse"};
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(ranking[i].index, expected[i]);
}

TEST(SensitivityRanking, NeedsTwoTrials) {
  std::map<MetricIndex, double> spread;
  for (auto i : kAllIndices) spread[i] = 0.1;
  EXPECT_THROW(index_sensitivity_ranking(injected(spread, 1)), DataError);
}

TEST(AggregateEpoch, MeanOfBatchMeans) {
  std::vector<MetricRecord> recs(3);
  recs[0].dice = 1.0;
  recs[1].dice = 0.0;
  recs[2].dice = 0.0;
  for (auto& r : recs) r.hausdorff = 1.0;
  recs[2].hausdorff.reset();
  const auto row = detail::aggregate_epoch(4, recs, 2);
  EXPECT_DOUBLE_EQ(row.mean.dice, 0.25);
  EXPECT_EQ(row.hausdorff_undefined, 1u);
  EXPECT_EQ(row.epoch, 4);
}
