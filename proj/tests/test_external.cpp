#include <gtest/gtest.h>

#include "segsense/external.hpp"
#include "segsense/image_io.hpp"
#include "segsense/metrics.hpp"
#include "test_helpers.hpp"

using namespace segsense;

namespace {

struct Fixture {
  fs::path root;
  ExternalInvocation inv;
};

Fixture setup(const std::string& name, const std::string& mode) {
  Fixture f;
  f.root = testing_helpers::scratch_dir("external-" + name);
  const fs::path masks = f.root / "masks";
  fs::create_directories(masks);
  std::vector<std::string> ids = {"a", "b", "c"};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    save_gray(to_gray(testing_helpers::rect(8, 8, i, i, i + 4, i + 4)), masks / (ids[i] + ".png"));
  }
  f.inv.command_template = std::string(SEGSENSE_STUB_PATH) + " " + mode + " {test_manifest} {out_dir}";
  f.inv.workdir = f.root / "work";
  f.inv.train = {{"a"}, masks, {}};
  f.inv.test = {ids, masks, {}};
  f.inv.timeout = std::chrono::seconds(20);
  return f;
}

ExternalFailure failure_of(const ExternalInvocation& inv) {
  try {
    run_external(inv);
  } catch (const ExternalPredictorError& e) {
    return e.reason();
  }
  ADD_FAILURE() << "predictor unexpectedly succeeded";
  return ExternalFailure::spawn;
}

}  // namespace

TEST(External, CopyingGroundTruthScoresPerfectly) {
  auto f = setup("copy", "copy");
  const auto out = run_external(f.inv);
  for (const auto& id : f.inv.test.ids) {
    const auto gt = load_mask(f.root / "masks" / (id + ".png"));
    const auto pr = to_soft(load_gray(prediction_path(out, id)));
    EXPECT_EQ(dice(confusion(gt, pr)), 1.0);
  }
  EXPECT_TRUE(fs::exists(f.inv.workdir / "train_manifest.json"));
  EXPECT_TRUE(fs::exists(f.inv.workdir / "test_manifest.json"));
}

TEST(External, NonzeroExitCarriesOutput) {
  auto f = setup("fail", "fail");
  try {
    run_external(f.inv);
    FAIL();
  } catch (const ExternalPredictorError& e) {
    EXPECT_EQ(e.reason(), ExternalFailure::nonzero_exit);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("code 7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("simulated training crash"), std::string::npos) << msg;
  }
}

TEST(External, MissingPredictionNamesTheId) {
  auto f = setup("missing", "skip-first");
  try {
    run_external(f.inv);
    FAIL();
  } catch (const ExternalPredictorError& e) {
    EXPECT_EQ(e.reason(), ExternalFailure::missing_prediction);
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos) << e.what();
  }
}

TEST(External, UnexpectedPredictionRejected) {
  EXPECT_EQ(failure_of(setup("extra", "extra").inv), ExternalFailure::extra_prediction);
}

TEST(External, TimeoutKillsProcess) {
  auto f = setup("timeout", "sleep");
  f.inv.timeout = std::chrono::milliseconds(300);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(failure_of(f.inv), ExternalFailure::timeout);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
}

TEST(External, TemplateMustNameOutputs) {
  auto f = setup("template", "copy");
  f.inv.command_template = "true {test_manifest}";
  EXPECT_THROW(run_external(f.inv), UsageError);
}

TEST(External, SubstituteReplacesEveryOccurrence) {
  EXPECT_EQ(substitute("{a}-{b}-{a}", {{"a", "1"}, {"b", "2"}}), "1-2-1");
  EXPECT_EQ(substitute("{unknown}", {{"a", "1"}}), "{unknown}");
}

TEST(Manifest, JsonRoundTrip) {
  Manifest m{{"x", "y"}, "/m", "/i"};
  const auto back = manifest_from_json(to_json(m));
  EXPECT_EQ(back.ids, m.ids);
  EXPECT_EQ(back.mask_dir, m.mask_dir);
  EXPECT_EQ(back.image_dir, m.image_dir);
}
