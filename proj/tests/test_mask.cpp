#include <gtest/gtest.h>

#include "segsense/mask.hpp"
#include "test_helpers.hpp"

using namespace segsense;
using testing_helpers::mask;

TEST(Mask, RejectsNonBinaryValues) {
  EXPECT_THROW(mask(2, 1, {0, 2}), DataError);
  EXPECT_THROW(mask(2, 2, {0, 1, 1}), DataError);
}

TEST(ToBinary, AllZeroImageGivesEmptyMask) {
  const auto m = to_binary(GrayImage(3, 2, 0), 127);
  EXPECT_EQ(foreground_count(m), 0u);
  EXPECT_EQ(m.width(), 3u);
  EXPECT_EQ(m.height(), 2u);
}

TEST(ToBinary, AllWhiteImageGivesFullMask) {
  EXPECT_EQ(foreground_count(to_binary(GrayImage(4, 4, 255), 127)), 16u);
}

TEST(ToBinary, StrictlyAboveCutoff) {
  const GrayImage img(2, 2, {10, 200, 127, 128});
  const auto m = to_binary(img, 127);
  EXPECT_EQ(std::vector<std::uint8_t>(m.values().begin(), m.values().end()),
            (std::vector<std::uint8_t>{0, 1, 0, 1}));
}

TEST(ToBinary, CutoffOutOfRange) {
  EXPECT_THROW(to_binary(GrayImage(1, 1), 256), UsageError);
  EXPECT_THROW(to_binary(GrayImage(1, 1), -1), UsageError);
}

TEST(ToBinary, IdempotentOnBinaryData) {
  Rng rng(3);
  for (int cutoff : {1, 50, 127, 200, 254}) {
    std::vector<std::uint8_t> px(64);
    for (auto& v : px) v = rng.uniform() < 0.5 ? 255 : 0;
    const auto once = to_binary(GrayImage(8, 8, px), cutoff);
    std::vector<std::uint8_t> back(64);
    for (std::size_t i = 0; i < 64; ++i) back[i] = once.values()[i] ? 255 : 0;
    EXPECT_EQ(back, px);
    EXPECT_TRUE(to_binary(GrayImage(8, 8, back), cutoff).same_pixels(once));
  }
}

TEST(ForegroundCount, Basics) {
  EXPECT_EQ(foreground_count(Mask(5, 5)), 0u);
  EXPECT_EQ(foreground_count(mask(4, 4, std::vector<std::uint8_t>(16, 1))), 16u);
  EXPECT_EQ(foreground_count(mask(2, 2, {1, 0, 1, 1})), 3u);
}

namespace {
Mask with_count(std::size_t n, std::string id) {
  Mask m(10, 10);
  for (std::size_t i = 0; i < n; ++i) m.set(i / 10, i % 10, true);
  m.set_source_id(std::move(id));
  return m;
}
}  // namespace

TEST(FilterInformative, InclusiveThresholdKeepsOrder) {
  const std::vector<Mask> in = {with_count(49, "a"), with_count(50, "b"), with_count(51, "c")};
  const auto out = filter_informative(in, 50);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].source_id(), "b");
  EXPECT_EQ(out[1].source_id(), "c");
  EXPECT_EQ(kDefaultMinForeground, 50u);
}

TEST(FilterInformative, ZeroThresholdAndEmptyInput) {
  const std::vector<Mask> in = {with_count(0, "a"), with_count(7, "b")};
  EXPECT_EQ(filter_informative(in, 0).size(), 2u);
  EXPECT_TRUE(filter_informative(std::vector<Mask>{}, 50).empty());
}

TEST(FilterInformative, Idempotent) {
  Rng rng(11);
  std::vector<Mask> in;
  for (int i = 0; i < 40; ++i) in.push_back(with_count(rng.below(101), std::to_string(i)));
  const auto once = filter_informative(in, 50);
  const auto twice = filter_informative(once, 50);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].source_id(), twice[i].source_id());
}

TEST(ResizeMask, IdentityScale) {
  Rng rng(5);
  const auto m = testing_helpers::random_mask(rng, 7, 5, 0.4);
  const auto r = resize_mask(m, 1.0);
  EXPECT_TRUE(r.same_pixels(m));
  EXPECT_EQ(foreground_count(r), foreground_count(m));
}

TEST(ResizeMask, QuarterOfUniformField) {
  const auto r = resize_mask(mask(4, 4, std::vector<std::uint8_t>(16, 1)), 0.25);
  EXPECT_EQ(r.width(), 1u);
  EXPECT_EQ(r.height(), 1u);
  EXPECT_TRUE(r(0, 0));
}

TEST(ResizeMask, HalfKeepsLeftHalf) {
  const auto r = resize_mask(testing_helpers::rect(8, 8, 0, 0, 8, 4), 0.5);
  ASSERT_EQ(r.width(), 4u);
  ASSERT_EQ(r.height(), 4u);
  // Independent oracle: nearest source column of each destination column.
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(r(y, x), x < 2) << y << "," << x;
}

TEST(ResizeMask, RejectsEmptyOutputAndBadScale) {
  EXPECT_THROW(resize_mask(Mask(3, 3), 0.25), DataError);
  EXPECT_THROW(resize_mask(Mask(3, 3), 0.0), UsageError);
  EXPECT_THROW(resize_mask(Mask(3, 3), 1.5), UsageError);
}

TEST(ResizeMask, StaysBinaryOnRandomInput) {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto m = testing_helpers::random_mask(rng, 4 + rng.below(60), 4 + rng.below(60), rng.uniform());
    const auto r = resize_mask(m, rng.uniform(0.25, 1.0));
    for (auto v : r.values()) EXPECT_LE(v, 1);
  }
}

TEST(MaskStack, RejectsMismatchedSlices) {
  MaskStack s("vol");
  s.push_back(Mask(4, 4));
  EXPECT_THROW(s.push_back(Mask(4, 5)), DataError);
  EXPECT_EQ(s.size(), 1u);
}
