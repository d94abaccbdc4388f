#include <gtest/gtest.h>

#include "qsa/bench.hpp"

using namespace qsa;

TEST(Macs, ClosedForm) {
  const auto cfg = AttnConfig::make(512, 64, 8);
  const auto s = macs_model(cfg, AttentionMode::shared);
  const auto c = macs_model(cfg, AttentionMode::componentwise);
  const std::uint64_t t2dh = 512ull * 512 * 8;
  EXPECT_EQ(s.score_stage, 8 * 4 * t2dh);
  EXPECT_EQ(c.score_stage, 8 * 16 * t2dh);
  EXPECT_EQ(s.av_stage, 8 * 4 * t2dh);
  EXPECT_EQ(c.av_stage, s.av_stage);
  EXPECT_EQ(s.projections, 8ull * 3 * 16 * 512 * 64 * 8);
  EXPECT_EQ(s.total, s.score_stage + s.av_stage);
  EXPECT_EQ(s.softmax_ops, 8u);
  EXPECT_EQ(c.softmax_ops, 32u);
  EXPECT_EQ(s.score_mults_per_pair, 4u);
  EXPECT_EQ(c.score_mults_per_pair, 16u);
  const auto p = macs_model(cfg, AttentionMode::shared, true);
  EXPECT_EQ(p.total, p.score_stage + p.av_stage + p.projections);
}

TEST(Macs, RatiosHoldForEveryConfig) {
  for (std::size_t t : {1u, 7u, 64u, 1000u}) {
    for (std::size_t h : {1u, 2u, 8u}) {
      for (bool proj : {false, true}) {
        const auto cfg = AttnConfig::make(t, 8 * h, h);
        const auto s = macs_model(cfg, AttentionMode::shared, proj);
        const auto c = macs_model(cfg, AttentionMode::componentwise, proj);
        EXPECT_EQ(4 * s.score_stage, c.score_stage);
        EXPECT_EQ(4 * s.softmax_ops, c.softmax_ops);
      }
    }
  }
  AttnConfig bad;
  bad.heads = 0;
  EXPECT_THROW(macs_model(bad, AttentionMode::shared), InvalidArgument);
}

TEST(Macs, ExpectedCountersMatchRuntime) {
  auto cfg = AttnConfig::make(10, 16, 4, AttentionMode::componentwise);
  const auto r = time_attention(cfg, AttentionMode::componentwise, 1, 2, 3);
  EXPECT_TRUE(r.counters_match_model);
  EXPECT_EQ(r.counters.score_matmuls, 64u);
  EXPECT_EQ(r.counters.score_matmuls, macs_model(cfg, AttentionMode::componentwise).score_mults_per_pair * 4);
}

TEST(Timing, SingleRepIsItsOwnMedian) {
  const auto cfg = AttnConfig::make(8, 8, 2);
  const auto r = time_attention(cfg, AttentionMode::shared, 1, 1);
  ASSERT_EQ(r.samples_ms.size(), 1u);
  EXPECT_EQ(r.median_ms, r.samples_ms[0]);
  EXPECT_EQ(r.mad_ms, 0.0);
}

TEST(Timing, MedianOfSamplesAndPrecision) {
  const auto cfg = AttnConfig::make(16, 8, 2);
  const auto r = time_attention(cfg, AttentionMode::componentwise, 2, 6, 1, Precision::f32);
  EXPECT_EQ(r.precision, Precision::f32);
  EXPECT_EQ(r.samples_ms.size(), 6u);
  auto s = r.samples_ms;
  std::sort(s.begin(), s.end());
  EXPECT_DOUBLE_EQ(r.median_ms, 0.5 * (s[2] + s[3]));
  EXPECT_EQ(r.min_ms, s[0]);
  EXPECT_TRUE(r.counters_match_model);
}

TEST(Timing, RejectsBadCounts) {
  const auto cfg = AttnConfig::make(8, 8, 2);
  EXPECT_THROW(time_attention(cfg, AttentionMode::shared, 0, 1), InvalidArgument);
  EXPECT_THROW(time_attention(cfg, AttentionMode::shared, 1, 0), InvalidArgument);
  EXPECT_EQ(parse_precision("f32"), Precision::f32);
  EXPECT_THROW(parse_precision("f16"), InvalidArgument);
}
