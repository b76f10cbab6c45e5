// Copyright 2026 The segcond Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace segcond {
namespace {

BinaryMask block_at(int x0) { return oracle::rect_mask(4, 4, x0, 1, x0 + 2, 3); }

TEST(EntityIouTest, Examples) {
  EXPECT_EQ(entity_iou(block_at(1), block_at(1)), 1.0);
  EXPECT_EQ(entity_iou(block_at(0), oracle::rect_mask(4, 4, 2, 0, 4, 1)), 0.0);
  EXPECT_DOUBLE_EQ(entity_iou(block_at(1), block_at(2)), 1.0 / 3.0);
  EXPECT_EQ(entity_iou(BinaryMask(4, 4), BinaryMask(4, 4)), 1.0);
  EXPECT_THROW(entity_iou(BinaryMask(4, 4), BinaryMask(4, 3)), DimensionMismatch);
}

TEST(EntityIouProperty, SymmetricReflexiveAndMatchesOracle) {
  oracle::Rng rng(81);
  for (int t = 0; t < 200; ++t) {
    const int w = oracle::uniform_int(rng, 1, 12);
    const int h = oracle::uniform_int(rng, 1, 12);
    const BinaryMask a = oracle::random_mask(rng, w, h, 0.3);
    const BinaryMask b = oracle::random_mask(rng, w, h, 0.3);
    EXPECT_EQ(entity_iou(a, b), entity_iou(b, a));
    EXPECT_EQ(entity_iou(a, a), 1.0);
    EXPECT_EQ(entity_iou(a, b), oracle::iou(a, b));
  }
}

TEST(MiouTest, Examples) {
  const std::vector<MaskPair> same{{1, block_at(0), block_at(0)}, {2, block_at(2), block_at(2)}};
  EXPECT_EQ(class_agnostic_miou(same), 1.0);

  const std::vector<MaskPair> half{{1, block_at(0), block_at(0)}, {2, block_at(0), oracle::rect_mask(4, 4, 2, 0, 4, 1)}};
  EXPECT_EQ(class_agnostic_miou(half), 0.5);

  const std::vector<MaskPair> three{{1, block_at(0), block_at(0)},
                                    {2, block_at(0), oracle::rect_mask(4, 4, 2, 0, 4, 1)},
                                    {3, block_at(1), block_at(2)}};
  EXPECT_NEAR(class_agnostic_miou(three), 4.0 / 9.0, 1e-12);
  EXPECT_NEAR(class_agnostic_miou(three), 0.4444, 1e-4);
}

TEST(MiouTest, Errors) {
  EXPECT_THROW(class_agnostic_miou(std::vector<MaskPair>{}), EmptySet);
  const std::vector<MaskPair> dup{{1, block_at(0), block_at(0)}, {1, block_at(1), block_at(1)}};
  EXPECT_THROW(class_agnostic_miou(dup), InvalidArgument);
}

TEST(MiouProperty, MatchesBruteForce) {
  oracle::Rng rng(82);
  for (int t = 0; t < 50; ++t) {
    std::vector<MaskPair> pairs;
    const int n = oracle::uniform_int(rng, 1, 6);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      MaskPair p{i + 1, oracle::random_mask(rng, 8, 6, 0.4), oracle::random_mask(rng, 8, 6, 0.4)};
      sum += oracle::iou(p.pred, p.ref);
      pairs.push_back(std::move(p));
    }
    EXPECT_EQ(class_agnostic_miou(pairs), sum / n);
  }
}

TEST(AttentionMacsTest, WorkedValue) {
  // S=10, d=4 (1 head x 4), one layer: 4*10*16 + 2*100*4.
  EXPECT_EQ(attention_macs({4, 6, 0, 1, 4, 1}), 1440u);
}

TEST(AttentionMacsTest, ScoreTermQuadruples) {
  const CostProfile p{10, 20, 0, 2, 8, 3};
  CostProfile doubled = p;
  doubled.l_text *= 2;
  doubled.l_img *= 2;
  const auto score = [](const CostProfile& c) {
    const auto s = c.sequence();
    return c.layers * 2 * s * s * c.model_dim();
  };
  EXPECT_EQ(score(doubled), 4 * score(p));
  const auto proj = [](const CostProfile& c) { return c.layers * 4 * c.sequence() * c.model_dim() * c.model_dim(); };
  EXPECT_EQ(attention_macs(doubled) - proj(doubled), 4 * (attention_macs(p) - proj(p)));
}

TEST(AttentionMacsProperty, StrictlyIncreasingInEveryField) {
  const CostProfile base{7, 9, 3, 2, 4, 2};
  const std::uint64_t m = attention_macs(base);
  for (int field = 0; field < 6; ++field) {
    CostProfile p = base;
    std::uint64_t* f[] = {&p.l_text, &p.l_img, &p.l_cond, &p.heads, &p.head_dim, &p.layers};
    *f[field] += 1;
    EXPECT_GT(attention_macs(p), m) << "field " << field;
  }
  CostProfile none = base;
  none.l_cond = 0;
  EXPECT_LT(attention_macs(none), m);
}

TEST(CitfReportTest, Settings) {
  const CostProfile profile{762, 4096, 0, 24, 128, 57};
  const std::vector<std::uint64_t> post{100, 2000, 4096};
  const CitfReport r = citf_report(profile, 4096, post);
  ASSERT_EQ(r.settings.size(), 5u);
  EXPECT_EQ(r.setting("no_condition").l_cond, 0u);
  EXPECT_EQ(r.setting("citf_min").l_cond, 100u);
  EXPECT_EQ(r.setting("citf_max").l_cond, 4096u);
  EXPECT_EQ(r.setting("citf_avg").l_cond, 2065u);  // 6196 / 3 = 2065.33
  EXPECT_EQ(r.setting("no_citf").savings_pct, 0.0);
  EXPECT_GT(r.setting("no_condition").savings_pct, r.setting("citf_min").savings_pct);
  EXPECT_THROW(r.setting("bogus"), InvalidArgument);

  const std::vector<std::uint64_t> halves{1, 2};
  EXPECT_EQ(citf_report(profile, 10, halves).setting("citf_avg").l_cond, 2u);  // 1.5 rounds up
}

TEST(CitfReportTest, SingleSampleExtremes) {
  const TokenEntityMap tokens{4, 4, std::vector<int>(16, 0)};
  const std::vector<std::size_t> lens{5};
  const TokenLayout layout = build_token_layout(tokens, lens);
  const CostProfile profile{0, 0, 0, 4, 16, 4};

  const CitfReport same = citf_report(layout, 16, 16, profile);
  EXPECT_EQ(same.setting("citf_avg").saved_macs, 0u);

  const CitfReport none = citf_report(layout, 16, 0, profile);
  EXPECT_EQ(none.setting("citf_avg").macs, none.setting("no_condition").macs);
  CostProfile p = profile;
  p.l_text = 5;
  p.l_img = 16;
  p.l_cond = 16;
  const std::uint64_t full = attention_macs(p);
  p.l_cond = 0;
  EXPECT_EQ(none.setting("citf_avg").saved_macs, full - attention_macs(p));

  const CitfReport half = citf_report(layout, 16, 8, profile);
  EXPECT_GT(half.setting("citf_avg").savings_pct, 0.0);
  EXPECT_LT(half.setting("citf_avg").savings_pct, none.setting("citf_avg").savings_pct);

  EXPECT_THROW(citf_report(layout, 8, 9, profile), InvalidArgument);
}

}  // namespace
}  // namespace segcond
