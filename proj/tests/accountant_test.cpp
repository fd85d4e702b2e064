// Copyright 2026 The DVPT Toolkit Authors
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

#include <algorithm>
#include <random>
#include <set>

#include "dvpt/accountant.hpp"
#include "dvpt/model.hpp"
#include "dvpt/train.hpp"

namespace dvpt {
namespace {

// Parameter counts rebuilt from the tensor shapes the architecture calls for.
struct Counts {
  std::uint64_t prompts, dvpt_block, head, backbone;
};

Counts count_by_hand(const ModelConfig& c) {
  const std::uint64_t d = c.vit.embed_dim, dp = c.dvpt.hidden_dim, m = c.dvpt.num_prompts, k = c.vit.num_classes;
  const std::uint64_t patch = c.vit.patch_size * c.vit.patch_size * c.vit.channels;
  const std::uint64_t n = c.vit.num_patches();
  const std::uint64_t layer = 4 * (d * d + d) + 2 * (2 * d) + (d * 4 * d + 4 * d) + (4 * d * d + d);
  return {m * d, d * dp + dp + dp * d + d + 1, d * k + k, patch * d + d + d + (n + 1) * d + c.vit.depth * layer};
}

std::uint64_t blocks(const ModelConfig& c) { return (c.vit.depth + c.dvpt.share_every - 1) / c.dvpt.share_every; }

TEST(ClosedForm, PaperSettings) {
  EXPECT_EQ(closed_form(50, 20, 768, 12, 1), 50u * 20 + 12u * (2 * 768 * 20 + 768 + 20));
  EXPECT_EQ(closed_form(50, 20, 768, 12, 1), 379'096u);
  EXPECT_EQ(closed_form(50, 20, 768, 12, 2), 190'048u);
  EXPECT_EQ(closed_form(0, 20, 768, 12, 12), 2u * 768 * 20 + 768 + 20);
  EXPECT_EQ(closed_form_prompt_full_width(50, 20, 768, 12, 1), 50u * 768 + 12u * 31'508);
  // ceil(L/s) when s does not divide L.
  EXPECT_EQ(closed_form(1, 2, 8, 5, 2), 2u + 3u * (2 * 8 * 2 + 8 + 2));
}

TEST(ClosedForm, MonotoneInSizesNonIncreasingInSharing) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> u(1, 40);
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t m = u(rng), dp = u(rng), d = dp + u(rng), L = u(rng) % 12 + 1;
    const std::uint64_t s = u(rng) % L + 1;
    const std::uint64_t base = closed_form(m, dp, d, L, s);
    EXPECT_GT(closed_form(m + 1, dp, d, L, s), base);
    EXPECT_GT(closed_form(m, dp + 1, d, L, s), base);
    EXPECT_GT(closed_form(m, dp, d + 1, L, s), base);
    // ceil(L/s) only steps up when L + 1 opens a new group.
    EXPECT_GE(closed_form(m, dp, d, L + 1, s), base);
    EXPECT_GT(closed_form(m, dp, d, L + 1, 1), closed_form(m, dp, d, L, 1));
    if (s < L) EXPECT_LE(closed_form(m, dp, d, L, s + 1), base);
  }
}

TEST(Enumerate, PaperScaleDvptCounts) {
  for (std::size_t s : {1u, 2u}) {
    const ModelConfig cfg = ModelConfig::paper_scale(s);
    const Counts c = count_by_hand(cfg);
    const ParamReport r = report(cfg, FreezePolicy{FreezeMode::kDvpt, {}}, paper_reference_for(cfg));
    EXPECT_EQ(r.trainable, c.prompts + blocks(cfg) * c.dvpt_block + c.head);
    EXPECT_EQ(r.trainable, s == 1 ? 420'353u : 231'299u);
    EXPECT_EQ(r.total, c.prompts + blocks(cfg) * c.dvpt_block + c.head + c.backbone);
    EXPECT_EQ(r.frozen, c.backbone);
    ASSERT_TRUE(r.closed_form.has_value());
    EXPECT_EQ(*r.closed_form, s == 1 ? 379'096u : 190'048u);
    ASSERT_TRUE(r.paper_reference.has_value());
    EXPECT_EQ(r.paper_reference->trainable, s == 1 ? 457'446u : 268'414u);
    EXPECT_EQ(r.paper_gap, static_cast<std::int64_t>(r.paper_reference->trainable) - static_cast<std::int64_t>(r.trainable));
  }
}

TEST(Enumerate, DiscrepancyDecomposesTermByTerm) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> u(1, 6);
  for (int i = 0; i < 50; ++i) {
    ModelConfig cfg;
    cfg.vit.heads = u(rng);
    cfg.vit.embed_dim = cfg.vit.heads * (u(rng) + 1);
    cfg.vit.depth = u(rng);
    cfg.vit.num_classes = u(rng) + 1;
    cfg.dvpt.num_prompts = u(rng);
    cfg.dvpt.hidden_dim = std::min(u(rng), cfg.vit.embed_dim - 1);
    cfg.dvpt.share_every = u(rng) % cfg.vit.depth + 1;
    const ParamReport r = report(cfg, FreezePolicy{FreezeMode::kDvpt, {}});
    const std::int64_t d = cfg.vit.embed_dim, dp = cfg.dvpt.hidden_dim, m = cfg.dvpt.num_prompts;
    EXPECT_EQ(r.terms.head, static_cast<std::int64_t>(d * cfg.vit.num_classes + cfg.vit.num_classes));
    EXPECT_EQ(r.terms.gates, static_cast<std::int64_t>(blocks(cfg)));
    EXPECT_EQ(r.terms.prompt_width, m * (d - dp));
    EXPECT_EQ(r.terms.projection_bias, 0);
    EXPECT_EQ(r.terms.other, 0);
    EXPECT_EQ(r.terms.sum(), r.discrepancy);
    EXPECT_EQ(r.discrepancy, static_cast<std::int64_t>(r.trainable) - static_cast<std::int64_t>(*r.closed_form));
  }
}

TEST(Enumerate, OtherPoliciesAndTotals) {
  const ParamReport probe = report(ModelConfig::desk(), FreezePolicy{FreezeMode::kLinearProbe, {}});
  EXPECT_EQ(probe.trainable, 32u * 5 + 5);
  const ParamReport vpt = report(ModelConfig::paper_scale(1), FreezePolicy{FreezeMode::kVptOnly, {}});
  EXPECT_EQ(vpt.trainable, 38'400u + 3'845u);
  const ParamReport full = report(ModelConfig::paper_scale(1), FreezePolicy{FreezeMode::kFullFinetune, {}});
  EXPECT_EQ(full.trainable_fraction, 1.0);
  for (const ParamReport* r : {&probe, &vpt, &full}) {
    std::uint64_t rows = 0;
    for (const ParamRow& row : r->rows) rows += row.count;
    EXPECT_EQ(rows, r->total);
    EXPECT_EQ(r->trainable + r->frozen, r->total);
    EXPECT_DOUBLE_EQ(r->trainable_fraction, static_cast<double>(r->trainable) / static_cast<double>(r->total));
    EXPECT_TRUE(std::is_sorted(r->rows.begin(), r->rows.end(),
                               [](const ParamRow& a, const ParamRow& b) { return a.name < b.name; }));
  }
}

TEST(Enumerate, TrainableFractionNearPaperClaim) {
  const ParamReport r = report(ModelConfig::paper_scale(1), FreezePolicy{FreezeMode::kDvpt, {}});
  const double percent = 100.0 * r.trainable_fraction;
  EXPECT_LT(percent, 0.6);
  EXPECT_NEAR(percent, 0.54, 0.15);
}

TEST(Enumerate, MatchesTheOptimizerSet) {
  ModelConfig cfg;
  Model model(cfg, 1);
  for (FreezeMode mode : {FreezeMode::kLinearProbe, FreezeMode::kVptOnly, FreezeMode::kDvpt, FreezeMode::kFullFinetune}) {
    apply_freeze_policy(model, FreezePolicy{mode, {}});
    const Adam adam(model.trainable_parameters(), AdamOptions{});
    const auto names = adam.parameter_names();
    std::set<std::string> optimised(names.begin(), names.end());
    std::set<std::string> reported;
    for (const ParamRow& row : report(model).rows) {
      if (row.trainable) reported.insert(row.name);
    }
    EXPECT_EQ(optimised, reported);
    EXPECT_EQ(report(model).trainable, report(cfg, FreezePolicy{mode, {}}).trainable);
  }
}

TEST(Format, TableAndKeyValuesCarryTheNumbers) {
  const ModelConfig cfg = ModelConfig::paper_scale(1);
  const ParamReport r = report(cfg, FreezePolicy{FreezeMode::kDvpt, {}}, paper_reference_for(cfg));
  const std::string table = format_table(r);
  for (const char* needle : {"420,353", "379,096", "416,496", "457,446", "86,217,473"}) {
    EXPECT_NE(table.find(needle), std::string::npos) << needle << "\n" << table;
  }
  const std::string kv = format_key_values(r);
  for (const char* needle : {"trainable = 420353\n", "closed_form = 379096\n", "paper_reference = 457446\n",
                             "discrepancy = 41257\n", "param.prompts = [50,768] 38400 trainable\n"}) {
    EXPECT_NE(kv.find(needle), std::string::npos) << needle << "\n" << kv;
  }
  EXPECT_FALSE(paper_reference_for(ModelConfig::desk()).has_value());
}

}  // namespace
}  // namespace dvpt
