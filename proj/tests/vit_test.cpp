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
#include <cstring>
#include <random>

#include "dvpt/errors.hpp"
#include "dvpt/model.hpp"
#include "dvpt/vit.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

namespace dvpt {
namespace {

using testing::random_tensor;

BlockWeights random_block(std::size_t d, std::mt19937_64& rng, double s = 0.4) {
  BlockWeights w;
  w.ln1_gamma = random_tensor({d}, rng, 0.5, 1.5);
  w.ln1_beta = random_tensor({d}, rng, -0.2, 0.2);
  w.wq = random_tensor({d, d}, rng, -s, s);
  w.bq = random_tensor({d}, rng, -s, s);
  w.wk = random_tensor({d, d}, rng, -s, s);
  w.bk = random_tensor({d}, rng, -s, s);
  w.wv = random_tensor({d, d}, rng, -s, s);
  w.bv = random_tensor({d}, rng, -s, s);
  w.wo = random_tensor({d, d}, rng, -s, s);
  w.bo = random_tensor({d}, rng, -s, s);
  w.ln2_gamma = random_tensor({d}, rng, 0.5, 1.5);
  w.ln2_beta = random_tensor({d}, rng, -0.2, 0.2);
  w.w1 = random_tensor({d, 4 * d}, rng, -s, s);
  w.b1 = random_tensor({4 * d}, rng, -s, s);
  w.w2 = random_tensor({4 * d, d}, rng, -s, s);
  w.b2 = random_tensor({d}, rng, -s, s);
  return w;
}

BlockWeights zero_block(std::size_t d) {
  BlockWeights w;
  for (Tensor* t : {&w.ln1_gamma, &w.ln1_beta, &w.bq, &w.bk, &w.bv, &w.bo, &w.ln2_gamma, &w.ln2_beta, &w.b2}) {
    *t = Tensor::zeros({d});
  }
  for (Tensor* t : {&w.wq, &w.wk, &w.wv, &w.wo}) *t = Tensor::zeros({d, d});
  w.w1 = Tensor::zeros({d, 4 * d});
  w.b1 = Tensor::zeros({4 * d});
  w.w2 = Tensor::zeros({4 * d, d});
  return w;
}

TokenSequence sequence(const Tensor& tokens, std::size_t prompts = 0) {
  return {tokens, Layout{prompts, true, tokens.dim(1) - prompts - 1}};
}

void expect_rows_near(const Tensor& t, const oracle::Mat& want, double tol, std::size_t batch = 0) {
  const oracle::Mat got = oracle::rows_of(t, batch);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    for (std::size_t j = 0; j < got[i].size(); ++j) EXPECT_NEAR(got[i][j], want[i][j], tol) << i << "," << j;
  }
}

TEST(VitConfig, ValidationNamesTheField) {
  VitConfig c;
  c.image_h = 18;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("image_h"), std::string::npos) << e.what();
  }
  c = VitConfig{};
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(VitConfig::desk().validate());
  EXPECT_NO_THROW(VitConfig::paper_scale().validate());
}

TEST(PatchEmbed, SixteenPixelsPatchFourGivesSeventeenTokens) {
  const VitConfig cfg = VitConfig::desk();
  EXPECT_EQ(cfg.num_patches(), 16u);
  PatchEmbedWeights w{Tensor::zeros({16, 32}), Tensor::zeros({32}), Tensor::zeros({1, 32}), Tensor::zeros({17, 32})};
  const TokenSequence t = patch_embed(Tensor::zeros({2, 16, 16, 1}), cfg, w);
  EXPECT_EQ(t.tokens.shape(), (Shape{2, 17, 32}));
  EXPECT_EQ(t.layout.seq_len(), 17u);
}

TEST(PatchEmbed, ZeroImageGivesBiasesAndClassToken) {
  std::mt19937_64 rng(1);
  const VitConfig cfg = VitConfig::desk();
  PatchEmbedWeights w{Tensor::zeros({16, 32}), random_tensor({32}, rng), random_tensor({1, 32}, rng),
                      Tensor::zeros({17, 32})};
  const Tensor t = patch_embed(Tensor::zeros({1, 16, 16, 1}), cfg, w).tokens;
  for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(t.at(j), w.cls_token.at(j));
  for (std::size_t i = 1; i < 17; ++i) {
    for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(t.at(i * 32 + j), w.bias.at(j));
  }
}

TEST(PatchEmbed, EveryTokenMatchesFlattenThenProject) {
  std::mt19937_64 rng(2);
  VitConfig cfg;
  cfg.image_h = 8;
  cfg.image_w = 12;
  cfg.channels = 3;
  cfg.patch_size = 4;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  const std::size_t p = 4, c = 3, d = 8, gw = 3;
  const Tensor img = random_tensor({2, 8, 12, 3}, rng);
  PatchEmbedWeights w{random_tensor({p * p * c, d}, rng), random_tensor({d}, rng), random_tensor({1, d}, rng),
                      random_tensor({7, d}, rng)};
  const Tensor t = patch_embed(img, cfg, w).tokens;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t patch = 0; patch < 6; ++patch) {
      const std::size_t pr = patch / gw, pc = patch % gw;
      oracle::Row flat;
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            flat.push_back(img.at(((b * 8 + pr * p + y) * 12 + pc * p + x) * 3 + ch));
          }
        }
      }
      const oracle::Mat proj = oracle::linear({flat}, oracle::weight(w.weight), oracle::vec(w.bias));
      for (std::size_t j = 0; j < d; ++j) {
        EXPECT_NEAR(t.at((b * 7 + 1 + patch) * d + j), proj[0][j] + w.pos_embed.at((1 + patch) * d + j), 1e-12);
      }
    }
  }
}

TEST(PatchEmbed, IndivisibleImageIsConfigError) {
  VitConfig cfg;
  cfg.image_w = 15;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Mhsa, SingleTokenAttendsToItself) {
  std::mt19937_64 rng(3);
  const BlockWeights w = random_block(8, rng);
  const Tensor x = random_tensor({1, 1, 8}, rng);
  const Tensor out = mhsa(sequence(x), w, 2).tokens;
  const oracle::Mat v = oracle::linear(oracle::rows_of(x), oracle::weight(w.wv), oracle::vec(w.bv));
  expect_rows_near(out, oracle::linear(v, oracle::weight(w.wo), oracle::vec(w.bo)), 1e-12);
}

TEST(Mhsa, ZeroQueryGivesUniformAttention) {
  std::mt19937_64 rng(4);
  BlockWeights w = random_block(8, rng);
  w.wq = Tensor::zeros({8, 8});
  w.bq = Tensor::zeros({8});
  const Tensor x = random_tensor({1, 5, 8}, rng);
  const Tensor out = mhsa(sequence(x), w, 4).tokens;
  const oracle::Mat v = oracle::linear(oracle::rows_of(x), oracle::weight(w.wv), oracle::vec(w.bv));
  oracle::Row mean(8, 0.0);
  for (const auto& r : v) {
    for (std::size_t j = 0; j < 8; ++j) mean[j] += r[j] / 5.0;
  }
  const oracle::Mat want = oracle::linear({mean}, oracle::weight(w.wo), oracle::vec(w.bo));
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(out.at(i * 8 + j), want[0][j], 1e-12);
  }
}

TEST(Mhsa, MatchesBruteForceSingleAndMultiHead) {
  std::mt19937_64 rng(5);
  const BlockWeights w = random_block(8, rng);
  const Tensor x = random_tensor({2, 3, 8}, rng);
  for (std::size_t heads : {1u, 2u, 4u}) {
    const Tensor out = mhsa(sequence(x), w, heads).tokens;
    for (std::size_t b = 0; b < 2; ++b) expect_rows_near(out, oracle::mhsa(oracle::rows_of(x, b), w, heads), 1e-12, b);
  }
}

TEST(Ffn, Examples) {
  std::mt19937_64 rng(6);
  BlockWeights w = random_block(8, rng);
  w.b1 = Tensor::zeros({32});
  w.b2 = Tensor::zeros({8});
  const Tensor zero = ffn(sequence(Tensor::zeros({1, 3, 8})), w).tokens;
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);

  BlockWeights w2 = random_block(8, rng);
  w2.w2 = Tensor::zeros({32, 8});
  const Tensor biased = ffn(sequence(random_tensor({1, 3, 8}, rng)), w2).tokens;
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(biased.at(i), w2.b2.at(i % 8));

  const Tensor x = random_tensor({1, 4, 8}, rng);
  EXPECT_EQ(w2.w1.dim(1), 32u);  // hidden width 4d
  const BlockWeights w3 = random_block(8, rng);
  expect_rows_near(ffn(sequence(x), w3).tokens, oracle::ffn(oracle::rows_of(x), w3), 1e-12);
}

TEST(Block, ZeroWeightsAndZeroGammaIsIdentity) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({2, 5, 8}, rng);
  const Tensor out = block_forward(sequence(x), zero_block(8), 2).tokens;
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(out.at(i), x.at(i));
}

TEST(Block, MatchesComposedOracleToOneInABillion) {
  std::mt19937_64 rng(8);
  const BlockWeights w = random_block(8, rng);
  const Tensor x = random_tensor({1, 3, 8}, rng, -2, 2);
  const Tensor out = block_forward(sequence(x), w, 2).tokens;
  expect_rows_near(out, oracle::block(oracle::rows_of(x), w, 2), 1e-9);
  EXPECT_EQ(out.shape(), x.shape());
}

TEST(Block, DepthOneIsMhsaThenFfn) {
  std::mt19937_64 rng(9);
  const BlockWeights w = random_block(8, rng);
  const TokenSequence x = sequence(random_tensor({1, 4, 8}, rng));
  const TokenSequence n1{ops::layernorm(x.tokens, w.ln1_gamma, w.ln1_beta, kLayerNormEps), x.layout};
  const Tensor mid = ops::add(mhsa(n1, w, 2).tokens, x.tokens);
  const TokenSequence n2{ops::layernorm(mid, w.ln2_gamma, w.ln2_beta, kLayerNormEps), x.layout};
  const Tensor want = ops::add(ffn(n2, w).tokens, mid);
  const Tensor got = block_forward(x, w, 2).tokens;
  for (std::size_t i = 0; i < want.numel(); ++i) EXPECT_EQ(got.at(i), want.at(i));
}

TEST(ClassificationHead, PoolsPromptsAndClassToken) {
  std::mt19937_64 rng(10);
  const HeadWeights h{random_tensor({4, 3}, rng), random_tensor({3}, rng)};
  const Tensor x = random_tensor({1, 5, 4}, rng);

  // m = 0: class token alone.
  const Tensor plain = classification_head(sequence(x, 0), h);
  const oracle::Mat cls = {oracle::rows_of(x)[0]};
  expect_rows_near(ops::reshape(plain, {1, 1, 3}), oracle::linear(cls, oracle::weight(h.weight), oracle::vec(h.bias)),
                   1e-14);

  // m = 2: mean of rows 0, 1 (prompts) and 2 (class token).
  const Tensor pooled = classification_head(sequence(x, 2), h);
  const oracle::Mat r = oracle::rows_of(x);
  oracle::Row mean(4);
  for (std::size_t j = 0; j < 4; ++j) mean[j] = (r[0][j] + r[1][j] + r[2][j]) / 3.0;
  expect_rows_near(ops::reshape(pooled, {1, 1, 3}),
                   oracle::linear({mean}, oracle::weight(h.weight), oracle::vec(h.bias)), 1e-14);

  // Identical pooled rows: the representation is that row.
  std::vector<double> same(20);
  for (std::size_t i = 0; i < 20; ++i) same[i] = i < 12 ? 0.25 * static_cast<double>(i % 4) : -1.0;
  const Tensor y({1, 5, 4}, same);
  const Tensor a = classification_head(sequence(y, 2), h);
  const Tensor b = classification_head(sequence(ops::slice(y, 1, 2, 3), 0), h);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a.at(k), b.at(k), 1e-15);
}

TEST(SegmentationHead, ZeroWeightsRasterOrderAndOracle) {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor({2, 1 + 2 + 4, 6}, rng);
  const HeadWeights zero{Tensor::zeros({6, 3}), random_tensor({3}, rng)};
  const Tensor z = segmentation_head(sequence(x, 2), zero, 2, 2);
  EXPECT_EQ(z.shape(), (Shape{2, 2, 2, 3}));
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(z.at(i), zero.bias.at(i % 3));

  const HeadWeights h{random_tensor({6, 3}, rng), random_tensor({3}, rng)};
  const Tensor out = segmentation_head(sequence(x, 2), h, 2, 2);
  for (std::size_t b = 0; b < 2; ++b) {
    const oracle::Mat rows = oracle::rows_of(x, b);
    const oracle::Mat patches(rows.begin() + 3, rows.end());
    const oracle::Mat want = oracle::linear(patches, oracle::weight(h.weight), oracle::vec(h.bias));
    // Cell (r, c) of the grid is patch r * 2 + c.
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t k = 0; k < 3; ++k) {
          EXPECT_NEAR(out.at(((b * 2 + r) * 2 + c) * 3 + k), want[r * 2 + c][k], 1e-14);
        }
      }
    }
  }
}

// Moves patch blocks of the image and the matching positional rows.
void permute_patches(const VitConfig& cfg, Tensor& images, Tensor& pos, const std::vector<std::size_t>& perm) {
  const Tensor src_img = images.clone();
  const Tensor src_pos = pos.clone();
  auto img = images.mutable_data();
  auto pe = pos.mutable_data();
  const std::size_t p = cfg.patch_size, gw = cfg.grid_w(), d = cfg.embed_dim, W = cfg.image_w, C = cfg.channels;
  const std::size_t b = images.dim(0);
  for (std::size_t to = 0; to < perm.size(); ++to) {
    const std::size_t from = perm[to];
    for (std::size_t j = 0; j < d; ++j) pe[(1 + to) * d + j] = src_pos.at((1 + from) * d + j);
    for (std::size_t n = 0; n < b; ++n) {
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) {
          for (std::size_t c = 0; c < C; ++c) {
            const auto at = [&](std::size_t patch) {
              return ((n * cfg.image_h + (patch / gw) * p + y) * W + (patch % gw) * p + x) * C + c;
            };
            img[at(to)] = src_img.at(at(from));
          }
        }
      }
    }
  }
}

class PatchSymmetry : public ::testing::TestWithParam<bool> {};

TEST_P(PatchSymmetry, PermutingPatchesAndPositionsKeepsLogits) {
  ModelConfig cfg;
  cfg.prompt_tuning = GetParam();
  cfg.dvpt.gate_init = 0.7;
  Model model(cfg, 3);
  std::mt19937_64 rng(12);
  Tensor images = random_tensor({2, 16, 16, 1}, rng);
  const Tensor before = model.forward(images);

  std::vector<std::size_t> perm(cfg.vit.num_patches());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor pos = model.embedding().pos_embed;
  permute_patches(cfg.vit, images, pos, perm);
  const Tensor after = model.forward(images);
  for (std::size_t i = 0; i < before.numel(); ++i) EXPECT_NEAR(before.at(i), after.at(i), 1e-6);
}

INSTANTIATE_TEST_SUITE_P(PlainAndPrompted, PatchSymmetry, ::testing::Bool());

TEST(Model, EveryWeightReceivesAGradient) {
  ModelConfig cfg;
  cfg.dvpt.gate_init = 0.5;
  for (Task task : {Task::kClassification, Task::kSegmentation}) {
    cfg.task = task;
    cfg.vit.num_classes = task == Task::kClassification ? 5 : 3;
    Model model(cfg, 4);
    apply_freeze_policy(model, FreezePolicy{FreezeMode::kFullFinetune, {}});
    std::mt19937_64 rng(13);
    const Tensor images = random_tensor({2, 16, 16, 1}, rng);
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = ops::sum(ops::mul(model.forward(images), model.forward(images)));
    }
    tape.backward(loss);
    for (const Tensor& p : model.parameters()) {
      ASSERT_TRUE(p.has_grad()) << p.name();
      double norm = 0.0;
      for (double g : p.grad()) norm += g * g;
      EXPECT_GT(norm, 0.0) << p.name();
    }
  }
}

TEST(Model, EveryBlockPreservesSequenceLength) {
  ModelConfig cfg;
  cfg.dvpt.gate_init = 0.3;
  Model model(cfg, 5);
  std::mt19937_64 rng(14);
  const TokenSequence out = model.encode(random_tensor({1, 16, 16, 1}, rng));
  EXPECT_EQ(out.tokens.dim(1), cfg.dvpt.num_prompts + 1 + cfg.vit.num_patches());
  EXPECT_EQ(out.layout.seq_len(), out.tokens.dim(1));
}

TEST(Model, InitialisationIsTruncatedAndKeyedOnName) {
  Model a(ModelConfig{}, 9);
  Model b(ModelConfig{}, 9);
  Model c(ModelConfig{}, 10);
  const Tensor wa = a.parameter("block1.attn.q.weight");
  EXPECT_EQ(std::memcmp(wa.data().data(), b.parameter("block1.attn.q.weight").data().data(),
                        wa.numel() * sizeof(double)),
            0);
  EXPECT_NE(wa.at(0), c.parameter("block1.attn.q.weight").at(0));
  EXPECT_NE(wa.at(0), a.parameter("block2.attn.q.weight").at(0));
  double sq = 0.0;
  for (double v : wa.data()) {
    EXPECT_LE(std::abs(v), 0.04);
    sq += v * v;
  }
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(wa.numel())), 0.02 * 0.88, 0.003);
  for (double v : a.parameter("block1.ln1.gamma").data()) EXPECT_EQ(v, 1.0);
  for (double v : a.parameter("block1.attn.q.bias").data()) EXPECT_EQ(v, 0.0);
}

}  // namespace
}  // namespace dvpt
