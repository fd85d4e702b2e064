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

#pragma once

#include <cstddef>

#include "dvpt/tensor.hpp"

namespace dvpt {

inline constexpr double kLayerNormEps = 1e-6;

struct VitConfig {
  std::size_t image_h = 16;
  std::size_t image_w = 16;
  std::size_t channels = 1;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 32;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t num_classes = 5;

  // Throws ConfigError naming the offending field.
  void validate() const;

  std::size_t grid_h() const { return image_h / patch_size; }
  std::size_t grid_w() const { return image_w / patch_size; }
  std::size_t num_patches() const { return grid_h() * grid_w(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t ffn_dim() const { return 4 * embed_dim; }

  // 16x16x1 images, p=4, d=32, 4 heads, 4 layers.
  static VitConfig desk();
  // ViT-B/16 at 224x224x3.
  static VitConfig paper_scale();
};

// Row order inside a token sequence: [prompts..., cls, patches...].
struct Layout {
  std::size_t num_prompts = 0;
  bool has_cls = true;
  std::size_t num_patches = 0;

  std::size_t seq_len() const { return num_prompts + (has_cls ? 1 : 0) + num_patches; }
  std::size_t cls_index() const { return num_prompts; }
  std::size_t patch_begin() const { return num_prompts + (has_cls ? 1 : 0); }
  // Class token plus patches.
  std::size_t image_rows() const { return seq_len() - num_prompts; }
};

struct TokenSequence {
  Tensor tokens;  // [batch, seq_len, width]
  Layout layout;

  std::size_t batch() const { return tokens.dim(0); }
  std::size_t width() const { return tokens.dim(2); }
};

struct PatchEmbedWeights {
  Tensor weight;     // [p*p*C, d]
  Tensor bias;       // [d]
  Tensor cls_token;  // [1, d]
  Tensor pos_embed;  // [n+1, d]
};

struct BlockWeights {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1;  // [d, 4d], [4d]
  Tensor w2, b2;  // [4d, d], [d]
};

struct HeadWeights {
  Tensor weight;  // [d, K]
  Tensor bias;    // [K]
};

// Rearranges [b, H, W, C] images into [b, n, p*p*C] patch rows, raster
// order over the patch grid, each patch flattened as (row, col, channel).
Tensor extract_patches(const Tensor& images, std::size_t patch_size);

TokenSequence patch_embed(const Tensor& images, const VitConfig& cfg, const PatchEmbedWeights& w);
TokenSequence mhsa(const TokenSequence& x, const BlockWeights& w, std::size_t heads);
TokenSequence ffn(const TokenSequence& x, const BlockWeights& w);
// Pre-norm residual block: E' = MHSA(LN(E)) + E; out = FFN(LN(E')) + E'.
TokenSequence block_forward(const TokenSequence& x, const BlockWeights& w, std::size_t heads);

// Mean of the prompt rows and the class token (class token alone when there
// are no prompts), followed by one linear layer. Returns [b, K].
Tensor classification_head(const TokenSequence& x, const HeadWeights& w);
// Per-patch linear logits reshaped to [b, grid_h, grid_w, K].
Tensor segmentation_head(const TokenSequence& x, const HeadWeights& w, std::size_t grid_h, std::size_t grid_w);

}  // namespace dvpt
