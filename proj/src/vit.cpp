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

#include "dvpt/vit.hpp"

#include <cmath>
#include <string>

#include "dvpt/errors.hpp"
#include "dvpt/ops.hpp"

namespace dvpt {

namespace {

void require_positive(std::size_t value, const char* field) {
  if (value == 0) throw ConfigError(std::string("model.") + field + " must be positive");
}

}  // namespace

void VitConfig::validate() const {
  require_positive(image_h, "image_h");
  require_positive(image_w, "image_w");
  require_positive(channels, "channels");
  require_positive(patch_size, "patch_size");
  require_positive(embed_dim, "embed_dim");
  require_positive(depth, "depth");
  require_positive(heads, "heads");
  require_positive(num_classes, "num_classes");
  if (image_h % patch_size != 0) {
    throw ConfigError("model.image_h (" + std::to_string(image_h) + ") is not divisible by model.patch_size (" +
                      std::to_string(patch_size) + ")");
  }
  if (image_w % patch_size != 0) {
    throw ConfigError("model.image_w (" + std::to_string(image_w) + ") is not divisible by model.patch_size (" +
                      std::to_string(patch_size) + ")");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("model.embed_dim (" + std::to_string(embed_dim) + ") is not divisible by model.heads (" +
                      std::to_string(heads) + ")");
  }
}

VitConfig VitConfig::desk() { return VitConfig{}; }

VitConfig VitConfig::paper_scale() {
  VitConfig c;
  c.image_h = 224;
  c.image_w = 224;
  c.channels = 3;
  c.patch_size = 16;
  c.embed_dim = 768;
  c.depth = 12;
  c.heads = 12;
  c.num_classes = 5;
  return c;
}

Tensor extract_patches(const Tensor& images, std::size_t p) {
  if (images.rank() != 4) throw DimensionError("images must be [b,H,W,C], got " + shape_string(images.shape()));
  const std::size_t b = images.dim(0);
  const std::size_t h = images.dim(1);
  const std::size_t w = images.dim(2);
  const std::size_t c = images.dim(3);
  if (h % p != 0 || w % p != 0) {
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by patch size " +
                      std::to_string(p));
  }
  const std::size_t gh = h / p;
  const std::size_t gw = w / p;
  const std::size_t patch_dim = p * p * c;
  Tensor out({b, gh * gw, patch_dim}, images.dtype());
  const auto src = images.data();
  auto dst = out.mutable_data();
  std::size_t k = 0;
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t py = 0; py < gh; ++py) {
      for (std::size_t px = 0; px < gw; ++px) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            const std::size_t base = ((bi * h + py * p + y) * w + px * p + x) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[k++] = src[base + ch];
          }
        }
      }
    }
  }
  return out;
}

TokenSequence patch_embed(const Tensor& images, const VitConfig& cfg, const PatchEmbedWeights& w) {
  if (images.rank() != 4 || images.dim(1) != cfg.image_h || images.dim(2) != cfg.image_w ||
      images.dim(3) != cfg.channels) {
    throw DimensionError("patch_embed: images " + shape_string(images.shape()) + " do not match configured " +
                         std::to_string(cfg.image_h) + "x" + std::to_string(cfg.image_w) + "x" +
                         std::to_string(cfg.channels));
  }
  const std::size_t b = images.dim(0);
  const Tensor patches = extract_patches(images, cfg.patch_size);
  const Tensor tokens = ops::linear(patches, w.weight, w.bias);
  const Tensor cls = ops::expand_leading(w.cls_token, b);
  const Tensor seq = ops::add(ops::concat({cls, tokens}, 1), w.pos_embed);
  return {seq, Layout{0, true, cfg.num_patches()}};
}

TokenSequence mhsa(const TokenSequence& x, const BlockWeights& w, std::size_t heads) {
  const std::size_t b = x.batch();
  const std::size_t s = x.tokens.dim(1);
  const std::size_t d = x.width();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("mhsa: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;

  auto split_heads = [&](const Tensor& t) {
    return ops::permute(ops::reshape(t, {b, s, heads, dh}), {0, 2, 1, 3});
  };
  const Tensor q = split_heads(ops::linear(x.tokens, w.wq, w.bq));
  const Tensor k = split_heads(ops::linear(x.tokens, w.wk, w.bk));
  const Tensor v = split_heads(ops::linear(x.tokens, w.wv, w.bv));

  const Tensor scores = ops::scale(ops::matmul(q, ops::transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor attn = ops::softmax(scores, -1);
  const Tensor context = ops::reshape(ops::permute(ops::matmul(attn, v), {0, 2, 1, 3}), {b, s, d});
  return {ops::linear(context, w.wo, w.bo), x.layout};
}

TokenSequence ffn(const TokenSequence& x, const BlockWeights& w) {
  const Tensor hidden = ops::gelu(ops::linear(x.tokens, w.w1, w.b1));
  return {ops::linear(hidden, w.w2, w.b2), x.layout};
}

TokenSequence block_forward(const TokenSequence& x, const BlockWeights& w, std::size_t heads) {
  const TokenSequence normed1{ops::layernorm(x.tokens, w.ln1_gamma, w.ln1_beta, kLayerNormEps), x.layout};
  const TokenSequence mid{ops::add(mhsa(normed1, w, heads).tokens, x.tokens), x.layout};
  const TokenSequence normed2{ops::layernorm(mid.tokens, w.ln2_gamma, w.ln2_beta, kLayerNormEps), x.layout};
  return {ops::add(ffn(normed2, w).tokens, mid.tokens), x.layout};
}

Tensor classification_head(const TokenSequence& x, const HeadWeights& w) {
  if (!x.layout.has_cls) throw ContractError("classification_head: sequence has no class token");
  const std::size_t pooled_rows = x.layout.num_prompts + 1;
  const Tensor rows = ops::slice(x.tokens, 1, 0, pooled_rows);
  const Tensor representation = ops::mean(rows, 1);
  return ops::linear(representation, w.weight, w.bias);
}

Tensor segmentation_head(const TokenSequence& x, const HeadWeights& w, std::size_t grid_h, std::size_t grid_w) {
  if (x.layout.num_patches != grid_h * grid_w) {
    throw DimensionError("segmentation_head: " + std::to_string(x.layout.num_patches) + " patches for a " +
                         std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  }
  const Tensor patches = ops::slice(x.tokens, 1, x.layout.patch_begin(), x.layout.num_patches);
  const Tensor logits = ops::linear(patches, w.weight, w.bias);
  return ops::reshape(logits, {x.batch(), grid_h, grid_w, w.weight.dim(-1)});
}

}  // namespace dvpt
