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

#include "dvpt/peft.hpp"

#include <cmath>
#include <set>

#include "dvpt/errors.hpp"
#include "dvpt/ops.hpp"

namespace dvpt {

void DvptConfig::validate(const VitConfig& vit) const {
  if (num_prompts == 0) throw ConfigError("dvpt.num_prompts must be positive");
  if (hidden_dim == 0) throw ConfigError("dvpt.hidden_dim must be positive");
  if (hidden_dim >= vit.embed_dim) {
    throw ConfigError("dvpt.hidden_dim (" + std::to_string(hidden_dim) + ") must be smaller than model.embed_dim (" +
                      std::to_string(vit.embed_dim) + ")");
  }
  if (share_every < 1 || share_every > vit.depth) {
    throw ConfigError("dvpt.share_every (" + std::to_string(share_every) + ") must lie in [1, model.depth=" +
                      std::to_string(vit.depth) + "]");
  }
  if (!std::isfinite(gate_init)) throw ConfigError("dvpt.gate_init must be finite");
}

std::size_t DvptConfig::num_blocks(std::size_t depth) const { return (depth + share_every - 1) / share_every; }

DvptConfig DvptConfig::desk() { return DvptConfig{}; }

DvptConfig DvptConfig::paper_scale(std::size_t share_every) {
  DvptConfig c;
  c.num_prompts = 50;
  c.hidden_dim = 20;
  c.share_every = share_every;
  return c;
}

SharingMap::SharingMap(std::size_t num_layers, std::size_t share_every)
    : share_every_(share_every), num_blocks_(0), block_of_layer_(num_layers) {
  if (num_layers == 0) throw ConfigError("model.depth must be positive");
  if (share_every < 1 || share_every > num_layers) {
    throw ConfigError("dvpt.share_every (" + std::to_string(share_every) + ") must lie in [1, " +
                      std::to_string(num_layers) + "]");
  }
  for (std::size_t l = 0; l < num_layers; ++l) block_of_layer_[l] = l / share_every;
  num_blocks_ = block_of_layer_.back() + 1;
}

SharingMap build_sharing_map(std::size_t num_layers, std::size_t share_every) {
  return SharingMap(num_layers, share_every);
}

TokenSequence append_prompts(const TokenSequence& x, const PromptTokens& prompts) {
  if (x.layout.num_prompts != 0) throw ContractError("append_prompts: sequence already carries prompts");
  if (!prompts.values.defined()) return x;
  if (prompts.values.rank() != 2 || prompts.values.dim(1) != x.width()) {
    throw DimensionError("append_prompts: prompts " + shape_string(prompts.values.shape()) +
                         " do not match token width " + std::to_string(x.width()));
  }
  const Tensor expanded = ops::expand_leading(prompts.values, x.batch());
  Layout layout = x.layout;
  layout.num_prompts = prompts.values.dim(0);
  return {ops::concat({expanded, x.tokens}, 1), layout};
}

TokenSequence down_project(const TokenSequence& x_tilde, const DvptBlock& blk) {
  return {ops::gelu(ops::linear(x_tilde.tokens, blk.down_weight, blk.down_bias)), x_tilde.layout};
}

CavptResult cavpt_with_attention(const TokenSequence& e_down) {
  const Layout& layout = e_down.layout;
  if (layout.num_prompts == 0) throw ContractError("cavpt: sequence has no prompt rows to use as queries");
  const auto parts = ops::split(e_down.tokens, 1, {layout.num_prompts, layout.image_rows()});
  const Tensor& queries = parts[0];
  const Tensor& keys = parts[1];
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(e_down.width()));
  const Tensor attention = ops::softmax(ops::scale(ops::matmul(queries, ops::transpose(keys)), inv_sqrt), -1);
  return {attention, ops::matmul(attention, keys)};
}

Tensor cavpt(const TokenSequence& e_down) { return cavpt_with_attention(e_down).prompts; }

TokenSequence reassemble(const Tensor& p_prime, const TokenSequence& e_down) {
  const Layout& layout = e_down.layout;
  if (p_prime.rank() != 3 || p_prime.dim(0) != e_down.batch() || p_prime.dim(1) != layout.num_prompts ||
      p_prime.dim(2) != e_down.width()) {
    throw DimensionError("reassemble: prompt block " + shape_string(p_prime.shape()) + " does not fit sequence " +
                         shape_string(e_down.tokens.shape()));
  }
  const Tensor image_rows = ops::slice(e_down.tokens, 1, layout.num_prompts, layout.image_rows());
  return {ops::concat({p_prime, image_rows}, 1), layout};
}

TokenSequence up_project_gate(const TokenSequence& e_p, const DvptBlock& blk) {
  const Tensor projected = ops::linear(e_p.tokens, blk.up_weight, blk.up_bias);
  return {ops::mul(projected, blk.gate), e_p.layout};
}

TokenSequence dvpt_block_forward(const TokenSequence& x, const BlockWeights& w, const DvptBlock* blk,
                                 std::size_t heads) {
  const Tensor normed1 = ops::layernorm(x.tokens, w.ln1_gamma, w.ln1_beta, kLayerNormEps);
  const TokenSequence x_tilde{ops::add(mhsa({normed1, x.layout}, w, heads).tokens, x.tokens), x.layout};
  const Tensor normed2 = ops::layernorm(x_tilde.tokens, w.ln2_gamma, w.ln2_beta, kLayerNormEps);
  Tensor out = ops::add(ffn({normed2, x.layout}, w).tokens, x_tilde.tokens);
  if (blk != nullptr) {
    const TokenSequence e_down = down_project(x_tilde, *blk);
    const TokenSequence e_p = reassemble(cavpt(e_down), e_down);
    out = ops::add(out, up_project_gate(e_p, *blk).tokens);
  }
  return {out, x.layout};
}

std::string_view freeze_mode_name(FreezeMode mode) {
  switch (mode) {
    case FreezeMode::kFullFinetune:
      return "full_finetune";
    case FreezeMode::kLinearProbe:
      return "linear_probe";
    case FreezeMode::kVptOnly:
      return "vpt_only";
    case FreezeMode::kDvpt:
      return "dvpt";
  }
  return "unknown";
}

FreezeMode parse_freeze_mode(std::string_view text) {
  for (FreezeMode m : {FreezeMode::kFullFinetune, FreezeMode::kLinearProbe, FreezeMode::kVptOnly, FreezeMode::kDvpt}) {
    if (freeze_mode_name(m) == text) return m;
  }
  throw ConfigError("train.policy: unknown freeze policy '" + std::string(text) +
                    "' (expected full_finetune, linear_probe, vpt_only or dvpt)");
}

bool is_prompt_parameter(std::string_view name) { return name == "prompts"; }

bool is_dvpt_parameter(std::string_view name) { return name.find(".dvpt.") != std::string_view::npos; }

bool is_head_parameter(std::string_view name) { return name.starts_with("head."); }

bool is_backbone_parameter(std::string_view name) {
  return !is_prompt_parameter(name) && !is_dvpt_parameter(name) && !is_head_parameter(name);
}

bool FreezePolicy::mode_trainable(std::string_view name) const {
  switch (mode) {
    case FreezeMode::kFullFinetune:
      return true;
    case FreezeMode::kLinearProbe:
      return is_head_parameter(name);
    case FreezeMode::kVptOnly:
      return is_head_parameter(name) || is_prompt_parameter(name);
    case FreezeMode::kDvpt:
      return is_head_parameter(name) || is_prompt_parameter(name) || is_dvpt_parameter(name);
  }
  return false;
}

std::map<std::string, bool> FreezePolicy::resolve(const std::vector<std::string>& names) const {
  const std::set<std::string> known(names.begin(), names.end());
  for (const auto& [name, flag] : overrides) {
    if (!known.contains(name)) throw ConfigError("freeze policy names unknown parameter '" + name + "'");
  }
  std::map<std::string, bool> resolved;
  for (const std::string& name : names) {
    const auto it = overrides.find(name);
    resolved[name] = it != overrides.end() ? it->second : mode_trainable(name);
  }
  return resolved;
}

}  // namespace dvpt
