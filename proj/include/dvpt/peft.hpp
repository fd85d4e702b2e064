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
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dvpt/tensor.hpp"
#include "dvpt/vit.hpp"

namespace dvpt {

struct DvptConfig {
  std::size_t num_prompts = 8;
  std::size_t hidden_dim = 4;
  std::size_t share_every = 1;
  double gate_init = 0.0;

  // Checks the bottleneck (hidden_dim < embed_dim) and 1 <= share_every <= depth.
  void validate(const VitConfig& vit) const;
  // ceil(depth / share_every)
  std::size_t num_blocks(std::size_t depth) const;

  static DvptConfig desk();
  // m=50, d'=20 with the given sharing factor.
  static DvptConfig paper_scale(std::size_t share_every = 1);
};

// Bottleneck branch that runs beside the FFN of a transformer layer.
struct DvptBlock {
  Tensor down_weight;  // [d, d']
  Tensor down_bias;    // [d']
  Tensor up_weight;    // [d', d]
  Tensor up_bias;      // [d]
  Tensor gate;         // [1]
};

struct PromptTokens {
  Tensor values;  // [m, d]; undefined when m == 0
};

// Layer l (0-based) uses DVPT block l / s. Consecutive layers share a block;
// a short final group absorbs the remainder when s does not divide L.
class SharingMap {
 public:
  SharingMap(std::size_t num_layers, std::size_t share_every);

  std::size_t num_layers() const { return block_of_layer_.size(); }
  std::size_t num_blocks() const { return num_blocks_; }
  std::size_t share_every() const { return share_every_; }
  std::size_t block_for_layer(std::size_t layer) const { return block_of_layer_.at(layer); }
  std::size_t first_layer(std::size_t block) const { return block * share_every_; }

 private:
  std::size_t share_every_;
  std::size_t num_blocks_;
  std::vector<std::size_t> block_of_layer_;
};

// Throws ConfigError unless 1 <= s <= L.
SharingMap build_sharing_map(std::size_t num_layers, std::size_t share_every);

// [P, cls, patches]. Prompts can be injected once, at the input layer.
TokenSequence append_prompts(const TokenSequence& x, const PromptTokens& prompts);

// GELU(x . W_down + b_down) on every row.
TokenSequence down_project(const TokenSequence& x_tilde, const DvptBlock& blk);

struct CavptResult {
  Tensor attention;  // [b, m, n+1]
  Tensor prompts;    // [b, m, d']
};

// Prompt rows attend over the class and patch rows: softmax(P Z^T / sqrt(d')) Z.
CavptResult cavpt_with_attention(const TokenSequence& e_down);
Tensor cavpt(const TokenSequence& e_down);

// [P', cls, patches]; class and patch rows are copied through untouched.
TokenSequence reassemble(const Tensor& p_prime, const TokenSequence& e_down);

// g * (x . W_up + b_up)
TokenSequence up_project_gate(const TokenSequence& e_p, const DvptBlock& blk);

// E~ = MHSA(LN(x)) + x; out = FFN(LN(E~)) + E~ + branch(E~). With blk == nullptr
// the branch is absent and this is block_forward.
TokenSequence dvpt_block_forward(const TokenSequence& x, const BlockWeights& w, const DvptBlock* blk,
                                 std::size_t heads);

enum class FreezeMode { kFullFinetune, kLinearProbe, kVptOnly, kDvpt };

std::string_view freeze_mode_name(FreezeMode mode);
// Accepts full_finetune, linear_probe, vpt_only, dvpt.
FreezeMode parse_freeze_mode(std::string_view text);

bool is_prompt_parameter(std::string_view name);
bool is_dvpt_parameter(std::string_view name);
bool is_head_parameter(std::string_view name);
// Everything that belongs to the pre-trained encoder.
bool is_backbone_parameter(std::string_view name);

struct FreezePolicy {
  FreezeMode mode = FreezeMode::kDvpt;
  // Explicit per-name exceptions on top of the mode rule.
  std::map<std::string, bool> overrides;

  bool mode_trainable(std::string_view name) const;
  // Resolves every name; an override naming an unknown parameter is a ConfigError.
  std::map<std::string, bool> resolve(const std::vector<std::string>& names) const;
};

}  // namespace dvpt
