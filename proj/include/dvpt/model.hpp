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

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dvpt/peft.hpp"
#include "dvpt/tensor.hpp"
#include "dvpt/vit.hpp"

namespace dvpt {

enum class Task { kClassification, kSegmentation };

std::string_view task_name(Task task);
Task parse_task(std::string_view text);

struct ModelConfig {
  VitConfig vit;
  DvptConfig dvpt;
  // false builds a plain ViT (no prompts, no DVPT blocks), used for pretraining.
  bool prompt_tuning = true;
  Task task = Task::kClassification;
  DType dtype = DType::kFloat64;

  void validate() const;

  static ModelConfig desk();
  static ModelConfig paper_scale(std::size_t share_every = 1);
};

struct ParamSpec {
  std::string name;
  Shape shape;
};

// Every parameter the model owns, in registration order. Shared DVPT blocks
// appear once, named after the first layer that uses them
// ("block{k*s}.dvpt.*").
std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg);

struct ForwardOptions {
  // false skips every DVPT branch while keeping the prompts.
  bool dvpt_branch = true;
};

class Model {
 public:
  // Weights use truncated normal (std 0.02, cut at 2 std) from a generator
  // keyed on (seed, parameter name); biases 0; LN gamma 1, beta 0; gates at
  // dvpt.gate_init.
  Model(ModelConfig cfg, std::uint64_t seed);
  // Copies would alias the parameter storage.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const SharingMap& sharing() const { return sharing_; }

  // Registration order.
  const std::vector<Tensor>& parameters() const { return params_; }
  std::vector<std::string> parameter_names() const;
  bool has_parameter(std::string_view name) const;
  Tensor parameter(std::string_view name) const;
  std::vector<Tensor> trainable_parameters() const;
  void zero_grad();

  TokenSequence encode(const Tensor& images, const ForwardOptions& opts = {}) const;
  // [b, K] for classification, [b, H/p, W/p, K] for segmentation.
  Tensor forward(const Tensor& images, const ForwardOptions& opts = {}) const;

  PatchEmbedWeights& embedding() { return embed_; }
  BlockWeights& block(std::size_t layer) { return blocks_.at(layer); }
  DvptBlock& dvpt_block(std::size_t index) { return dvpt_blocks_.at(index); }
  std::size_t num_dvpt_blocks() const { return dvpt_blocks_.size(); }
  PromptTokens& prompts() { return prompts_; }
  HeadWeights& head() { return head_; }

 private:
  Tensor& add_parameter(const std::string& name, Shape shape);

  ModelConfig cfg_;
  SharingMap sharing_;
  std::vector<Tensor> params_;
  std::map<std::string, std::size_t, std::less<>> index_;

  PatchEmbedWeights embed_;
  std::vector<BlockWeights> blocks_;
  PromptTokens prompts_;
  std::vector<DvptBlock> dvpt_blocks_;
  HeadWeights head_;
};

// Sets requires_grad on every parameter per the policy; frozen parameters
// lose their gradient buffers.
void apply_freeze_policy(Model& model, const FreezePolicy& policy);

}  // namespace dvpt
