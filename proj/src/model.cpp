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

#include "dvpt/model.hpp"

#include <cmath>
#include <random>

#include "dvpt/errors.hpp"
#include "dvpt/ops.hpp"

namespace dvpt {

namespace {

constexpr double kInitStd = 0.02;

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void init_truncated_normal(std::span<double> values, std::uint64_t seed, std::string_view name) {
  const std::uint64_t key = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (double& v : values) {
    double x = normal(rng);
    while (std::abs(x) > 2.0 * kInitStd) x = normal(rng);
    v = x;
  }
}

std::string layer_prefix(std::size_t layer) { return "block" + std::to_string(layer); }

}  // namespace

std::string_view task_name(Task task) {
  return task == Task::kClassification ? "classification" : "segmentation";
}

Task parse_task(std::string_view text) {
  if (text == "classification") return Task::kClassification;
  if (text == "segmentation") return Task::kSegmentation;
  throw ConfigError("task: unknown task '" + std::string(text) + "' (expected classification or segmentation)");
}

void ModelConfig::validate() const {
  vit.validate();
  if (prompt_tuning) dvpt.validate(vit);
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale(std::size_t share_every) {
  ModelConfig c;
  c.vit = VitConfig::paper_scale();
  c.dvpt = DvptConfig::paper_scale(share_every);
  c.dtype = DType::kFloat32;
  return c;
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  const VitConfig& v = cfg.vit;
  const std::size_t d = v.embed_dim;
  const std::size_t ff = v.ffn_dim();
  std::vector<ParamSpec> specs;
  specs.push_back({"patch_embed.weight", {v.patch_dim(), d}});
  specs.push_back({"patch_embed.bias", {d}});
  specs.push_back({"cls_token", {1, d}});
  specs.push_back({"pos_embed", {v.num_patches() + 1, d}});
  if (cfg.prompt_tuning) specs.push_back({"prompts", {cfg.dvpt.num_prompts, d}});

  const std::size_t s = cfg.prompt_tuning ? cfg.dvpt.share_every : 1;
  const std::size_t dp = cfg.dvpt.hidden_dim;
  for (std::size_t l = 0; l < v.depth; ++l) {
    const std::string p = layer_prefix(l);
    specs.push_back({p + ".ln1.gamma", {d}});
    specs.push_back({p + ".ln1.beta", {d}});
    for (const char* proj : {"q", "k", "v", "o"}) {
      specs.push_back({p + ".attn." + proj + ".weight", {d, d}});
      specs.push_back({p + ".attn." + proj + ".bias", {d}});
    }
    specs.push_back({p + ".ln2.gamma", {d}});
    specs.push_back({p + ".ln2.beta", {d}});
    specs.push_back({p + ".ffn.fc1.weight", {d, ff}});
    specs.push_back({p + ".ffn.fc1.bias", {ff}});
    specs.push_back({p + ".ffn.fc2.weight", {ff, d}});
    specs.push_back({p + ".ffn.fc2.bias", {d}});
    if (cfg.prompt_tuning && l % s == 0) {
      specs.push_back({p + ".dvpt.down.weight", {d, dp}});
      specs.push_back({p + ".dvpt.down.bias", {dp}});
      specs.push_back({p + ".dvpt.up.weight", {dp, d}});
      specs.push_back({p + ".dvpt.up.bias", {d}});
      specs.push_back({p + ".dvpt.gate", {1}});
    }
  }
  specs.push_back({"head.weight", {d, v.num_classes}});
  specs.push_back({"head.bias", {v.num_classes}});
  return specs;
}

Model::Model(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      sharing_(cfg_.vit.depth, cfg_.prompt_tuning ? cfg_.dvpt.share_every : 1) {
  for (const ParamSpec& spec : parameter_layout(cfg_)) {
    Tensor& t = add_parameter(spec.name, spec.shape);
    auto values = t.mutable_data();
    const std::string_view name = spec.name;
    if (name.ends_with(".bias") || name.ends_with(".beta")) {
      // zeros
    } else if (name.ends_with(".gamma")) {
      std::fill(values.begin(), values.end(), 1.0);
    } else if (name.ends_with(".gate")) {
      values[0] = cfg_.dvpt.gate_init;
    } else {
      init_truncated_normal(values, seed, name);
    }
    round_to_dtype(values, cfg_.dtype);
    t.set_requires_grad(true);
  }

  embed_ = {parameter("patch_embed.weight"), parameter("patch_embed.bias"), parameter("cls_token"),
            parameter("pos_embed")};
  for (std::size_t l = 0; l < cfg_.vit.depth; ++l) {
    const std::string p = layer_prefix(l) + ".";
    auto get = [&](const char* role) { return parameter(p + role); };
    blocks_.push_back({get("ln1.gamma"), get("ln1.beta"), get("attn.q.weight"), get("attn.q.bias"),
                       get("attn.k.weight"), get("attn.k.bias"), get("attn.v.weight"), get("attn.v.bias"),
                       get("attn.o.weight"), get("attn.o.bias"), get("ln2.gamma"), get("ln2.beta"),
                       get("ffn.fc1.weight"), get("ffn.fc1.bias"), get("ffn.fc2.weight"), get("ffn.fc2.bias")});
  }
  if (cfg_.prompt_tuning) {
    prompts_.values = parameter("prompts");
    for (std::size_t k = 0; k < sharing_.num_blocks(); ++k) {
      const std::string p = layer_prefix(sharing_.first_layer(k)) + ".dvpt.";
      dvpt_blocks_.push_back({parameter(p + "down.weight"), parameter(p + "down.bias"), parameter(p + "up.weight"),
                              parameter(p + "up.bias"), parameter(p + "gate")});
    }
  }
  head_ = {parameter("head.weight"), parameter("head.bias")};
}

Tensor& Model::add_parameter(const std::string& name, Shape shape) {
  Tensor t(std::move(shape), cfg_.dtype);
  t.set_name(name);
  index_.emplace(name, params_.size());
  params_.push_back(std::move(t));
  return params_.back();
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  names.reserve(params_.size());
  for (const Tensor& t : params_) names.push_back(t.name());
  return names;
}

bool Model::has_parameter(std::string_view name) const { return index_.find(name) != index_.end(); }

Tensor Model::parameter(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + std::string(name) + "'");
  return params_[it->second];
}

std::vector<Tensor> Model::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const Tensor& t : params_) {
    if (t.requires_grad()) out.push_back(t);
  }
  return out;
}

void Model::zero_grad() {
  for (Tensor& t : params_) t.zero_grad();
}

TokenSequence Model::encode(const Tensor& images, const ForwardOptions& opts) const {
  if (images.dtype() != cfg_.dtype) {
    throw ContractError("model expects " + std::string(dtype_name(cfg_.dtype)) + " images");
  }
  TokenSequence seq = patch_embed(images, cfg_.vit, embed_);
  if (cfg_.prompt_tuning) seq = append_prompts(seq, prompts_);
  for (std::size_t l = 0; l < cfg_.vit.depth; ++l) {
    const DvptBlock* blk = nullptr;
    if (cfg_.prompt_tuning && opts.dvpt_branch) blk = &dvpt_blocks_[sharing_.block_for_layer(l)];
    seq = dvpt_block_forward(seq, blocks_[l], blk, cfg_.vit.heads);
  }
  return seq;
}

Tensor Model::forward(const Tensor& images, const ForwardOptions& opts) const {
  const TokenSequence seq = encode(images, opts);
  if (cfg_.task == Task::kClassification) return classification_head(seq, head_);
  return segmentation_head(seq, head_, cfg_.vit.grid_h(), cfg_.vit.grid_w());
}

void apply_freeze_policy(Model& model, const FreezePolicy& policy) {
  const auto resolved = policy.resolve(model.parameter_names());
  for (const Tensor& t : model.parameters()) {
    Tensor handle = t;
    handle.set_requires_grad(resolved.at(t.name()));
  }
}

}  // namespace dvpt
