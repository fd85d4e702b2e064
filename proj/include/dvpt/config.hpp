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
#include <filesystem>
#include <string>
#include <string_view>

#include "dvpt/data.hpp"
#include "dvpt/model.hpp"
#include "dvpt/peft.hpp"

namespace dvpt {

// Where a dataset comes from: a DVDS file when `path` is set, otherwise the
// synthetic generator.
struct DataSource {
  std::string path;
  SynthFamily family = SynthFamily::kBlobs;
  std::size_t count = 256;
  double difficulty = 0.3;
  std::uint64_t seed = 1;
};

struct OptimConfig {
  double lr = 3e-3;
  std::size_t epochs = 8;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;
};

struct PretrainConfig {
  DataSource data{"", SynthFamily::kGrating, 512, 0.3, 11};
  double lr = 1e-3;
  std::size_t epochs = 10;
};

struct RunConfig {
  // Training runs use float32; grad-check switches to float64 itself.
  ModelConfig model{.vit = {}, .dvpt = {}, .dtype = DType::kFloat32};
  FreezeMode policy = FreezeMode::kDvpt;
  OptimConfig optim;
  DataSource train_data;
  DataSource eval_data{"", SynthFamily::kBlobs, 128, 0.3, 2};
  PretrainConfig pretrain;

  // Re-checks every cross-field constraint; throws ConfigError.
  void validate() const;
};

// Sectioned "key = value" text:
//
//   [model]    image_h image_w channels patch_size embed_dim depth heads
//              num_classes task dtype
//   [dvpt]     num_prompts hidden_dim share_every gate_init
//   [train]    policy lr epochs batch_size seed max_steps
//   [data]     path synthetic count difficulty seed
//              eval_path eval_synthetic eval_count eval_difficulty eval_seed
//   [pretrain] path synthetic count difficulty seed lr epochs
//
// '#' starts a comment. Unknown sections or keys, duplicates and malformed
// values are ConfigErrors naming the key. Omitted keys keep their defaults.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
// Canonical text form; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config);

Dataset load_data(const DataSource& source, const ModelConfig& model);

}  // namespace dvpt
