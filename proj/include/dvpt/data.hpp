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
#include <vector>

#include "dvpt/model.hpp"
#include "dvpt/tensor.hpp"

namespace dvpt {

// In-memory form of a DVDS dataset file. Segmentation masks are stored at full
// image resolution.
struct Dataset {
  Task task = Task::kClassification;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t num_classes = 0;
  std::vector<float> images;           // count * H * W * C, row-major HWC
  std::vector<std::uint16_t> labels;   // count (classification) or count * H * W

  std::size_t size() const;
  std::size_t image_size() const { return height * width * channels; }
  // Throws ContractError when sizes or labels are inconsistent.
  void validate() const;
};

// Pattern families. kGrating and kBlobs are disjoint classification tasks
// (orientation vs. ordinal blob grade); kDisks is the segmentation task.
enum class SynthFamily { kGrating, kBlobs, kDisks };

std::string_view synth_family_name(SynthFamily family);
SynthFamily parse_synth_family(std::string_view text);

struct SynthSpec {
  SynthFamily family = SynthFamily::kBlobs;
  std::size_t count = 256;
  std::uint64_t seed = 1;
  // 0 = clean, 1 = heavy noise.
  double difficulty = 0.3;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  // Classification families use 5 ordinal classes; kDisks uses 2.
  std::size_t num_classes = 5;
};

Dataset synth_generate(const SynthSpec& spec);

std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::string_view bytes);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct Batch {
  Tensor images;  // [b, H, W, C]
  // One label per image, or one per patch cell (row-major grid) for
  // segmentation.
  std::vector<std::size_t> labels;
};

// Masks are reduced to the patch grid by majority vote (ties go to the lower
// class id).
Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& indices, const ModelConfig& cfg);

}  // namespace dvpt
