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
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvpt/model.hpp"
#include "dvpt/tensor.hpp"

// Checkpoint layout, all integers little-endian:
//
//   "DVPT" | u32 version | u32 tensor count
//   per tensor: u32 name length | UTF-8 name | u32 rank | u64 dims[rank] | u8 dtype (0 f32, 1 f64)
//   payload: every tensor's scalars, row-major, in entry order
//   u32 CRC-32 (IEEE) of the payload bytes
namespace dvpt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::kFloat32;
  std::vector<double> values;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(std::string_view name) const;
  std::vector<std::string> names() const;
};

std::string encode_checkpoint(std::span<const Tensor> tensors);
std::string encode_checkpoint(const Checkpoint& checkpoint);
// Validates magic, version, lengths and CRC before returning anything.
Checkpoint decode_checkpoint(std::string_view bytes);

// Exact byte size of a checkpoint holding `layout` at `dtype`.
std::uint64_t encoded_checkpoint_size(const std::vector<ParamSpec>& layout, DType dtype);

// Every parameter (trainable_only = false) or just the requires_grad ones, in
// registration order.
std::vector<Tensor> checkpoint_tensors(const Model& model, bool trainable_only);

void save_checkpoint(const Model& model, const std::filesystem::path& path, bool trainable_only);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies the selected entries into the model. Every selected entry must name a
// model parameter with the same shape (ArchitectureMismatch otherwise); when
// `require_all` is set every model parameter accepted by `select` must be
// present. Nothing is modified unless all checks pass.
void apply_checkpoint(Model& model, const Checkpoint& checkpoint,
                      const std::function<bool(std::string_view)>& select, bool require_all);

}  // namespace dvpt
