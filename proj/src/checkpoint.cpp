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

#include "dvpt/checkpoint.hpp"

#include <zlib.h>

#include "binary_io.hpp"
#include "dvpt/errors.hpp"

namespace dvpt {

namespace {

constexpr char kMagic[4] = {'D', 'V', 'P', 'T'};

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - off);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

struct EntryView {
  std::string_view name;
  const Shape* shape;
  DType dtype;
  std::span<const double> values;
};

std::string encode(std::span<const EntryView> entries) {
  std::string header;
  header.append(kMagic, 4);
  detail::put<std::uint32_t>(header, kCheckpointVersion);
  detail::put<std::uint32_t>(header, static_cast<std::uint32_t>(entries.size()));
  std::size_t payload_size = 0;
  for (const EntryView& e : entries) {
    detail::put<std::uint32_t>(header, static_cast<std::uint32_t>(e.name.size()));
    header.append(e.name);
    detail::put<std::uint32_t>(header, static_cast<std::uint32_t>(e.shape->size()));
    for (std::size_t d : *e.shape) detail::put<std::uint64_t>(header, d);
    detail::put<std::uint8_t>(header, static_cast<std::uint8_t>(e.dtype));
    payload_size += e.values.size() * dtype_size(e.dtype);
  }
  std::string out = std::move(header);
  const std::size_t payload_begin = out.size();
  out.reserve(payload_begin + payload_size + 4);
  for (const EntryView& e : entries) {
    if (e.dtype == DType::kFloat32) {
      for (double v : e.values) detail::put<float>(out, static_cast<float>(v));
    } else {
      for (double v : e.values) detail::put<double>(out, v);
    }
  }
  const std::uint32_t crc = crc32_of(std::string_view(out).substr(payload_begin));
  detail::put<std::uint32_t>(out, crc);
  return out;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(std::string_view name) const {
  for (const CheckpointEntry& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  for (const CheckpointEntry& e : entries) out.push_back(e.name);
  return out;
}

std::string encode_checkpoint(std::span<const Tensor> tensors) {
  std::vector<EntryView> views;
  views.reserve(tensors.size());
  for (const Tensor& t : tensors) views.push_back({t.name(), &t.shape(), t.dtype(), t.data()});
  return encode(views);
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  std::vector<EntryView> views;
  for (const CheckpointEntry& e : checkpoint.entries) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw DimensionError("checkpoint entry '" + e.name + "' has " + std::to_string(e.values.size()) +
                           " values for shape " + shape_string(e.shape));
    }
    views.push_back({e.name, &e.shape, e.dtype, e.values});
  }
  return encode(views);
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  detail::Reader in(bytes, "checkpoint");
  if (in.take(4) != std::string_view(kMagic, 4)) in.fail("bad magic");
  if (const auto version = in.get<std::uint32_t>(); version != kCheckpointVersion) {
    in.fail("unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = in.get<std::uint32_t>();
  Checkpoint ckpt;
  std::size_t payload_size = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = in.get<std::uint32_t>();
    e.name = std::string(in.take(name_len));
    const auto rank = in.get<std::uint32_t>();
    if (rank == 0 || rank > 8) in.fail("tensor '" + e.name + "' has invalid rank");
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = in.get<std::uint64_t>();
      if (d == 0) in.fail("tensor '" + e.name + "' has a zero dimension");
      e.shape.push_back(static_cast<std::size_t>(d));
    }
    const auto tag = in.get<std::uint8_t>();
    if (tag > 1) in.fail("tensor '" + e.name + "' has unknown dtype tag");
    e.dtype = static_cast<DType>(tag);
    payload_size += shape_numel(e.shape) * dtype_size(e.dtype);
    ckpt.entries.push_back(std::move(e));
  }
  if (in.remaining() != payload_size + 4) in.fail("payload length does not match the tensor table");
  const std::string_view payload = bytes.substr(in.position(), payload_size);
  detail::Reader tail(bytes.substr(in.position() + payload_size), "checkpoint");
  if (tail.get<std::uint32_t>() != crc32_of(payload)) in.fail("CRC mismatch");

  for (CheckpointEntry& e : ckpt.entries) {
    const std::size_t n = shape_numel(e.shape);
    e.values.resize(n);
    if (e.dtype == DType::kFloat32) {
      for (double& v : e.values) v = static_cast<double>(in.get<float>());
    } else {
      for (double& v : e.values) v = in.get<double>();
    }
  }
  return ckpt;
}

std::uint64_t encoded_checkpoint_size(const std::vector<ParamSpec>& layout, DType dtype) {
  std::uint64_t size = 4 + 4 + 4;
  for (const ParamSpec& spec : layout) {
    size += 4 + spec.name.size() + 4 + 8 * spec.shape.size() + 1;
    size += shape_numel(spec.shape) * dtype_size(dtype);
  }
  return size + 4;
}

std::vector<Tensor> checkpoint_tensors(const Model& model, bool trainable_only) {
  std::vector<Tensor> out;
  for (const Tensor& t : model.parameters()) {
    if (!trainable_only || t.requires_grad()) out.push_back(t);
  }
  return out;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, bool trainable_only) {
  detail::write_file_atomic(path, encode_checkpoint(checkpoint_tensors(model, trainable_only)));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

void apply_checkpoint(Model& model, const Checkpoint& checkpoint,
                      const std::function<bool(std::string_view)>& select, bool require_all) {
  std::vector<std::pair<Tensor, const CheckpointEntry*>> plan;
  for (const CheckpointEntry& e : checkpoint.entries) {
    if (!select(e.name)) continue;
    if (!model.has_parameter(e.name)) {
      throw ArchitectureMismatch("checkpoint tensor '" + e.name + "' does not exist in the model");
    }
    Tensor target = model.parameter(e.name);
    if (target.shape() != e.shape) {
      throw ArchitectureMismatch("checkpoint tensor '" + e.name + "' has shape " + shape_string(e.shape) +
                                 " but the model expects " + shape_string(target.shape()));
    }
    plan.emplace_back(target, &e);
  }
  if (require_all) {
    for (const Tensor& t : model.parameters()) {
      if (select(t.name()) && checkpoint.find(t.name()) == nullptr) {
        throw ArchitectureMismatch("checkpoint is missing tensor '" + t.name() + "'");
      }
    }
  }
  for (auto& [target, entry] : plan) {
    auto dst = target.mutable_data();
    std::copy(entry->values.begin(), entry->values.end(), dst.begin());
    round_to_dtype(dst, target.dtype());
  }
}

}  // namespace dvpt
