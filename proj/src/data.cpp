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

#include "dvpt/data.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "binary_io.hpp"
#include "dvpt/errors.hpp"

namespace dvpt {

namespace {

constexpr char kDatasetMagic[4] = {'D', 'V', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

struct Canvas {
  std::size_t h, w, c;
  float* pixels;

  float& at(std::size_t y, std::size_t x, std::size_t ch) { return pixels[(y * w + x) * c + ch]; }
};

void render_grating(Canvas img, std::size_t label, std::size_t num_classes, double difficulty, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(0.16, 0.28);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, 0.04 * difficulty);
  std::normal_distribution<double> noise(0.0, 0.05 + 0.35 * difficulty);
  const double theta = std::numbers::pi * static_cast<double>(label) / static_cast<double>(num_classes) + jitter(rng);
  const double f = freq(rng);
  const double phi = phase(rng);
  const double cx = std::cos(theta);
  const double sy = std::sin(theta);
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      const double wave = std::sin(2.0 * std::numbers::pi * f * (static_cast<double>(x) * cx + static_cast<double>(y) * sy) + phi);
      for (std::size_t ch = 0; ch < img.c; ++ch) {
        img.at(y, x, ch) = static_cast<float>(0.5 + 0.4 * wave + noise(rng));
      }
    }
  }
}

// Grade g renders g+1 bright Gaussian blobs.
void render_blobs(Canvas img, std::size_t label, double difficulty, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> cy(1.5, static_cast<double>(img.h) - 2.5);
  std::uniform_real_distribution<double> cxd(1.5, static_cast<double>(img.w) - 2.5);
  std::uniform_real_distribution<double> sigma(1.0, 1.5);
  std::normal_distribution<double> noise(0.0, 0.05 + 0.35 * difficulty);
  std::vector<double> field(img.h * img.w, 0.1);
  for (std::size_t b = 0; b <= label; ++b) {
    const double by = cy(rng);
    const double bx = cxd(rng);
    const double s = sigma(rng);
    for (std::size_t y = 0; y < img.h; ++y) {
      for (std::size_t x = 0; x < img.w; ++x) {
        const double dy = static_cast<double>(y) - by;
        const double dx = static_cast<double>(x) - bx;
        field[y * img.w + x] += 0.8 * std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
      }
    }
  }
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      for (std::size_t ch = 0; ch < img.c; ++ch) img.at(y, x, ch) = static_cast<float>(field[y * img.w + x] + noise(rng));
    }
  }
}

// Random disks; disk k gets class 1 + (k mod (K-1)).
void render_disks(Canvas img, std::uint16_t* mask, std::size_t num_classes, double difficulty, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 3);
  std::uniform_real_distribution<double> cy(0.0, static_cast<double>(img.h));
  std::uniform_real_distribution<double> cxd(0.0, static_cast<double>(img.w));
  std::uniform_real_distribution<double> radius(2.0, 4.5);
  std::uniform_real_distribution<double> tilt(-0.01, 0.01);
  std::normal_distribution<double> noise(0.0, 0.05 + 0.35 * difficulty);
  std::fill(mask, mask + img.h * img.w, std::uint16_t{0});
  const int disks = count(rng);
  for (int k = 0; k < disks; ++k) {
    const double by = cy(rng);
    const double bx = cxd(rng);
    const double r = radius(rng);
    const auto cls = static_cast<std::uint16_t>(1 + static_cast<std::size_t>(k) % (num_classes - 1));
    for (std::size_t y = 0; y < img.h; ++y) {
      for (std::size_t x = 0; x < img.w; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - by;
        const double dx = static_cast<double>(x) + 0.5 - bx;
        if (dx * dx + dy * dy <= r * r) mask[y * img.w + x] = cls;
      }
    }
  }
  const double gy = tilt(rng);
  const double gx = tilt(rng);
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      const double level = 0.6 * static_cast<double>(mask[y * img.w + x]) / static_cast<double>(num_classes - 1);
      const double base = 0.2 + gy * static_cast<double>(y) + gx * static_cast<double>(x);
      for (std::size_t ch = 0; ch < img.c; ++ch) img.at(y, x, ch) = static_cast<float>(base + level + noise(rng));
    }
  }
}

}  // namespace

std::size_t Dataset::size() const { return image_size() == 0 ? 0 : images.size() / image_size(); }

void Dataset::validate() const {
  if (height == 0 || width == 0 || channels == 0) throw ContractError("dataset: image dimensions must be positive");
  if (num_classes < 2) throw ContractError("dataset: need at least two classes");
  if (images.size() % image_size() != 0) throw ContractError("dataset: image buffer is not a whole number of images");
  const std::size_t per_item = task == Task::kClassification ? 1 : height * width;
  if (labels.size() != size() * per_item) throw ContractError("dataset: label count does not match image count");
  for (std::uint16_t label : labels) {
    if (label >= num_classes) throw ContractError("dataset: label " + std::to_string(label) + " out of range");
  }
}

std::string_view synth_family_name(SynthFamily family) {
  switch (family) {
    case SynthFamily::kGrating:
      return "grating";
    case SynthFamily::kBlobs:
      return "blobs";
    case SynthFamily::kDisks:
      return "disks";
  }
  return "unknown";
}

SynthFamily parse_synth_family(std::string_view text) {
  for (SynthFamily f : {SynthFamily::kGrating, SynthFamily::kBlobs, SynthFamily::kDisks}) {
    if (synth_family_name(f) == text) return f;
  }
  throw ConfigError("data.synthetic: unknown family '" + std::string(text) + "' (expected grating, blobs or disks)");
}

Dataset synth_generate(const SynthSpec& spec) {
  if (spec.count == 0) throw ContractError("synth_generate: count must be positive");
  if (spec.height == 0 || spec.width == 0 || spec.channels == 0) {
    throw ContractError("synth_generate: image dimensions must be positive");
  }
  if (spec.num_classes < 2) throw ContractError("synth_generate: need at least two classes");

  Dataset ds;
  ds.task = spec.family == SynthFamily::kDisks ? Task::kSegmentation : Task::kClassification;
  ds.height = spec.height;
  ds.width = spec.width;
  ds.channels = spec.channels;
  ds.num_classes = spec.num_classes;
  ds.images.assign(spec.count * ds.image_size(), 0.0f);
  ds.labels.assign(ds.task == Task::kClassification ? spec.count : spec.count * spec.height * spec.width, 0);

  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Canvas img{spec.height, spec.width, spec.channels, ds.images.data() + i * ds.image_size()};
    switch (spec.family) {
      case SynthFamily::kGrating:
        ds.labels[i] = static_cast<std::uint16_t>(i % spec.num_classes);
        render_grating(img, ds.labels[i], spec.num_classes, spec.difficulty, rng);
        break;
      case SynthFamily::kBlobs:
        ds.labels[i] = static_cast<std::uint16_t>(i % spec.num_classes);
        render_blobs(img, ds.labels[i], spec.difficulty, rng);
        break;
      case SynthFamily::kDisks:
        render_disks(img, ds.labels.data() + i * spec.height * spec.width, spec.num_classes, spec.difficulty, rng);
        break;
    }
  }
  return ds;
}

std::string encode_dataset(const Dataset& ds) {
  ds.validate();
  std::string out;
  out.append(kDatasetMagic, 4);
  detail::put<std::uint32_t>(out, kDatasetVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.size()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.height));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.width));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.channels));
  detail::put<std::uint8_t>(out, ds.task == Task::kClassification ? 0 : 1);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.num_classes));
  for (float v : ds.images) detail::put<float>(out, v);
  for (std::uint16_t v : ds.labels) detail::put<std::uint16_t>(out, v);
  return out;
}

Dataset decode_dataset(std::string_view bytes) {
  detail::Reader in(bytes, "dataset");
  if (in.take(4) != std::string_view(kDatasetMagic, 4)) in.fail("bad magic");
  if (in.get<std::uint32_t>() != kDatasetVersion) in.fail("unsupported version");
  Dataset ds;
  const std::size_t count = in.get<std::uint32_t>();
  ds.height = in.get<std::uint32_t>();
  ds.width = in.get<std::uint32_t>();
  ds.channels = in.get<std::uint32_t>();
  const auto tag = in.get<std::uint8_t>();
  if (tag > 1) in.fail("unknown task tag");
  ds.task = tag == 0 ? Task::kClassification : Task::kSegmentation;
  ds.num_classes = in.get<std::uint32_t>();
  const std::size_t pixels = count * ds.height * ds.width * ds.channels;
  const std::size_t labels = ds.task == Task::kClassification ? count : count * ds.height * ds.width;
  if (in.remaining() != pixels * sizeof(float) + labels * sizeof(std::uint16_t)) {
    in.fail("payload length does not match the declared count");
  }
  ds.images.resize(pixels);
  for (float& v : ds.images) v = in.get<float>();
  ds.labels.resize(labels);
  for (std::uint16_t& v : ds.labels) v = in.get<std::uint16_t>();
  try {
    ds.validate();
  } catch (const ContractError& e) {
    in.fail(e.what());
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  detail::write_file_atomic(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(detail::read_file(path)); }

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices, const ModelConfig& cfg) {
  const VitConfig& v = cfg.vit;
  if (ds.height != v.image_h || ds.width != v.image_w || ds.channels != v.channels) {
    throw ConfigError("dataset images are " + std::to_string(ds.height) + "x" + std::to_string(ds.width) + "x" +
                      std::to_string(ds.channels) + " but the model expects " + std::to_string(v.image_h) + "x" +
                      std::to_string(v.image_w) + "x" + std::to_string(v.channels));
  }
  if (ds.task != cfg.task) throw ConfigError("dataset task does not match model.task");
  if (ds.num_classes != v.num_classes) throw ConfigError("dataset num_classes does not match model.num_classes");
  if (indices.empty()) throw ContractError("make_batch: empty index list");

  const std::size_t b = indices.size();
  const std::size_t per_image = ds.image_size();
  std::vector<double> pixels(b * per_image);
  for (std::size_t i = 0; i < b; ++i) {
    const float* src = ds.images.data() + indices[i] * per_image;
    for (std::size_t k = 0; k < per_image; ++k) pixels[i * per_image + k] = static_cast<double>(src[k]);
  }
  Batch batch{Tensor({b, v.image_h, v.image_w, v.channels}, std::move(pixels), cfg.dtype), {}};

  if (ds.task == Task::kClassification) {
    for (std::size_t idx : indices) batch.labels.push_back(ds.labels.at(idx));
    return batch;
  }
  const std::size_t p = v.patch_size;
  std::vector<std::size_t> votes(ds.num_classes);
  for (std::size_t idx : indices) {
    const std::uint16_t* mask = ds.labels.data() + idx * ds.height * ds.width;
    for (std::size_t gy = 0; gy < v.grid_h(); ++gy) {
      for (std::size_t gx = 0; gx < v.grid_w(); ++gx) {
        std::fill(votes.begin(), votes.end(), 0);
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) ++votes[mask[(gy * p + y) * ds.width + gx * p + x]];
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < votes.size(); ++c) {
          if (votes[c] > votes[best]) best = c;
        }
        batch.labels.push_back(best);
      }
    }
  }
  return batch;
}

}  // namespace dvpt
