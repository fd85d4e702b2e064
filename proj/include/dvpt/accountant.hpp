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
#include <optional>
#include <string>
#include <vector>

#include "dvpt/model.hpp"

namespace dvpt {

struct ParamRow {
  std::string name;
  Shape shape;
  std::uint64_t count = 0;
  bool trainable = false;
};

// Enumerated trainable count minus the closed form, split by cause. The terms
// always add up to the gap; `other` is non-zero only when backbone tensors are
// trainable.
struct DiscrepancyTerms {
  std::int64_t head = 0;             // classification/segmentation head
  std::int64_t gates = 0;            // one scalar per DVPT block
  std::int64_t prompt_width = 0;     // m*d stored vs m*d' counted
  std::int64_t projection_bias = 0;  // projection tensors vs 2dd'+d+d' per block
  std::int64_t other = 0;

  std::int64_t sum() const { return head + gates + prompt_width + projection_bias + other; }
};

// Published totals for the ViT-B/16, m=50, d'=20 setting.
struct PaperReference {
  std::uint64_t trainable = 0;
  double fraction_percent = 0.0;
};

inline constexpr PaperReference kPaperReferenceUnshared{457'446, 0.54};
inline constexpr PaperReference kPaperReferenceShared2{268'414, 0.31};

struct ParamReport {
  std::string policy;
  std::vector<ParamRow> rows;  // sorted by name
  std::uint64_t trainable = 0;
  std::uint64_t frozen = 0;
  std::uint64_t total = 0;
  double trainable_fraction = 0.0;

  // Present for prompt-tuned models.
  std::optional<std::uint64_t> closed_form;
  // Same formula with the prompt term read as m*d.
  std::optional<std::uint64_t> closed_form_prompt_full_width;
  std::int64_t discrepancy = 0;
  DiscrepancyTerms terms;

  std::optional<PaperReference> paper_reference;
  std::int64_t paper_gap = 0;  // paper_reference - trainable
};

// m*d' + ceil(L/s) * (2*d*d' + d + d')
std::uint64_t closed_form(std::uint64_t m, std::uint64_t d_prime, std::uint64_t d, std::uint64_t layers,
                          std::uint64_t share_every);
// m*d + ceil(L/s) * (2*d*d' + d + d')
std::uint64_t closed_form_prompt_full_width(std::uint64_t m, std::uint64_t d_prime, std::uint64_t d,
                                            std::uint64_t layers, std::uint64_t share_every);

// Counts every scalar of every parameter in `layout` under `policy`.
ParamReport enumerate_trainable(const std::vector<ParamSpec>& layout, const FreezePolicy& policy);
// Uses the requires_grad flags already set on the model.
ParamReport enumerate_trainable(const Model& model);

std::optional<PaperReference> paper_reference_for(const ModelConfig& cfg);

// Enumeration plus closed form, discrepancy split and (when the config is the
// published setting) its reference totals.
ParamReport report(const ModelConfig& cfg, const FreezePolicy& policy,
                   std::optional<PaperReference> reference = std::nullopt);
ParamReport report(const Model& model, std::optional<PaperReference> reference = std::nullopt);

std::string format_table(const ParamReport& report);
// "key = value" lines.
std::string format_key_values(const ParamReport& report);

}  // namespace dvpt
