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

#include "dvpt/accountant.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "dvpt/errors.hpp"

namespace dvpt {

namespace {

std::uint64_t projection_block(std::uint64_t d_prime, std::uint64_t d) { return 2 * d * d_prime + d + d_prime; }

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

void finalize_totals(ParamReport& r) {
  std::sort(r.rows.begin(), r.rows.end(), [](const ParamRow& a, const ParamRow& b) { return a.name < b.name; });
  r.trainable = 0;
  r.frozen = 0;
  for (const ParamRow& row : r.rows) (row.trainable ? r.trainable : r.frozen) += row.count;
  r.total = r.trainable + r.frozen;
  r.trainable_fraction = r.total == 0 ? 0.0 : static_cast<double>(r.trainable) / static_cast<double>(r.total);
}

void add_closed_form(ParamReport& r, const ModelConfig& cfg) {
  if (!cfg.prompt_tuning) return;
  const std::uint64_t m = cfg.dvpt.num_prompts;
  const std::uint64_t dp = cfg.dvpt.hidden_dim;
  const std::uint64_t d = cfg.vit.embed_dim;
  const std::uint64_t layers = cfg.vit.depth;
  const std::uint64_t s = cfg.dvpt.share_every;
  r.closed_form = closed_form(m, dp, d, layers, s);
  r.closed_form_prompt_full_width = closed_form_prompt_full_width(m, dp, d, layers, s);
  r.discrepancy = static_cast<std::int64_t>(r.trainable) - static_cast<std::int64_t>(*r.closed_form);

  DiscrepancyTerms t;
  std::int64_t prompts = 0;
  std::int64_t projections = 0;
  for (const ParamRow& row : r.rows) {
    if (!row.trainable) continue;
    const auto n = static_cast<std::int64_t>(row.count);
    if (is_head_parameter(row.name)) {
      t.head += n;
    } else if (is_prompt_parameter(row.name)) {
      prompts += n;
    } else if (is_dvpt_parameter(row.name) && row.name.ends_with(".gate")) {
      t.gates += n;
    } else if (is_dvpt_parameter(row.name)) {
      projections += n;
    } else {
      t.other += n;
    }
  }
  t.prompt_width = prompts - static_cast<std::int64_t>(m * dp);
  t.projection_bias = projections - static_cast<std::int64_t>(ceil_div(layers, s) * projection_block(dp, d));
  if (t.sum() != r.discrepancy) {
    throw ContractError("parameter discrepancy terms do not add up to the enumerated gap");
  }
  r.terms = t;
}

void add_reference(ParamReport& r, std::optional<PaperReference> reference) {
  r.paper_reference = reference;
  if (reference) r.paper_gap = static_cast<std::int64_t>(reference->trainable) - static_cast<std::int64_t>(r.trainable);
}

std::string with_commas(std::uint64_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && (digits.size() - i) % 3 == 0) out.push_back(',');
    out.push_back(digits[i]);
  }
  return out;
}

}  // namespace

std::uint64_t closed_form(std::uint64_t m, std::uint64_t d_prime, std::uint64_t d, std::uint64_t layers,
                          std::uint64_t share_every) {
  if (share_every == 0 || share_every > layers) throw ConfigError("closed_form: share_every must lie in [1, L]");
  return m * d_prime + ceil_div(layers, share_every) * projection_block(d_prime, d);
}

std::uint64_t closed_form_prompt_full_width(std::uint64_t m, std::uint64_t d_prime, std::uint64_t d,
                                            std::uint64_t layers, std::uint64_t share_every) {
  return closed_form(m, d_prime, d, layers, share_every) - m * d_prime + m * d;
}

ParamReport enumerate_trainable(const std::vector<ParamSpec>& layout, const FreezePolicy& policy) {
  std::vector<std::string> names;
  names.reserve(layout.size());
  for (const ParamSpec& spec : layout) names.push_back(spec.name);
  const auto resolved = policy.resolve(names);

  ParamReport r;
  r.policy = std::string(freeze_mode_name(policy.mode));
  for (const ParamSpec& spec : layout) {
    r.rows.push_back({spec.name, spec.shape, shape_numel(spec.shape), resolved.at(spec.name)});
  }
  finalize_totals(r);
  return r;
}

ParamReport enumerate_trainable(const Model& model) {
  ParamReport r;
  r.policy = "as-configured";
  for (const Tensor& t : model.parameters()) {
    r.rows.push_back({t.name(), t.shape(), t.numel(), t.requires_grad()});
  }
  finalize_totals(r);
  return r;
}

std::optional<PaperReference> paper_reference_for(const ModelConfig& cfg) {
  const VitConfig paper = VitConfig::paper_scale();
  const bool backbone = cfg.vit.embed_dim == paper.embed_dim && cfg.vit.depth == paper.depth &&
                        cfg.vit.patch_size == paper.patch_size && cfg.vit.image_h == paper.image_h &&
                        cfg.vit.image_w == paper.image_w && cfg.vit.channels == paper.channels;
  if (!backbone || !cfg.prompt_tuning || cfg.dvpt.num_prompts != 50 || cfg.dvpt.hidden_dim != 20) return std::nullopt;
  if (cfg.dvpt.share_every == 1) return kPaperReferenceUnshared;
  if (cfg.dvpt.share_every == 2) return kPaperReferenceShared2;
  return std::nullopt;
}

ParamReport report(const ModelConfig& cfg, const FreezePolicy& policy, std::optional<PaperReference> reference) {
  ParamReport r = enumerate_trainable(parameter_layout(cfg), policy);
  add_closed_form(r, cfg);
  add_reference(r, reference);
  return r;
}

ParamReport report(const Model& model, std::optional<PaperReference> reference) {
  ParamReport r = enumerate_trainable(model);
  add_closed_form(r, model.config());
  add_reference(r, reference);
  return r;
}

std::string format_table(const ParamReport& r) {
  std::size_t width = 4;
  for (const ParamRow& row : r.rows) width = std::max(width, row.name.size());
  std::string out = fmt::format("{:<{}}  {:<16}  {:>12}  {}\n", "name", width, "shape", "count", "trainable");
  for (const ParamRow& row : r.rows) {
    out += fmt::format("{:<{}}  {:<16}  {:>12}  {}\n", row.name, width, shape_string(row.shape), row.count,
                       row.trainable ? "yes" : "no");
  }
  out += fmt::format("\npolicy              {}\n", r.policy);
  out += fmt::format("trainable           {}\n", with_commas(r.trainable));
  out += fmt::format("frozen              {}\n", with_commas(r.frozen));
  out += fmt::format("total               {}\n", with_commas(r.total));
  out += fmt::format("trainable fraction  {:.4f}%\n", 100.0 * r.trainable_fraction);
  if (r.closed_form) {
    out += fmt::format("\n{:<28}{:>12}\n", "enumerated (trainable)", with_commas(r.trainable));
    out += fmt::format("{:<28}{:>12}\n", "closed form m*d'+...", with_commas(*r.closed_form));
    out += fmt::format("{:<28}{:>12}\n", "closed form m*d+...", with_commas(*r.closed_form_prompt_full_width));
    if (r.paper_reference) {
      out += fmt::format("{:<28}{:>12}  ({:.2f}% reported)\n", "paper reference", with_commas(r.paper_reference->trainable),
                         r.paper_reference->fraction_percent);
    }
    out += fmt::format("\nenumerated - closed form = {}\n", r.discrepancy);
    out += fmt::format("  head                     {}\n", r.terms.head);
    out += fmt::format("  gates                    {}\n", r.terms.gates);
    out += fmt::format("  prompts m*(d-d')         {}\n", r.terms.prompt_width);
    out += fmt::format("  projection bias delta    {}\n", r.terms.projection_bias);
    out += fmt::format("  other trainable          {}\n", r.terms.other);
    if (r.paper_reference) out += fmt::format("paper reference - enumerated = {} (unexplained)\n", r.paper_gap);
  }
  return out;
}

std::string format_key_values(const ParamReport& r) {
  std::string out;
  out += fmt::format("policy = {}\n", r.policy);
  out += fmt::format("trainable = {}\n", r.trainable);
  out += fmt::format("frozen = {}\n", r.frozen);
  out += fmt::format("total = {}\n", r.total);
  out += fmt::format("trainable_fraction = {:.9f}\n", r.trainable_fraction);
  if (r.closed_form) {
    out += fmt::format("closed_form = {}\n", *r.closed_form);
    out += fmt::format("closed_form_prompt_full_width = {}\n", *r.closed_form_prompt_full_width);
    out += fmt::format("discrepancy = {}\n", r.discrepancy);
    out += fmt::format("discrepancy.head = {}\n", r.terms.head);
    out += fmt::format("discrepancy.gates = {}\n", r.terms.gates);
    out += fmt::format("discrepancy.prompt_width = {}\n", r.terms.prompt_width);
    out += fmt::format("discrepancy.projection_bias = {}\n", r.terms.projection_bias);
    out += fmt::format("discrepancy.other = {}\n", r.terms.other);
  }
  if (r.paper_reference) {
    out += fmt::format("paper_reference = {}\n", r.paper_reference->trainable);
    out += fmt::format("paper_reference_fraction_percent = {:.2f}\n", r.paper_reference->fraction_percent);
    out += fmt::format("paper_gap = {}\n", r.paper_gap);
  }
  for (const ParamRow& row : r.rows) {
    out += fmt::format("param.{} = {} {} {}\n", row.name, shape_string(row.shape), row.count,
                       row.trainable ? "trainable" : "frozen");
  }
  return out;
}

}  // namespace dvpt
