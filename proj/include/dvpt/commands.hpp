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
#include <optional>
#include <ostream>

#include "dvpt/accountant.hpp"
#include "dvpt/config.hpp"
#include "dvpt/train.hpp"

// The operations behind each CLI subcommand. They print human-readable lines
// to `out` and throw the toolkit's error types; the executable maps those to
// exit codes.
namespace dvpt {

using Path = std::filesystem::path;

// Plain ViT with a classification head, fully trained on the [pretrain]
// source. Writes every tensor to `checkpoint`.
struct PretrainResult {
  History history;
  std::optional<MetricsReport> held_out;
};
PretrainResult cmd_pretrain(const RunConfig& cfg, const Path& checkpoint, const std::optional<Path>& history_csv,
                            std::ostream& out);

struct FinetuneOptions {
  std::optional<Path> backbone;  // required unless dry_run
  Path checkpoint;
  std::optional<Path> history_csv;
  std::optional<Path> report;  // key-value ParamReport
  bool dry_run = false;        // skip training, save the initial task tensors
};
struct FinetuneResult {
  History history;
  ParamReport report;
};
FinetuneResult cmd_finetune(const RunConfig& cfg, const FinetuneOptions& options, std::ostream& out);

// Builds the configured model, loads the frozen backbone and then the task
// tensors. The task checkpoint must hold exactly the tensors the policy
// trains.
Model compose_model(const RunConfig& cfg, const Path& backbone, const Path& task_checkpoint);

MetricsReport cmd_eval(const RunConfig& cfg, const Path& backbone, const Path& task_checkpoint,
                       const std::optional<Path>& metrics_csv, std::ostream& out);

ParamReport cmd_count_params(const RunConfig& cfg, const std::optional<Path>& report, std::ostream& out);

struct GradCheckCommand {
  GradCheckOptions check;
  std::size_t batch = 4;
  // DVPT gates start at 0, which zeroes every gradient upstream of them;
  // the check moves them here first.
  double gate = 0.5;
};
GradCheckReport cmd_grad_check(const RunConfig& cfg, const GradCheckCommand& options, std::ostream& out);

void cmd_synth_data(const SynthSpec& spec, const Path& output, std::ostream& out);

std::string format_metrics(const MetricsReport& report);

}  // namespace dvpt
