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


#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>
#include <optional>
#include <string>

#include "dvpt/commands.hpp"
#include "dvpt/errors.hpp"

namespace {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kArchMismatch = 3, kCorruptFile = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::optional<std::size_t> share_every;
  std::string policy;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run configuration file");
  cmd->add_option("--seed", c.seed, "overrides train.seed");
  cmd->add_option("--preset", c.preset, "replace the model sections: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--share-every", c.share_every, "overrides dvpt.share_every");
  cmd->add_option("--policy", c.policy, "overrides train.policy");
}

dvpt::RunConfig resolve(const Common& c) {
  dvpt::RunConfig cfg = c.config.empty() ? dvpt::RunConfig{} : dvpt::load_run_config(c.config);
  if (c.preset == "paper") {
    cfg.model = dvpt::ModelConfig::paper_scale(cfg.model.dvpt.share_every);
  } else if (c.preset == "desk") {
    cfg.model = dvpt::ModelConfig::desk();
  }
  if (c.share_every) cfg.model.dvpt.share_every = *c.share_every;
  if (!c.policy.empty()) cfg.policy = dvpt::parse_freeze_mode(c.policy);
  if (c.seed) cfg.optim.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::optional<dvpt::Path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return dvpt::Path(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic visual prompt tuning toolkit"};
  app.require_subcommand(1);

  Common common;
  std::string out_path;
  std::string history;
  std::string report;
  std::string metrics;
  std::string backbone;
  std::string task_ckpt;
  bool dry_run = false;

  auto* pretrain = app.add_subcommand("pretrain", "train a plain ViT on the pretraining task, save all weights");
  add_common(pretrain, common);
  pretrain->add_option("--out", out_path, "checkpoint to write")->required();
  pretrain->add_option("--history", history, "per-epoch CSV");

  auto* finetune = app.add_subcommand("finetune", "train the policy's tensors on a frozen backbone");
  add_common(finetune, common);
  finetune->add_option("--backbone", backbone, "pretrained checkpoint");
  finetune->add_option("--out", out_path, "task checkpoint to write")->required();
  finetune->add_option("--history", history, "per-epoch CSV");
  finetune->add_option("--report", report, "key-value parameter report");
  finetune->add_flag("--dry-run", dry_run, "no training; save the initial task tensors");

  auto* eval = app.add_subcommand("eval", "evaluate backbone + task checkpoint on the eval data");
  add_common(eval, common);
  eval->add_option("--backbone", backbone, "pretrained checkpoint")->required();
  eval->add_option("--task-ckpt", task_ckpt, "task checkpoint")->required();
  eval->add_option("--out,--metrics", metrics, "metrics CSV");

  auto* count = app.add_subcommand("count-params", "print the trainable parameter report");
  add_common(count, common);
  count->add_option("--out,--report", report, "key-value parameter report");

  dvpt::GradCheckCommand gc;
  auto* grad = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
  add_common(grad, common);
  grad->add_option("--samples", gc.check.samples, "number of sampled scalars");
  grad->add_option("--tol", gc.check.tolerance, "max relative error");
  grad->add_option("--gate", gc.gate, "value every DVPT gate is set to before checking");
  grad->add_option("--batch", gc.batch, "images in the probe batch");

  dvpt::SynthSpec spec;
  std::string family = "blobs";
  auto* synth = app.add_subcommand("synth-data", "write a synthetic dataset file");
  synth->add_option("--out", out_path, "dataset file to write")->required();
  synth->add_option("--family", family, "grating, blobs or disks");
  synth->add_option("--count", spec.count);
  synth->add_option("--seed", spec.seed);
  synth->add_option("--difficulty", spec.difficulty);
  synth->add_option("--height", spec.height);
  synth->add_option("--width", spec.width);
  synth->add_option("--channels", spec.channels);
  synth->add_option("--classes", spec.num_classes);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*pretrain) {
      dvpt::cmd_pretrain(resolve(common), out_path, opt_path(history), std::cout);
    } else if (*finetune) {
      dvpt::FinetuneOptions o;
      o.backbone = opt_path(backbone);
      o.checkpoint = out_path;
      o.history_csv = opt_path(history);
      o.report = opt_path(report);
      o.dry_run = dry_run;
      dvpt::cmd_finetune(resolve(common), o, std::cout);
    } else if (*eval) {
      dvpt::cmd_eval(resolve(common), backbone, task_ckpt, opt_path(metrics), std::cout);
    } else if (*count) {
      dvpt::cmd_count_params(resolve(common), opt_path(report), std::cout);
    } else if (*grad) {
      gc.check.seed = resolve(common).optim.seed;
      const auto r = dvpt::cmd_grad_check(resolve(common), gc, std::cout);
      return r.passed ? kOk : kCheckFailed;
    } else if (*synth) {
      spec.family = dvpt::parse_synth_family(family);
      dvpt::cmd_synth_data(spec, out_path, std::cout);
    }
  } catch (const dvpt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const dvpt::ArchitectureMismatch& e) {
    std::cerr << "architecture mismatch: " << e.what() << '\n';
    return kArchMismatch;
  } catch (const dvpt::CorruptFile& e) {
    std::cerr << "corrupt file: " << e.what() << '\n';
    return kCorruptFile;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
  return kOk;
}
