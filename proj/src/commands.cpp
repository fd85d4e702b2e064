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


#include "dvpt/commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "binary_io.hpp"
#include "dvpt/checkpoint.hpp"
#include "dvpt/errors.hpp"

namespace dvpt {

namespace {

ModelConfig pretrain_model_config(const RunConfig& cfg) {
  ModelConfig m = cfg.model;
  m.prompt_tuning = false;
  m.task = Task::kClassification;
  return m;
}

TrainOptions train_options(const OptimConfig& o) {
  return TrainOptions{.epochs = o.epochs, .batch_size = o.batch_size, .lr = o.lr, .seed = o.seed,
                      .max_steps = o.max_steps};
}

void print_history(const History& h, std::ostream& out) {
  const bool cls = h.task == Task::kClassification;
  for (const EpochRecord& r : h.epochs) {
    out << fmt::format("epoch {} loss={:.8f} {}={:.6f} {}={:.6f}\n", r.epoch, r.loss, cls ? "acc" : "dice",
                       r.metric_a, cls ? "kappa" : "iou", r.metric_b);
  }
}

void load_backbone(Model& model, const Path& backbone) {
  const Checkpoint ckpt = load_checkpoint(backbone);
  apply_checkpoint(model, ckpt, is_backbone_parameter, true);
}

}  // namespace

std::string format_metrics(const MetricsReport& m) {
  std::string s = fmt::format("task = {}\nloss = {:.10f}\n", task_name(m.task), m.loss);
  if (m.task == Task::kClassification) {
    s += fmt::format("accuracy = {:.10f}\nkappa = {:.10f}\n", m.accuracy, m.kappa);
  } else {
    s += fmt::format("dice = {:.10f}\niou = {:.10f}\n", m.dice, m.iou);
  }
  return s;
}

PretrainResult cmd_pretrain(const RunConfig& cfg, const Path& checkpoint, const std::optional<Path>& history_csv,
                            std::ostream& out) {
  const ModelConfig mcfg = pretrain_model_config(cfg);
  const Dataset data = load_data(cfg.pretrain.data, mcfg);
  Model model(mcfg, cfg.optim.seed);
  TrainOptions opts = train_options(cfg.optim);
  opts.lr = cfg.pretrain.lr;
  opts.epochs = cfg.pretrain.epochs;

  PretrainResult result;
  result.history = train_loop(model, data, FreezePolicy{FreezeMode::kFullFinetune, {}}, opts);
  print_history(result.history, out);
  save_checkpoint(model, checkpoint, false);
  if (history_csv) detail::write_file_atomic(*history_csv, result.history.to_csv());

  if (cfg.pretrain.data.path.empty()) {
    // Fresh draw from the same family, disjoint seed.
    DataSource held = cfg.pretrain.data;
    held.seed = cfg.pretrain.data.seed + 7919;
    held.count = std::max<std::size_t>(64, cfg.pretrain.data.count / 4);
    result.held_out = evaluate(model, load_data(held, mcfg), cfg.optim.batch_size);
    out << fmt::format("held_out.accuracy = {:.6f}\n", result.held_out->accuracy);
  }
  out << fmt::format("checkpoint = {} ({} tensors)\n", checkpoint.string(), model.parameters().size());
  return result;
}

FinetuneResult cmd_finetune(const RunConfig& cfg, const FinetuneOptions& options, std::ostream& out) {
  Model model(cfg.model, cfg.optim.seed);
  if (options.backbone) {
    load_backbone(model, *options.backbone);
  } else if (!options.dry_run) {
    throw ConfigError("finetune: --backbone is required unless --dry-run is given");
  }
  const FreezePolicy policy{cfg.policy, {}};
  apply_freeze_policy(model, policy);

  FinetuneResult result;
  result.history.task = cfg.model.task;
  if (!options.dry_run) {
    const Dataset data = load_data(cfg.train_data, cfg.model);
    result.history = train_loop(model, data, policy, train_options(cfg.optim));
    print_history(result.history, out);
    if (options.history_csv) detail::write_file_atomic(*options.history_csv, result.history.to_csv());
  }
  save_checkpoint(model, options.checkpoint, true);

  result.report = report(model, paper_reference_for(cfg.model));
  out << format_table(result.report);
  if (options.report) detail::write_file_atomic(*options.report, format_key_values(result.report));
  out << fmt::format("checkpoint = {} ({} tensors)\n", options.checkpoint.string(),
                     model.trainable_parameters().size());
  return result;
}

Model compose_model(const RunConfig& cfg, const Path& backbone, const Path& task_checkpoint) {
  // Decode both files before touching the model so a corrupt one loads nothing.
  const Checkpoint base = load_checkpoint(backbone);
  const Checkpoint task = load_checkpoint(task_checkpoint);

  Model model(cfg.model, cfg.optim.seed);
  const FreezePolicy policy{cfg.policy, {}};
  apply_freeze_policy(model, policy);
  std::set<std::string> expected;
  for (const Tensor& t : model.trainable_parameters()) expected.insert(t.name());
  const std::vector<std::string> names = task.names();
  for (const std::string& n : names) {
    if (!expected.contains(n)) {
      throw ArchitectureMismatch("task checkpoint tensor '" + n + "' is not trained under policy " +
                                 std::string(freeze_mode_name(cfg.policy)));
    }
  }
  for (const std::string& n : expected) {
    if (std::find(names.begin(), names.end(), n) == names.end()) {
      throw ArchitectureMismatch("task checkpoint is missing tensor '" + n + "'");
    }
  }
  apply_checkpoint(model, base, is_backbone_parameter, true);
  apply_checkpoint(model, task, [](std::string_view) { return true; }, false);
  return model;
}

MetricsReport cmd_eval(const RunConfig& cfg, const Path& backbone, const Path& task_checkpoint,
                       const std::optional<Path>& metrics_csv, std::ostream& out) {
  const Model model = compose_model(cfg, backbone, task_checkpoint);
  const Dataset data = load_data(cfg.eval_data, cfg.model);
  const MetricsReport m = evaluate(model, data, cfg.optim.batch_size);
  out << format_metrics(m);
  if (metrics_csv) {
    History h;
    h.task = m.task;
    const bool cls = m.task == Task::kClassification;
    h.epochs.push_back({0, m.loss, cls ? m.accuracy : m.dice, cls ? m.kappa : m.iou});
    detail::write_file_atomic(*metrics_csv, h.to_csv());
  }
  return m;
}

ParamReport cmd_count_params(const RunConfig& cfg, const std::optional<Path>& report_path, std::ostream& out) {
  const ParamReport r = report(cfg.model, FreezePolicy{cfg.policy, {}}, paper_reference_for(cfg.model));
  out << format_table(r);
  if (report_path) detail::write_file_atomic(*report_path, format_key_values(r));
  return r;
}

GradCheckReport cmd_grad_check(const RunConfig& cfg, const GradCheckCommand& options, std::ostream& out) {
  ModelConfig mcfg = cfg.model;
  mcfg.dtype = DType::kFloat64;
  Model model(mcfg, cfg.optim.seed);
  for (std::size_t k = 0; k < model.num_dvpt_blocks(); ++k) {
    auto g = model.dvpt_block(k).gate.mutable_data();
    std::fill(g.begin(), g.end(), options.gate);
  }
  const Dataset data = load_data(cfg.train_data, mcfg);
  std::vector<std::size_t> idx(std::min(options.batch, data.size()));
  std::iota(idx.begin(), idx.end(), 0);
  const Batch batch = make_batch(data, idx, mcfg);
  const GradCheckReport r = grad_check(model, FreezePolicy{cfg.policy, {}}, batch, options.check);
  for (const GradCheckSample& s : r.samples) {
    out << fmt::format("{}[{}] analytic={:.12e} numeric={:.12e} rel={:.3e}\n", s.name, s.index, s.analytic,
                       s.numeric, s.rel_error);
  }
  out << fmt::format("max_rel_error = {:.6e}\ntolerance = {:.1e}\nresult = {}\n", r.max_rel_error, r.tolerance,
                     r.passed ? "pass" : "fail");
  return r;
}

void cmd_synth_data(const SynthSpec& spec, const Path& output, std::ostream& out) {
  const Dataset ds = synth_generate(spec);
  save_dataset(ds, output);
  out << fmt::format("wrote {} {} samples ({}x{}x{}, {} classes) to {}\n", ds.size(), synth_family_name(spec.family),
                     ds.height, ds.width, ds.channels, ds.num_classes, output.string());
}

}  // namespace dvpt
