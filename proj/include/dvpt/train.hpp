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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dvpt/data.hpp"
#include "dvpt/model.hpp"
#include "dvpt/peft.hpp"
#include "dvpt/tensor.hpp"

namespace dvpt {

// ---- losses ---------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[label]. logits: [b, K].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// (1 - mean_c soft-Dice_c) + pixel cross-entropy, with Dice smoothing 1 and
// per-class sums taken over the whole batch. logits: [..., K], one label per
// row of K logits.
Tensor hybrid_dice_ce(const Tensor& logits, std::span<const std::size_t> labels);

// ---- optimizer ------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers for exactly the tensors handed to the constructor.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  // Throws ContractError when a managed tensor has no gradient.
  void step();
  void zero_grad();

  std::size_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  std::vector<std::string> parameter_names() const;

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };

  AdamOptions options_;
  std::vector<Slot> slots_;
  std::size_t step_ = 0;
};

// ---- metrics --------------------------------------------------------------

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return k_; }
  // Rows are ground truth, columns predictions.
  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  std::uint64_t total() const;
  void merge(const ConfusionMatrix& other);

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

// trace / total
double accuracy(const ConfusionMatrix& confusion);
// 1 - sum(w*O) / sum(w*E) with w_ij = (i-j)^2 / (K-1)^2 and E the outer
// product of the marginals over the total. Needs K >= 2 and a non-empty matrix.
double quadratic_weighted_kappa(const ConfusionMatrix& confusion);

struct DiceIou {
  double dice = 0.0;
  double iou = 0.0;
};

// Binary masks (non-zero = foreground). Both empty counts as perfect overlap.
DiceIou dice_iou(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

// Overlap counts for one class, summable across batches.
struct OverlapCounts {
  std::uint64_t intersection = 0;
  std::uint64_t predicted = 0;
  std::uint64_t truth = 0;

  DiceIou scores() const;
};

struct MetricsReport {
  Task task = Task::kClassification;
  double loss = 0.0;
  double accuracy = 0.0;
  double kappa = 0.0;
  double dice = 0.0;  // mean over foreground classes
  double iou = 0.0;
  ConfusionMatrix confusion{2};
};

// Accumulates predictions batch by batch.
class MetricsAccumulator {
 public:
  MetricsAccumulator(Task task, std::size_t num_classes);

  // logits: [b, K] or [b, gh, gw, K]; labels as in Batch.
  void add(const Tensor& logits, std::span<const std::size_t> labels, double batch_loss);
  MetricsReport report() const;

 private:
  Task task_;
  ConfusionMatrix confusion_;
  std::vector<OverlapCounts> overlaps_;
  double loss_sum_ = 0.0;
  std::size_t items_ = 0;
};

// Loss for the model's task.
Tensor task_loss(const Model& model, const Tensor& logits, std::span<const std::size_t> labels);

MetricsReport evaluate(const Model& model, const Dataset& dataset, std::size_t batch_size,
                       const ForwardOptions& opts = {});

// ---- gradient check -------------------------------------------------------

struct GradCheckSample {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckSample> samples;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  std::size_t samples = 25;
  double tolerance = 1e-4;
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 0;
};

// Compares analytic gradients of `loss_fn` with central differences on
// randomly chosen scalars of `params` (tensor chosen uniformly, then an index
// inside it). `loss_fn` must be a pure function of the parameter values.
GradCheckReport grad_check(const std::vector<Tensor>& params, const std::function<Tensor()>& loss_fn,
                           const GradCheckOptions& options);

// Applies `policy`, then checks the task loss on `batch`. Needs a float64 model.
GradCheckReport grad_check(Model& model, const FreezePolicy& policy, const Batch& batch,
                           const GradCheckOptions& options);

// ---- training -------------------------------------------------------------

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  // Stop after this many optimizer steps (0 = no limit).
  std::size_t max_steps = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean training loss over the epoch's samples
  // accuracy/kappa for classification, dice/iou for segmentation
  double metric_a = 0.0;
  double metric_b = 0.0;
};

struct History {
  Task task = Task::kClassification;
  std::vector<EpochRecord> epochs;

  // "epoch,loss,acc,kappa" or "epoch,loss,dice,iou".
  std::string to_csv() const;
};

// Applies `policy`, trains the trainable tensors with Adam on seeded shuffles
// and verifies at the end that every frozen tensor is bitwise unchanged.
History train_loop(Model& model, const Dataset& dataset, const FreezePolicy& policy, const TrainOptions& options);

}  // namespace dvpt
