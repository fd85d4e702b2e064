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

#include "dvpt/train.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "dvpt/errors.hpp"
#include "dvpt/ops.hpp"

namespace dvpt {

namespace {

Tensor one_hot(std::span<const std::size_t> labels, std::size_t k, DType dtype) {
  Tensor t({labels.size(), k}, dtype);
  auto v = t.mutable_data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) {
      throw ContractError("label " + std::to_string(labels[i]) + " out of range for " + std::to_string(k) +
                          " classes");
    }
    v[i * k + labels[i]] = 1.0;
  }
  return t;
}

Tensor flatten_rows(const Tensor& logits, std::size_t label_count) {
  const std::size_t k = logits.dim(-1);
  const std::size_t rows = logits.numel() / k;
  if (rows != label_count) {
    throw ContractError("expected " + std::to_string(rows) + " labels, got " + std::to_string(label_count));
  }
  return logits.rank() == 2 ? logits : ops::reshape(logits, {rows, k});
}

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  const Tensor flat = flatten_rows(logits, labels.size());
  const Tensor target = one_hot(labels, flat.dim(-1), flat.dtype());
  const Tensor picked = ops::sum(ops::mul(ops::log_softmax(flat, -1), target));
  return ops::scale(picked, -1.0 / static_cast<double>(labels.size()));
}

Tensor hybrid_dice_ce(const Tensor& logits, std::span<const std::size_t> labels) {
  const Tensor flat = flatten_rows(logits, labels.size());
  const Tensor target = one_hot(labels, flat.dim(-1), flat.dtype());
  const Tensor probs = ops::softmax(flat, -1);
  const Tensor intersection = ops::sum(ops::mul(probs, target), 0);
  const Tensor denominator = ops::add_scalar(ops::add(ops::sum(probs, 0), ops::sum(target, 0)), 1.0);
  const Tensor dice = ops::div(ops::add_scalar(ops::scale(intersection, 2.0), 1.0), denominator);
  const Tensor dice_loss = ops::add_scalar(ops::scale(ops::mean(dice), -1.0), 1.0);
  return ops::add(dice_loss, cross_entropy(flat, labels));
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : options_(options) {
  for (Tensor& p : params) {
    const std::size_t n = p.numel();
    slots_.push_back({std::move(p), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
}

void Adam::step() {
  for (const Slot& s : slots_) {
    if (!s.param.has_grad()) throw ContractError("adam: trainable tensor '" + s.param.name() + "' has no gradient");
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  for (Slot& s : slots_) {
    const auto g = s.param.grad();
    auto p = s.param.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.m[i] = options_.beta1 * s.m[i] + (1.0 - options_.beta1) * g[i];
      s.v[i] = options_.beta2 * s.v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      p[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
    round_to_dtype(p, s.param.dtype());
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

std::vector<std::string> Adam::parameter_names() const {
  std::vector<std::string> names;
  for (const Slot& s : slots_) names.push_back(s.param.name());
  return names;
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t n) {
  if (truth >= k_ || predicted >= k_) throw ContractError("confusion matrix index out of range");
  counts_[truth * k_ + predicted] += n;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ContractError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

double accuracy(const ConfusionMatrix& c) {
  const std::uint64_t total = c.total();
  if (total == 0) throw ContractError("accuracy of an empty confusion matrix");
  std::uint64_t trace = 0;
  for (std::size_t i = 0; i < c.num_classes(); ++i) trace += c.at(i, i);
  return static_cast<double>(trace) / static_cast<double>(total);
}

double quadratic_weighted_kappa(const ConfusionMatrix& c) {
  const std::size_t k = c.num_classes();
  if (k < 2) throw ContractError("kappa needs at least two classes");
  const std::uint64_t total = c.total();
  if (total == 0) throw ContractError("kappa of an all-zero confusion matrix");
  std::vector<double> rows(k, 0.0);
  std::vector<double> cols(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      rows[i] += static_cast<double>(c.at(i, j));
      cols[j] += static_cast<double>(c.at(i, j));
    }
  }
  const double norm = static_cast<double>((k - 1) * (k - 1));
  const double n = static_cast<double>(total);
  double observed = 0.0;
  double expected = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double diff = static_cast<double>(i) - static_cast<double>(j);
      const double w = diff * diff / norm;
      observed += w * static_cast<double>(c.at(i, j));
      expected += w * rows[i] * cols[j] / n;
    }
  }
  // Every rating in one shared category: agreement is perfect.
  if (expected == 0.0) return 1.0;
  return 1.0 - observed / expected;
}

DiceIou OverlapCounts::scores() const {
  const std::uint64_t uni = predicted + truth - intersection;
  if (uni == 0) return {1.0, 1.0};
  return {2.0 * static_cast<double>(intersection) / static_cast<double>(predicted + truth),
          static_cast<double>(intersection) / static_cast<double>(uni)};
}

DiceIou dice_iou(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) {
    throw ContractError("dice_iou: mask sizes differ (" + std::to_string(predicted.size()) + " vs " +
                        std::to_string(truth.size()) + ")");
  }
  OverlapCounts o;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool a = predicted[i] != 0;
    const bool b = truth[i] != 0;
    o.predicted += a;
    o.truth += b;
    o.intersection += a && b;
  }
  return o.scores();
}

MetricsAccumulator::MetricsAccumulator(Task task, std::size_t num_classes)
    : task_(task), confusion_(num_classes), overlaps_(num_classes) {}

void MetricsAccumulator::add(const Tensor& logits, std::span<const std::size_t> labels, double batch_loss) {
  const std::size_t k = logits.dim(-1);
  const std::size_t rows = logits.numel() / k;
  if (rows != labels.size()) throw ContractError("metrics: label count does not match logits");
  const auto v = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t pred = argmax_row(v.subspan(r * k, k));
    const std::size_t truth = labels[r];
    confusion_.add(truth, pred);
    for (std::size_t c = 1; c < overlaps_.size(); ++c) {
      overlaps_[c].predicted += pred == c;
      overlaps_[c].truth += truth == c;
      overlaps_[c].intersection += pred == c && truth == c;
    }
  }
  const std::size_t items = logits.dim(0);
  loss_sum_ += batch_loss * static_cast<double>(items);
  items_ += items;
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.task = task_;
  r.confusion = confusion_;
  r.loss = items_ == 0 ? 0.0 : loss_sum_ / static_cast<double>(items_);
  r.accuracy = accuracy(confusion_);
  if (task_ == Task::kClassification) {
    r.kappa = quadratic_weighted_kappa(confusion_);
  } else {
    double dice = 0.0;
    double iou = 0.0;
    for (std::size_t c = 1; c < overlaps_.size(); ++c) {
      const DiceIou s = overlaps_[c].scores();
      dice += s.dice;
      iou += s.iou;
    }
    const double fg = static_cast<double>(overlaps_.size() - 1);
    r.dice = dice / fg;
    r.iou = iou / fg;
  }
  return r;
}

Tensor task_loss(const Model& model, const Tensor& logits, std::span<const std::size_t> labels) {
  return model.config().task == Task::kClassification ? cross_entropy(logits, labels)
                                                      : hybrid_dice_ce(logits, labels);
}

MetricsReport evaluate(const Model& model, const Dataset& dataset, std::size_t batch_size, const ForwardOptions& opts) {
  if (dataset.size() == 0) throw ContractError("evaluate: empty dataset");
  if (batch_size == 0) throw ContractError("evaluate: batch_size must be positive");
  MetricsAccumulator acc(model.config().task, model.config().vit.num_classes);
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, dataset.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(dataset, idx, model.config());
    const Tensor logits = model.forward(batch.images, opts);
    acc.add(logits, batch.labels, task_loss(model, logits, batch.labels).item());
  }
  return acc.report();
}

GradCheckReport grad_check(const std::vector<Tensor>& params, const std::function<Tensor()>& loss_fn,
                           const GradCheckOptions& options) {
  if (params.empty()) throw ContractError("grad_check: no trainable parameters");
  for (const Tensor& p : params) {
    if (p.dtype() != DType::kFloat64) throw ContractError("grad_check: needs float64 parameters");
    if (!p.requires_grad()) throw ContractError("grad_check: '" + p.name() + "' is frozen");
  }
  std::vector<Tensor> work = params;
  for (Tensor& p : work) p.zero_grad();
  {
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = loss_fn();
    }
    tape.backward(loss);
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick_tensor(0, work.size() - 1);
  std::size_t available = 0;
  for (const Tensor& p : work) available += p.numel();
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t s = 0; s < options.samples; ++s) {
    std::size_t t = 0;
    std::size_t i = 0;
    // Distinct scalars while any remain unvisited.
    do {
      t = pick_tensor(rng);
      i = std::uniform_int_distribution<std::size_t>(0, work[t].numel() - 1)(rng);
    } while (seen.size() < available && !seen.emplace(t, i).second);
    Tensor& p = work[t];
    auto values = p.mutable_data();
    const double original = values[i];
    values[i] = original + options.step;
    const double plus = loss_fn().item();
    values[i] = original - options.step;
    const double minus = loss_fn().item();
    values[i] = original;

    GradCheckSample sample;
    sample.name = p.name();
    sample.index = i;
    sample.analytic = p.has_grad() ? p.grad()[i] : 0.0;
    sample.numeric = (plus - minus) / (2.0 * options.step);
    const double denom = std::max({std::abs(sample.analytic), std::abs(sample.numeric), options.floor});
    sample.rel_error = std::abs(sample.analytic - sample.numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, sample.rel_error);
    report.samples.push_back(std::move(sample));
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

GradCheckReport grad_check(Model& model, const FreezePolicy& policy, const Batch& batch,
                           const GradCheckOptions& options) {
  apply_freeze_policy(model, policy);
  const auto loss_fn = [&]() { return task_loss(model, model.forward(batch.images), batch.labels); };
  return grad_check(model.trainable_parameters(), loss_fn, options);
}

std::string History::to_csv() const {
  std::string out = task == Task::kClassification ? "epoch,loss,acc,kappa\n" : "epoch,loss,dice,iou\n";
  for (const EpochRecord& e : epochs) {
    out += fmt::format("{},{:.8f},{:.6f},{:.6f}\n", e.epoch, e.loss, e.metric_a, e.metric_b);
  }
  return out;
}

History train_loop(Model& model, const Dataset& dataset, const FreezePolicy& policy, const TrainOptions& options) {
  if (dataset.size() == 0) throw ContractError("train_loop: empty dataset");
  if (options.batch_size == 0) throw ContractError("train_loop: batch_size must be positive");
  apply_freeze_policy(model, policy);

  std::vector<std::pair<Tensor, std::vector<double>>> frozen;
  for (const Tensor& t : model.parameters()) {
    if (!t.requires_grad()) frozen.emplace_back(t, std::vector<double>(t.data().begin(), t.data().end()));
  }

  Adam adam(model.trainable_parameters(), AdamOptions{.lr = options.lr});
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  History history;
  history.task = model.config().task;
  std::size_t steps = 0;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    MetricsAccumulator acc(model.config().task, model.config().vit.num_classes);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + options.batch_size)));
      const Batch batch = make_batch(dataset, idx, model.config());
      adam.zero_grad();
      Tape tape;
      Tensor logits;
      Tensor loss;
      {
        Tape::Scope scope(tape);
        logits = model.forward(batch.images);
        loss = task_loss(model, logits, batch.labels);
      }
      if (loss.requires_grad()) {
        tape.backward(loss);
        adam.step();
      }
      acc.add(logits, batch.labels, loss.item());
      if (options.max_steps != 0 && ++steps >= options.max_steps) break;
    }
    const MetricsReport m = acc.report();
    const bool cls = history.task == Task::kClassification;
    history.epochs.push_back({epoch, m.loss, cls ? m.accuracy : m.dice, cls ? m.kappa : m.iou});
    if (options.max_steps != 0 && steps >= options.max_steps) break;
  }

  for (const auto& [tensor, initial] : frozen) {
    if (std::memcmp(tensor.data().data(), initial.data(), initial.size() * sizeof(double)) != 0) {
      throw ContractError("train_loop: frozen tensor '" + tensor.name() + "' changed during training");
    }
  }
  return history;
}

}  // namespace dvpt
