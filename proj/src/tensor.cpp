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

#include "dvpt/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>
#include <unordered_set>

#include "dvpt/errors.hpp"

namespace dvpt {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::string_view dtype_name(DType dtype) {
  return dtype == DType::kFloat32 ? "float32" : "float64";
}

std::size_t dtype_size(DType dtype) { return dtype == DType::kFloat32 ? 4 : 8; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void round_to_dtype(std::span<double> values, DType dtype) {
  if (dtype != DType::kFloat32) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

Tensor::Tensor(Shape shape, DType dtype) : impl_(std::make_shared<Impl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  impl_->data.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->dtype = dtype;
}

Tensor::Tensor(Shape shape, std::vector<double> values, DType dtype) : Tensor(std::move(shape), dtype) {
  if (values.size() != impl_->data.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_string(impl_->shape));
  }
  impl_->data = std::move(values);
  round_to_dtype(impl_->data, dtype);
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  round_to_dtype(t.impl_->data, dtype);
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({1}, value, dtype); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }
DType Tensor::dtype() const { return impl_->dtype; }
std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->requires_grad) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  }
}

const std::string& Tensor::name() const { return impl_->name; }
void Tensor::set_name(std::string name) { impl_->name = std::move(name); }

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->dtype);
  t.impl_->data = impl_->data;
  t.impl_->name = impl_->name;
  return t;
}

void Tensor::assign(const Tensor& source) {
  if (source.shape() != shape()) {
    throw DimensionError("assign: shape " + shape_string(source.shape()) + " into " + shape_string(shape()));
  }
  impl_->data.assign(source.data().begin(), source.data().end());
  round_to_dtype(impl_->data, impl_->dtype);
}

bool Tensor::is_leaf() const { return impl_->leaf; }

std::vector<double>& TensorAccess::pass_grad(const Tensor& t) {
  auto& g = t.impl_->pass_grad;
  if (g.empty()) g.assign(t.impl_->data.size(), 0.0);
  return g;
}

void TensorAccess::mark_interior(Tensor& t) {
  t.impl_->leaf = false;
  t.impl_->requires_grad = true;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void Tape::record(Node node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any tensor that requires gradients");
  }

  // Fresh per-pass buffers so a second backward adds exactly the same values.
  std::vector<std::shared_ptr<Tensor::Impl>> touched;
  std::unordered_set<const Tensor::Impl*> seen;
  auto reset = [&](const Tensor& t) {
    if (!seen.insert(t.impl_.get()).second) return;
    t.impl_->pass_grad.assign(t.impl_->data.size(), 0.0);
    touched.push_back(t.impl_);
  };
  for (const Node& node : nodes_) {
    for (const Tensor& in : node.inputs) {
      if (in.requires_grad()) reset(in);
    }
    reset(node.output);
  }
  if (loss.is_leaf()) reset(loss);
  pass_grad(loss)[0] = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward();
  }

  for (const auto& impl : touched) {
    if (impl->leaf && impl->requires_grad && !impl->pass_grad.empty()) {
      if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
      for (std::size_t i = 0; i < impl->grad.size(); ++i) impl->grad[i] += impl->pass_grad[i];
    }
  }
  for (const auto& impl : touched) {
    impl->pass_grad.clear();
  }
}

bool needs_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

void record_op(std::string op, std::vector<Tensor> inputs, Tensor& output, Tape::BackwardFn backward) {
  Tape* tape = active_tape();
  if (tape == nullptr) return;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return needs_grad(t); });
  if (!any) return;
  TensorAccess::mark_interior(output);
  tape->record(Tape::Node{std::move(op), std::move(inputs), output, std::move(backward)});
}

}  // namespace dvpt
