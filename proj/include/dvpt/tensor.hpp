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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dvpt {

using Shape = std::vector<std::size_t>;

// Storage is always double. kFloat32 tensors hold values that are exactly
// representable in binary32: every op rounds its results, so a float32 run
// behaves like single-precision arithmetic with double accumulation.
enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

std::string_view dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Rounds every element to the precision of `dtype` in place.
void round_to_dtype(std::span<double> values, DType dtype);

// Reference-counted handle to a dense row-major buffer with an optional
// gradient slot. Copies alias the same storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::kFloat64);
  Tensor(Shape shape, std::vector<double> values, DType dtype = DType::kFloat64);

  static Tensor zeros(Shape shape, DType dtype = DType::kFloat64);
  static Tensor full(Shape shape, double value, DType dtype = DType::kFloat64);
  static Tensor scalar(double value, DType dtype = DType::kFloat64);

  bool defined() const { return impl_ != nullptr; }
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;
  DType dtype() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  // Turning gradients off drops the gradient buffer.
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  const std::string& name() const;
  void set_name(std::string name);

  // Detached deep copy (no gradient, not trainable).
  Tensor clone() const;
  // Copies values from `source`, which must have the same shape.
  void assign(const Tensor& source);

  bool is_leaf() const;

 private:
  friend class Tape;
  friend struct TensorAccess;

  struct Impl {
    Shape shape;
    DType dtype = DType::kFloat64;
    std::vector<double> data;
    std::vector<double> grad;
    // Gradient of the current backward pass. Folded into `grad` for leaves.
    std::vector<double> pass_grad;
    bool requires_grad = false;
    bool leaf = true;
    std::string name;
  };

  std::shared_ptr<Impl> impl_;
};

// Gives op implementations access to the per-pass gradient buffer.
struct TensorAccess {
  static std::vector<double>& pass_grad(const Tensor& t);
  static void mark_interior(Tensor& t);
};

// Records differentiable operations in execution order. Append order is a
// topological order because an op can only consume tensors that exist.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Makes this tape the recording target on the calling thread.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  void record(Node node);

  // Propagates d(loss)/d(.) through the recorded ops and adds the result to
  // the gradient of every requires_grad leaf. Gradients accumulate across
  // calls; callers zero them explicitly.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

// Tape currently recording on this thread, or nullptr.
Tape* active_tape();

// Registers a custom differentiable op. `backward` reads the output's pass
// gradient through pass_grad(output) and accumulates into pass_grad(input)
// for inputs that require gradients. No-op when nothing needs recording.
void record_op(std::string op, std::vector<Tensor> inputs, Tensor& output,
               Tape::BackwardFn backward);

// True when `t` takes part in the recorded graph.
bool needs_grad(const Tensor& t);

inline std::vector<double>& pass_grad(const Tensor& t) { return TensorAccess::pass_grad(t); }

}  // namespace dvpt
