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

#include <vector>

#include "dvpt/tensor.hpp"

// Differentiable primitives. Every op records itself on the active tape when
// any input requires gradients, checks that its output is finite, and rounds
// to the operand dtype. Reductions run sequentially in index order.
namespace dvpt::ops {

// [..., i, k] x [k, j] (shared right operand) or [..., i, k] x [..., k, j]
// with identical leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);

// Binary elementwise ops. `b` must have the shape of `a`, be a one-element
// tensor, or have a shape equal to a trailing suffix of `a`'s shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// Exact form x * Phi(x).
Tensor gelu(const Tensor& x);

// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor reshape(const Tensor& x, Shape shape);
// [shape...] -> [count, shape...], each copy aliasing the same source values.
Tensor expand_leading(const Tensor& x, std::size_t count);

Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<std::size_t>& sizes);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);

// Sum of all elements, shape [1].
Tensor sum(const Tensor& x);
// Reduces `axis` away (rank drops by one; a rank-1 input yields shape [1]).
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x, int axis);
Tensor mean(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

// Normalizes over the last axis; eps sits inside the square root.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// x . weight + bias over the last axis.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace dvpt::ops
