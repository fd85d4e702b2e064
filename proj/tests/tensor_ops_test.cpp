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


#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "dvpt/errors.hpp"
#include "dvpt/ops.hpp"
#include "test_util.hpp"

namespace dvpt {
namespace {

using testing::finite_difference_error;
using testing::random_tensor;

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 0.0) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t.at(i), want[i], tol) << "index " << i;
}

TEST(Matmul, IdentityAndAnnihilation) {
  const Tensor eye = mat(2, 2, {1, 0, 0, 1});
  expect_values(ops::matmul(eye, mat(2, 2, {1, 2, 3, 4})), {1, 2, 3, 4});
  expect_values(ops::matmul(mat(2, 2, {1, 0, 0, 0}), mat(2, 2, {0, 0, 0, 1})), {0, 0, 0, 0});
}

TEST(Matmul, BatchedMatchesTripleLoop) {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({2, 3, 4}, rng);
  const Tensor b = random_tensor({2, 4, 5}, rng);
  const Tensor shared = random_tensor({4, 5}, rng);
  const Tensor c = ops::matmul(a, b);
  const Tensor d = ops::matmul(a, shared);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 5}));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0.0, t = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
          s += a.at(n * 12 + i * 4 + k) * b.at(n * 20 + k * 5 + j);
          t += a.at(n * 12 + i * 4 + k) * shared.at(k * 5 + j);
        }
        EXPECT_NEAR(c.at(n * 15 + i * 5 + j), s, 1e-14);
        EXPECT_NEAR(d.at(n * 15 + i * 5 + j), t, 1e-14);
      }
    }
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    ops::matmul(Tensor({2, 3}), Tensor({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(shape_string({2, 3})), std::string::npos) << msg;
    EXPECT_NE(msg.find(shape_string({4, 5})), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientsMatchFiniteDifferencesTightly) {
  std::mt19937_64 rng(5);
  Tensor a = random_tensor({3, 4}, rng, -1, 1, true);
  Tensor b = random_tensor({4, 5}, rng, -1, 1, true);
  EXPECT_LT(finite_difference_error({a, b}, [&] { return ops::matmul(a, b); }, rng, 1000), 1e-6);
}

TEST(Softmax, Examples) {
  expect_values(ops::softmax(Tensor({3}, {0, 0, 0}), -1), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
  const Tensor big = ops::softmax(Tensor({2}, {1000, 0}), -1);
  EXPECT_DOUBLE_EQ(big.at(0), 1.0);
  EXPECT_GE(big.at(1), 0.0);
  EXPECT_LT(big.at(1), 1e-300);

  const Tensor s = ops::softmax(Tensor({3}, {1, 2, 3}), -1);
  const long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(s.at(i), static_cast<double>(std::exp(static_cast<long double>(i + 1)) / z), 1e-15);
  }
}

TEST(Softmax, RowsSumToOneAndStayInUnitInterval) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({6, 11}, rng, -60, 60);
    const Tensor s = ops::softmax(x, -1);
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 11; ++c) {
        const double v = s.at(r * 11 + c);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(LayerNorm, ConstantRowAndZeroGamma) {
  const Tensor x({2, 4}, {3, 3, 3, 3, 1, 2, 3, 4});
  const Tensor ln = ops::layernorm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), 1e-6);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ln.at(i), 0.0);
  const Tensor beta({4}, {0.5, -1, 2, 0});
  const Tensor flat = ops::layernorm(x, Tensor::zeros({4}), beta, 1e-6);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(flat.at(i), beta.at(i % 4));
}

TEST(LayerNorm, RandomRowMatchesScalarOracle) {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor({1, 9}, rng, -3, 3);
  const Tensor g = random_tensor({9}, rng);
  const Tensor b = random_tensor({9}, rng);
  const Tensor y = ops::layernorm(x, g, b, 1e-6);
  long double mean = 0, var = 0;
  for (int i = 0; i < 9; ++i) mean += x.at(i);
  mean /= 9;
  for (int i = 0; i < 9; ++i) var += (x.at(i) - mean) * (x.at(i) - mean);
  var /= 9;
  for (int i = 0; i < 9; ++i) {
    const long double want = (x.at(i) - mean) / std::sqrt(var + 1e-6L) * g.at(i) + b.at(i);
    EXPECT_NEAR(y.at(i), static_cast<double>(want), 1e-6);
  }
}

TEST(Gelu, Examples) {
  EXPECT_EQ(ops::gelu(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_NEAR(ops::gelu(Tensor::scalar(10.0)).item(), 10.0, 1e-6);
  const long double phi = 0.5L * (1.0L + std::erf(1.0L / std::sqrt(2.0L)));
  EXPECT_NEAR(ops::gelu(Tensor::scalar(1.0)).item(), static_cast<double>(phi), 1e-15);
}

TEST(Backward, SumGivesOnesAndSquareGivesTwoX) {
  Tensor x = Tensor::full({2, 3, 2}, 0.7);
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = ops::sum(x);
  }
  tape.backward(loss);
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);

  Tensor y = Tensor::scalar(3.0);
  y.set_requires_grad(true);
  Tape t2;
  {
    Tape::Scope scope(t2);
    loss = ops::mul(y, y);
  }
  t2.backward(loss);
  EXPECT_EQ(y.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::full({3}, 1.0);
  x.set_requires_grad(true);
  Tape tape;
  Tensor out;
  {
    Tape::Scope scope(tape);
    out = ops::scale(x, 2.0);
  }
  EXPECT_THROW(tape.backward(out), ContractError);
}

TEST(Backward, TwiceWithoutZeroingDoublesExactly) {
  std::mt19937_64 rng(13);
  Tensor a = random_tensor({4, 6}, rng, -1, 1, true);
  Tensor w = random_tensor({6, 3}, rng, -1, 1, true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = ops::sum(ops::softmax(ops::gelu(ops::matmul(a, w)), -1));
    loss = ops::add(loss, ops::sum(ops::mul(a, a)));
  }
  tape.backward(loss);
  const std::vector<double> ga(a.grad().begin(), a.grad().end());
  const std::vector<double> gw(w.grad().begin(), w.grad().end());
  tape.backward(loss);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_EQ(a.grad()[i], 2 * ga[i]);
  for (std::size_t i = 0; i < gw.size(); ++i) EXPECT_EQ(w.grad()[i], 2 * gw[i]);
}

TEST(Tensor, NonFiniteResultsAreErrors) {
  EXPECT_THROW(ops::log(Tensor({2}, {1.0, 0.0})), NumericError);
  EXPECT_THROW(ops::exp(Tensor::scalar(1000.0)), NumericError);
  EXPECT_THROW(ops::div(Tensor::scalar(1.0), Tensor::scalar(0.0)), NumericError);
}

TEST(Tensor, Float32ResultsAreRepresentable) {
  std::mt19937_64 rng(17);
  Tensor a = random_tensor({5, 7}, rng);
  Tensor b = random_tensor({7, 3}, rng);
  Tensor a32({5, 7}, std::vector<double>(a.data().begin(), a.data().end()), DType::kFloat32);
  Tensor b32({7, 3}, std::vector<double>(b.data().begin(), b.data().end()), DType::kFloat32);
  const Tensor c = ops::gelu(ops::matmul(a32, b32));
  EXPECT_EQ(c.dtype(), DType::kFloat32);
  for (double v : c.data()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  for (double v : a32.data()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
}

TEST(Tensor, OperationsAreDeterministic) {
  auto run = [] {
    std::mt19937_64 rng(19);
    const Tensor x = random_tensor({3, 8, 16}, rng);
    const Tensor w = random_tensor({16, 16}, rng);
    return ops::layernorm(ops::softmax(ops::matmul(x, w), -1), Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-6);
  };
  const Tensor a = run();
  const Tensor b = run();
  ASSERT_EQ(a.numel(), b.numel());
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)), 0);
}

// Every differentiable primitive against central differences on randomized
// shapes up to 8x8x16.
class PrimitiveGradients : public ::testing::TestWithParam<int> {
 protected:
  std::mt19937_64 rng{static_cast<std::uint64_t>(GetParam()) * 7919 + 1};

  Shape random_shape() {
    std::uniform_int_distribution<std::size_t> a(1, 8), c(1, 16);
    return {a(rng), a(rng), c(rng)};
  }
  void check(std::vector<Tensor> inputs, const std::function<Tensor()>& f, const char* what) {
    EXPECT_LT(finite_difference_error(std::move(inputs), f, rng, 48), 1e-4) << what;
  }
};

TEST_P(PrimitiveGradients, Elementwise) {
  const Shape s = random_shape();
  Tensor a = random_tensor(s, rng, -2, 2, true);
  Tensor b = random_tensor(s, rng, -2, 2, true);
  Tensor pos = random_tensor(s, rng, 0.5, 2, true);
  Tensor row = random_tensor({s[2]}, rng, -2, 2, true);
  Tensor one = random_tensor({1}, rng, -2, 2, true);
  check({a, b}, [&] { return ops::add(a, b); }, "add");
  check({a, b}, [&] { return ops::sub(a, b); }, "sub");
  check({a, b}, [&] { return ops::mul(a, b); }, "mul");
  check({a, pos}, [&] { return ops::div(a, pos); }, "div");
  check({a, row}, [&] { return ops::mul(a, row); }, "broadcast mul");
  check({a, one}, [&] { return ops::add(a, one); }, "scalar add");
  check({a}, [&] { return ops::scale(a, -1.7); }, "scale");
  check({a}, [&] { return ops::add_scalar(a, 0.3); }, "add_scalar");
  check({a}, [&] { return ops::exp(a); }, "exp");
  check({pos}, [&] { return ops::log(pos); }, "log");
  check({a}, [&] { return ops::gelu(a); }, "gelu");
}

TEST_P(PrimitiveGradients, ShapeOps) {
  const Shape s = random_shape();
  Tensor a = random_tensor(s, rng, -2, 2, true);
  Tensor b = random_tensor({s[0], s[1], 3}, rng, -2, 2, true);
  Tensor m = random_tensor({s[1], s[2]}, rng, -2, 2, true);
  check({a}, [&] { return ops::transpose(a); }, "transpose");
  check({a}, [&] { return ops::permute(a, {2, 0, 1}); }, "permute");
  check({a}, [&] { return ops::reshape(a, {s[0] * s[1], s[2]}); }, "reshape");
  check({m}, [&] { return ops::expand_leading(m, 3); }, "expand_leading");
  check({a, b}, [&] { return ops::concat({b, a}, 2); }, "concat");
  check({a},
        [&] {
          const std::size_t first = s[2] / 2;
          if (first == 0) return ops::scale(a, 1.0);
          auto parts = ops::split(a, -1, {first, s[2] - first});
          return ops::concat({parts[1], ops::scale(parts[0], 2.0)}, -1);
        },
        "split");
  check({a}, [&] { return ops::slice(a, 1, s[1] / 2, s[1] - s[1] / 2); }, "slice");
}

TEST_P(PrimitiveGradients, Reductions) {
  const Shape s = random_shape();
  Tensor a = random_tensor(s, rng, -2, 2, true);
  Tensor gamma = random_tensor({s[2]}, rng, 0.5, 1.5, true);
  Tensor beta = random_tensor({s[2]}, rng, -1, 1, true);
  check({a}, [&] { return ops::sum(a); }, "sum");
  check({a}, [&] { return ops::sum(a, 1); }, "sum axis");
  check({a}, [&] { return ops::mean(a, 0); }, "mean axis");
  check({a}, [&] { return ops::mean(a); }, "mean");
  check({a}, [&] { return ops::softmax(a, -1); }, "softmax");
  check({a}, [&] { return ops::softmax(a, 1); }, "softmax middle axis");
  check({a}, [&] { return ops::log_softmax(a, -1); }, "log_softmax");
  if (s[2] > 1) check({a, gamma, beta}, [&] { return ops::layernorm(a, gamma, beta, 1e-6); }, "layernorm");
}

TEST_P(PrimitiveGradients, MatmulAndLinear) {
  const Shape s = random_shape();
  Tensor a = random_tensor(s, rng, -1, 1, true);
  Tensor b = random_tensor({s[0], s[2], 5}, rng, -1, 1, true);
  Tensor w = random_tensor({s[2], 6}, rng, -1, 1, true);
  Tensor bias = random_tensor({6}, rng, -1, 1, true);
  check({a, b}, [&] { return ops::matmul(a, b); }, "batched matmul");
  check({a, w}, [&] { return ops::matmul(a, w); }, "shared-rhs matmul");
  check({a, w, bias}, [&] { return ops::linear(a, w, bias); }, "linear");
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, PrimitiveGradients, ::testing::Range(0, 6));

}  // namespace
}  // namespace dvpt
