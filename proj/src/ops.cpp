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

#include "dvpt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dvpt/errors.hpp"

namespace dvpt::ops {

namespace {

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// View of a shape as [outer, extent, inner] around one axis.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

DType common_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw ContractError(std::string(op) + ": dtype mismatch " + std::string(dtype_name(a.dtype())) + " vs " +
                        std::string(dtype_name(b.dtype())));
  }
  return a.dtype();
}

Tensor& finish(Tensor& out, const char* op) {
  auto values = out.mutable_data();
  round_to_dtype(values, out.dtype());
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
  return out;
}

void accumulate(std::vector<double>& dst, std::size_t i, double v) { dst[i] += v; }

void check_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb || b.numel() == 1) return;
  const bool suffix = sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!suffix) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(sb) + " onto " + shape_string(sa));
  }
}

// out[i] = f(a[i], b[i % nb]); grads via df/da and df/db.
template <typename F, typename DA, typename DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  check_broadcast(a, b, name);
  Tensor out(a.shape(), common_dtype(a, b, name));
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t nb = bv.size();
  auto ov = out.mutable_data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(av[i], bv[i % nb]);
  finish(out, name);
  record_op(name, {a, b}, out, [a, b, out, dfa, dfb]() {
    const auto& g = pass_grad(out);
    const auto av = a.data();
    const auto bv = b.data();
    const std::size_t nb = bv.size();
    if (needs_grad(a)) {
      auto& ga = pass_grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfa(av[i], bv[i % nb]);
    }
    if (needs_grad(b)) {
      auto& gb = pass_grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) accumulate(gb, i % nb, g[i] * dfb(av[i], bv[i % nb]));
    }
  });
  return out;
}

template <typename F, typename DF>
Tensor unary(const char* name, const Tensor& x, F f, DF df) {
  Tensor out(x.shape(), x.dtype());
  const auto xv = x.data();
  auto ov = out.mutable_data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(xv[i]);
  finish(out, name);
  record_op(name, {x}, out, [x, out, df]() {
    if (!needs_grad(x)) return;
    const auto& g = pass_grad(out);
    auto& gx = pass_grad(x);
    const auto xv = x.data();
    const auto ov = out.data();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], ov[i]);
  });
  return out;
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands need rank >= 2, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t rows = a.dim(-2);
  const std::size_t inner = a.dim(-1);
  const std::size_t cols = b.dim(-1);
  const bool shared_rhs = b.rank() == 2;
  const bool leading_ok =
      shared_rhs || (a.rank() == b.rank() && std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()));
  if (b.dim(-2) != inner || !leading_ok) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const DType dtype = common_dtype(a, b, "matmul");
  const std::size_t batch = a.numel() / (rows * inner);

  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(cols);
  Tensor out(out_shape, dtype);

  const auto av = a.data();
  const auto bv = b.data();
  auto cv = out.mutable_data();
  for (std::size_t t = 0; t < batch; ++t) {
    const double* ap = av.data() + t * rows * inner;
    const double* bp = bv.data() + (shared_rhs ? 0 : t * inner * cols);
    double* cp = cv.data() + t * rows * cols;
    for (std::size_t i = 0; i < rows; ++i) {
      double* crow = cp + i * cols;
      for (std::size_t k = 0; k < inner; ++k) {
        const double aik = ap[i * inner + k];
        const double* brow = bp + k * cols;
        for (std::size_t j = 0; j < cols; ++j) crow[j] += aik * brow[j];
      }
    }
  }
  finish(out, "matmul");

  record_op("matmul", {a, b}, out, [a, b, out, batch, rows, inner, cols, shared_rhs]() {
    const auto& g = pass_grad(out);
    const auto av = a.data();
    const auto bv = b.data();
    if (needs_grad(a)) {
      auto& ga = pass_grad(a);
      for (std::size_t t = 0; t < batch; ++t) {
        const double* bp = bv.data() + (shared_rhs ? 0 : t * inner * cols);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* grow = g.data() + (t * rows + i) * cols;
          for (std::size_t k = 0; k < inner; ++k) {
            const double* brow = bp + k * cols;
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += grow[j] * brow[j];
            ga[(t * rows + i) * inner + k] += s;
          }
        }
      }
    }
    if (needs_grad(b)) {
      auto& gb = pass_grad(b);
      for (std::size_t t = 0; t < batch; ++t) {
        double* gbp = gb.data() + (shared_rhs ? 0 : t * inner * cols);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* grow = g.data() + (t * rows + i) * cols;
          for (std::size_t k = 0; k < inner; ++k) {
            const double aik = av[(t * rows + i) * inner + k];
            double* gbrow = gbp + k * cols;
            for (std::size_t j = 0; j < cols; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    }
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      "gelu", x, [](double v) { return v * std_normal_cdf(v); },
      [](double v, double) { return std_normal_cdf(v) + v * std_normal_pdf(v); });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const std::size_t r = x.rank();
  std::vector<bool> seen(r, false);
  if (order.size() != r) throw DimensionError("permute: order size does not match rank of " + shape_string(x.shape()));
  for (std::size_t o : order) {
    if (o >= r || seen[o]) throw DimensionError("permute: invalid axis order");
    seen[o] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[order[i]];

  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];

  // source flat index for every output position
  const std::size_t n = x.numel();
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t s = 0;
    for (std::size_t i = 0; i < r; ++i) s += idx[i] * in_strides[order[i]];
    source[flat] = s;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }

  Tensor out(out_shape, x.dtype());
  const auto xv = x.data();
  auto ov = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[source[i]];
  record_op("permute", {x}, out, [x, out, source = std::move(source)]() {
    if (!needs_grad(x)) return;
    const auto& g = pass_grad(out);
    auto& gx = pass_grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[source[i]] += g[i];
  });
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose: rank < 2 for " + shape_string(x.shape()));
  std::vector<std::size_t> order(x.rank());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::swap(order[order.size() - 1], order[order.size() - 2]);
  return permute(x, order);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), x.dtype());
  record_op("reshape", {x}, out, [x, out]() {
    if (!needs_grad(x)) return;
    const auto& g = pass_grad(out);
    auto& gx = pass_grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor expand_leading(const Tensor& x, std::size_t count) {
  Shape shape{count};
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  Tensor out(shape, x.dtype());
  const auto xv = x.data();
  auto ov = out.mutable_data();
  const std::size_t n = xv.size();
  for (std::size_t c = 0; c < count; ++c) std::copy(xv.begin(), xv.end(), ov.begin() + static_cast<std::ptrdiff_t>(c * n));
  record_op("expand_leading", {x}, out, [x, out, n]() {
    if (!needs_grad(x)) return;
    const auto& g = pass_grad(out);
    auto& gx = pass_grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i % n] += g[i];
  });
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Tensor& first = parts.front();
  const std::size_t ax = normalize_axis(axis, first.rank());
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    bool ok = p.rank() == first.rank() && p.dtype() == first.dtype();
    for (std::size_t i = 0; ok && i < p.rank(); ++i) {
      if (i != ax && p.shape()[i] != first.shape()[i]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: incompatible shapes " + shape_string(first.shape()) + " and " +
                           shape_string(p.shape()));
    }
    total += p.shape()[ax];
  }
  Shape out_shape = first.shape();
  out_shape[ax] = total;
  Tensor out(out_shape, first.dtype());
  const AxisView ov = axis_view(out_shape, ax);
  auto od = out.mutable_data();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const AxisView pv = axis_view(p.shape(), ax);
    const auto pd = p.data();
    for (std::size_t o = 0; o < pv.outer; ++o) {
      const std::size_t chunk = pv.extent * pv.inner;
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  od.begin() + static_cast<std::ptrdiff_t>(o * ov.extent * ov.inner + offset * ov.inner));
    }
    offsets.push_back(offset);
    offset += pv.extent;
  }
  record_op("concat", parts, out, [parts, out, offsets, ov, ax]() {
    const auto& g = pass_grad(out);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!needs_grad(parts[k])) continue;
      auto& gp = pass_grad(parts[k]);
      const AxisView pv = axis_view(parts[k].shape(), ax);
      const std::size_t chunk = pv.extent * pv.inner;
      for (std::size_t o = 0; o < pv.outer; ++o) {
        const std::size_t base = o * ov.extent * ov.inner + offsets[k] * ov.inner;
        for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += g[base + i];
      }
    }
  });
  return out;
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  if (length == 0 || start + length > x.shape()[ax]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of " + shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  Tensor out(out_shape, x.dtype());
  const AxisView xv = axis_view(x.shape(), ax);
  const std::size_t chunk = length * xv.inner;
  const auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t o = 0; o < xv.outer; ++o) {
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(o * xv.extent * xv.inner + start * xv.inner), chunk,
                od.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  record_op("slice", {x}, out, [x, out, xv, start, chunk]() {
    if (!needs_grad(x)) return;
    const auto& g = pass_grad(out);
    auto& gx = pass_grad(x);
    for (std::size_t o = 0; o < xv.outer; ++o) {
      const std::size_t base = o * xv.extent * xv.inner + start * xv.inner;
      for (std::size_t i = 0; i < chunk; ++i) gx[base + i] += g[o * chunk + i];
    }
  });
  return out;
}

std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<std::size_t>& sizes) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != x.shape()[ax]) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) + " but axis of " +
                         shape_string(x.shape()) + " has " + std::to_string(x.shape()[ax]));
  }
  std::vector<Tensor> parts;
  std::size_t start = 0;
  for (std::size_t s : sizes) {
    parts.push_back(slice(x, axis, start, s));
    start += s;
  }
  return parts;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s, x.dtype());
  finish(out, "sum");
  record_op("sum", {x}, out, [x, out]() {
    if (!needs_grad(x)) return;
    const double g = pass_grad(out)[0];
    auto& gx = pass_grad(x);
    for (double& v : gx) v += g;
  });
  return out;
}

Tensor sum(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape, x.dtype());
  const auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t e = 0; e < v.extent; ++e) {
      for (std::size_t i = 0; i < v.inner; ++i) od[o * v.inner + i] += xd[(o * v.extent + e) * v.inner + i];
    }
  }
  finish(out, "sum");
  record_op("sum_axis", {x}, out, [x, out, v]() {
    if (!needs_grad(x)) return;
    const auto& g = pass_grad(out);
    auto& gx = pass_grad(x);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t e = 0; e < v.extent; ++e) {
        for (std::size_t i = 0; i < v.inner; ++i) gx[(o * v.extent + e) * v.inner + i] += g[o * v.inner + i];
      }
    }
  });
  return out;
}

Tensor mean(const Tensor& x, int axis) {
  const double n = static_cast<double>(x.dim(axis));
  return scale(sum(x, axis), 1.0 / n);
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), ax);
  Tensor out(x.shape(), x.dtype());
  const auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double mx = xd[base];
      for (std::size_t e = 1; e < v.extent; ++e) mx = std::max(mx, xd[base + e * v.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) {
        const double ex = std::exp(xd[base + e * v.inner] - mx);
        od[base + e * v.inner] = ex;
        total += ex;
      }
      for (std::size_t e = 0; e < v.extent; ++e) od[base + e * v.inner] /= total;
    }
  }
  finish(out, "softmax");
  record_op("softmax", {x}, out, [x, out, v]() {
    if (!needs_grad(x)) return;
    const auto& g = pass_grad(out);
    auto& gx = pass_grad(x);
    const auto y = out.data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.extent * v.inner + i;
        double dot = 0.0;
        for (std::size_t e = 0; e < v.extent; ++e) dot += g[base + e * v.inner] * y[base + e * v.inner];
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t k = base + e * v.inner;
          gx[k] += y[k] * (g[k] - dot);
        }
      }
    }
  });
  return out;
}

Tensor log_softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), ax);
  Tensor out(x.shape(), x.dtype());
  const auto xd = x.data();
  auto od = out.mutable_data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double mx = xd[base];
      for (std::size_t e = 1; e < v.extent; ++e) mx = std::max(mx, xd[base + e * v.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) total += std::exp(xd[base + e * v.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t e = 0; e < v.extent; ++e) od[base + e * v.inner] = xd[base + e * v.inner] - lse;
    }
  }
  finish(out, "log_softmax");
  record_op("log_softmax", {x}, out, [x, out, v]() {
    if (!needs_grad(x)) return;
    const auto& g = pass_grad(out);
    auto& gx = pass_grad(x);
    const auto y = out.data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.extent * v.inner + i;
        double gsum = 0.0;
        for (std::size_t e = 0; e < v.extent; ++e) gsum += g[base + e * v.inner];
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t k = base + e * v.inner;
          gx[k] += g[k] - std::exp(y[k]) * gsum;
        }
      }
    }
  });
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layernorm: affine parameters " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not match last dim of " + shape_string(x.shape()));
  }
  common_dtype(x, gamma, "layernorm");
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape(), x.dtype());
  std::vector<double> normalized(x.numel());
  std::vector<double> inv_std(rows);
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  auto od = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * is;
      normalized[r * d + j] = xh;
      od[r * d + j] = xh * gd[j] + bd[j];
    }
  }
  finish(out, "layernorm");
  record_op("layernorm", {x, gamma, beta}, out,
            [x, gamma, beta, out, d, rows, normalized = std::move(normalized), inv_std = std::move(inv_std)]() {
              const auto& g = pass_grad(out);
              const auto gd = gamma.data();
              if (needs_grad(gamma)) {
                auto& gg = pass_grad(gamma);
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * normalized[r * d + j];
                }
              }
              if (needs_grad(beta)) {
                auto& gb = pass_grad(beta);
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                }
              }
              if (needs_grad(x)) {
                auto& gx = pass_grad(x);
                const double n = static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                  double mean_dxh = 0.0;
                  double mean_dxh_xh = 0.0;
                  for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = g[r * d + j] * gd[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * normalized[r * d + j];
                  }
                  mean_dxh /= n;
                  mean_dxh_xh /= n;
                  for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = g[r * d + j] * gd[j];
                    gx[r * d + j] += inv_std[r] * (dxh - mean_dxh - normalized[r * d + j] * mean_dxh_xh);
                  }
                }
              }
            });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) { return add(matmul(x, weight), bias); }

}  // namespace dvpt::ops
