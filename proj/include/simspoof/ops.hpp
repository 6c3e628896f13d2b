#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "simspoof/tensor.hpp"

namespace simspoof {

using Pair = std::pair<std::size_t, std::size_t>;

enum class ElementwiseKind { add, mul, sub, div, sigmoid, selu, square, scale };

// Binary kinds broadcast `a` against `b` with trailing-dimension rules; unary
// kinds ignore `b`; `scale` multiplies by the scalar in `b`.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b);
Tensor elementwise(ElementwiseKind kind, const Tensor& a, double b = 0.0);

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor selu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor cos(const Tensor& a);
// arccos of the input clamped to [lo, hi]; gradient is zero where clamped.
Tensor acos_clamped(const Tensor& a, double lo, double hi);
// Elementwise clamp to [lo, hi]; gradient passes only strictly inside.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axes(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim);
Tensor mean_axes(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim);
// Ties resolve to the lowest flat index; gradient is routed there.
Tensor max_axes(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& order);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
// Gathers rows along axis 0; repeated indices accumulate gradient.
Tensor index_select(const Tensor& a, const std::vector<std::size_t>& rows);

// Row-wise log-softmax of a [B x C] tensor.
Tensor log_softmax(const Tensor& logits);

Tensor matmul(const Tensor& a, const Tensor& b);
// x: [d] or [B x d]; w: [d x c]; bias: [c] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});

// x: [C_in x H x W] or [B x C_in x H x W]; kernels: [C_out x C_in x kh x kw].
Tensor conv2d(const Tensor& x, const Tensor& kernels, Pair stride = {1, 1}, Pair padding = {0, 0});
// Pools over the last two dims of a 2-, 3- or 4-dim tensor.
Tensor max_pool2d(const Tensor& x, Pair window, Pair stride);
Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w);
// Pools over the last dim.
Tensor adaptive_avg_pool1d(const Tensor& x, std::size_t target);

enum class PoolKind { max2d, adaptive_avg };
// Unified entry point: `window` is the max2d window (stride = window) or the
// adaptive_avg target size over the last two dims.
Tensor pool(PoolKind kind, const Tensor& x, Pair window);

struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  double momentum = 0.1;
  double eps = 1e-5;
};

// Channels on axis 1; statistics over every other axis. Training mode uses
// batch statistics and updates the running buffers in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training);

}  // namespace simspoof
