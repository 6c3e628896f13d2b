#include "simspoof/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "simspoof/kernels.hpp"

namespace simspoof {

namespace {

constexpr double kSeluScale = 1.0507009873554804934193349852946;
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// For each flat index of `out`, the flat index of `in` under broadcasting.
std::vector<std::uint32_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t n = numel(out);
  std::vector<std::uint32_t> idx(n);
  const std::size_t offset = out.size() - in.size();
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> eff(out.size(), 0);
  for (std::size_t d = 0; d < in.size(); ++d) eff[d + offset] = in[d] == 1 ? 0 : in_strides[d];
  std::vector<std::size_t> counter(out.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = static_cast<std::uint32_t>(pos);
    for (std::size_t d = out.size(); d-- > 0;) {
      if (++counter[d] < out[d]) {
        pos += eff[d];
        break;
      }
      pos -= eff[d] * (out[d] - 1);
      counter[d] = 0;
    }
  }
  return idx;
}

template <class Forward, class Backward>
Tensor unary(const Tensor& a, const char* name, Forward f, Backward df) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, name, [df](TensorImpl& o) {
    auto g = o.parent_grad(0);
    if (g.empty()) return;
    const auto& x = o.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * df(x[i], o.value[i]);
  });
}

enum class BinOp { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = numel(out_shape);
  const bool same_a = a.shape() == out_shape;
  const bool same_b = b.shape() == out_shape;
  std::vector<std::uint32_t> ia, ib;
  if (!same_a) ia = broadcast_index(a.shape(), out_shape);
  if (!same_b) ib = broadcast_index(b.shape(), out_shape);
  const auto av = a.data();
  const auto bv = b.data();
  if (op == BinOp::div) {
    for (double v : bv) {
      if (v == 0.0) throw std::domain_error("division by zero in div(" + shape_str(a.shape()) + ", " +
                                            shape_str(b.shape()) + ")");
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[same_a ? i : ia[i]];
    const double y = bv[same_b ? i : ib[i]];
    switch (op) {
      case BinOp::add: out[i] = x + y; break;
      case BinOp::sub: out[i] = x - y; break;
      case BinOp::mul: out[i] = x * y; break;
      case BinOp::div: out[i] = x / y; break;
    }
  }
  return Tensor::make_result(
      out_shape, std::move(out), {a, b}, name,
      [op, ia = std::move(ia), ib = std::move(ib), same_a, same_b](TensorImpl& o) {
        auto ga = o.parent_grad(0);
        auto gb = o.parent_grad(1);
        const auto& x = o.parents[0]->value;
        const auto& y = o.parents[1]->value;
        const std::size_t n = o.grad.size();
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ja = same_a ? i : ia[i];
          const std::size_t jb = same_b ? i : ib[i];
          const double g = o.grad[i];
          switch (op) {
            case BinOp::add:
              if (!ga.empty()) ga[ja] += g;
              if (!gb.empty()) gb[jb] += g;
              break;
            case BinOp::sub:
              if (!ga.empty()) ga[ja] += g;
              if (!gb.empty()) gb[jb] -= g;
              break;
            case BinOp::mul:
              if (!ga.empty()) ga[ja] += g * y[jb];
              if (!gb.empty()) gb[jb] += g * x[ja];
              break;
            case BinOp::div:
              if (!ga.empty()) ga[ja] += g / y[jb];
              if (!gb.empty()) gb[jb] -= g * x[ja] / (y[jb] * y[jb]);
              break;
          }
        }
      });
}

// Maps every input flat index to its reduced output flat index.
struct Reduction {
  Shape out_shape;       // keepdim form
  Shape squeezed_shape;  // reduced dims dropped (at least [1])
  std::vector<std::uint32_t> target;
};

Reduction make_reduction(const Shape& in, const std::vector<std::size_t>& axes) {
  std::vector<bool> reduced(in.size(), false);
  for (auto ax : axes) {
    if (ax >= in.size()) throw ShapeError("reduction axis " + std::to_string(ax) + " out of range for " + shape_str(in));
    reduced[ax] = true;
  }
  Reduction r;
  r.out_shape = in;
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (reduced[d]) r.out_shape[d] = 1;
    else r.squeezed_shape.push_back(in[d]);
  }
  if (r.squeezed_shape.empty()) r.squeezed_shape = {1};
  r.target = broadcast_index(r.out_shape, in);
  return r;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    const std::size_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcast-compatible");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::div, "div"); }

Tensor add(const Tensor& a, double b) {
  return unary(a, "add_scalar", [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor selu(const Tensor& a) {
  return unary(
      a, "selu", [](double x) { return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x); },
      [](double x, double) { return x > 0.0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(x); });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (v <= 0.0) throw std::domain_error("log of non-positive value " + std::to_string(v));
  }
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0) throw std::domain_error("sqrt of negative value " + std::to_string(v));
  }
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor cos(const Tensor& a) {
  return unary(a, "cos", [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor acos_clamped(const Tensor& a, double lo, double hi) {
  return unary(
      a, "acos", [lo, hi](double x) { return std::acos(std::clamp(x, lo, hi)); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? -1.0 / std::sqrt(1.0 - x * x) : 0.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case ElementwiseKind::add: return add(a, b);
    case ElementwiseKind::mul: return mul(a, b);
    case ElementwiseKind::sub: return sub(a, b);
    case ElementwiseKind::div: return div(a, b);
    case ElementwiseKind::scale: return scale(a, b.item());
    case ElementwiseKind::sigmoid: return sigmoid(a);
    case ElementwiseKind::selu: return selu(a);
    case ElementwiseKind::square: return square(a);
  }
  throw std::invalid_argument("unknown elementwise kind");
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, double b) {
  switch (kind) {
    case ElementwiseKind::add: return add(a, b);
    case ElementwiseKind::sub: return add(a, -b);
    case ElementwiseKind::mul:
    case ElementwiseKind::scale: return scale(a, b);
    case ElementwiseKind::div:
      if (b == 0.0) throw std::domain_error("division by zero scalar");
      return scale(a, 1.0 / b);
    default: return elementwise(kind, a, Tensor::scalar(b));
  }
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({1}, {s}, {a}, "sum", [](TensorImpl& o) {
    auto g = o.parent_grad(0);
    for (auto& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_axes(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim) {
  auto r = make_reduction(a.shape(), axes);
  std::vector<double> out(numel(r.out_shape), 0.0);
  const auto x = a.data();
  for (std::size_t i = 0; i < x.size(); ++i) out[r.target[i]] += x[i];
  Shape shape = keepdim ? r.out_shape : r.squeezed_shape;
  return Tensor::make_result(std::move(shape), std::move(out), {a}, "sum_axes",
                             [target = std::move(r.target)](TensorImpl& o) {
                               auto g = o.parent_grad(0);
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[target[i]];
                             });
}

Tensor mean_axes(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim) {
  std::size_t count = 1;
  for (auto ax : axes) count *= a.size(ax);
  return scale(sum_axes(a, axes, keepdim), 1.0 / static_cast<double>(count));
}

Tensor max_axes(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim) {
  auto r = make_reduction(a.shape(), axes);
  const std::size_t n_out = numel(r.out_shape);
  std::vector<double> out(n_out, 0.0);
  std::vector<std::uint32_t> arg(n_out, UINT32_MAX);
  const auto x = a.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto t = r.target[i];
    if (arg[t] == UINT32_MAX || x[i] > out[t]) {
      out[t] = x[i];
      arg[t] = static_cast<std::uint32_t>(i);
    }
  }
  Shape shape = keepdim ? r.out_shape : r.squeezed_shape;
  return Tensor::make_result(std::move(shape), std::move(out), {a}, "max_axes", [arg = std::move(arg)](TensorImpl& o) {
    auto g = o.parent_grad(0);
    for (std::size_t j = 0; j < arg.size(); ++j) g[arg[j]] += o.grad[j];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> v(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(v), {a}, "reshape", [](TensorImpl& o) {
    auto g = o.parent_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& order) {
  const Shape& in = a.shape();
  if (order.size() != in.size()) throw ShapeError("permute order rank mismatch for " + shape_str(in));
  std::vector<bool> seen(in.size(), false);
  Shape out(in.size());
  for (std::size_t d = 0; d < order.size(); ++d) {
    if (order[d] >= in.size() || seen[order[d]]) throw ShapeError("invalid permutation");
    seen[order[d]] = true;
    out[d] = in[order[d]];
  }
  // src[i] is the input flat index feeding output flat index i.
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> perm_strides(in.size());
  for (std::size_t d = 0; d < order.size(); ++d) perm_strides[d] = in_strides[order[d]];
  const std::size_t n = a.numel();
  std::vector<std::uint32_t> src(n);
  std::vector<std::size_t> counter(out.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    src[i] = static_cast<std::uint32_t>(pos);
    for (std::size_t d = out.size(); d-- > 0;) {
      if (++counter[d] < out[d]) {
        pos += perm_strides[d];
        break;
      }
      pos -= perm_strides[d] * (out[d] - 1);
      counter[d] = 0;
    }
  }
  std::vector<double> v(n);
  const auto x = a.data();
  for (std::size_t i = 0; i < n; ++i) v[i] = x[src[i]];
  return Tensor::make_result(std::move(out), std::move(v), {a}, "permute", [src = std::move(src)](TensorImpl& o) {
    auto g = o.parent_grad(0);
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += o.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat axis out of range for " + shape_str(ref));
  Shape out = ref;
  out[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == ref[d];
    if (!ok) throw ShapeError("concat shape mismatch: " + shape_str(ref) + " vs " + shape_str(s));
    out[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  std::vector<double> v(numel(out));
  std::vector<std::size_t> widths;
  const std::size_t row = out[axis] * inner;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.size(axis) * inner;
    widths.push_back(w);
    const auto x = p.data();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.data() + o * w, w, v.data() + o * row + offset);
    offset += w;
  }
  return Tensor::make_result(std::move(out), std::move(v), parts, "concat",
                             [outer, row, widths = std::move(widths)](TensorImpl& o) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 auto g = o.parent_grad(k);
                                 const std::size_t w = widths[k];
                                 if (!g.empty()) {
                                   for (std::size_t r = 0; r < outer; ++r) {
                                     for (std::size_t j = 0; j < w; ++j) g[r * w + j] += o.grad[r * row + offset + j];
                                   }
                                 }
                                 offset += w;
                               }
                             });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& in = a.shape();
  if (axis >= in.size() || length == 0 || start + length > in[axis]) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                     std::to_string(axis) + " out of range for " + shape_str(in));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= in[d];
  for (std::size_t d = axis + 1; d < in.size(); ++d) inner *= in[d];
  Shape out = in;
  out[axis] = length;
  const std::size_t in_row = in[axis] * inner, w = length * inner, off = start * inner;
  std::vector<double> v(outer * w);
  const auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.data() + o * in_row + off, w, v.data() + o * w);
  return Tensor::make_result(std::move(out), std::move(v), {a}, "slice", [outer, in_row, w, off](TensorImpl& o) {
    auto g = o.parent_grad(0);
    for (std::size_t r = 0; r < outer; ++r) {
      for (std::size_t j = 0; j < w; ++j) g[r * in_row + off + j] += o.grad[r * w + j];
    }
  });
}

Tensor index_select(const Tensor& a, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw ShapeError("index_select with no rows");
  const std::size_t n_rows = a.size(0);
  const std::size_t inner = a.numel() / n_rows;
  Shape out = a.shape();
  out[0] = rows.size();
  std::vector<double> v(rows.size() * inner);
  const auto x = a.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n_rows) throw ShapeError("index_select row " + std::to_string(rows[r]) + " out of range");
    std::copy_n(x.data() + rows[r] * inner, inner, v.data() + r * inner);
  }
  return Tensor::make_result(std::move(out), std::move(v), {a}, "index_select", [rows, inner](TensorImpl& o) {
    auto g = o.parent_grad(0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < inner; ++j) g[rows[r] * inner + j] += o.grad[r * inner + j];
    }
  });
}

Tensor log_softmax(const Tensor& logits) {
  if (logits.dim() != 2) throw ShapeError("log_softmax expects [B x C], got " + shape_str(logits.shape()));
  const std::size_t rows = logits.size(0), cols = logits.size(1);
  const auto x = logits.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
  return Tensor::make_result(logits.shape(), std::move(out), {logits}, "log_softmax", [rows, cols](TensorImpl& o) {
    auto g = o.parent_grad(0);
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gs += o.grad[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        g[r * cols + c] += o.grad[r * cols + c] - std::exp(o.value[r * cols + c]) * gs;
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  const kernels::MatmulGeometry g{a.size(0), a.size(1), b.size(1)};
  std::vector<double> out(g.rows * g.cols);
  kernels::matmul(g, a.data(), b.data(), out);
  return Tensor::make_result({g.rows, g.cols}, std::move(out), {a, b}, "matmul", [g](TensorImpl& o) {
    auto ga = o.parent_grad(0);
    auto gb = o.parent_grad(1);
    if (!ga.empty()) kernels::matmul_backward_lhs(g, o.grad, o.parents[1]->value, ga);
    if (!gb.empty()) kernels::matmul_backward_rhs(g, o.grad, o.parents[0]->value, gb);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.dim() != 2) throw ShapeError("linear weight must be 2-dim, got " + shape_str(w.shape()));
  const bool vec = x.dim() == 1;
  if (x.dim() > 2 || x.size(x.dim() - 1) != w.size(0)) {
    throw ShapeError("linear dimension mismatch: input " + shape_str(x.shape()) + ", weight " + shape_str(w.shape()));
  }
  Tensor out = matmul(vec ? reshape(x, {1, x.size(0)}) : x, w);
  if (bias.defined()) {
    if (bias.numel() != w.size(1)) {
      throw ShapeError("linear bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(w.shape()));
    }
    out = add(out, bias);
  }
  return vec ? reshape(out, {w.size(1)}) : out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, Pair stride, Pair padding) {
  const bool batched = x.dim() == 4;
  if ((x.dim() != 3 && x.dim() != 4) || kernels.dim() != 4) {
    throw ShapeError("conv2d expects [C,H,W] or [B,C,H,W] input and 4-dim kernels, got " + shape_str(x.shape()) +
                     " and " + shape_str(kernels.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  kernels::ConvGeometry g{batched ? x.size(0) : 1,
                          x.size(off),
                          x.size(off + 1),
                          x.size(off + 2),
                          kernels.size(0),
                          kernels.size(2),
                          kernels.size(3),
                          stride.first,
                          stride.second,
                          padding.first,
                          padding.second};
  if (kernels.size(1) != g.in_channels) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape()) + ", kernels " +
                     shape_str(kernels.shape()));
  }
  if (g.stride_h == 0 || g.stride_w == 0) throw ShapeError("conv2d stride must be positive");
  if (g.kernel_h > g.height + 2 * g.pad_h || g.kernel_w > g.width + 2 * g.pad_w) {
    throw ShapeError("conv2d kernel " + shape_str(kernels.shape()) + " larger than padded input " +
                     shape_str(x.shape()));
  }
  const std::size_t oh = g.out_h(), ow = g.out_w();
  std::vector<double> out(g.batch * g.out_channels * oh * ow);
  kernels::conv2d_forward(g, x.data(), kernels.data(), out);
  Shape shape = batched ? Shape{g.batch, g.out_channels, oh, ow} : Shape{g.out_channels, oh, ow};
  return Tensor::make_result(std::move(shape), std::move(out), {x, kernels}, "conv2d", [g](TensorImpl& o) {
    auto gx = o.parent_grad(0);
    auto gk = o.parent_grad(1);
    if (!gx.empty()) kernels::conv2d_backward_input(g, o.grad, o.parents[1]->value, gx);
    if (!gk.empty()) kernels::conv2d_backward_kernel(g, o.grad, o.parents[0]->value, gk);
  });
}

Tensor max_pool2d(const Tensor& x, Pair window, Pair stride) {
  if (x.dim() < 2) throw ShapeError("max_pool2d needs at least 2 dims, got " + shape_str(x.shape()));
  if (window.first == 0 || window.second == 0 || stride.first == 0 || stride.second == 0) {
    throw ShapeError("max_pool2d window and stride must be positive");
  }
  const std::size_t h = x.size(x.dim() - 2), w = x.size(x.dim() - 1);
  if (window.first > h || window.second > w) {
    throw ShapeError("max_pool2d window larger than input " + shape_str(x.shape()));
  }
  const std::size_t oh = (h - window.first) / stride.first + 1;
  const std::size_t ow = (w - window.second) / stride.second + 1;
  const std::size_t planes = x.numel() / (h * w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  std::vector<double> out(planes * oh * ow);
  std::vector<std::uint32_t> arg(out.size());
  const auto v = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + oy * stride.first * w + ox * stride.second;
        for (std::size_t ky = 0; ky < window.first; ++ky) {
          for (std::size_t kx = 0; kx < window.second; ++kx) {
            const std::size_t idx = base + (oy * stride.first + ky) * w + ox * stride.second + kx;
            // Strict comparison keeps the first maximum in row-major order.
            if (v[idx] > v[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = v[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, "max_pool2d",
                             [arg = std::move(arg)](TensorImpl& o) {
                               auto g = o.parent_grad(0);
                               for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += o.grad[i];
                             });
}

Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ShapeError("adaptive_avg_pool2d target must be positive");
  if (x.dim() < 2) throw ShapeError("adaptive_avg_pool2d needs at least 2 dims, got " + shape_str(x.shape()));
  const std::size_t h = x.size(x.dim() - 2), w = x.size(x.dim() - 1);
  const std::size_t planes = x.numel() / (h * w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = out_h;
  out_shape[out_shape.size() - 1] = out_w;
  // Region bounds follow the usual floor/ceil split.
  auto bounds = [](std::size_t i, std::size_t in, std::size_t out) {
    return std::pair<std::size_t, std::size_t>{i * in / out, ((i + 1) * in + out - 1) / out};
  };
  std::vector<double> out(planes * out_h * out_w);
  const auto v = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto [y0, y1] = bounds(oy, h, out_h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto [x0, x1] = bounds(ox, w, out_w);
        double s = 0.0;
        for (std::size_t yy = y0; yy < y1; ++yy) {
          for (std::size_t xx = x0; xx < x1; ++xx) s += v[p * h * w + yy * w + xx];
        }
        out[(p * out_h + oy) * out_w + ox] = s / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), {x}, "adaptive_avg_pool2d",
                             [=](TensorImpl& o) {
                               auto g = o.parent_grad(0);
                               for (std::size_t p = 0; p < planes; ++p) {
                                 for (std::size_t oy = 0; oy < out_h; ++oy) {
                                   const auto [y0, y1] = bounds(oy, h, out_h);
                                   for (std::size_t ox = 0; ox < out_w; ++ox) {
                                     const auto [x0, x1] = bounds(ox, w, out_w);
                                     const double share = o.grad[(p * out_h + oy) * out_w + ox] /
                                                          static_cast<double>((y1 - y0) * (x1 - x0));
                                     for (std::size_t yy = y0; yy < y1; ++yy) {
                                       for (std::size_t xx = x0; xx < x1; ++xx) g[p * h * w + yy * w + xx] += share;
                                     }
                                   }
                                 }
                               }
                             });
}

Tensor adaptive_avg_pool1d(const Tensor& x, std::size_t target) {
  if (target == 0) throw ShapeError("adaptive_avg_pool1d target must be positive");
  Shape as2d = x.shape();
  as2d.insert(as2d.end() - 1, 1);
  Tensor pooled = adaptive_avg_pool2d(reshape(x, as2d), 1, target);
  Shape out = x.shape();
  out.back() = target;
  return reshape(pooled, out);
}

Tensor pool(PoolKind kind, const Tensor& x, Pair window) {
  if (kind == PoolKind::max2d) return max_pool2d(x, window, window);
  return adaptive_avg_pool2d(x, window.first, window.second);
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training) {
  if (x.dim() < 2) throw ShapeError("batch_norm needs [B,C,...] input, got " + shape_str(x.shape()));
  const std::size_t batch = x.size(0), channels = x.size(1);
  if (gamma.numel() != channels || beta.numel() != channels || state.running_mean.numel() != channels ||
      state.running_var.numel() != channels) {
    throw ShapeError("batch_norm parameter size mismatch for input " + shape_str(x.shape()));
  }
  const std::size_t inner = x.numel() / (batch * channels);
  const std::size_t count = batch * inner;
  const auto v = x.data();
  std::vector<double> mean(channels), inv_std(channels);
  if (training) {
    if (count < 2) throw ShapeError("batch_norm training needs more than one value per channel");
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = v.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = v.data() + (b * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      rm[c] = (1.0 - state.momentum) * rm[c] + state.momentum * mu;
      rv[c] = (1.0 - state.momentum) * rv[c] +
              state.momentum * ss / static_cast<double>(count - 1);
    }
  } else {
    const auto rm = state.running_mean.data();
    const auto rv = state.running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + state.eps);
    }
  }
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<double> out(v.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        out[base + i] = gm[c] * (v[base + i] - mean[c]) * inv_std[c] + bt[c];
      }
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta}, training ? "batch_norm_train" : "batch_norm_eval",
      [=, mean = std::move(mean), inv_std = std::move(inv_std)](TensorImpl& o) {
        auto gx = o.parent_grad(0);
        auto gg = o.parent_grad(1);
        auto gb = o.parent_grad(2);
        const auto& xv = o.parents[0]->value;
        const auto& gmv = o.parents[1]->value;
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              const double xhat = (xv[base + i] - mean[c]) * inv_std[c];
              sum_dy += o.grad[base + i];
              sum_dy_xhat += o.grad[base + i] * xhat;
            }
          }
          if (!gb.empty()) gb[c] += sum_dy;
          if (!gg.empty()) gg[c] += sum_dy_xhat;
          if (gx.empty()) continue;
          const double k = gmv[c] * inv_std[c];
          const double m_dy = sum_dy / static_cast<double>(count);
          const double m_dy_xhat = sum_dy_xhat / static_cast<double>(count);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              if (training) {
                const double xhat = (xv[base + i] - mean[c]) * inv_std[c];
                gx[base + i] += k * (o.grad[base + i] - m_dy - xhat * m_dy_xhat);
              } else {
                gx[base + i] += k * o.grad[base + i];
              }
            }
          }
        }
      });
}

}  // namespace simspoof
