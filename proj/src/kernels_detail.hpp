#pragma once

// Per-work-item bodies shared by the serial and OpenMP kernels. Each function
// owns a disjoint slice of the output, so both drivers only differ in how the
// outer loop is scheduled.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "simspoof/kernels.hpp"

namespace simspoof::kernels::detail {

// Output columns ox whose input column ox*stride + kx - pad lies in [0, width).
inline void valid_range(std::size_t width, std::size_t out_w, std::size_t stride, std::size_t pad, std::size_t k,
                        std::size_t& lo, std::size_t& hi) {
  const auto shift = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad);
  std::ptrdiff_t first = 0;
  if (shift < 0) first = (-shift + static_cast<std::ptrdiff_t>(stride) - 1) / static_cast<std::ptrdiff_t>(stride);
  const std::ptrdiff_t last_in = static_cast<std::ptrdiff_t>(width) - 1 - shift;
  std::ptrdiff_t last = last_in < 0 ? -1 : last_in / static_cast<std::ptrdiff_t>(stride);
  if (last > static_cast<std::ptrdiff_t>(out_w) - 1) last = static_cast<std::ptrdiff_t>(out_w) - 1;
  lo = static_cast<std::size_t>(first);
  hi = last < first ? lo : static_cast<std::size_t>(last + 1);
}

// Input row feeding output row `oy` through kernel row `ky`, or -1 when it
// falls in the padding.
inline std::ptrdiff_t input_row(const ConvGeometry& g, std::size_t oy, std::size_t ky) {
  const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky) - static_cast<std::ptrdiff_t>(g.pad_h);
  return iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) ? iy : -1;
}

struct ColumnRanges {
  std::vector<std::size_t> lo, hi;  // per kernel column
  explicit ColumnRanges(const ConvGeometry& g) : lo(g.kernel_w), hi(g.kernel_w) {
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) valid_range(g.width, g.out_w(), g.stride_w, g.pad_w, kx, lo[kx], hi[kx]);
  }
};

// Four partial sums so the compiler can keep them in vector lanes.
inline double dot(const double* __restrict a, const double* __restrict b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double w, const double* __restrict x, double* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += w * x[i];
}

// Output rows are finished one at a time so the accumulator row stays in
// cache across all input channels and kernel taps.
inline void conv2d_forward_plane(const ConvGeometry& g, std::size_t b, std::size_t co, std::span<const double> x,
                                 std::span<const double> k, std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const ColumnRanges cols(g);
  double* o = out.data() + (b * g.out_channels + co) * oh * ow;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    double* orow = o + oy * ow;
    for (std::size_t i = 0; i < ow; ++i) orow[i] = 0.0;
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      const double* xin = x.data() + (b * g.in_channels + ci) * g.height * g.width;
      const double* kk = k.data() + (co * g.in_channels + ci) * g.kernel_h * g.kernel_w;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const std::ptrdiff_t iy = input_row(g, oy, ky);
        if (iy < 0) continue;
        const double* row = xin + static_cast<std::size_t>(iy) * g.width;
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const double w = kk[ky * g.kernel_w + kx];
          const std::size_t lo = cols.lo[kx], hi = cols.hi[kx];
          if (lo >= hi) continue;
          if (g.stride_w == 1) {
            axpy(w, row + lo + kx - g.pad_w, orow + lo, hi - lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) orow[ox] += w * row[ox * g.stride_w + kx - g.pad_w];
          }
        }
      }
    }
  }
}

inline void conv2d_backward_input_plane(const ConvGeometry& g, std::size_t b, std::size_t ci,
                                        std::span<const double> dout, std::span<const double> k,
                                        std::span<double> dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const ColumnRanges cols(g);
  double* d = dx.data() + (b * g.in_channels + ci) * g.height * g.width;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const double* grow = dout.data() + ((b * g.out_channels + co) * oh + oy) * ow;
      const double* kk = k.data() + (co * g.in_channels + ci) * g.kernel_h * g.kernel_w;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const std::ptrdiff_t iy = input_row(g, oy, ky);
        if (iy < 0) continue;
        double* row = d + static_cast<std::size_t>(iy) * g.width;
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const double w = kk[ky * g.kernel_w + kx];
          const std::size_t lo = cols.lo[kx], hi = cols.hi[kx];
          if (lo >= hi) continue;
          if (g.stride_w == 1) {
            axpy(w, grow + lo, row + lo + kx - g.pad_w, hi - lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox) row[ox * g.stride_w + kx - g.pad_w] += w * grow[ox];
          }
        }
      }
    }
  }
}

inline void conv2d_backward_kernel_filter(const ConvGeometry& g, std::size_t co, std::span<const double> dout,
                                          std::span<const double> x, std::span<double> dk) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t taps = g.kernel_h * g.kernel_w;
  const ColumnRanges cols(g);
  std::vector<double> acc(g.in_channels * taps, 0.0);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const double* grow = dout.data() + ((b * g.out_channels + co) * oh + oy) * ow;
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const double* xin = x.data() + (b * g.in_channels + ci) * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const std::ptrdiff_t iy = input_row(g, oy, ky);
          if (iy < 0) continue;
          const double* row = xin + static_cast<std::size_t>(iy) * g.width;
          double* a = acc.data() + ci * taps + ky * g.kernel_w;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const std::size_t lo = cols.lo[kx], hi = cols.hi[kx];
            if (lo >= hi) continue;
            if (g.stride_w == 1) {
              a[kx] += dot(grow + lo, row + lo + kx - g.pad_w, hi - lo);
            } else {
              double s = 0.0;
              for (std::size_t ox = lo; ox < hi; ++ox) s += grow[ox] * row[ox * g.stride_w + kx - g.pad_w];
              a[kx] += s;
            }
          }
        }
      }
    }
  }
  double* kk = dk.data() + co * g.in_channels * taps;
  for (std::size_t i = 0; i < acc.size(); ++i) kk[i] += acc[i];
}

inline void matmul_row(const MatmulGeometry& g, std::size_t i, std::span<const double> a, std::span<const double> b,
                       std::span<double> c) {
  double* crow = c.data() + i * g.cols;
  for (std::size_t j = 0; j < g.cols; ++j) crow[j] = 0.0;
  const double* arow = a.data() + i * g.inner;
  for (std::size_t p = 0; p < g.inner; ++p) {
    const double av = arow[p];
    const double* brow = b.data() + p * g.cols;
    for (std::size_t j = 0; j < g.cols; ++j) crow[j] += av * brow[j];
  }
}

inline void matmul_backward_lhs_row(const MatmulGeometry& g, std::size_t i, std::span<const double> dc,
                                    std::span<const double> b, std::span<double> da) {
  const double* gr = dc.data() + i * g.cols;
  double* darow = da.data() + i * g.inner;
  for (std::size_t p = 0; p < g.inner; ++p) {
    const double* brow = b.data() + p * g.cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < g.cols; ++j) acc += gr[j] * brow[j];
    darow[p] += acc;
  }
}

inline void matmul_backward_rhs_row(const MatmulGeometry& g, std::size_t p, std::span<const double> dc,
                                    std::span<const double> a, std::span<double> db) {
  double* dbrow = db.data() + p * g.cols;
  for (std::size_t i = 0; i < g.rows; ++i) {
    const double av = a[i * g.inner + p];
    if (av == 0.0) continue;
    const double* gr = dc.data() + i * g.cols;
    for (std::size_t j = 0; j < g.cols; ++j) dbrow[j] += av * gr[j];
  }
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct ChannelStats {
  double mean, var;
};

inline ChannelStats channel_stats(const double* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p[i];
  const double mean = s / static_cast<double>(n);
  double v = 0.0;
  for (std::size_t i = 0; i < n; ++i) v += (p[i] - mean) * (p[i] - mean);
  return {mean, v / static_cast<double>(n)};
}

// gain argument 1/e* = 1/2 + (t - mean)^2 / (4 (var + lambda))
inline void simam_forward_channel(const SimAmGeometry& g, std::size_t c, std::span<const double> x,
                                  std::span<double> out) {
  const double* p = x.data() + c * g.plane;
  double* o = out.data() + c * g.plane;
  const auto st = channel_stats(p, g.plane);
  const double denom = 4.0 * (st.var + g.lambda);
  for (std::size_t i = 0; i < g.plane; ++i) {
    const double d = p[i] - st.mean;
    o[i] = p[i] * sigmoid(0.5 + d * d / denom);
  }
}

inline void simam_backward_channel(const SimAmGeometry& g, std::size_t c, std::span<const double> x,
                                   std::span<const double> dout, std::span<double> dx) {
  const double* p = x.data() + c * g.plane;
  const double* go = dout.data() + c * g.plane;
  double* d_in = dx.data() + c * g.plane;
  const auto n = static_cast<double>(g.plane);
  const auto st = channel_stats(p, g.plane);
  const double vl = st.var + g.lambda;
  // dL/dvar and the mean of dL/d(deviation)
  double dvar = 0.0, dd_mean = 0.0;
  for (std::size_t i = 0; i < g.plane; ++i) {
    const double d = p[i] - st.mean;
    const double s = sigmoid(0.5 + d * d / (4.0 * vl));
    const double dgain = go[i] * p[i] * s * (1.0 - s);
    dvar -= dgain * d * d / (4.0 * vl * vl);
    dd_mean += dgain * d / (2.0 * vl);
  }
  dd_mean /= n;
  for (std::size_t i = 0; i < g.plane; ++i) {
    const double d = p[i] - st.mean;
    const double s = sigmoid(0.5 + d * d / (4.0 * vl));
    const double dgain = go[i] * p[i] * s * (1.0 - s);
    d_in[i] += go[i] * s + (dgain * d / (2.0 * vl) - dd_mean) + dvar * 2.0 * d / n;
  }
}

}  // namespace simspoof::kernels::detail
