#include <atomic>

#if defined(_OPENMP)
#include <omp.h>
#endif

#include "kernels_detail.hpp"
#include "simspoof/kernels.hpp"

namespace simspoof::kernels {

namespace {
std::atomic<Policy> g_policy{Policy::parallel};

inline long long as_ll(std::size_t v) { return static_cast<long long>(v); }
}  // namespace

void set_policy(Policy p) { g_policy.store(p); }
Policy policy() { return g_policy.load(); }

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace omp {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                    std::span<double> out) {
  const long long n = as_ll(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
  for (long long w = 0; w < n; ++w) {
    const auto item = static_cast<std::size_t>(w);
    detail::conv2d_forward_plane(g, item / g.out_channels, item % g.out_channels, x, k, out);
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> k,
                           std::span<double> dx) {
  const long long n = as_ll(g.batch * g.in_channels);
#pragma omp parallel for schedule(static)
  for (long long w = 0; w < n; ++w) {
    const auto item = static_cast<std::size_t>(w);
    detail::conv2d_backward_input_plane(g, item / g.in_channels, item % g.in_channels, dout, k, dx);
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dk) {
#pragma omp parallel for schedule(static)
  for (long long co = 0; co < as_ll(g.out_channels); ++co) {
    detail::conv2d_backward_kernel_filter(g, static_cast<std::size_t>(co), dout, x, dk);
  }
}

void matmul(const MatmulGeometry& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < as_ll(g.rows); ++i) detail::matmul_row(g, static_cast<std::size_t>(i), a, b, c);
}

void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> b,
                         std::span<double> da) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < as_ll(g.rows); ++i) {
    detail::matmul_backward_lhs_row(g, static_cast<std::size_t>(i), dc, b, da);
  }
}

void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> a,
                         std::span<double> db) {
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < as_ll(g.inner); ++p) {
    detail::matmul_backward_rhs_row(g, static_cast<std::size_t>(p), dc, a, db);
  }
}

void simam_forward(const SimAmGeometry& g, std::span<const double> x, std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (long long c = 0; c < as_ll(g.channels); ++c) {
    detail::simam_forward_channel(g, static_cast<std::size_t>(c), x, out);
  }
}

void simam_backward(const SimAmGeometry& g, std::span<const double> x, std::span<const double> dout,
                    std::span<double> dx) {
#pragma omp parallel for schedule(static)
  for (long long c = 0; c < as_ll(g.channels); ++c) {
    detail::simam_backward_channel(g, static_cast<std::size_t>(c), x, dout, dx);
  }
}

}  // namespace omp

// Small problems stay serial; thread start-up costs more than they save.
namespace {
constexpr std::size_t kParallelThreshold = 1u << 14;

bool go_parallel(std::size_t work) {
  return policy() == Policy::parallel && max_threads() > 1 && work >= kParallelThreshold;
}
}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                    std::span<double> out) {
  if (go_parallel(out.size() * g.in_channels * g.kernel_h * g.kernel_w)) {
    omp::conv2d_forward(g, x, k, out);
  } else {
    serial::conv2d_forward(g, x, k, out);
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> k,
                           std::span<double> dx) {
  if (go_parallel(dout.size() * g.in_channels * g.kernel_h * g.kernel_w)) {
    omp::conv2d_backward_input(g, dout, k, dx);
  } else {
    serial::conv2d_backward_input(g, dout, k, dx);
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dk) {
  if (go_parallel(dout.size() * g.in_channels * g.kernel_h * g.kernel_w)) {
    omp::conv2d_backward_kernel(g, dout, x, dk);
  } else {
    serial::conv2d_backward_kernel(g, dout, x, dk);
  }
}

void matmul(const MatmulGeometry& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  if (go_parallel(g.rows * g.inner * g.cols)) {
    omp::matmul(g, a, b, c);
  } else {
    serial::matmul(g, a, b, c);
  }
}

void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> b,
                         std::span<double> da) {
  if (go_parallel(g.rows * g.inner * g.cols)) {
    omp::matmul_backward_lhs(g, dc, b, da);
  } else {
    serial::matmul_backward_lhs(g, dc, b, da);
  }
}

void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> a,
                         std::span<double> db) {
  if (go_parallel(g.rows * g.inner * g.cols)) {
    omp::matmul_backward_rhs(g, dc, a, db);
  } else {
    serial::matmul_backward_rhs(g, dc, a, db);
  }
}

void simam_forward(const SimAmGeometry& g, std::span<const double> x, std::span<double> out) {
  if (go_parallel(x.size())) {
    omp::simam_forward(g, x, out);
  } else {
    serial::simam_forward(g, x, out);
  }
}

void simam_backward(const SimAmGeometry& g, std::span<const double> x, std::span<const double> dout,
                    std::span<double> dx) {
  if (go_parallel(x.size())) {
    omp::simam_backward(g, x, dout, dx);
  } else {
    serial::simam_backward(g, x, dout, dx);
  }
}

}  // namespace simspoof::kernels
