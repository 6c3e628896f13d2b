#pragma once

// Raw compute kernels behind the differentiable ops. Each kernel has a serial
// reference and an OpenMP variant. The parallel variants partition work so that
// every output element is reduced by exactly one thread in the serial loop
// order, which keeps their results bitwise identical to the reference.

#include <cstddef>
#include <span>

namespace simspoof::kernels {

enum class Policy { serial, parallel };

void set_policy(Policy p);
Policy policy();
int max_threads();

// Scoped override, used by determinism tests and the benchmark.
class PolicyGuard {
 public:
  explicit PolicyGuard(Policy p) : previous_(policy()) { set_policy(p); }
  ~PolicyGuard() { set_policy(previous_); }
  PolicyGuard(const PolicyGuard&) = delete;
  PolicyGuard& operator=(const PolicyGuard&) = delete;

 private:
  Policy previous_;
};

struct ConvGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t stride_h, stride_w, pad_h, pad_w;

  std::size_t out_h() const { return (height + 2 * pad_h - kernel_h) / stride_h + 1; }
  std::size_t out_w() const { return (width + 2 * pad_w - kernel_w) / stride_w + 1; }
};

struct MatmulGeometry {
  std::size_t rows, inner, cols;  // [rows x inner] * [inner x cols]
};

// SimAM gating over `channels` independent planes of `plane` neurons each.
struct SimAmGeometry {
  std::size_t channels, plane;
  double lambda;
};

namespace serial {
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                    std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> k,
                           std::span<double> dx);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dk);
void matmul(const MatmulGeometry& g, std::span<const double> a, std::span<const double> b, std::span<double> c);
void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> b,
                         std::span<double> da);
void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> a,
                         std::span<double> db);
void simam_forward(const SimAmGeometry& g, std::span<const double> x, std::span<double> out);
void simam_backward(const SimAmGeometry& g, std::span<const double> x, std::span<const double> dout,
                    std::span<double> dx);
}  // namespace serial

namespace omp {
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                    std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> k,
                           std::span<double> dx);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dk);
void matmul(const MatmulGeometry& g, std::span<const double> a, std::span<const double> b, std::span<double> c);
void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> b,
                         std::span<double> da);
void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> a,
                         std::span<double> db);
void simam_forward(const SimAmGeometry& g, std::span<const double> x, std::span<double> out);
void simam_backward(const SimAmGeometry& g, std::span<const double> x, std::span<const double> dout,
                    std::span<double> dx);
}  // namespace omp

// Dispatch on the current policy. Backward kernels accumulate (+=) into their
// output buffers; forward kernels overwrite.
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                    std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> k,
                           std::span<double> dx);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dk);
void matmul(const MatmulGeometry& g, std::span<const double> a, std::span<const double> b, std::span<double> c);
void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> b,
                         std::span<double> da);
void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> a,
                         std::span<double> db);
void simam_forward(const SimAmGeometry& g, std::span<const double> x, std::span<double> out);
void simam_backward(const SimAmGeometry& g, std::span<const double> x, std::span<const double> dout,
                    std::span<double> dx);

}  // namespace simspoof::kernels
