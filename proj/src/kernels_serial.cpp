#include <algorithm>
#include <cmath>

#include "kernels_detail.hpp"
#include "simspoof/kernels.hpp"

namespace simspoof::kernels::serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                    std::span<double> out) {
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t co = 0; co < g.out_channels; ++co) detail::conv2d_forward_plane(g, b, co, x, k, out);
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> dout, std::span<const double> k,
                           std::span<double> dx) {
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) detail::conv2d_backward_input_plane(g, b, ci, dout, k, dx);
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> dout, std::span<const double> x,
                            std::span<double> dk) {
  for (std::size_t co = 0; co < g.out_channels; ++co) detail::conv2d_backward_kernel_filter(g, co, dout, x, dk);
}

void matmul(const MatmulGeometry& g, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < g.rows; ++i) detail::matmul_row(g, i, a, b, c);
}

void matmul_backward_lhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> b,
                         std::span<double> da) {
  for (std::size_t i = 0; i < g.rows; ++i) detail::matmul_backward_lhs_row(g, i, dc, b, da);
}

void matmul_backward_rhs(const MatmulGeometry& g, std::span<const double> dc, std::span<const double> a,
                         std::span<double> db) {
  for (std::size_t p = 0; p < g.inner; ++p) detail::matmul_backward_rhs_row(g, p, dc, a, db);
}

void simam_forward(const SimAmGeometry& g, std::span<const double> x, std::span<double> out) {
  for (std::size_t c = 0; c < g.channels; ++c) detail::simam_forward_channel(g, c, x, out);
}

void simam_backward(const SimAmGeometry& g, std::span<const double> x, std::span<const double> dout,
                    std::span<double> dx) {
  for (std::size_t c = 0; c < g.channels; ++c) detail::simam_backward_channel(g, c, x, dout, dx);
}

}  // namespace simspoof::kernels::serial
