// Serial reference vs OpenMP kernels on encoder-sized inputs. Also confirms
// the two variants agree bitwise.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "simspoof/kernels.hpp"

using namespace simspoof::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double best_ms(const std::function<void()>& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

// `run(policy, out)` must overwrite or zero `out` itself.
void compare(const std::string& name, std::size_t out_size,
             const std::function<void(bool, std::vector<double>&)>& run, int reps) {
  std::vector<double> a(out_size), b(out_size);
  const double ts = best_ms([&] { run(false, a); }, reps);
  const double tp = best_ms([&] { run(true, b); }, reps);
  const bool same = std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  std::printf("%-24s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name.c_str(), ts, tp, ts / tp,
              same ? "bitwise equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::stoi(argv[1]) : 5;
  std::printf("threads: %d, best of %d\n", max_threads(), reps);
  std::mt19937_64 rng(42);

  const ConvGeometry cg{16, 4, 20, 1536, 8, 3, 3, 1, 1, 1, 1};
  const auto x = random_values(cg.batch * cg.in_channels * cg.height * cg.width, rng);
  const auto k = random_values(cg.out_channels * cg.in_channels * cg.kernel_h * cg.kernel_w, rng);
  const std::size_t out_n = cg.batch * cg.out_channels * cg.out_h() * cg.out_w();
  const auto dout = random_values(out_n, rng);

  compare("conv2d_forward", out_n, [&](bool par, std::vector<double>& o) {
    par ? omp::conv2d_forward(cg, x, k, o) : serial::conv2d_forward(cg, x, k, o);
  }, reps);
  compare("conv2d_backward_input", x.size(), [&](bool par, std::vector<double>& o) {
    std::fill(o.begin(), o.end(), 0.0);
    par ? omp::conv2d_backward_input(cg, dout, k, o) : serial::conv2d_backward_input(cg, dout, k, o);
  }, reps);
  compare("conv2d_backward_kernel", k.size(), [&](bool par, std::vector<double>& o) {
    std::fill(o.begin(), o.end(), 0.0);
    par ? omp::conv2d_backward_kernel(cg, dout, x, o) : serial::conv2d_backward_kernel(cg, dout, x, o);
  }, reps);

  const MatmulGeometry mg{512, 256, 256};
  const auto ma = random_values(mg.rows * mg.inner, rng);
  const auto mb = random_values(mg.inner * mg.cols, rng);
  const auto mdc = random_values(mg.rows * mg.cols, rng);
  compare("matmul", mg.rows * mg.cols, [&](bool par, std::vector<double>& o) {
    par ? omp::matmul(mg, ma, mb, o) : serial::matmul(mg, ma, mb, o);
  }, reps);
  compare("matmul_backward_lhs", ma.size(), [&](bool par, std::vector<double>& o) {
    std::fill(o.begin(), o.end(), 0.0);
    par ? omp::matmul_backward_lhs(mg, mdc, mb, o) : serial::matmul_backward_lhs(mg, mdc, mb, o);
  }, reps);
  compare("matmul_backward_rhs", mb.size(), [&](bool par, std::vector<double>& o) {
    std::fill(o.begin(), o.end(), 0.0);
    par ? omp::matmul_backward_rhs(mg, mdc, ma, o) : serial::matmul_backward_rhs(mg, mdc, ma, o);
  }, reps);

  const SimAmGeometry sg{16 * 8, 20 * 768, 1e-4};
  const auto sx = random_values(sg.channels * sg.plane, rng);
  const auto sd = random_values(sx.size(), rng);
  compare("simam_forward", sx.size(), [&](bool par, std::vector<double>& o) {
    par ? omp::simam_forward(sg, sx, o) : serial::simam_forward(sg, sx, o);
  }, reps);
  compare("simam_backward", sx.size(), [&](bool par, std::vector<double>& o) {
    std::fill(o.begin(), o.end(), 0.0);
    par ? omp::simam_backward(sg, sx, sd, o) : serial::simam_backward(sg, sx, sd, o);
  }, reps);
  return 0;
}
