#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "simspoof/tensor.hpp"

namespace simspoof {

struct GradCheckOptions {
  double eps = 1e-5;
  // Probe at most this many coordinates (chosen at random); 0 probes all.
  std::size_t max_probes = 0;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t probes = 0;
};

// Central differences against reverse-mode gradients. `f` receives a fresh
// leaf holding x's values and must return a scalar. The relative error at each
// coordinate uses the denominator max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check_detailed(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                    const GradCheckOptions& opts = {});
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

// Same check for a tensor captured by `loss` (a model parameter). The
// parameter's values are perturbed in place and restored afterwards; its grad
// buffer is cleared before and after.
GradCheckResult grad_check_parameter(const std::function<Tensor()>& loss, Tensor& param,
                                     const GradCheckOptions& opts = {});

}  // namespace simspoof
