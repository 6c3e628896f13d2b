#include "simspoof/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace simspoof {

namespace {

std::vector<std::size_t> probe_indices(std::size_t n, const GradCheckOptions& opts) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (opts.max_probes != 0 && opts.max_probes < n) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(opts.max_probes);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

double checked_value(const Tensor& y) {
  if (y.numel() != 1) throw ShapeError("grad_check function must return a scalar, got " + shape_str(y.shape()));
  const double v = y.item();
  if (!std::isfinite(v)) throw NonFiniteError("grad_check function is non-finite at a probe point");
  return v;
}

template <class Eval>
GradCheckResult compare(std::span<const double> analytic, std::span<double> values, const GradCheckOptions& opts,
                        Eval eval) {
  if (!(opts.eps > 0.0)) throw std::invalid_argument("grad_check eps must be positive");
  GradCheckResult r;
  for (std::size_t i : probe_indices(values.size(), opts)) {
    const double saved = values[i];
    values[i] = saved + opts.eps;
    const double up = eval();
    values[i] = saved - opts.eps;
    const double down = eval();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * opts.eps);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    ++r.probes;
    if (r.probes == 1 || rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
      r.analytic = a;
      r.numeric = numeric;
    }
  }
  return r;
}

}  // namespace

GradCheckResult grad_check_detailed(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                    const GradCheckOptions& opts) {
  Tensor leaf = Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  Tensor y = f(leaf);
  checked_value(y);
  if (y.requires_grad()) y.backward();
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

  std::vector<double> values(x.data().begin(), x.data().end());
  NoGradGuard no_grad;
  return compare(analytic, values, opts, [&] { return checked_value(f(Tensor::from(x.shape(), values))); });
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check_detailed(f, x, opts).max_rel_error;
}

GradCheckResult grad_check_parameter(const std::function<Tensor()>& loss, Tensor& param,
                                     const GradCheckOptions& opts) {
  const bool had_flag = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();
  Tensor y = loss();
  checked_value(y);
  if (y.requires_grad()) y.backward();
  std::vector<double> analytic(param.numel(), 0.0);
  if (param.has_grad()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());
  param.zero_grad();

  NoGradGuard no_grad;
  auto result = compare(analytic, param.mutable_data(), opts, [&] { return checked_value(loss()); });
  param.set_requires_grad(had_flag);
  return result;
}

}  // namespace simspoof
