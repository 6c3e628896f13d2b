#include "simspoof/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace simspoof {

Tensor ParameterSet::add_parameter(const std::string& name, Tensor t) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

Tensor ParameterSet::add_buffer(const std::string& name, Tensor t) {
  if (find(name)) throw std::invalid_argument("duplicate buffer name '" + name + "'");
  t.set_requires_grad(false);
  buffers_.push_back({name, t});
  return t;
}

std::vector<NamedTensor> ParameterSet::all() const {
  std::vector<NamedTensor> out = params_;
  out.insert(out.end(), buffers_.begin(), buffers_.end());
  return out;
}

Tensor* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p.tensor;
  }
  for (auto& b : buffers_) {
    if (b.name == name) return &b.tensor;
  }
  return nullptr;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

void Adam::step(const std::vector<NamedTensor>& params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    auto w = t.mutable_data();
    const auto g = t.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double base, double floor) {
  if (total_epochs <= 1) return base;
  const double progress = static_cast<double>(std::min(epoch, total_epochs - 1)) /
                          static_cast<double>(total_epochs - 1);
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace simspoof
