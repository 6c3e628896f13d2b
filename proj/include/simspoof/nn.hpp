#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "simspoof/tensor.hpp"

namespace simspoof {

using Rng = std::mt19937_64;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Owns the name -> tensor registry for a model. Modules keep their own
// handles; both point at the same storage.
class ParameterSet {
 public:
  Tensor add_parameter(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);

  const std::vector<NamedTensor>& parameters() const { return params_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }
  // Parameters followed by buffers, the order used by checkpoints.
  std::vector<NamedTensor> all() const;
  Tensor* find(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
};

Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad = true);
Tensor normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad = true);

class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}
  // Parameters without a grad buffer are treated as having zero gradient.
  void step(const std::vector<NamedTensor>& params, double lr);
  std::size_t steps() const { return t_; }

 private:
  double b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Cosine annealing from `base` at epoch 0 to `floor` at epoch total-1.
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double base, double floor);

}  // namespace simspoof
