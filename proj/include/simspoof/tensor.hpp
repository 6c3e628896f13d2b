#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace simspoof {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Raised when a forward op produces NaN or Inf. Desk-scale runs fail loudly
// instead of propagating garbage.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

// Receives the output node (value, grad, parents) and pushes out.grad into
// the parents' grad buffers. Parents that do not require grad have an empty
// grad buffer and must be skipped.
using BackwardFn = std::function<void(TensorImpl& out)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<TensorImplPtr> parents;
  BackwardFn backward;

  // Returns the parent's grad buffer (allocated on demand), or an empty span
  // when the parent does not take part in differentiation.
  std::span<double> parent_grad(std::size_t i);
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  // Builds a graph node. `fn` is only retained when a parent requires grad
  // and grad mode is enabled. Throws NonFiniteError on NaN/Inf values.
  static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                            const char* op, BackwardFn fn);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access; only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Reverse-mode sweep from a scalar. Leaf grads accumulate.
  void backward() const;

  // Same values, no history.
  Tensor detach() const;
  Tensor clone() const;

  const TensorImplPtr& impl() const { return impl_; }

 private:
  explicit Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}
  TensorImplPtr impl_;
};

bool grad_enabled();

// Disables graph construction in its scope (evaluation, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace simspoof
