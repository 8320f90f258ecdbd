#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "moevox/common.hpp"
#include "moevox/rng.hpp"

namespace moevox {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

struct TensorData {
  Shape shape;
  std::vector<real> values;
  bool requires_grad = false;
  std::vector<real> grad;  // empty until an adjoint is written
};

// Value-semantic handle to a shared buffer. Tensors that participate in a
// tape must not be mutated until the tape is consumed.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<real> values,
                          bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, real stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int64_t numel() const { return static_cast<int64_t>(d_->values.size()); }
  int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }

  std::span<const real> values() const { return d_->values; }
  std::span<real> mutable_values() { return d_->values; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  bool grad_allocated() const { return !d_->grad.empty(); }
  // Allocates a zero grad buffer on first use. Const: handles share state.
  std::vector<real>& grad_buffer() const;
  std::span<const real> grad() const;
  void zero_grad() { d_->grad.clear(); }

  real item() const;

  // Same values buffer is copied; no grad, no tape participation.
  Tensor detach() const;
  // Deep copy of the value buffer.
  Tensor clone() const;

  std::shared_ptr<TensorData> data_ptr() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

// Ordered record of primitive ops. Activation is scoped: constructing a Tape
// pushes it onto a thread-local stack, destroying pops it. backward() walks
// the record in exact reverse insertion order and consumes the tape.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(const Tensor& output, std::function<void()> backward_fn);

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void run_backward(const Tensor& loss);

 private:
  struct Node {
    std::shared_ptr<TensorData> out;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Accumulates grads (+=) into every requires_grad leaf reachable from loss,
// then consumes the active tape.
void backward(const Tensor& loss);

// Suspends op recording in scope (forward-only evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// True when an op with the given inputs should be recorded.
bool recording_for(std::initializer_list<const Tensor*> inputs);

}  // namespace moevox
