#include "moevox/tensor.hpp"

#include <cstdio>
#include <sstream>

namespace moevox {

void warn(const std::string& msg) {
  std::fprintf(stderr, "[moevox] warning: %s\n", msg.c_str());
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream ss;
  ss << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) ss << ", ";
    ss << s[i];
  }
  ss << "]";
  return ss.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

static void check_shape(const Shape& s) {
  for (int e : s) {
    if (e <= 0)
      throw std::invalid_argument("tensor shape has non-positive extent " +
                                  shape_str(s));
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  auto d = std::make_shared<TensorData>();
  d->values.assign(static_cast<size_t>(shape_numel(shape)), real(0));
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (real& v : t.mutable_values()) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<real> values,
                         bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("from_data: shape " + shape_str(shape) +
                                " does not match value count " +
                                std::to_string(values.size()));
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, real stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (real& v : t.mutable_values())
    v = static_cast<real>(rng.normal()) * stddev;
  return t;
}

std::vector<real>& Tensor::grad_buffer() const {
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), real(0));
  return d_->grad;
}

std::span<const real> Tensor::grad() const {
  if (d_->grad.empty())
    throw std::runtime_error("grad accessed before backward populated it");
  return d_->grad;
}

real Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item() requires a scalar, got shape " +
                                shape_str(shape()));
  return d_->values[0];
}

Tensor Tensor::detach() const {
  auto d = std::make_shared<TensorData>();
  d->shape = d_->shape;
  d->values = d_->values;
  d->requires_grad = false;
  return Tensor(std::move(d));
}

Tensor Tensor::clone() const { return detach(); }

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local std::vector<Tape*> g_tape_stack;
thread_local bool g_grad_enabled = true;
}  // namespace

Tape::Tape() { g_tape_stack.push_back(this); }

Tape::~Tape() { g_tape_stack.pop_back(); }

Tape* Tape::current() {
  return g_tape_stack.empty() ? nullptr : g_tape_stack.back();
}

void Tape::record(const Tensor& output, std::function<void()> backward_fn) {
  if (consumed_)
    throw std::runtime_error("recording onto a consumed tape");
  nodes_.push_back({output.data_ptr(), std::move(backward_fn)});
}

void Tape::run_backward(const Tensor& loss) {
  if (consumed_) throw std::runtime_error("double backward on consumed tape");
  if (nodes_.empty()) throw std::runtime_error("backward on empty tape");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(loss.shape()));
  Tensor seed = loss;
  seed.grad_buffer()[0] += real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    // nodes whose output never received an adjoint contribute nothing
    if (!it->out->grad.empty()) it->fn();
  }
  consumed_ = true;
  nodes_.clear();
}

void backward(const Tensor& loss) {
  Tape* t = Tape::current();
  if (!t) throw std::runtime_error("backward called with no active tape");
  t->run_backward(loss);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

bool recording_for(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled || g_tape_stack.empty()) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace moevox
