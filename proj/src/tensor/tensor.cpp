// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "tensor_impl.hpp"
#include "tse/error.hpp"

namespace tse::ag {

namespace {

thread_local Tape* g_active_tape = nullptr;

struct GradientFault {
  std::string op;
  double factor = 1.0;
};
GradientFault g_fault;

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape,
                                              std::vector<double> data,
                                              bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, 0.0),
                          requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, value),
                          requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_impl({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const {
  if (!impl_) throw Error("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!impl_) throw Error("use of an undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw Error("use of an undefined tensor");
  if (impl_->tape) throw Error("cannot mutate a tensor recorded on a tape");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!impl_) throw Error("use of an undefined tensor");
  impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw Error("tensor has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!has_grad()) throw Error("tensor has no gradient");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const {
  return Tensor(make_impl(shape(), impl_->data, false));
}

Tape::Tape() = default;
Tape::~Tape() = default;

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.push_back(n.op);
  return names;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw DimensionError("backward requires a scalar loss, got shape " +
                         shape_str(loss.shape()));
  }
  if (consumed_) throw Error("backward called twice without reset()");
  if (loss.impl_->tape != this || !loss.impl_->requires_grad) {
    throw Error("loss is not recorded on this tape (detached graph)");
  }
  consumed_ = true;
  loss.impl_->grad.assign(1, 1.0);
  std::vector<double> faulted;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    const auto& grad = it->output->grad;
    if (grad.empty()) continue;
    if (!g_fault.op.empty() && it->op == g_fault.op) {
      faulted.assign(grad.begin(), grad.end());
      for (auto& g : faulted) g *= g_fault.factor;
      it->backward(faulted);
    } else {
      it->backward(grad);
    }
  }
}

void Tape::reset() {
  for (auto& n : nodes_) n.output->tape = nullptr;
  nodes_.clear();
  consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

NoTapeScope::NoTapeScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoTapeScope::~NoTapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void set_gradient_fault(const std::string& op, double factor) {
  g_fault.op = op;
  g_fault.factor = factor;
}

bool Recorder::tracking(std::initializer_list<Tensor> inputs) {
  if (!g_active_tape) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.requires_grad(); });
}

Tensor Recorder::record(const std::string& op, Shape shape,
                        std::vector<double> data,
                        std::initializer_list<Tensor> inputs,
                        const std::function<BackwardFn()>& make_backward) {
  auto impl = make_impl(std::move(shape), std::move(data), false);
  if (tracking(inputs)) {
    impl->requires_grad = true;
    impl->tape = g_active_tape;
    g_active_tape->nodes_.push_back(Tape::Node{op, impl, make_backward()});
  }
  return Tensor(std::move(impl));
}

std::span<double> Recorder::grad_sink(const Tensor& t) {
  if (!t.requires_grad()) return {};
  auto& g = t.impl_->grad;
  if (g.empty()) g.assign(t.impl_->data.size(), 0.0);
  return g;
}

}  // namespace tse::ag
