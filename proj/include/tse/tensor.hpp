// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Reverse-mode automatic differentiation over dense row-major float64
// tensors. Operations record onto the thread's active Tape (see TapeScope)
// whenever one of their inputs requires a gradient; with no active tape they
// run as plain numeric kernels.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tse::ag {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {
struct TensorImpl;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view of the values. Only legal on tensors not produced by a
  // recorded operation (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Copy of the values with no graph history.
  Tensor detach() const;

  const detail::TensorImpl* id() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  friend class Tape;
  friend struct Recorder;
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Append-only record of executed operations. backward() walks it once in
// reverse; a second call requires reset().
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> op_names() const;

  void backward(const Tensor& loss);
  void reset();

 private:
  friend struct Recorder;
  struct Node {
    std::string op;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void(std::span<const double>)> backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Makes `tape` the active tape of the calling thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on the calling thread for the scope lifetime, so ops
// run as plain kernels even when a tape is active.
class NoTapeScope {
 public:
  NoTapeScope();
  ~NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

// Extension point for differentiable operations defined outside this header.
// `backward` receives dLoss/dOutput and must accumulate into the inputs via
// grad_sink(). It is only stored when some input requires a gradient and a
// tape is active.
struct Recorder {
  static Tensor record(const std::string& op, Shape shape,
                       std::vector<double> data,
                       std::initializer_list<Tensor> inputs,
                       const std::function<BackwardFn()>& make_backward);
  // Gradient accumulator of `t`, allocated on first use; empty when `t` does
  // not require a gradient.
  static std::span<double> grad_sink(const Tensor& t);
  static bool tracking(std::initializer_list<Tensor> inputs);
};

// Self-test hook: multiplies the upstream gradient of every node named `op`
// by `factor` during backward. An empty name disables the fault.
void set_gradient_fault(const std::string& op, double factor);

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops accept equal shapes or one operand with
// a single element, which is broadcast.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
// Batched product over the leading axis: [B,m,k] x [B,k,n] (or [B,n,k] when
// transpose_b) -> [B,m,n].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// x[..., D] + v[D], the row vector repeated over all leading positions.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
// x[N, in] W[in, out] + b[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& x, int axis = -1);
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-8);
// Mean negative log-likelihood of integer labels under row-wise softmax of
// logits[N, M].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// x[C_in, L], kernels[C_out, C_in, k] -> [C_out, (L - d(k-1) - 1)/stride + 1].
Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride,
              std::size_t dilation = 1);
// Adjoint of conv1d for the same kernels: x[C_out, L'] -> [C_in, (L'-1)s + k].
Tensor conv1d_transpose(const Tensor& x, const Tensor& kernels,
                        std::size_t stride);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::span<const std::size_t> axes);
Tensor permute(const Tensor& x, std::initializer_list<std::size_t> axes);
Tensor transpose(const Tensor& x);
// Trims or zero-pads the last axis to `length`.
Tensor resize_last(const Tensor& x, std::size_t length);

}  // namespace tse::ag
