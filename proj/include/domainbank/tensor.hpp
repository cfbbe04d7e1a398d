#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "domainbank/common.hpp"

// Dense row-major tensors plus a reverse-mode tape. A TensorT is a cheap
// handle onto shared storage: copies alias the same data and gradient
// buffers, which is what the tape relies on. Shapes are fixed at
// construction. Gradients accumulate with +=; Tape::backward zeroes only the
// gradients of tape-owned intermediate outputs, so each replay adds one
// clean contribution into the leaves.

namespace domainbank {

template <class S>
class TensorT {
 public:
  struct Storage {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;
    bool requires_grad = false;
  };

  TensorT() = default;

  static TensorT zeros(const Shape& shape, bool requires_grad = false) {
    return full(shape, S(0), requires_grad);
  }

  static TensorT full(const Shape& shape, S value, bool requires_grad = false) {
    check_shape_positive(shape, "tensor");
    TensorT t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = shape;
    t.s_->data.assign(static_cast<std::size_t>(numel_of(shape)), value);
    t.s_->requires_grad = requires_grad;
    if (requires_grad) t.s_->grad.assign(t.s_->data.size(), S(0));
    return t;
  }

  static TensorT from_vector(const Shape& shape, std::vector<S> values,
                             bool requires_grad = false) {
    check_shape_positive(shape, "tensor");
    if (static_cast<std::int64_t>(values.size()) != numel_of(shape))
      throw dim_error("from_vector: " + std::to_string(values.size()) +
                      " values for shape " + shape_str(shape));
    TensorT t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = shape;
    t.s_->data = std::move(values);
    t.s_->requires_grad = requires_grad;
    if (requires_grad) t.s_->grad.assign(t.s_->data.size(), S(0));
    return t;
  }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(s_->data.size()); }
  std::int64_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t rank() const { return s_->shape.size(); }
  bool requires_grad() const { return s_->requires_grad; }

  /// Starts tracking gradients; allocates the gradient buffer on first call.
  void set_requires_grad(bool on) {
    s_->requires_grad = on;
    if (on && s_->grad.size() != s_->data.size()) s_->grad.assign(s_->data.size(), S(0));
  }

  S* data() { return s_->data.data(); }
  const S* data() const { return s_->data.data(); }
  std::vector<S>& vec() { return s_->data; }
  const std::vector<S>& vec() const { return s_->data; }

  S* grad() { return s_->grad.data(); }
  const S* grad() const { return s_->grad.data(); }
  std::vector<S>& grad_vec() { return s_->grad; }
  const std::vector<S>& grad_vec() const { return s_->grad; }

  void zero_grad() {
    if (s_->requires_grad) std::fill(s_->grad.begin(), s_->grad.end(), S(0));
  }

  /// Value of a rank-0 (or single-element) tensor.
  S item() const {
    if (s_->data.size() != 1)
      throw contract_error("item() on tensor with " + std::to_string(s_->data.size()) +
                           " elements");
    return s_->data[0];
  }

  /// Deep copy; the clone shares nothing with the source.
  TensorT clone() const {
    TensorT t;
    t.s_ = std::make_shared<Storage>(*s_);
    return t;
  }

  /// Identity of the underlying buffer, for aliasing checks.
  const void* storage_id() const { return s_.get(); }

  bool same_storage(const TensorT& other) const { return s_ == other.s_; }

 private:
  std::shared_ptr<Storage> s_;
};

using Tensor = TensorT<float>;

/// One recorded operation: the node's output plus a closure that scatters the
/// output gradient into the inputs' gradients.
template <class S>
struct TapeNodeT {
  TensorT<S> output;
  std::function<void()> backward;
};

template <class S>
class TapeT {
 public:
  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  void push(TensorT<S> output, std::function<void()> backward) {
    if (!recording_) return;
    output.set_requires_grad(true);
    nodes_.push_back({std::move(output), std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    saw_nonfinite_ = false;
  }

  /// Marks that some op produced a non-finite value during the forward pass.
  void flag_nonfinite() { saw_nonfinite_ = true; }
  bool saw_nonfinite() const { return saw_nonfinite_; }

  /// Reverse replay from `loss` (must be scalar). Tape-owned output
  /// gradients are reset first so each replay contributes exactly one clean
  /// pass; leaf gradients are never touched here, so replaying the tape
  /// twice accumulates twice (leaf grads double). Callers zero leaves via
  /// the optimizer or zero_grad().
  void backward(TensorT<S>& loss) {
    if (loss.numel() != 1) throw contract_error("backward: loss must be a scalar tensor");
    for (auto& n : nodes_) n.output.zero_grad();
    loss.set_requires_grad(true);
    std::fill(loss.grad_vec().begin(), loss.grad_vec().end(), S(0));
    loss.grad()[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->backward) it->backward();
    }
  }

 private:
  std::vector<TapeNodeT<S>> nodes_;
  bool recording_ = true;
  bool saw_nonfinite_ = false;
};

using Tape = TapeT<float>;

/// Ordered (name, tensor) pairs. Parameter order is part of the trainer and
/// checkpoint contracts, so this is a vector, not a map.
template <class S>
using NamedParamsT = std::vector<std::pair<std::string, TensorT<S>>>;
using NamedParams = NamedParamsT<float>;

}  // namespace domainbank
