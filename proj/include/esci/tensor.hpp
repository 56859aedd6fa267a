#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace esci {

/// Raised for incompatible extents, bad axes, indivisible channel counts.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces NaN/Inf or otherwise fails numerically.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& dims);
std::string shape_str(const Shape& dims);

template <typename T>
struct TensorImpl {
  Shape dims;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

/// Dense row-major N-d array with an optional gradient buffer.
///
/// Copies are shallow: two Tensor handles may share one buffer, which is how
/// parameters are referenced from both a ParamStore and the layer structs.
/// Use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape dims, bool requires_grad = false);
  Tensor(Shape dims, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape dims) { return Tensor(std::move(dims)); }
  static Tensor full(Shape dims, T value);
  static Tensor scalar(T value) { return full({}, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& dims() const { return impl().dims; }
  std::size_t rank() const { return impl().dims.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl().data.size(); }

  std::span<const T> data() const { return impl().data; }
  /// Mutable access is for leaves and freshly built outputs only; never
  /// mutate a tensor that already participates in a recorded graph.
  std::span<T> mutable_data() { return impl().data; }
  const std::vector<T>& vec() const { return impl().data; }

  T operator[](std::size_t i) const { return impl().data[i]; }
  T item() const;

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool on) { impl().requires_grad = on; }
  bool has_grad() const { return impl().grad.size() == impl().data.size(); }
  /// Gradient buffer; allocated as zeros on first access.
  std::span<T> grad() const;
  void zero_grad() const;

  Tensor clone() const;
  /// Same data, no gradient tracking, independent buffer.
  Tensor detach() const { return clone(); }

  bool same_buffer(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<TensorImpl<T>>& handle() const { return impl_; }
  static Tensor from_handle(std::shared_ptr<TensorImpl<T>> h) {
    Tensor t;
    t.impl_ = std::move(h);
    return t;
  }

 private:
  TensorImpl<T>& impl() const;
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Topologically ordered record of executed differentiable operations.
///
/// A tape becomes active through a TapeScope. While active, every operator
/// whose inputs require gradients appends a node holding its inputs, output
/// and an adjoint routine. backward() replays nodes in reverse order.
template <typename T>
class Tape {
 public:
  struct Node {
    const char* op;
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    std::shared_ptr<TensorImpl<T>> output;
    std::function<void()> adjoint;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates adjoints to every leaf that
  /// requires a gradient. Leaf gradients accumulate across calls.
  void backward(const Tensor<T>& loss);

  static Tape* active();

 private:
  template <typename>
  friend class TapeScope;
  std::vector<Node> nodes_;
};

/// Makes `tape` the recording target on this thread for the scope lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording on this thread (finite-difference evaluations, inference).
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Convenience wrapper matching the free-function form `backward(loss, graph)`.
template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& graph) {
  graph.backward(loss);
}

/// Counts multiplies performed by forward operators on the current thread.
class MultiplyCounter {
 public:
  MultiplyCounter();
  ~MultiplyCounter();
  MultiplyCounter(const MultiplyCounter&) = delete;
  MultiplyCounter& operator=(const MultiplyCounter&) = delete;

  std::uint64_t count() const;
  static void add(std::uint64_t n);

 private:
  std::uint64_t start_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;
extern template class NoGradScope<float>;
extern template class NoGradScope<double>;

}  // namespace esci
