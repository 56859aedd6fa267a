#include "esci/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

namespace esci {

std::size_t shape_numel(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape dims, bool requires_grad) : impl_(std::make_shared<TensorImpl<T>>()) {
  for (auto d : dims)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(dims));
  impl_->data.assign(shape_numel(dims), T(0));
  impl_->dims = std::move(dims);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape dims, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  for (auto d : dims)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(dims));
  if (shape_numel(dims) != data.size())
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(dims));
  impl_->dims = std::move(dims);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape dims, T value) {
  Tensor t(std::move(dims));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

template <typename T>
TensorImpl<T>& Tensor<T>::impl() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return *impl_;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(dims()));
  return dims()[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(dims()));
  return impl().data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad() const {
  impl().ensure_grad();
  return impl().grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  impl().grad.assign(impl().data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(impl().dims, impl().data, false);
}

namespace {
template <typename T>
thread_local Tape<T>* g_active_tape = nullptr;

thread_local std::uint64_t g_multiplies = 0;
thread_local int g_counter_depth = 0;
}  // namespace

template <typename T>
Tape<T>* Tape<T>::active() {
  return g_active_tape<T>;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.dims()));
  if (!loss.requires_grad())
    throw std::logic_error("backward: loss does not depend on any tensor requiring grad");

  const auto& root = loss.handle();
  root->ensure_grad();
  root->grad[0] += T(1);

  std::unordered_set<const TensorImpl<T>*> reached{root.get()};
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!reached.contains(it->output.get())) continue;
    it->output->ensure_grad();
    it->adjoint();
    for (const auto& in : it->inputs)
      if (in->requires_grad) reached.insert(in.get());
  }
  // Leaves that the loss does not reach still get a (zero) gradient buffer.
  for (const auto& node : nodes_)
    for (const auto& in : node.inputs)
      if (in->requires_grad) in->ensure_grad();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(g_active_tape<T>) {
  g_active_tape<T> = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  g_active_tape<T> = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(g_active_tape<T>) {
  g_active_tape<T> = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  g_active_tape<T> = previous_;
}

MultiplyCounter::MultiplyCounter() : start_(g_multiplies) {
  ++g_counter_depth;
}

MultiplyCounter::~MultiplyCounter() {
  --g_counter_depth;
}

std::uint64_t MultiplyCounter::count() const {
  return g_multiplies - start_;
}

void MultiplyCounter::add(std::uint64_t n) {
  if (g_counter_depth > 0) g_multiplies += n;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;

}  // namespace esci
