#pragma once

#include <functional>
#include <initializer_list>
#include <utility>

#include "esci/ops.hpp"

namespace esci::detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const auto* t : inputs)
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  return false;
}

template <typename T>
bool any_requires_grad(const std::vector<Tensor<T>>& inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const auto& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

/// Appends a node for `out` to the active tape and marks `out` as tracked.
template <typename T>
void record(const char* op, const std::vector<Tensor<T>>& inputs, Tensor<T>& out,
            std::function<void()> adjoint) {
  auto* tape = Tape<T>::active();
  typename Tape<T>::Node node{op, {}, out.handle(), std::move(adjoint)};
  for (const auto& in : inputs)
    if (in.defined()) node.inputs.push_back(in.handle());
  out.set_requires_grad(true);
  tape->record(std::move(node));
}

/// Gradient accumulator for an input, or nullptr when it does not need one.
template <typename T>
T* grad_sink(TensorImpl<T>* impl) {
  if (impl == nullptr || !impl->requires_grad) return nullptr;
  impl->ensure_grad();
  return impl->grad.data();
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.dims()) + " vs " +
                     shape_str(b.dims()));
}

}  // namespace esci::detail
