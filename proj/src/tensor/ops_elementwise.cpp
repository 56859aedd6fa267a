#include <cmath>
#include <string>

#include "op_support.hpp"

namespace esci {

using detail::grad_sink;

template <typename T>
void check_finite(std::span<const T> values, const char* where) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw NumericError(std::string("non-finite value produced by ") + where + " at flat index " +
                         std::to_string(i));
}

namespace {

enum class Binary { Add, Sub, Mul, Div };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Binary kind, const char* name) {
  detail::require_same_shape(a, b, name);
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  auto x = a.data();
  auto y = b.data();
  switch (kind) {
    case Binary::Add:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
      break;
    case Binary::Sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
      break;
    case Binary::Mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
      MultiplyCounter::add(n);
      break;
    case Binary::Div:
      for (std::size_t i = 0; i < n; ++i) out[i] = x[i] / y[i];
      MultiplyCounter::add(n);
      break;
  }
  check_finite<T>(out, name);
  Tensor<T> result(a.dims(), std::move(out));
  if (!detail::any_requires_grad<T>({&a, &b})) return result;

  auto* ai = a.handle().get();
  auto* bi = b.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>(name, {a, b}, result, [=] {
    const T* g = oi->grad.data();
    T* ga = grad_sink(ai);
    T* gb = grad_sink(bi);
    const T* av = ai->data.data();
    const T* bv = bi->data.data();
    for (std::size_t i = 0; i < n; ++i) {
      switch (kind) {
        case Binary::Add:
          if (ga) ga[i] += g[i];
          if (gb) gb[i] += g[i];
          break;
        case Binary::Sub:
          if (ga) ga[i] += g[i];
          if (gb) gb[i] -= g[i];
          break;
        case Binary::Mul:
          if (ga) ga[i] += g[i] * bv[i];
          if (gb) gb[i] += g[i] * av[i];
          break;
        case Binary::Div:
          if (ga) ga[i] += g[i] / bv[i];
          if (gb) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
          break;
      }
    }
  });
  return result;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::Add, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::Sub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::Mul, "mul");
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::Div, "div");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  check_finite<T>(out, "add_scalar");
  Tensor<T> result(a.dims(), std::move(out));
  if (!detail::any_requires_grad<T>({&a})) return result;
  auto* ai = a.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("add_scalar", {a}, result, [=] {
    T* ga = grad_sink(ai);
    for (std::size_t i = 0; i < oi->grad.size(); ++i) ga[i] += oi->grad[i];
  });
  return result;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  MultiplyCounter::add(out.size());
  check_finite<T>(out, "mul_scalar");
  Tensor<T> result(a.dims(), std::move(out));
  if (!detail::any_requires_grad<T>({&a})) return result;
  auto* ai = a.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("mul_scalar", {a}, result, [=] {
    T* ga = grad_sink(ai);
    for (std::size_t i = 0; i < oi->grad.size(); ++i) ga[i] += s * oi->grad[i];
  });
  return result;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out)
    if (v < T(0)) v *= slope;
  check_finite<T>(out, "leaky_relu");
  Tensor<T> result(x.dims(), std::move(out));
  if (!detail::any_requires_grad<T>({&x})) return result;
  auto* xi = x.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("leaky_relu", {x}, result, [=] {
    T* gx = grad_sink(xi);
    for (std::size_t i = 0; i < oi->grad.size(); ++i)
      gx[i] += xi->data[i] < T(0) ? slope * oi->grad[i] : oi->grad[i];
  });
  return result;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  check_finite<T>(std::span<const T>(&acc, 1), "sum");
  Tensor<T> result = Tensor<T>::scalar(acc);
  if (!detail::any_requires_grad<T>({&x})) return result;
  auto* xi = x.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("sum", {x}, result, [=] {
    T* gx = grad_sink(xi);
    const T g = oi->grad[0];
    for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g;
  });
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return mul_scalar(sum(x), T(1) / static_cast<T>(x.numel()));
}

#define ESCI_INSTANTIATE(T)                                                   \
  template void check_finite<T>(std::span<const T>, const char*);            \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                     \
  template Tensor<T> mul_scalar<T>(const Tensor<T>&, T);                     \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                     \
  template Tensor<T> sum<T>(const Tensor<T>&);                               \
  template Tensor<T> mean<T>(const Tensor<T>&);

ESCI_INSTANTIATE(float)
ESCI_INSTANTIATE(double)

}  // namespace esci
