#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "op_support.hpp"

namespace esci {

using detail::grad_sink;

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

// c[m,n] += sum_k a[m,k] b[k,n] for small row-major blocks.
template <typename T>
void small_gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.dims()) + " and " +
                     shape_str(b.dims()));
  const Shape& ad = a.dims();
  const Shape& bd = b.dims();
  const std::size_t m = ad[ad.size() - 2], k = ad.back();
  const std::size_t kb = bd[bd.size() - 2], n = bd.back();
  if (k != kb)
    throw ShapeError("matmul: inner extents differ, " + shape_str(ad) + " x " + shape_str(bd));

  const bool shared_rhs = bd.size() == 2;
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < ad.size(); ++i) batch *= ad[i];
  if (!shared_rhs) {
    bool ok = bd.size() == ad.size();
    for (std::size_t i = 0; ok && i + 2 < ad.size(); ++i) ok = ad[i] == bd[i];
    if (!ok) throw ShapeError("matmul: batch extents differ, " + shape_str(ad) + " x " + shape_str(bd));
  }

  Shape out_dims(ad.begin(), ad.end() - 1);
  out_dims.push_back(n);
  std::vector<T> out(batch * m * n, T(0));
  const T* av = a.data().data();
  const T* bv = b.data().data();
  if (shared_rhs) {
    MatMap<T>(out.data(), batch * m, n).noalias() = CMatMap<T>(av, batch * m, k) * CMatMap<T>(bv, k, n);
  } else {
    for (std::size_t s = 0; s < batch; ++s) small_gemm(av + s * m * k, bv + s * k * n, out.data() + s * m * n, m, k, n);
  }
  MultiplyCounter::add(static_cast<std::uint64_t>(batch) * m * k * n);
  check_finite<T>(out, "matmul");
  Tensor<T> result(std::move(out_dims), std::move(out));
  if (!detail::any_requires_grad<T>({&a, &b})) return result;

  auto* ai = a.handle().get();
  auto* bi = b.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("matmul", {a, b}, result, [=] {
    const T* g = oi->grad.data();
    T* ga = grad_sink(ai);
    T* gb = grad_sink(bi);
    const T* A = ai->data.data();
    const T* B = bi->data.data();
    if (shared_rhs) {
      CMatMap<T> G(g, batch * m, n);
      if (ga) MatMap<T>(ga, batch * m, k).noalias() += G * CMatMap<T>(B, k, n).transpose();
      if (gb) MatMap<T>(gb, k, n).noalias() += CMatMap<T>(A, batch * m, k).transpose() * G;
      return;
    }
    for (std::size_t s = 0; s < batch; ++s) {
      const T* gs = g + s * m * n;
      const T* as = A + s * m * k;
      const T* bs = B + s * k * n;
      if (ga) {
        T* gas = ga + s * m * k;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += gs[i * n + j] * bs[p * n + j];
            gas[i * k + p] += acc;
          }
      }
      if (gb) {
        T* gbs = gb + s * k * n;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T aval = as[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gbs[p * n + j] += aval * gs[i * n + j];
          }
      }
    }
  });
  return result;
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  if (x.rank() == 0) throw ShapeError("softmax_lastdim: scalar input");
  check_finite<T>(x.data(), "softmax_lastdim input");
  const std::size_t len = x.dims().back();
  const std::size_t rows = x.numel() / len;
  std::vector<T> out(x.numel());
  auto src = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = src.data() + r * len;
    T* o = out.data() + r * len;
    const T mx = *std::max_element(in, in + len);
    T total = 0;
    for (std::size_t j = 0; j < len; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < len; ++j) o[j] /= total;
  }
  MultiplyCounter::add(x.numel());
  Tensor<T> result(x.dims(), std::move(out));
  if (!detail::any_requires_grad<T>({&x})) return result;
  auto* xi = x.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("softmax_lastdim", {x}, result, [=] {
    T* gx = grad_sink(xi);
    const T* y = oi->data.data();
    const T* g = oi->grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < len; ++j) dot += g[r * len + j] * y[r * len + j];
      for (std::size_t j = 0; j < len; ++j) gx[r * len + j] += y[r * len + j] * (g[r * len + j] - dot);
    }
  });
  return result;
}

template Tensor<float> matmul<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> softmax_lastdim<float>(const Tensor<float>&);
template Tensor<double> softmax_lastdim<double>(const Tensor<double>&);

}  // namespace esci
