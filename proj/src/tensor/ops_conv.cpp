#include <Eigen/Core>
#include <algorithm>
#include <string>

#include "op_support.hpp"

namespace esci {

using detail::grad_sink;

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;

struct Geometry {
  std::size_t n, cin, cout;
  std::array<std::size_t, 3> in, k, out, stride, pad;

  std::size_t in_plane() const { return in[0] * in[1] * in[2]; }
  std::size_t out_plane() const { return out[0] * out[1] * out[2]; }
  std::size_t patch() const { return cin * k[0] * k[1] * k[2]; }
  bool pointwise() const {
    return k == std::array<std::size_t, 3>{1, 1, 1} && stride == std::array<std::size_t, 3>{1, 1, 1} &&
           pad == std::array<std::size_t, 3>{0, 0, 0};
  }
};

Geometry make_geometry(const Shape& x, const Shape& w, const std::array<std::size_t, 3>& stride,
                       const std::array<std::size_t, 3>& pad, const std::array<std::size_t, 3>& pad_end,
                       const char* op) {
  Geometry g{};
  g.n = x[0];
  g.cin = x[1];
  g.cout = w[0];
  if (w[1] != g.cin)
    throw ShapeError(std::string(op) + ": weight expects " + std::to_string(w[1]) +
                     " input channels but input " + shape_str(x) + " has " + std::to_string(g.cin));
  g.stride = stride;
  g.pad = pad;
  for (int a = 0; a < 3; ++a) {
    g.in[a] = x[2 + a];
    g.k[a] = w[2 + a];
    if (stride[a] == 0) throw ShapeError(std::string(op) + ": zero stride");
    const std::size_t padded = g.in[a] + pad[a] + pad_end[a];
    if (padded < g.k[a])
      throw ShapeError(std::string(op) + ": kernel " + shape_str(w) + " larger than padded input " +
                       shape_str(x));
    if ((padded - g.k[a]) % stride[a] != 0)
      throw ShapeError(std::string(op) + ": non-integral output extent on spatial axis " +
                       std::to_string(a) + " for input " + shape_str(x) + ", kernel " + shape_str(w));
    g.out[a] = (padded - g.k[a]) / stride[a] + 1;
  }
  return g;
}

// A run of consecutive output positions sharing one output row.
struct Segment {
  std::size_t j, len;                   // offset within the tile, length
  std::ptrdiff_t t0, h0, w0;            // input coordinates of the first position at tap (0,0,0)
};

void row_segments(const Geometry& g, std::size_t p0, std::size_t tile, std::vector<Segment>& segs) {
  segs.clear();
  const std::size_t ow = g.out[2], ohw = g.out[1] * ow;
  for (std::size_t j = 0; j < tile;) {
    const std::size_t p = p0 + j, x = p % ow;
    const std::size_t len = std::min(tile - j, ow - x);
    segs.push_back({j, len, static_cast<std::ptrdiff_t>((p / ohw) * g.stride[0]) - static_cast<std::ptrdiff_t>(g.pad[0]),
                    static_cast<std::ptrdiff_t>(((p / ow) % g.out[1]) * g.stride[1]) -
                        static_cast<std::ptrdiff_t>(g.pad[1]),
                    static_cast<std::ptrdiff_t>(x * g.stride[2]) - static_cast<std::ptrdiff_t>(g.pad[2])});
    j += len;
  }
}

// Calls fn(j, row, w, n) for each in-bounds stretch of n positions of segment
// `s` at tap (kt, kh, kw): `row` is the input row offset and `w` the first column.
template <typename Fn>
void for_each_span(const Geometry& g, const Segment& s, std::size_t kt, std::size_t kh, std::size_t kw, Fn&& fn) {
  const auto ti = static_cast<std::ptrdiff_t>(g.in[0]);
  const auto hi = static_cast<std::ptrdiff_t>(g.in[1]);
  const auto wi = static_cast<std::ptrdiff_t>(g.in[2]);
  const auto sw = static_cast<std::ptrdiff_t>(g.stride[2]);
  const std::ptrdiff_t t = s.t0 + static_cast<std::ptrdiff_t>(kt), h = s.h0 + static_cast<std::ptrdiff_t>(kh);
  if (t < 0 || t >= ti || h < 0 || h >= hi) return;
  const std::ptrdiff_t w0 = s.w0 + static_cast<std::ptrdiff_t>(kw);
  const auto len = static_cast<std::ptrdiff_t>(s.len);
  const std::ptrdiff_t qlo = w0 < 0 ? (-w0 + sw - 1) / sw : 0;
  const std::ptrdiff_t qhi = w0 >= wi ? 0 : std::min(len, (wi - 1 - w0) / sw + 1);
  if (qhi > qlo)
    fn(s.j + static_cast<std::size_t>(qlo), (t * hi + h) * wi, w0 + qlo * sw, static_cast<std::size_t>(qhi - qlo));
}

// Fills col[kk, j] (row stride `tile`) for output positions [p0, p0 + tile).
template <typename T>
void im2col(const Geometry& g, const T* in, std::size_t tile, T* col, const std::vector<Segment>& segs) {
  const std::size_t sw = g.stride[2];
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* plane = in + c * g.in_plane();
    for (std::size_t kt = 0; kt < g.k[0]; ++kt)
      for (std::size_t kh = 0; kh < g.k[1]; ++kh)
        for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
          T* dst = col + row * tile;
          std::fill(dst, dst + tile, T(0));
          for (const auto& s : segs)
            for_each_span(g, s, kt, kh, kw, [&](std::size_t j, std::ptrdiff_t base, std::ptrdiff_t w, std::size_t n) {
              const T* src = plane + base + w;
              if (sw == 1)
                std::copy(src, src + n, dst + j);
              else
                for (std::size_t q = 0; q < n; ++q) dst[j + q] = src[q * sw];
            });
        }
  }
}

// Accumulates col[kk, j] back into the input-shaped buffer.
template <typename T>
void col2im(const Geometry& g, const T* col, std::size_t tile, T* in, const std::vector<Segment>& segs) {
  const std::size_t sw = g.stride[2];
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* plane = in + c * g.in_plane();
    for (std::size_t kt = 0; kt < g.k[0]; ++kt)
      for (std::size_t kh = 0; kh < g.k[1]; ++kh)
        for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
          const T* src = col + row * tile;
          for (const auto& s : segs)
            for_each_span(g, s, kt, kh, kw, [&](std::size_t j, std::ptrdiff_t base, std::ptrdiff_t w, std::size_t n) {
              T* dst = plane + base + w;
              for (std::size_t q = 0; q < n; ++q) dst[q * sw] += src[j + q];
            });
        }
  }
}

std::size_t tile_width(const Geometry& g) {
  constexpr std::size_t kBudget = std::size_t{1} << 21;  // elements per column tile
  const std::size_t p = g.out_plane();
  return std::clamp<std::size_t>(kBudget / std::max<std::size_t>(g.patch(), 1), 64, std::max<std::size_t>(p, 1));
}

template <typename T>
void conv_forward(const Geometry& g, const T* x, const T* w, const T* b, T* y) {
  const std::size_t P = g.out_plane();
  const std::size_t K = g.patch();
  CMap<T> W(w, g.cout, K);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x + n * g.cin * g.in_plane();
    T* yn = y + n * g.cout * P;
    if (g.pointwise()) {
      Map<T>(yn, g.cout, P).noalias() = W * CMap<T>(xn, g.cin, P);
    } else {
      const std::size_t tw = tile_width(g);
      std::vector<T> col(K * tw);
      std::vector<Segment> segs;
      for (std::size_t p0 = 0; p0 < P; p0 += tw) {
        const std::size_t tile = std::min(tw, P - p0);
        row_segments(g, p0, tile, segs);
        im2col(g, xn, tile, col.data(), segs);
        StridedMap<T>(yn + p0, g.cout, tile, Eigen::OuterStride<>(P)).noalias() =
            W * CMap<T>(col.data(), K, tile);
      }
    }
    if (b)
      for (std::size_t c = 0; c < g.cout; ++c) {
        T* row = yn + c * P;
        for (std::size_t p = 0; p < P; ++p) row[p] += b[c];
      }
  }
  MultiplyCounter::add(static_cast<std::uint64_t>(g.n) * g.cout * K * P);
}

template <typename T>
void conv_backward(const Geometry& g, const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb) {
  const std::size_t P = g.out_plane();
  const std::size_t K = g.patch();
  CMap<T> W(w, g.cout, K);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x + n * g.cin * g.in_plane();
    const T* gyn = gy + n * g.cout * P;
    if (gb)
      for (std::size_t c = 0; c < g.cout; ++c) {
        T acc = 0;
        for (std::size_t p = 0; p < P; ++p) acc += gyn[c * P + p];
        gb[c] += acc;
      }
    if (g.pointwise()) {
      CMap<T> G(gyn, g.cout, P);
      if (gw) Map<T>(gw, g.cout, K).noalias() += G * CMap<T>(xn, g.cin, P).transpose();
      if (gx) Map<T>(gx + n * g.cin * g.in_plane(), g.cin, P).noalias() += W.transpose() * G;
      continue;
    }
    const std::size_t tw = tile_width(g);
    std::vector<T> col(K * tw);
    std::vector<Segment> segs;
    for (std::size_t p0 = 0; p0 < P; p0 += tw) {
      const std::size_t tile = std::min(tw, P - p0);
      row_segments(g, p0, tile, segs);
      CStridedMap<T> G(gyn + p0, g.cout, tile, Eigen::OuterStride<>(P));
      if (gw) {
        im2col(g, xn, tile, col.data(), segs);
        Map<T>(gw, g.cout, K).noalias() += G * CMap<T>(col.data(), K, tile).transpose();
      }
      if (gx) {
        Map<T>(col.data(), K, tile).noalias() = W.transpose() * G;
        col2im(g, col.data(), tile, gx + n * g.cin * g.in_plane(), segs);
      }
    }
  }
}

template <typename T>
Tensor<T> conv_impl(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Shape x5,
                    Shape w5, std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad,
                    std::array<std::size_t, 3> pad_end, Shape (*out_shape)(const Geometry&), const char* op) {
  const Geometry g = make_geometry(x5, w5, stride, pad, pad_end, op);
  if (bias.defined() && (bias.rank() != 1 || bias.dims()[0] != g.cout))
    throw ShapeError(std::string(op) + ": bias shape " + shape_str(bias.dims()) + " does not match " +
                     std::to_string(g.cout) + " output channels");
  std::vector<T> out(g.n * g.cout * g.out_plane());
  conv_forward(g, input.data().data(), weight.data().data(), bias.defined() ? bias.data().data() : nullptr,
               out.data());
  check_finite<T>(out, op);
  Tensor<T> result(out_shape(g), std::move(out));
  if (!detail::any_requires_grad<T>({&input, &weight, &bias})) return result;

  auto* xi = input.handle().get();
  auto* wi = weight.handle().get();
  auto* bi = bias.defined() ? bias.handle().get() : nullptr;
  auto* oi = result.handle().get();
  std::vector<Tensor<T>> ins{input, weight};
  if (bias.defined()) ins.push_back(bias);
  detail::record<T>(op, ins, result, [=] {
    conv_backward(g, xi->data.data(), wi->data.data(), oi->grad.data(), grad_sink(xi), grad_sink(wi),
                  grad_sink(bi));
  });
  return result;
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv3dOptions opt) {
  if (input.rank() != 5) throw ShapeError("conv3d: expected input [N,C,T,H,W], got " + shape_str(input.dims()));
  if (weight.rank() != 5)
    throw ShapeError("conv3d: expected weight [Cout,Cin,Kt,Kh,Kw], got " + shape_str(weight.dims()));
  return conv_impl(
      input, weight, bias, input.dims(), weight.dims(), opt.stride, opt.padding,
      opt.padding_end.value_or(opt.padding),
      +[](const Geometry& g) { return Shape{g.n, g.cout, g.out[0], g.out[1], g.out[2]}; }, "conv3d");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions opt) {
  if (input.rank() != 4) throw ShapeError("conv2d: expected input [N,C,H,W], got " + shape_str(input.dims()));
  if (weight.rank() != 4)
    throw ShapeError("conv2d: expected weight [Cout,Cin,Kh,Kw], got " + shape_str(weight.dims()));
  const Shape& x = input.dims();
  const Shape& w = weight.dims();
  const auto end = opt.padding_end.value_or(opt.padding);
  return conv_impl(
      input, weight, bias, Shape{x[0], x[1], 1, x[2], x[3]}, Shape{w[0], w[1], 1, w[2], w[3]},
      {1, opt.stride[0], opt.stride[1]}, {0, opt.padding[0], opt.padding[1]}, {0, end[0], end[1]},
      +[](const Geometry& g) { return Shape{g.n, g.cout, g.out[1], g.out[2]}; }, "conv2d");
}

#define ESCI_INSTANTIATE(T)                                                                          \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions); \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv3dOptions);

ESCI_INSTANTIATE(float)
ESCI_INSTANTIATE(double)

}  // namespace esci
