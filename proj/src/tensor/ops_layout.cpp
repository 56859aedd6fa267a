#include <numeric>
#include <string>

#include "op_support.hpp"

namespace esci {

using detail::grad_sink;

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape dims) {
  if (shape_numel(dims) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.dims()) + " as " + shape_str(dims));
  Tensor<T> result(std::move(dims), x.vec());
  if (!detail::any_requires_grad<T>({&x})) return result;
  auto* xi = x.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("reshape", {x}, result, [=] {
    T* gx = grad_sink(xi);
    for (std::size_t i = 0; i < oi->grad.size(); ++i) gx[i] += oi->grad[i];
  });
  return result;
}

namespace {

std::vector<std::size_t> strides_of(const Shape& dims) {
  std::vector<std::size_t> s(dims.size(), 1);
  for (std::size_t i = dims.size(); i-- > 1;) s[i - 1] = s[i] * dims[i];
  return s;
}

// For each output flat index, the flat index of the source element.
std::vector<std::size_t> permutation_map(const Shape& in_dims, const std::vector<std::size_t>& perm,
                                         Shape& out_dims) {
  const std::size_t r = in_dims.size();
  const auto in_strides = strides_of(in_dims);
  out_dims.resize(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_dims[i] = in_dims[perm[i]];
    src_stride[i] = in_strides[perm[i]];
  }
  const std::size_t n = shape_numel(in_dims);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    map[o] = src;
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      src += src_stride[ax];
      if (idx[ax] < out_dims[ax]) break;
      src -= src_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw ShapeError("permute: permutation rank differs from tensor rank");
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p >= r || seen[p]) throw ShapeError("permute: invalid axis permutation");
    seen[p] = true;
  }
  Shape out_dims;
  auto map = permutation_map(x.dims(), perm, out_dims);
  std::vector<T> out(map.size());
  auto src = x.data();
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = src[map[o]];
  Tensor<T> result(std::move(out_dims), std::move(out));
  if (!detail::any_requires_grad<T>({&x})) return result;
  auto* xi = x.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("permute", {x}, result, [=, map = std::move(map)] {
    T* gx = grad_sink(xi);
    for (std::size_t o = 0; o < map.size(); ++o) gx[map[o]] += oi->grad[o];
  });
  return result;
}

namespace {

// outer = product of dims before axis, inner = product after.
void outer_inner(const Shape& dims, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= dims[i];
  for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
}

}  // namespace

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().dims();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range for " + shape_str(ref));
  Shape out_dims = ref;
  out_dims[axis] = 0;
  for (const auto& p : parts) {
    const Shape& d = p.dims();
    bool ok = d.size() == ref.size();
    for (std::size_t i = 0; ok && i < d.size(); ++i)
      if (i != axis && d[i] != ref[i]) ok = false;
    if (!ok) throw ShapeError("concat: incompatible shapes " + shape_str(ref) + " and " + shape_str(d));
    out_dims[axis] += d[axis];
  }
  std::size_t outer, inner;
  outer_inner(out_dims, axis, outer, inner);
  const std::size_t out_row = out_dims[axis] * inner;
  std::vector<T> out(outer * out_row);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t row = p.dims()[axis] * inner;
    auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + o * row, row, out.begin() + o * out_row + offset);
    offsets.push_back(offset);
    offset += row;
  }
  Tensor<T> result(std::move(out_dims), std::move(out));
  if (!detail::any_requires_grad<T>(parts)) return result;
  std::vector<TensorImpl<T>*> impls;
  for (const auto& p : parts) impls.push_back(p.handle().get());
  auto* oi = result.handle().get();
  detail::record<T>("concat", parts, result, [=] {
    for (std::size_t k = 0; k < impls.size(); ++k) {
      T* g = grad_sink(impls[k]);
      if (!g) continue;
      const std::size_t row = impls[k]->dims[axis] * inner;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < row; ++j) g[o * row + j] += oi->grad[o * out_row + offsets[k] + j];
    }
  });
  return result;
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis, const std::vector<std::size_t>& sizes) {
  const Shape& dims = x.dims();
  if (axis >= dims.size()) throw ShapeError("split: axis out of range for " + shape_str(dims));
  if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != dims[axis])
    throw ShapeError("split: sizes do not sum to extent " + std::to_string(dims[axis]));
  std::size_t outer, inner;
  outer_inner(dims, axis, outer, inner);
  const std::size_t in_row = dims[axis] * inner;
  const bool track = detail::any_requires_grad<T>({&x});
  auto* xi = x.handle().get();

  std::vector<Tensor<T>> outs;
  std::size_t offset = 0;
  for (auto s : sizes) {
    if (s == 0) throw ShapeError("split: zero-sized part");
    Shape d = dims;
    d[axis] = s;
    const std::size_t row = s * inner;
    std::vector<T> buf(outer * row);
    auto src = x.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.begin() + o * in_row + offset, row, buf.begin() + o * row);
    Tensor<T> part(std::move(d), std::move(buf));
    if (track) {
      auto* oi = part.handle().get();
      detail::record<T>("split", {x}, part, [=] {
        T* gx = grad_sink(xi);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < row; ++j) gx[o * in_row + offset + j] += oi->grad[o * row + j];
      });
    }
    outs.push_back(std::move(part));
    offset += row;
  }
  return outs;
}

template <typename T>
std::vector<Tensor<T>> chunk(const Tensor<T>& x, std::size_t axis, std::size_t parts) {
  const std::size_t extent = x.dim(axis);
  if (parts == 0 || extent % parts != 0)
    throw ShapeError("chunk: extent " + std::to_string(extent) + " is not divisible into " +
                     std::to_string(parts) + " parts");
  return split(x, axis, std::vector<std::size_t>(parts, extent / parts));
}

namespace {

// Source flat index in the [N, C*r*r, T, H, W] tensor for each element of the
// [N, C, T, rH, rW] tensor.
std::vector<std::size_t> shuffle_map(const Shape& in, std::size_t r, Shape& out_dims) {
  const std::size_t n = in[0], cin = in[1], t = in[2], h = in[3], w = in[4];
  const std::size_t c = cin / (r * r);
  out_dims = {n, c, t, h * r, w * r};
  std::vector<std::size_t> map(shape_numel(out_dims));
  std::size_t o = 0;
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t y = 0; y < h * r; ++y)
          for (std::size_t x = 0; x < w * r; ++x) {
            const std::size_t a = y % r, b = x % r;
            const std::size_t src_c = ci * r * r + a * r + b;
            map[o++] = (((ni * cin + src_c) * t + ti) * h + y / r) * w + x / r;
          }
  return map;
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle2d(const Tensor<T>& x, std::size_t r) {
  if (x.rank() != 5) throw ShapeError("pixel_shuffle2d: expected [N,C,T,H,W], got " + shape_str(x.dims()));
  if (r == 0 || x.dims()[1] % (r * r) != 0)
    throw ShapeError("pixel_shuffle2d: channel extent " + std::to_string(x.dims()[1]) +
                     " is not divisible by r^2 = " + std::to_string(r * r));
  Shape out_dims;
  auto map = shuffle_map(x.dims(), r, out_dims);
  std::vector<T> out(map.size());
  auto src = x.data();
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = src[map[o]];
  Tensor<T> result(std::move(out_dims), std::move(out));
  if (!detail::any_requires_grad<T>({&x})) return result;
  auto* xi = x.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("pixel_shuffle2d", {x}, result, [=, map = std::move(map)] {
    T* gx = grad_sink(xi);
    for (std::size_t o = 0; o < map.size(); ++o) gx[map[o]] += oi->grad[o];
  });
  return result;
}

template <typename T>
Tensor<T> pixel_unshuffle2d(const Tensor<T>& x, std::size_t r) {
  if (x.rank() != 5) throw ShapeError("pixel_unshuffle2d: expected [N,C,T,H,W], got " + shape_str(x.dims()));
  const Shape& d = x.dims();
  if (r == 0 || d[3] % r != 0 || d[4] % r != 0)
    throw ShapeError("pixel_unshuffle2d: spatial extents not divisible by " + std::to_string(r));
  const Shape in_dims{d[0], d[1] * r * r, d[2], d[3] / r, d[4] / r};
  Shape shuffled;
  auto map = shuffle_map(in_dims, r, shuffled);
  // map: shuffled-index -> unshuffled-index; invert it.
  std::vector<T> out(map.size());
  auto src = x.data();
  for (std::size_t o = 0; o < map.size(); ++o) out[map[o]] = src[o];
  Tensor<T> result(in_dims, std::move(out));
  if (!detail::any_requires_grad<T>({&x})) return result;
  auto* xi = x.handle().get();
  auto* oi = result.handle().get();
  detail::record<T>("pixel_unshuffle2d", {x}, result, [=, map = std::move(map)] {
    T* gx = grad_sink(xi);
    for (std::size_t o = 0; o < map.size(); ++o) gx[o] += oi->grad[map[o]];
  });
  return result;
}

#define ESCI_INSTANTIATE(T)                                                                       \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                        \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);              \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                      \
  template std::vector<Tensor<T>> split<T>(const Tensor<T>&, std::size_t,                        \
                                           const std::vector<std::size_t>&);                     \
  template std::vector<Tensor<T>> chunk<T>(const Tensor<T>&, std::size_t, std::size_t);          \
  template Tensor<T> pixel_shuffle2d<T>(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> pixel_unshuffle2d<T>(const Tensor<T>&, std::size_t);

ESCI_INSTANTIATE(float)
ESCI_INSTANTIATE(double)

}  // namespace esci
