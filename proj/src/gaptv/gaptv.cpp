#include "esci/gaptv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "esci/ops.hpp"

namespace esci {

namespace {

// Dual projected-gradient TV on one plane, in place. Forward differences with
// a zero difference past the last row/column.
void tv_plane(double* f, std::size_t h, std::size_t w, double lambda, std::size_t iters) {
  const std::size_t n = h * w;
  std::vector<double> px(n, 0.0), py(n, 0.0), u(f, f + n);
  const double step = 1.0 / (8.0 * lambda);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t i = r * w + c;
        const double dx = c + 1 < w ? u[i + 1] - u[i] : 0.0;
        const double dy = r + 1 < h ? u[i + w] - u[i] : 0.0;
        px[i] = std::clamp(px[i] + step * dx, -1.0, 1.0);
        py[i] = std::clamp(py[i] + step * dy, -1.0, 1.0);
      }
    // u = f - lambda * D^T p, with D^T p = -div p.
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t i = r * w + c;
        double div = 0;
        if (c + 1 < w) div += px[i];
        if (c > 0) div -= px[i - 1];
        if (r + 1 < h) div += py[i];
        if (r > 0) div -= py[i - w];
        u[i] = f[i] + lambda * div;
      }
  }
  std::copy(u.begin(), u.end(), f);
}

template <typename T>
VideoCube<T> gap_tv_gray(const Tensor<T>& y, const MaskSet<T>& masks, const GapTvOptions& opt) {
  const std::size_t b = masks.frames(), h = masks.height(), w = masks.width();
  Tensor<T> v = Tensor<T>::zeros({b, h, w});
  for (std::size_t it = 0; it < opt.iters; ++it) {
    Tensor<T> x = gap_projection(y, masks, v);
    VideoCube<T> cube{reshape(x, {b, 1, h, w})};
    v = reshape(tv_denoise(cube, opt.tv_weight, opt.tv_inner_iters).frames, {b, h, w});
  }
  return VideoCube<T>{reshape(v, {b, 1, h, w})};
}

}  // namespace

template <typename T>
VideoCube<T> tv_denoise(const VideoCube<T>& x, double weight, std::size_t inner_iters) {
  if (weight < 0) throw std::invalid_argument("tv_denoise: weight must be non-negative");
  VideoCube<T> out{x.frames.detach().clone()};
  if (weight == 0 || inner_iters == 0) return out;
  const std::size_t h = x.height(), w = x.width(), planes = x.frames.numel() / (h * w);
  auto data = out.frames.mutable_data();
  std::vector<double> buf(h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(p * h * w), h * w, buf.begin());
    tv_plane(buf.data(), h, w, weight, inner_iters);
    for (std::size_t i = 0; i < h * w; ++i) data[p * h * w + i] = static_cast<T>(buf[i]);
  }
  return out;
}

template <typename T>
Tensor<T> gap_projection(const Tensor<T>& y, const MaskSet<T>& masks, const Tensor<T>& v) {
  const std::size_t b = masks.frames(), h = masks.height(), w = masks.width(), n = h * w;
  if (y.dims() != Shape{h, w}) throw ShapeError("gap_projection: measurement " + shape_str(y.dims()));
  if (v.dims() != Shape{b, h, w}) throw ShapeError("gap_projection: estimate " + shape_str(v.dims()));
  const auto m = masks.masks.data();
  const auto vd = v.data();
  const auto yd = y.data();
  Tensor<T> out({b, h, w});
  auto od = out.mutable_data();
  for (std::size_t p = 0; p < n; ++p) {
    double hv = 0, phi = 0;
    for (std::size_t f = 0; f < b; ++f) {
      hv += static_cast<double>(m[f * n + p]) * vd[f * n + p];
      phi += static_cast<double>(m[f * n + p]) * m[f * n + p];
    }
    const double r = (yd[p] - hv) / (phi == 0.0 ? kMaskSumGuard : phi);
    for (std::size_t f = 0; f < b; ++f) od[f * n + p] = static_cast<T>(vd[f * n + p] + m[f * n + p] * r);
  }
  return out;
}

template <typename T>
VideoCube<T> gap_tv_reconstruct(const Measurement<T>& y, const MaskSet<T>& masks, GapTvOptions opt) {
  NoGradScope<T> no_grad;
  if (masks.frames() != y.frames)
    throw ShapeError("gap_tv: measurement encodes " + std::to_string(y.frames) + " frames, masks hold " +
                     std::to_string(masks.frames()));
  if (y.color == ColorMode::Gray) return gap_tv_gray(y.y, masks, opt);

  const auto split = bayer_split(y.y, masks);
  std::vector<Tensor<T>> planes;
  for (std::size_t k = 0; k < 4; ++k) planes.push_back(gap_tv_gray(split.measurements[k], split.masks[k], opt).frames);
  return VideoCube<T>{bayer_planes_to_rgb(concat(planes, 1))};
}

template VideoCube<float> tv_denoise(const VideoCube<float>&, double, std::size_t);
template VideoCube<double> tv_denoise(const VideoCube<double>&, double, std::size_t);
template Tensor<float> gap_projection(const Tensor<float>&, const MaskSet<float>&, const Tensor<float>&);
template Tensor<double> gap_projection(const Tensor<double>&, const MaskSet<double>&, const Tensor<double>&);
template VideoCube<float> gap_tv_reconstruct(const Measurement<float>&, const MaskSet<float>&, GapTvOptions);
template VideoCube<double> gap_tv_reconstruct(const Measurement<double>&, const MaskSet<double>&, GapTvOptions);

}  // namespace esci
