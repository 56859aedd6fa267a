#include "esci/sci.hpp"

#include <random>
#include <string>

namespace esci {

template <typename T>
MaskSet<T> generate_masks(std::size_t frames, std::size_t height, std::size_t width, double density,
                          std::uint64_t seed) {
  if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("mask density must lie in (0, 1]");
  MaskSet<T> out{Tensor<T>({frames, height, width}), seed};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : out.masks.mutable_data()) v = u(rng) < density ? T(1) : T(0);
  return out;
}

template <typename T>
Tensor<T> bayer_mosaic(const Tensor<T>& rgb) {
  if (rgb.rank() != 4 || rgb.dim(1) != 3)
    throw ShapeError("bayer_mosaic: expected [B,3,H,W], got " + shape_str(rgb.dims()));
  const std::size_t b = rgb.dim(0), h = rgb.dim(2), w = rgb.dim(3);
  if (h % 2 || w % 2) throw ShapeError("bayer_mosaic: extents must be even, got " + shape_str(rgb.dims()));
  Tensor<T> out({b, 1, h, w});
  auto src = rgb.data();
  auto dst = out.mutable_data();
  for (std::size_t f = 0; f < b; ++f)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        // RGGB: even/even red, odd/odd blue, green elsewhere.
        const std::size_t ch = (r % 2 == 0 && c % 2 == 0) ? 0 : (r % 2 == 1 && c % 2 == 1) ? 2 : 1;
        dst[(f * h + r) * w + c] = src[((f * 3 + ch) * h + r) * w + c];
      }
  return out;
}

template <typename T>
Measurement<T> encode(const VideoCube<T>& video, const MaskSet<T>& masks, double noise_sigma,
                      std::uint64_t noise_seed) {
  const Tensor<T>& x = video.frames;
  if (x.rank() != 4) throw ShapeError("encode: video must be [B,C,H,W], got " + shape_str(x.dims()));
  if (masks.masks.rank() != 3) throw ShapeError("encode: masks must be [B,H,W]");
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (masks.frames() != b || masks.height() != h || masks.width() != w)
    throw ShapeError("encode: video " + shape_str(x.dims()) + " does not match masks " +
                     shape_str(masks.masks.dims()));
  if (c != 1 && c != 3) throw ShapeError("encode: video must have 1 or 3 channels");
  if (noise_sigma < 0) throw std::invalid_argument("encode: noise sigma must be nonnegative");

  const Tensor<T> mono = c == 3 ? bayer_mosaic(x) : x;
  Measurement<T> out{Tensor<T>({h, w}), b, c == 3 ? ColorMode::BayerRggb : ColorMode::Gray, noise_sigma};
  auto y = out.y.mutable_data();
  auto xv = mono.data();
  auto mv = masks.masks.data();
  const std::size_t plane = h * w;
  for (std::size_t f = 0; f < b; ++f)
    for (std::size_t p = 0; p < plane; ++p) y[p] += xv[f * plane + p] * mv[f * plane + p];
  if (noise_sigma > 0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> n(0.0, noise_sigma);
    for (auto& v : y) v += static_cast<T>(n(rng));
  }
  return out;
}

template <typename T>
Tensor<T> build_sensing_oracle(const MaskSet<T>& masks) {
  const std::size_t b = masks.frames(), n = masks.height() * masks.width();
  if (n > 4096) throw std::length_error("build_sensing_oracle: H*W = " + std::to_string(n) + " exceeds 4096");
  Tensor<T> h({n, n * b});
  auto hv = h.mutable_data();
  auto mv = masks.masks.data();
  for (std::size_t f = 0; f < b; ++f)
    for (std::size_t p = 0; p < n; ++p) hv[p * (n * b) + f * n + p] = mv[f * n + p];
  return h;
}

template <typename T>
BayerSplit<T> bayer_split(const Tensor<T>& y, const MaskSet<T>& masks) {
  if (y.rank() != 2) throw ShapeError("bayer_split: measurement must be [H,W]");
  const std::size_t h = y.dim(0), w = y.dim(1);
  if (h % 2 || w % 2) throw ShapeError("bayer_split: extents must be even, got " + shape_str(y.dims()));
  if (masks.height() != h || masks.width() != w) throw ShapeError("bayer_split: masks do not match measurement");
  const std::size_t hh = h / 2, hw = w / 2, b = masks.frames();
  BayerSplit<T> out;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto [dr, dc] = kBayerOffsets[k];
    Tensor<T> sub({hh, hw});
    Tensor<T> sub_masks({b, hh, hw});
    auto s = sub.mutable_data();
    auto sm = sub_masks.mutable_data();
    for (std::size_t r = 0; r < hh; ++r)
      for (std::size_t c = 0; c < hw; ++c) {
        s[r * hw + c] = y[(2 * r + dr) * w + 2 * c + dc];
        for (std::size_t f = 0; f < b; ++f)
          sm[(f * hh + r) * hw + c] = masks.masks[(f * h + 2 * r + dr) * w + 2 * c + dc];
      }
    out.measurements[k] = std::move(sub);
    out.masks[k] = MaskSet<T>{std::move(sub_masks), masks.seed};
  }
  return out;
}

template <typename T>
Tensor<T> bayer_merge(const std::array<Tensor<T>, 4>& subs) {
  const Shape& d = subs[0].dims();
  if (d.size() != 2) throw ShapeError("bayer_merge: sub-planes must be [h,w]");
  for (const auto& s : subs)
    if (s.dims() != d) throw ShapeError("bayer_merge: sub-plane shapes differ");
  const std::size_t hh = d[0], hw = d[1], w = 2 * hw;
  Tensor<T> y({2 * hh, w});
  auto out = y.mutable_data();
  for (std::size_t k = 0; k < 4; ++k) {
    const auto [dr, dc] = kBayerOffsets[k];
    for (std::size_t r = 0; r < hh; ++r)
      for (std::size_t c = 0; c < hw; ++c) out[(2 * r + dr) * w + 2 * c + dc] = subs[k][r * hw + c];
  }
  return y;
}

template <typename T>
Tensor<T> bayer_planes_to_rgb(const Tensor<T>& planes) {
  if (planes.rank() != 4 || planes.dim(1) != 4)
    throw ShapeError("bayer_planes_to_rgb: expected [B,4,h,w], got " + shape_str(planes.dims()));
  const std::size_t b = planes.dim(0), hh = planes.dim(2), hw = planes.dim(3);
  const std::size_t h = 2 * hh, w = 2 * hw, plane = hh * hw;
  Tensor<T> rgb({b, 3, h, w});
  auto out = rgb.mutable_data();
  auto in = planes.data();
  for (std::size_t f = 0; f < b; ++f)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t p = (r / 2) * hw + c / 2;
        const T* base = in.data() + f * 4 * plane;
        out[((f * 3 + 0) * h + r) * w + c] = base[p];
        out[((f * 3 + 1) * h + r) * w + c] = (base[plane + p] + base[2 * plane + p]) / T(2);
        out[((f * 3 + 2) * h + r) * w + c] = base[3 * plane + p];
      }
  return rgb;
}

template <typename T>
Tensor<T> normalized_measurement(const Tensor<T>& y, const MaskSet<T>& masks, std::size_t* zero_sum_pixels) {
  const std::size_t b = masks.frames(), h = masks.height(), w = masks.width();
  if (y.rank() != 2 || y.dim(0) != h || y.dim(1) != w)
    throw ShapeError("estimation: measurement " + shape_str(y.dims()) + " does not match masks " +
                     shape_str(masks.masks.dims()));
  Tensor<T> ybar({h, w});
  auto out = ybar.mutable_data();
  auto mv = masks.masks.data();
  std::size_t zeros = 0;
  for (std::size_t p = 0; p < h * w; ++p) {
    T s = 0;
    for (std::size_t f = 0; f < b; ++f) s += mv[f * h * w + p];
    if (s == T(0)) {
      s = static_cast<T>(kMaskSumGuard);
      ++zeros;
    }
    out[p] = y[p] / s;
  }
  if (zero_sum_pixels) *zero_sum_pixels += zeros;
  return ybar;
}

namespace {

// Writes X_e for one (measurement, masks) pair into channel `ch` of [B, Cin, H, W].
template <typename T>
void estimate_into(const Tensor<T>& y, const MaskSet<T>& masks, Tensor<T>& out, std::size_t ch,
                   std::size_t* zeros) {
  const Tensor<T> ybar = normalized_measurement(y, masks, zeros);
  const std::size_t b = masks.frames(), plane = masks.height() * masks.width(), cin = out.dim(1);
  auto dst = out.mutable_data();
  auto mv = masks.masks.data();
  for (std::size_t f = 0; f < b; ++f)
    for (std::size_t p = 0; p < plane; ++p)
      dst[(f * cin + ch) * plane + p] = ybar[p] * mv[f * plane + p] + ybar[p];
}

}  // namespace

template <typename T>
Tensor<T> estimation_init(const Measurement<T>& y, const MaskSet<T>& masks, EstimationDiagnostics* diag) {
  if (masks.frames() != y.frames)
    throw ShapeError("estimation_init: measurement encodes " + std::to_string(y.frames) + " frames but " +
                     std::to_string(masks.frames()) + " masks were given");
  std::size_t zeros = 0;
  Tensor<T> out;
  if (y.color == ColorMode::Gray) {
    out = Tensor<T>({masks.frames(), 1, masks.height(), masks.width()});
    estimate_into(y.y, masks, out, 0, &zeros);
  } else {
    const auto split = bayer_split(y.y, masks);
    out = Tensor<T>({masks.frames(), 4, masks.height() / 2, masks.width() / 2});
    for (std::size_t k = 0; k < 4; ++k) estimate_into(split.measurements[k], split.masks[k], out, k, &zeros);
  }
  if (diag) diag->zero_sum_pixels = zeros;
  return out;
}

#define ESCI_INSTANTIATE(T)                                                                           \
  template MaskSet<T> generate_masks<T>(std::size_t, std::size_t, std::size_t, double, std::uint64_t); \
  template Measurement<T> encode<T>(const VideoCube<T>&, const MaskSet<T>&, double, std::uint64_t);    \
  template Tensor<T> build_sensing_oracle<T>(const MaskSet<T>&);                                      \
  template Tensor<T> bayer_mosaic<T>(const Tensor<T>&);                                               \
  template BayerSplit<T> bayer_split<T>(const Tensor<T>&, const MaskSet<T>&);                         \
  template Tensor<T> bayer_merge<T>(const std::array<Tensor<T>, 4>&);                                 \
  template Tensor<T> bayer_planes_to_rgb<T>(const Tensor<T>&);                                        \
  template Tensor<T> normalized_measurement<T>(const Tensor<T>&, const MaskSet<T>&, std::size_t*);    \
  template Tensor<T> estimation_init<T>(const Measurement<T>&, const MaskSet<T>&, EstimationDiagnostics*);

ESCI_INSTANTIATE(float)
ESCI_INSTANTIATE(double)

}  // namespace esci
