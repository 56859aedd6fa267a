#pragma once

#include "esci/sci.hpp"

namespace esci {

struct GapTvOptions {
  std::size_t iters = 50;
  double tv_weight = 0.03;
  std::size_t tv_inner_iters = 20;
};

/// Anisotropic TV denoising of every [H, W] plane of `x` by projected
/// gradient on the dual:  min_u 1/2 |u - f|^2 + weight (|Dx u|_1 + |Dy u|_1).
template <typename T>
VideoCube<T> tv_denoise(const VideoCube<T>& x, double weight, std::size_t inner_iters = 20);

/// One projection onto {x : Hx = y}:  v + H^T ((y - H v) / sum_m M_m^2).
/// `v` is [B, H, W] in the masks' geometry; returns the same shape.
template <typename T>
Tensor<T> gap_projection(const Tensor<T>& y, const MaskSet<T>& masks, const Tensor<T>& v);

/// GAP-TV starting from v = 0. Gray returns [B,1,H,W]; Bayer measurements are
/// solved per sub-plane and returned as RGB [B,3,H,W].
template <typename T>
VideoCube<T> gap_tv_reconstruct(const Measurement<T>& y, const MaskSet<T>& masks, GapTvOptions opt = {});

}  // namespace esci
