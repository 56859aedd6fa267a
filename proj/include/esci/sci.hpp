#pragma once

#include <array>
#include <cstdint>

#include "esci/tensor.hpp"

namespace esci {

enum class ColorMode { Gray, BayerRggb };

/// Per-frame modulation patterns, masks [B, H, W], values in [0, 1].
template <typename T>
struct MaskSet {
  Tensor<T> masks;
  std::uint64_t seed = 0;

  std::size_t frames() const { return masks.dim(0); }
  std::size_t height() const { return masks.dim(1); }
  std::size_t width() const { return masks.dim(2); }
};

/// A single coded snapshot. For Bayer data `y` is the full-resolution mosaic.
template <typename T>
struct Measurement {
  Tensor<T> y;  // [H, W]
  std::size_t frames = 1;
  ColorMode color = ColorMode::Gray;
  double noise_sigma = 0.0;
};

/// frames [B, C, H, W] with C = 1 (gray) or 3 (RGB), values in [0, 1].
template <typename T>
struct VideoCube {
  Tensor<T> frames;

  std::size_t count() const { return frames.dim(0); }
  std::size_t channels() const { return frames.dim(1); }
  std::size_t height() const { return frames.dim(2); }
  std::size_t width() const { return frames.dim(3); }
};

inline constexpr double kMaskSumGuard = 1e-6;

/// i.i.d. Bernoulli(density) masks, deterministic in `seed`.
template <typename T>
MaskSet<T> generate_masks(std::size_t frames, std::size_t height, std::size_t width, double density = 0.5,
                          std::uint64_t seed = 0);

/// y = sum_m X_m * M_m + Z, Z ~ N(0, sigma^2). Three-channel video is first
/// reduced to its RGGB mosaic so each pixel carries one color sample.
template <typename T>
Measurement<T> encode(const VideoCube<T>& video, const MaskSet<T>& masks, double noise_sigma = 0.0,
                      std::uint64_t noise_seed = 0);

/// Dense sensing matrix [H*W, H*W*B] = [Diag(vec M_1) ... Diag(vec M_B)].
/// Test oracle only: refuses H*W > 4096.
template <typename T>
Tensor<T> build_sensing_oracle(const MaskSet<T>& masks);

/// RGB video [B,3,H,W] -> single-sample-per-pixel mosaic [B,1,H,W] (RGGB).
template <typename T>
Tensor<T> bayer_mosaic(const Tensor<T>& rgb);

/// Channel order of Bayer sub-planes: R (even,even), G1 (even,odd), G2 (odd,even), B (odd,odd).
inline constexpr std::array<std::array<std::size_t, 2>, 4> kBayerOffsets{{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};

template <typename T>
struct BayerSplit {
  std::array<Tensor<T>, 4> measurements;  // each [H/2, W/2]
  std::array<MaskSet<T>, 4> masks;        // each [B, H/2, W/2]
};

template <typename T>
BayerSplit<T> bayer_split(const Tensor<T>& y, const MaskSet<T>& masks);

/// Interleaves four [h, w] sub-planes back into a [2h, 2w] mosaic.
template <typename T>
Tensor<T> bayer_merge(const std::array<Tensor<T>, 4>& subs);

/// Half-resolution planes [B,4,h,w] -> RGB [B,3,2h,2w]; each color sample is
/// replicated over its 2x2 tile and the two greens are averaged.
template <typename T>
Tensor<T> bayer_planes_to_rgb(const Tensor<T>& planes);

struct EstimationDiagnostics {
  std::size_t zero_sum_pixels = 0;
};

/// Coarse estimate X_e [B, Cin, H', W'] from a measurement and its masks:
/// Ybar = y / sum_m M_m, X_e[m] = Ybar * M_m + Ybar. Gray: Cin = 1 at H x W;
/// Bayer: the four sub-problems stacked as Cin = 4 at H/2 x W/2.
template <typename T>
Tensor<T> estimation_init(const Measurement<T>& y, const MaskSet<T>& masks, EstimationDiagnostics* diag = nullptr);

/// y / (sum_m M_m), with kMaskSumGuard substituted where the sum is exactly zero.
template <typename T>
Tensor<T> normalized_measurement(const Tensor<T>& y, const MaskSet<T>& masks, std::size_t* zero_sum_pixels = nullptr);

}  // namespace esci
