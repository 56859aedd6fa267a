#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "esci/tensor.hpp"

namespace esci {

inline constexpr double kLeakySlope = 0.01;

// Elementwise (operands must have identical shapes).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(kLeakySlope));

// Reductions to a scalar.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// Layout.
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape dims);
/// out.dims[i] = x.dims[perm[i]]
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis, const std::vector<std::size_t>& sizes);
/// Splits into `parts` equal chunks.
template <typename T>
std::vector<Tensor<T>> chunk(const Tensor<T>& x, std::size_t axis, std::size_t parts);

/// [..., M, K] x [..., K, N] with identical leading dims, or [..., M, K] x [K, N].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x);

/// Zero padding is symmetric unless `padding_end` is given, in which case
/// `padding` applies before and `padding_end` after each axis. The output
/// extent (in + pad_before + pad_after - k) / stride + 1 must be integral.
struct Conv2dOptions {
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
  std::optional<std::array<std::size_t, 2>> padding_end{};
};

struct Conv3dOptions {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
  std::optional<std::array<std::size_t, 3>> padding_end{};
};

/// Cross-correlation. input [N,Cin,H,W], weight [Cout,Cin,Kh,Kw], bias [Cout] (may be undefined).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions opt = {});
/// Cross-correlation. input [N,Cin,T,H,W], weight [Cout,Cin,Kt,Kh,Kw], bias [Cout] (may be undefined).
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv3dOptions opt = {});

/// [N, C*r*r, T, H, W] -> [N, C, T, r*H, r*W];
/// out(n,c,t,r*h+a,r*w+b) = in(n, c*r*r + a*r + b, t, h, w).
template <typename T> Tensor<T> pixel_shuffle2d(const Tensor<T>& x, std::size_t r);
/// Inverse of pixel_shuffle2d.
template <typename T> Tensor<T> pixel_unshuffle2d(const Tensor<T>& x, std::size_t r);

/// Throws NumericError naming `where` if any value is NaN or infinite.
template <typename T> void check_finite(std::span<const T> values, const char* where);

}  // namespace esci
