#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "esci/net.hpp"
#include "esci/sci.hpp"

namespace esci {

inline constexpr double kPsnrCap = 100.0;
inline constexpr std::size_t kSsimWindow = 11;

struct MetricReport {
  std::vector<double> per_frame;  // PSNR frames with zero error hold +infinity
  double mean = 0.0;              // PSNR: mean over frames after capping at kPsnrCap
};

/// 10 log10(peak^2 / MSE) per frame; inputs are clamped to [0, 1] first.
template <typename T>
MetricReport psnr(const VideoCube<T>& a, const VideoCube<T>& b, double peak = 1.0);

/// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1, averaged over the valid window positions and over channels.
/// `window` selects a smaller odd window (same sigma, renormalized) for tiny
/// frames; frames smaller than the window are a ShapeError.
template <typename T>
MetricReport ssim(const VideoCube<T>& a, const VideoCube<T>& b, std::size_t window = kSsimWindow);

/// SSIM of one [h, w] plane (row-major), values already in [0, 1].
double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::size_t h, std::size_t w,
                  std::size_t window = kSsimWindow);

enum class Component { Scb, Tsab, Scb3d, GMsa, TsMsa };

Component component_from_string(const std::string& name);
std::string to_string(Component c);

/// Multiply count of one component from its closed-form complexity:
///   SCB    1/2 HWT K^2 C^2            SCB3D  1/2 HWT K^3 C^2
///   TSAB   1/2 HWT C^2 + 1/2 HW T^2 C G-MSA  HWT C^2 + (HWT)^2 C
///   TS-MSA 2 HWT C^2 + T (HW)^2 C + HW T^2 C
/// `split` and `heads` do not enter these forms and are accepted for interface symmetry.
double flops_analytic(Component component, double h, double w, double t, double c, double k = 3,
                      double split = 1, double heads = 1);

struct LayerCount {
  std::string name;
  std::uint64_t params = 0;
};

struct ParamCount {
  std::uint64_t total = 0;
  std::vector<LayerCount> layers;
};

/// Closed-form parameter count of the network described by `config`.
ParamCount param_count(const NetworkConfig& config);

struct FlopsBreakdown {
  double features = 0, blocks = 0, head = 0;
  double total() const { return features + blocks + head; }
};

/// Closed-form multiply count of a full forward pass on a B x H x W input
/// (gray; color inputs use the half-resolution Bayer planes).
FlopsBreakdown network_flops(const NetworkConfig& config, std::size_t frames, std::size_t height,
                             std::size_t width);

/// Aligned-text and CSV renderings of a per-frame metric table.
std::string metrics_table_text(const MetricReport& psnr, const MetricReport& ssim);
std::string metrics_table_csv(const MetricReport& psnr, const MetricReport& ssim);

}  // namespace esci
