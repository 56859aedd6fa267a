#include <stdexcept>

#include "esci/analysis.hpp"

namespace esci {

Component component_from_string(const std::string& name) {
  if (name == "SCB") return Component::Scb;
  if (name == "TSAB") return Component::Tsab;
  if (name == "SCB3D") return Component::Scb3d;
  if (name == "G-MSA") return Component::GMsa;
  if (name == "TS-MSA") return Component::TsMsa;
  throw std::invalid_argument("unknown component '" + name + "'");
}

std::string to_string(Component c) {
  switch (c) {
    case Component::Scb: return "SCB";
    case Component::Tsab: return "TSAB";
    case Component::Scb3d: return "SCB3D";
    case Component::GMsa: return "G-MSA";
    case Component::TsMsa: return "TS-MSA";
  }
  return "?";
}

double flops_analytic(Component component, double h, double w, double t, double c, double k, double, double) {
  if (h <= 0 || w <= 0 || t <= 0 || c <= 0 || k <= 0) throw std::invalid_argument("flops_analytic: extents must be positive");
  const double hw = h * w;
  switch (component) {
    case Component::Scb: return 0.5 * hw * t * k * k * c * c;
    case Component::Tsab: return 0.5 * hw * t * c * c + 0.5 * hw * t * t * c;
    case Component::Scb3d: return 0.5 * hw * t * k * k * k * c * c;
    case Component::GMsa: return hw * t * c * c + (hw * t) * (hw * t) * c;
    case Component::TsMsa: return 2 * hw * t * c * c + t * hw * hw * c + hw * t * t * c;
  }
  return 0;
}

namespace {

std::uint64_t conv_params(std::uint64_t cin, std::uint64_t cout, std::uint64_t taps) {
  return cin * cout * taps + cout;
}

}  // namespace

ParamCount param_count(const NetworkConfig& config) {
  config.validate();
  ParamCount pc;
  auto add = [&](std::string name, std::uint64_t n) {
    pc.total += n;
    pc.layers.push_back({std::move(name), n});
  };
  const std::uint64_t C = config.channels, c = C / config.split, h = c / 2, F = config.ffn_expansion * c;
  add("fe.conv1", conv_params(config.in_channels, C / 4, 3 * 7 * 7));
  add("fe.conv2", conv_params(C / 4, C / 2, 27));
  add("fe.conv3", conv_params(C / 2, C, 27));
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string bp = "blocks." + std::to_string(b);
    for (std::uint64_t i = 0; i < config.split; ++i) {
      const std::string cp = bp + ".cformer." + std::to_string(i);
      if (i > 0) add(bp + ".reduce." + std::to_string(i), conv_params((i + 1) * c, c, 1));
      add(cp + ".scb", conv_params(c, h, 9) + conv_params(h, h, 9));
      add(cp + ".tsab", 3 * c * h + h * h);
      add(cp + ".ffn", conv_params(c, F, 27) + conv_params(F, c, 1));
    }
    add(bp + ".fuse", conv_params(C, C, 1));
  }
  const std::uint64_t hc = config.head_hidden();
  const std::uint64_t out = config.in_channels == 4 ? 12 : config.out_channels;
  add("head.conv1", conv_params(C / 4, C / 4, 27));
  add("head.conv2", conv_params(C / 4, hc, 1));
  add("head.conv3", conv_params(hc, out, 27));
  return pc;
}

FlopsBreakdown network_flops(const NetworkConfig& config, std::size_t frames, std::size_t height, std::size_t width) {
  config.validate();
  const double C = static_cast<double>(config.channels);
  const double c = C / static_cast<double>(config.split), h = c / 2, F = static_cast<double>(config.ffn_expansion) * c;
  const double in = static_cast<double>(config.in_channels);
  const double t = static_cast<double>(frames);
  // Network input resolution: Bayer measurements enter as half-resolution planes.
  const double scale = config.in_channels == 4 ? 0.5 : 1.0;
  const double full = t * (static_cast<double>(height) * scale) * (static_cast<double>(width) * scale);
  const double half_res = full / 4;  // positions after the stride-2 feature conv

  FlopsBreakdown f;
  f.features = (C / 4) * in * 147 * full + (C / 2) * (C / 4) * 27 * full + C * (C / 2) * 27 * half_res;

  const double heads = static_cast<double>(config.heads);
  const double hw = half_res / t;
  double cformer = (9 * c * h + 9 * h * h) * half_res;         // SCB
  cformer += (3 * c * h + h * h) * half_res;                   // Q, K, V, output projections
  cformer += 2 * hw * t * t * h + 2 * hw * heads * t * t;      // QK^T, AV, scaling, softmax
  cformer += (27 * c * F + F * c) * half_res;                  // FFN
  double block = static_cast<double>(config.split) * cformer + C * C * half_res;
  for (std::size_t i = 1; i < config.split; ++i) block += static_cast<double>(i + 1) * c * c * half_res;
  f.blocks = static_cast<double>(config.blocks) * block;

  const double hc = static_cast<double>(config.head_hidden());
  const double out = config.in_channels == 4 ? 12 : static_cast<double>(config.out_channels);
  f.head = (C / 4) * (C / 4) * 27 * full + (C / 4) * hc * full + hc * out * 27 * full;
  return f;
}

}  // namespace esci
