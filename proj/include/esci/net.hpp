#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "esci/ops.hpp"
#include "esci/sci.hpp"

namespace esci {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Architecture hyperparameters.
struct NetworkConfig {
  std::size_t channels = 64;      // C
  std::size_t blocks = 8;         // N ResDNet blocks
  std::size_t split = 4;          // S CFormers per block
  std::size_t heads = 4;          // attention heads per TSAB
  std::size_t in_channels = 1;    // 1 gray, 4 Bayer planes
  std::size_t out_channels = 1;   // 1 gray, 3 RGB
  std::size_t train_frames = 8;   // B used for training; inference accepts any
  std::size_t ffn_expansion = 4;  // FFN hidden width = expansion * (C/S)

  /// "T", "S", "B" or "L".
  static NetworkConfig variant(const std::string& name);
  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  std::size_t part_channels() const { return channels / split; }
  std::size_t ffn_hidden() const { return ffn_expansion * part_channels(); }
  std::size_t head_hidden() const { return std::max<std::size_t>(channels / 8, 1); }
  bool color() const { return in_channels == 4; }

  bool operator==(const NetworkConfig&) const = default;
};

/// Named, ordered collection of learnable tensors.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  void zero_grad() const;

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
struct ConvParams {
  Tensor<T> weight;
  Tensor<T> bias;
};

/// Spatial convolution branch: two 3x3 per-frame convs, c -> c/2 -> c/2.
template <typename T>
struct ScbParams {
  ConvParams<T> conv1, conv2;
};

/// Temporal self-attention branch. wq/wk/wv are [c, c/2], wp is [c/2, c/2].
template <typename T>
struct TsabParams {
  Tensor<T> wq, wk, wv, wp;
  std::size_t heads = 1;
};

/// x + W1(phi(W2(x))): W2 is 3x3x3 c -> hidden, W1 is 1x1x1 hidden -> c.
template <typename T>
struct FfnParams {
  ConvParams<T> expand, project;
};

template <typename T>
struct CFormerParams {
  ScbParams<T> scb;
  TsabParams<T> tsab;
  FfnParams<T> ffn;
};

template <typename T>
struct ResDNetParams {
  std::vector<CFormerParams<T>> cformers;
  std::vector<ConvParams<T>> reduce;  // reduce[i-1] feeds part i (i >= 1)
  ConvParams<T> fuse;
};

template <typename T>
struct FeatureParams {
  ConvParams<T> conv1, conv2, conv3;
};

template <typename T>
struct HeadParams {
  ConvParams<T> conv1, conv2, conv3;
};

/// One entry of the static layer list, used for structural checks.
struct LayerInfo {
  std::string name;
  std::string type;  // conv2d, conv3d, linear, leaky_relu, softmax, pixel_shuffle
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::vector<std::size_t> kernel;
};

// Building blocks. Feature maps are [T, c, H, W] unless stated otherwise.

/// X_e [B, Cin, H, W] -> [B, C, H/2, W/2].
template <typename T>
Tensor<T> feature_extract(const Tensor<T>& x_e, const FeatureParams<T>& p);
template <typename T>
Tensor<T> scb_forward(const Tensor<T>& x, const ScbParams<T>& p);
template <typename T>
Tensor<T> tsab_forward(const Tensor<T>& x, const TsabParams<T>& p);
template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& x, const FfnParams<T>& p);
template <typename T>
Tensor<T> cformer_forward(const Tensor<T>& x, const CFormerParams<T>& p);
template <typename T>
Tensor<T> resdnet_block_forward(const Tensor<T>& x, const ResDNetParams<T>& p);
/// [T, C, h, w] -> [T, out, 2h, 2w] (gray) or [T, 3, 4h, 4w] (color).
template <typename T>
Tensor<T> reconstruct_head(const Tensor<T>& features, const HeadParams<T>& p, const NetworkConfig& config);

/// [T, c, H, W] <-> [1, c, T, H, W]
template <typename T>
Tensor<T> frames_to_volume(const Tensor<T>& x);
template <typename T>
Tensor<T> volume_to_frames(const Tensor<T>& v);

template <typename T>
class EfficientSci {
 public:
  /// Kaiming-uniform (fan-in) kernels, zero biases; deterministic in `seed`.
  static EfficientSci build(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  const ParamStore<T>& params() const { return params_; }

  /// X_e [B, Cin, H', W'] -> reconstruction [B, out, H, W].
  Tensor<T> forward(const Tensor<T>& x_e) const;
  /// Estimation module followed by the network.
  VideoCube<T> reconstruct(const Measurement<T>& y, const MaskSet<T>& masks) const;

  std::vector<LayerInfo> layers() const;

  const FeatureParams<T>& features() const { return features_; }
  const std::vector<ResDNetParams<T>>& blocks() const { return blocks_; }
  const HeadParams<T>& head() const { return head_; }

 private:
  NetworkConfig config_;
  ParamStore<T> params_;
  FeatureParams<T> features_;
  std::vector<ResDNetParams<T>> blocks_;
  HeadParams<T> head_;
};

/// Convenience alias for EfficientSci<T>::build.
template <typename T>
EfficientSci<T> build_network(const NetworkConfig& config, std::uint64_t seed) {
  return EfficientSci<T>::build(config, seed);
}

}  // namespace esci
