#include <cmath>
#include <random>
#include <string>

#include "esci/net.hpp"

namespace esci {

NetworkConfig NetworkConfig::variant(const std::string& name) {
  NetworkConfig c;
  if (name == "T") {
    c.channels = 64;
    c.blocks = 8;
  } else if (name == "S") {
    c.channels = 128;
    c.blocks = 8;
  } else if (name == "B") {
    c.channels = 256;
    c.blocks = 8;
  } else if (name == "L") {
    c.channels = 256;
    c.blocks = 12;
  } else {
    throw ConfigError("unknown variant '" + name + "' (expected T, S, B or L)");
  }
  return c;
}

void NetworkConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid network config: " + what);
  };
  need(channels > 0 && blocks > 0 && split > 0 && heads > 0 && ffn_expansion > 0, "all sizes must be positive");
  need(channels % split == 0, "channels C=" + std::to_string(channels) + " must be divisible by split S=" +
                                  std::to_string(split));
  need(part_channels() % 2 == 0, "C/S=" + std::to_string(part_channels()) + " must be even");
  need((part_channels() / 2) % heads == 0, "(C/S)/2=" + std::to_string(part_channels() / 2) +
                                               " must be divisible by heads=" + std::to_string(heads));
  need(channels % 4 == 0, "channels C=" + std::to_string(channels) + " must be divisible by 4");
  need(in_channels == 1 || in_channels == 4, "in_channels must be 1 (gray) or 4 (Bayer)");
  need(out_channels == (in_channels == 1 ? 1u : 3u), "out_channels must be 1 for gray and 3 for Bayer input");
  need(train_frames > 0, "train_frames must be positive");
}

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> t) {
  if (index_.contains(name)) throw std::logic_error("duplicate parameter name " + name);
  t.set_requires_grad(true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].second;
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() const {
  for (const auto& [name, t] : entries_) t.zero_grad();
}

template <typename T>
Tensor<T> frames_to_volume(const Tensor<T>& x) {
  const Shape& d = x.dims();
  if (d.size() != 4) throw ShapeError("expected frames [T,c,H,W], got " + shape_str(d));
  return reshape(permute(x, {1, 0, 2, 3}), {1, d[1], d[0], d[2], d[3]});
}

template <typename T>
Tensor<T> volume_to_frames(const Tensor<T>& v) {
  const Shape& d = v.dims();
  if (d.size() != 5 || d[0] != 1) throw ShapeError("expected volume [1,c,T,H,W], got " + shape_str(d));
  return permute(reshape(v, {d[1], d[2], d[3], d[4]}), {1, 0, 2, 3});
}

namespace {

// 1x1x1 convolution applied to frames [T, c, H, W].
template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, const ConvParams<T>& p) {
  const Shape& w = p.weight.dims();
  return conv2d(x, reshape(p.weight, {w[0], w[1], 1, 1}), p.bias);
}

template <typename T>
Tensor<T> conv3(const Tensor<T>& vol, const ConvParams<T>& p) {
  return conv3d(vol, p.weight, p.bias, Conv3dOptions{{1, 1, 1}, {1, 1, 1}});
}

}  // namespace

template <typename T>
Tensor<T> feature_extract(const Tensor<T>& x_e, const FeatureParams<T>& p) {
  if (x_e.rank() != 4) throw ShapeError("feature_extract: expected [B,Cin,H,W], got " + shape_str(x_e.dims()));
  if (x_e.dim(2) % 2 || x_e.dim(3) % 2)
    throw ShapeError("feature_extract: spatial extents must be even, got " + shape_str(x_e.dims()));
  Tensor<T> v = frames_to_volume(x_e);
  v = leaky_relu(conv3d(v, p.conv1.weight, p.conv1.bias, Conv3dOptions{{1, 1, 1}, {1, 3, 3}}));
  v = leaky_relu(conv3(v, p.conv2));
  // Stride 2 in space with one leading pad row/column: H -> H/2 for even H.
  v = leaky_relu(conv3d(v, p.conv3.weight, p.conv3.bias,
                        Conv3dOptions{{1, 2, 2}, {1, 1, 1}, std::array<std::size_t, 3>{1, 0, 0}}));
  return volume_to_frames(v);
}

template <typename T>
Tensor<T> scb_forward(const Tensor<T>& x, const ScbParams<T>& p) {
  if (x.rank() != 4 || x.dim(1) % 2) throw ShapeError("scb_forward: expected [T,c,H,W] with even c, got " + shape_str(x.dims()));
  const Conv2dOptions same{{1, 1}, {1, 1}};
  Tensor<T> h = leaky_relu(conv2d(x, p.conv1.weight, p.conv1.bias, same));
  return conv2d(h, p.conv2.weight, p.conv2.bias, same);
}

template <typename T>
Tensor<T> tsab_forward(const Tensor<T>& x, const TsabParams<T>& p) {
  if (x.rank() != 4) throw ShapeError("tsab_forward: expected [T,c,H,W], got " + shape_str(x.dims()));
  const std::size_t t = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t half = c / 2, heads = p.heads;
  if (c % 2 || half == 0 || heads == 0 || half % heads)
    throw ShapeError("tsab_forward: (c/2)=" + std::to_string(half) + " must be divisible by heads=" +
                     std::to_string(heads));
  if (p.wq.dims() != Shape{c, half} || p.wk.dims() != Shape{c, half} || p.wv.dims() != Shape{c, half} ||
      p.wp.dims() != Shape{half, half})
    throw ShapeError("tsab_forward: projection shapes do not match c=" + std::to_string(c));
  const std::size_t hw = h * w, d = half / heads;

  // Each spatial position attends over its own T frames.
  Tensor<T> seq = reshape(permute(x, {2, 3, 0, 1}), {hw, t, c});
  auto split_heads = [&](const Tensor<T>& m) {
    return permute(reshape(m, {hw, t, heads, d}), {0, 2, 1, 3});  // [HW, N, T, d]
  };
  Tensor<T> q = split_heads(matmul(seq, p.wq));
  Tensor<T> k = split_heads(matmul(seq, p.wk));
  Tensor<T> v = split_heads(matmul(seq, p.wv));
  Tensor<T> scores = mul_scalar(matmul(q, permute(k, {0, 1, 3, 2})), T(1) / std::sqrt(static_cast<T>(d)));
  Tensor<T> attn = softmax_lastdim(scores);                             // [HW, N, T, T]
  Tensor<T> heads_out = permute(matmul(attn, v), {0, 2, 1, 3});         // [HW, T, N, d]
  Tensor<T> merged = matmul(reshape(heads_out, {hw, t, half}), p.wp);  // [HW, T, c/2]
  return permute(reshape(merged, {h, w, t, half}), {2, 3, 0, 1});
}

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& x, const FfnParams<T>& p) {
  Tensor<T> v = leaky_relu(conv3(frames_to_volume(x), p.expand));
  v = conv3d(v, p.project.weight, p.project.bias);
  return add(x, volume_to_frames(v));
}

template <typename T>
Tensor<T> cformer_forward(const Tensor<T>& x, const CFormerParams<T>& p) {
  return ffn_forward(concat<T>({scb_forward(x, p.scb), tsab_forward(x, p.tsab)}, 1), p.ffn);
}

template <typename T>
Tensor<T> resdnet_block_forward(const Tensor<T>& x, const ResDNetParams<T>& p) {
  const std::size_t parts = p.cformers.size();
  if (x.rank() != 4 || parts == 0 || x.dim(1) % parts)
    throw ShapeError("resdnet_block_forward: channels of " + shape_str(x.dims()) + " not divisible by S=" +
                     std::to_string(parts));
  if (p.reduce.size() + 1 != parts) throw std::logic_error("resdnet_block_forward: reduction conv count mismatch");
  const auto xs = chunk(x, 1, parts);
  std::vector<Tensor<T>> ys;
  ys.push_back(cformer_forward(xs[0], p.cformers[0]));
  for (std::size_t i = 1; i < parts; ++i) {
    std::vector<Tensor<T>> dense(ys);
    dense.push_back(xs[i]);
    ys.push_back(cformer_forward(pointwise(concat(dense, 1), p.reduce[i - 1]), p.cformers[i]));
  }
  Tensor<T> fused = pointwise(parts == 1 ? ys[0] : concat(ys, 1), p.fuse);
  return add(fused, x);
}

template <typename T>
Tensor<T> reconstruct_head(const Tensor<T>& features, const HeadParams<T>& p, const NetworkConfig& config) {
  if (features.rank() != 4 || features.dim(1) % 4)
    throw ShapeError("reconstruct_head: channel extent of " + shape_str(features.dims()) +
                     " must be divisible by 4");
  Tensor<T> v = pixel_shuffle2d(frames_to_volume(features), 2);
  v = leaky_relu(conv3(v, p.conv1));
  v = leaky_relu(conv3d(v, p.conv2.weight, p.conv2.bias));
  v = conv3(v, p.conv3);
  if (config.color()) v = pixel_shuffle2d(v, 2);
  return volume_to_frames(v);
}

namespace {

template <typename T>
class Initializer {
 public:
  Initializer(ParamStore<T>& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  // Kaiming-uniform with negative slope sqrt(5): bound = sqrt(1/3) * sqrt(3 / fan_in).
  // The smaller gain keeps the un-normalized residual stack from amplifying its input.
  Tensor<T> kaiming(const std::string& name, Shape dims, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<T> t(std::move(dims));
    for (auto& v : t.mutable_data()) v = static_cast<T>(u(rng_));
    return store_.add(name, t);
  }

  ConvParams<T> conv(const std::string& name, std::size_t cin, std::size_t cout, Shape kernel) {
    std::size_t fan_in = cin;
    for (auto k : kernel) fan_in *= k;
    Shape dims{cout, cin};
    dims.insert(dims.end(), kernel.begin(), kernel.end());
    ConvParams<T> p;
    p.weight = kaiming(name + ".weight", dims, fan_in);
    p.bias = store_.add(name + ".bias", Tensor<T>({cout}));
    return p;
  }

 private:
  ParamStore<T>& store_;
  std::mt19937_64 rng_;
};

}  // namespace

template <typename T>
EfficientSci<T> EfficientSci<T>::build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  EfficientSci net;
  net.config_ = config;
  Initializer<T> init(net.params_, seed);
  const std::size_t C = config.channels, c = config.part_channels(), half = c / 2;
  const Shape k3{3, 3, 3}, k1{1, 1, 1};

  net.features_.conv1 = init.conv("fe.conv1", config.in_channels, C / 4, {3, 7, 7});
  net.features_.conv2 = init.conv("fe.conv2", C / 4, C / 2, k3);
  net.features_.conv3 = init.conv("fe.conv3", C / 2, C, k3);

  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string bp = "blocks." + std::to_string(b);
    ResDNetParams<T> block;
    for (std::size_t i = 0; i < config.split; ++i) {
      const std::string cp = bp + ".cformer." + std::to_string(i);
      if (i > 0) block.reduce.push_back(init.conv(bp + ".reduce." + std::to_string(i), (i + 1) * c, c, k1));
      CFormerParams<T> cf;
      cf.scb.conv1 = init.conv(cp + ".scb.conv1", c, half, {3, 3});
      cf.scb.conv2 = init.conv(cp + ".scb.conv2", half, half, {3, 3});
      cf.tsab.wq = init.kaiming(cp + ".tsab.wq", {c, half}, c);
      cf.tsab.wk = init.kaiming(cp + ".tsab.wk", {c, half}, c);
      cf.tsab.wv = init.kaiming(cp + ".tsab.wv", {c, half}, c);
      cf.tsab.wp = init.kaiming(cp + ".tsab.wp", {half, half}, half);
      cf.tsab.heads = config.heads;
      cf.ffn.expand = init.conv(cp + ".ffn.expand", c, config.ffn_hidden(), k3);
      cf.ffn.project = init.conv(cp + ".ffn.project", config.ffn_hidden(), c, k1);
      block.cformers.push_back(std::move(cf));
    }
    block.fuse = init.conv(bp + ".fuse", C, C, k1);
    net.blocks_.push_back(std::move(block));
  }

  const std::size_t hc = config.head_hidden();
  const std::size_t head_out = config.color() ? 4 * config.out_channels : config.out_channels;
  net.head_.conv1 = init.conv("head.conv1", C / 4, C / 4, k3);
  net.head_.conv2 = init.conv("head.conv2", C / 4, hc, k1);
  net.head_.conv3 = init.conv("head.conv3", hc, head_out, k3);
  return net;
}

template <typename T>
Tensor<T> EfficientSci<T>::forward(const Tensor<T>& x_e) const {
  if (x_e.rank() != 4 || x_e.dim(1) != config_.in_channels)
    throw ShapeError("network forward: expected [B," + std::to_string(config_.in_channels) + ",H,W], got " +
                     shape_str(x_e.dims()));
  Tensor<T> f = feature_extract(x_e, features_);
  for (const auto& block : blocks_) f = resdnet_block_forward(f, block);
  return reconstruct_head(f, head_, config_);
}

template <typename T>
VideoCube<T> EfficientSci<T>::reconstruct(const Measurement<T>& y, const MaskSet<T>& masks) const {
  if ((y.color == ColorMode::BayerRggb) != config_.color())
    throw ShapeError("network and measurement disagree on color mode");
  return VideoCube<T>{forward(estimation_init(y, masks))};
}

template <typename T>
std::vector<LayerInfo> EfficientSci<T>::layers() const {
  std::vector<LayerInfo> out;
  auto conv = [&](const std::string& name, const ConvParams<T>& p) {
    const Shape& d = p.weight.dims();
    out.push_back({name, d.size() == 4 ? "conv2d" : "conv3d", d[1], d[0], Shape(d.begin() + 2, d.end())});
  };
  auto act = [&](const std::string& name) { out.push_back({name, "leaky_relu", 0, 0, {}}); };
  conv("fe.conv1", features_.conv1);
  act("fe.act1");
  conv("fe.conv2", features_.conv2);
  act("fe.act2");
  conv("fe.conv3", features_.conv3);
  act("fe.act3");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string bp = "blocks." + std::to_string(b);
    const auto& block = blocks_[b];
    for (std::size_t i = 0; i < block.cformers.size(); ++i) {
      const std::string cp = bp + ".cformer." + std::to_string(i);
      const auto& cf = block.cformers[i];
      if (i > 0) conv(bp + ".reduce." + std::to_string(i), block.reduce[i - 1]);
      conv(cp + ".scb.conv1", cf.scb.conv1);
      act(cp + ".scb.act");
      conv(cp + ".scb.conv2", cf.scb.conv2);
      for (const char* m : {"wq", "wk", "wv"})
        out.push_back({cp + ".tsab." + m, "linear", cf.tsab.wq.dim(0), cf.tsab.wq.dim(1), {}});
      out.push_back({cp + ".tsab.attn", "softmax", 0, 0, {}});
      out.push_back({cp + ".tsab.wp", "linear", cf.tsab.wp.dim(0), cf.tsab.wp.dim(1), {}});
      conv(cp + ".ffn.expand", cf.ffn.expand);
      act(cp + ".ffn.act");
      conv(cp + ".ffn.project", cf.ffn.project);
    }
    conv(bp + ".fuse", block.fuse);
  }
  out.push_back({"head.shuffle", "pixel_shuffle", config_.channels, config_.channels / 4, {2}});
  conv("head.conv1", head_.conv1);
  act("head.act1");
  conv("head.conv2", head_.conv2);
  act("head.act2");
  conv("head.conv3", head_.conv3);
  if (config_.color()) out.push_back({"head.shuffle_rgb", "pixel_shuffle", 12, 3, {2}});
  return out;
}

#define ESCI_INSTANTIATE(T)                                                                             \
  template class ParamStore<T>;                                                                         \
  template class EfficientSci<T>;                                                                       \
  template Tensor<T> frames_to_volume<T>(const Tensor<T>&);                                             \
  template Tensor<T> volume_to_frames<T>(const Tensor<T>&);                                             \
  template Tensor<T> feature_extract<T>(const Tensor<T>&, const FeatureParams<T>&);                     \
  template Tensor<T> scb_forward<T>(const Tensor<T>&, const ScbParams<T>&);                             \
  template Tensor<T> tsab_forward<T>(const Tensor<T>&, const TsabParams<T>&);                           \
  template Tensor<T> ffn_forward<T>(const Tensor<T>&, const FfnParams<T>&);                             \
  template Tensor<T> cformer_forward<T>(const Tensor<T>&, const CFormerParams<T>&);                     \
  template Tensor<T> resdnet_block_forward<T>(const Tensor<T>&, const ResDNetParams<T>&);               \
  template Tensor<T> reconstruct_head<T>(const Tensor<T>&, const HeadParams<T>&, const NetworkConfig&);

ESCI_INSTANTIATE(float)
ESCI_INSTANTIATE(double)

}  // namespace esci
