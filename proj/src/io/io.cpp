#include "esci/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace esci {

namespace {

constexpr char kMagic[4] = {'T', 'E', 'N', 'B'};
constexpr std::uint8_t kVersion = 0x01;

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
  }
  throw FormatError("unknown dtype");
}

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

const std::set<std::string> kNetworkKeys{"variant",      "channels",     "blocks",       "split",        "heads",
                                         "in_channels",  "out_channels", "train_frames", "ffn_expansion"};

}  // namespace

std::size_t Container::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

template <typename T>
Container Container::from_tensor(const Tensor<T>& t) {
  Container c;
  c.dtype = std::is_same_v<T, float> ? DType::F32 : DType::F64;
  for (auto d : t.dims()) {
    if (d > UINT32_MAX) throw FormatError("extent exceeds 32 bits");
    c.dims.push_back(static_cast<std::uint32_t>(d));
  }
  c.payload.reserve(t.numel() * sizeof(T));
  for (T v : t.data()) {
    if constexpr (std::is_same_v<T, float>)
      put_le(c.payload, std::bit_cast<std::uint32_t>(v));
    else
      put_le(c.payload, std::bit_cast<std::uint64_t>(v));
  }
  return c;
}

Container Container::from_bytes(std::string_view bytes) {
  Container c;
  c.dtype = DType::U8;
  c.dims = {static_cast<std::uint32_t>(bytes.size())};
  c.payload.assign(bytes.begin(), bytes.end());
  return c;
}

template <typename T>
Tensor<T> Container::to_tensor() const {
  Shape shape(dims.begin(), dims.end());
  const std::size_t n = numel();
  if (n == 0) throw FormatError("container has a zero extent");
  std::vector<T> data(n);
  const std::uint8_t* p = payload.data();
  for (std::size_t i = 0; i < n; ++i) {
    switch (dtype) {
      case DType::F32: data[i] = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i))); break;
      case DType::F64: data[i] = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i))); break;
      case DType::U8: data[i] = static_cast<T>(p[i]); break;
    }
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

std::string Container::to_text() const {
  if (dtype != DType::U8) throw FormatError("expected a u8 container");
  return std::string(payload.begin(), payload.end());
}

std::string encode_container(const Container& c) {
  if (c.dims.size() > 255) throw FormatError("too many dimensions");
  if (c.payload.size() != c.numel() * dtype_size(c.dtype)) throw FormatError("payload size does not match extents");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(c.dtype));
  out.push_back(static_cast<std::uint8_t>(c.dims.size()));
  for (auto d : c.dims) put_le(out, d);
  out.insert(out.end(), c.payload.begin(), c.payload.end());
  return std::string(out.begin(), out.end());
}

Container decode_container(std::string_view bytes) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
  if (bytes.size() < 7 || std::memcmp(p, kMagic, 4) != 0) throw FormatError("not a TENB container (bad magic)");
  if (p[4] != kVersion) throw FormatError("unsupported TENB version " + std::to_string(p[4]));
  if (p[5] > 2) throw FormatError("unknown dtype byte " + std::to_string(p[5]));
  Container c;
  c.dtype = static_cast<DType>(p[5]);
  const std::size_t ndim = p[6];
  std::size_t off = 7;
  if (bytes.size() < off + 4 * ndim) throw FormatError("truncated TENB header");
  for (std::size_t i = 0; i < ndim; ++i, off += 4) c.dims.push_back(get_le<std::uint32_t>(p + off));
  const std::size_t want = c.numel() * dtype_size(c.dtype);
  if (bytes.size() - off != want)
    throw FormatError("TENB payload is " + std::to_string(bytes.size() - off) + " bytes, extents require " +
                      std::to_string(want));
  c.payload.assign(p + off, p + off + want);
  return c;
}

std::string encode_bundle(const Bundle& entries) {
  std::string manifest, body;
  for (const auto& [name, c] : entries) {
    if (name.empty() || name.find_first_of("\t\n") != std::string::npos)
      throw FormatError("invalid entry name '" + name + "'");
    const std::string bytes = encode_container(c);
    manifest += name + '\t' + std::to_string(body.size()) + '\t' + std::to_string(bytes.size()) + '\n';
    body += bytes;
  }
  return manifest + '\n' + body;
}

Bundle decode_bundle(std::string_view bytes) {
  const auto end = bytes.find("\n\n");
  const bool empty_manifest = !bytes.empty() && bytes.front() == '\n';
  if (end == std::string_view::npos && !empty_manifest) throw FormatError("bundle manifest is not terminated");
  const std::size_t manifest_len = empty_manifest ? 0 : end + 1;
  const std::size_t base = manifest_len + 1;
  const std::string_view body = bytes.substr(base);
  Bundle out;
  std::istringstream lines(std::string(bytes.substr(0, manifest_len)));
  std::string line;
  while (std::getline(lines, line)) {
    const auto t1 = line.find('\t'), t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) throw FormatError("malformed manifest line '" + line + "'");
    std::size_t off = 0, len = 0;
    try {
      off = std::stoull(line.substr(t1 + 1, t2 - t1 - 1));
      len = std::stoull(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw FormatError("malformed manifest line '" + line + "'");
    }
    if (off > body.size() || len > body.size() - off)
      throw FormatError("manifest entry '" + line.substr(0, t1) + "' points past the end of the bundle");
    out.emplace_back(line.substr(0, t1), decode_container(body.substr(off, len)));
  }
  return out;
}

const Container& bundle_get(const Bundle& b, const std::string& name) {
  for (const auto& [n, c] : b)
    if (n == name) return c;
  throw FormatError("bundle has no entry '" + name + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path + "' failed");
}

void save_container(const std::string& path, const Container& c) { write_file(path, encode_container(c)); }
Container load_container(const std::string& path) { return decode_container(read_file(path)); }

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq)), value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(no) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("line " + std::to_string(no) + ": duplicate key '" + key + "'");
  }
  return kv;
}

std::string format_key_values(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + '\n';
  return out;
}

std::map<std::string, std::string> to_key_values(const NetworkConfig& c) {
  return {{"channels", std::to_string(c.channels)},       {"blocks", std::to_string(c.blocks)},
          {"split", std::to_string(c.split)},             {"heads", std::to_string(c.heads)},
          {"in_channels", std::to_string(c.in_channels)}, {"out_channels", std::to_string(c.out_channels)},
          {"train_frames", std::to_string(c.train_frames)}, {"ffn_expansion", std::to_string(c.ffn_expansion)}};
}

NetworkConfig network_config_from(const std::map<std::string, std::string>& kv) {
  NetworkConfig c;
  if (auto it = kv.find("variant"); it != kv.end()) c = NetworkConfig::variant(it->second);
  auto size = [&](const char* key, std::size_t& field) {
    if (auto it = kv.find(key); it != kv.end()) field = parse_size(key, it->second);
  };
  size("channels", c.channels);
  size("blocks", c.blocks);
  size("split", c.split);
  size("heads", c.heads);
  size("in_channels", c.in_channels);
  size("out_channels", c.out_channels);
  size("train_frames", c.train_frames);
  size("ffn_expansion", c.ffn_expansion);
  c.validate();
  return c;
}

TrainConfig train_config_from(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  for (const auto& [key, v] : kv) {
    if (kNetworkKeys.contains(key)) continue;
    if (key == "lr_initial") c.lr_initial = parse_double(key, v);
    else if (key == "lr_final") c.lr_final = parse_double(key, v);
    else if (key == "epochs_phase1") c.epochs_phase1 = parse_size(key, v);
    else if (key == "epochs_phase2") c.epochs_phase2 = parse_size(key, v);
    else if (key == "batch_size") c.batch_size = parse_size(key, v);
    else if (key == "crop_size") c.crop_size = parse_size(key, v);
    else if (key == "random_crop") c.random_crop = parse_bool(key, v);
    else if (key == "random_scale") c.random_scale = parse_bool(key, v);
    else if (key == "random_flip") c.random_flip = parse_bool(key, v);
    else if (key == "seed") c.seed = parse_size(key, v);
    else if (key == "dataset_size") c.dataset_size = parse_size(key, v);
    else if (key == "frames") c.frames = parse_size(key, v);
    else if (key == "source_size") c.source_size = parse_size(key, v);
    else if (key == "mask_density") c.mask_density = parse_double(key, v);
    else if (key == "noise_sigma") c.noise_sigma = parse_double(key, v);
    else if (key == "grad_clip") c.grad_clip = parse_double(key, v);
    else if (key == "max_steps") c.max_steps = parse_size(key, v);
    else if (key == "prefetch_depth") c.prefetch_depth = parse_size(key, v);
    else throw ConfigError("unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

template <typename T>
void save_checkpoint(const std::string& path, const EfficientSci<T>& net) {
  Bundle b;
  b.emplace_back("meta.config", Container::from_bytes(format_key_values(to_key_values(net.config()))));
  for (const auto& [name, t] : net.params().entries()) b.emplace_back(name, Container::from_tensor(t));
  write_file(path, encode_bundle(b));
}

template <typename T>
EfficientSci<T> load_checkpoint(const std::string& path) {
  const Bundle b = decode_bundle(read_file(path));
  const NetworkConfig config = network_config_from(parse_key_values(bundle_get(b, "meta.config").to_text()));
  EfficientSci<T> net = EfficientSci<T>::build(config, 0);
  for (const auto& [name, stored] : net.params().entries()) {
    const Tensor<T> loaded = bundle_get(b, name).template to_tensor<T>();
    if (loaded.dims() != stored.dims())
      throw FormatError("checkpoint entry '" + name + "' has shape " + shape_str(loaded.dims()) + ", expected " +
                        shape_str(stored.dims()));
    Tensor<T> dst = stored;
    std::ranges::copy(loaded.data(), dst.mutable_data().begin());
  }
  if (b.size() != net.params().size() + 1) throw FormatError("checkpoint holds entries the network does not define");
  return net;
}

void save_measurement(const std::string& path, const Measurement<float>& m) {
  const std::map<std::string, std::string> meta{{"frames", std::to_string(m.frames)},
                                                {"color", m.color == ColorMode::Gray ? "gray" : "bayer"},
                                                {"noise_sigma", fmt_double(m.noise_sigma)}};
  write_file(path, encode_bundle({{"y", Container::from_tensor(m.y)},
                                  {"meta", Container::from_bytes(format_key_values(meta))}}));
}

Measurement<float> load_measurement(const std::string& path) {
  const Bundle b = decode_bundle(read_file(path));
  Measurement<float> m;
  m.y = bundle_get(b, "y").to_tensor<float>();
  if (m.y.rank() != 2) throw FormatError("measurement must be [H,W], got " + shape_str(m.y.dims()));
  const auto meta = parse_key_values(bundle_get(b, "meta").to_text());
  auto field = [&](const char* key) -> const std::string& {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(std::string("measurement metadata lacks '") + key + "'");
    return it->second;
  };
  m.frames = parse_size("frames", field("frames"));
  const std::string& color = field("color");
  if (color != "gray" && color != "bayer") throw FormatError("unknown color mode '" + color + "'");
  m.color = color == "gray" ? ColorMode::Gray : ColorMode::BayerRggb;
  m.noise_sigma = parse_double("noise_sigma", field("noise_sigma"));
  return m;
}

MaskSet<float> load_masks(const std::string& path) {
  MaskSet<float> m{load_container(path).to_tensor<float>(), 0};
  if (m.masks.rank() != 3) throw FormatError("masks must be [B,H,W], got " + shape_str(m.masks.dims()));
  return m;
}

VideoCube<float> load_video(const std::string& path) {
  Tensor<float> t = load_container(path).to_tensor<float>();
  if (t.rank() == 3) t = reshape(t, {t.dim(0), 1, t.dim(1), t.dim(2)});
  if (t.rank() != 4 || (t.dim(1) != 1 && t.dim(1) != 3))
    throw FormatError("video must be [B,H,W] or [B,C,H,W] with C = 1 or 3, got " + shape_str(t.dims()));
  return VideoCube<float>{t};
}

std::string encode_pnm(std::span<const float> frame, std::size_t channels, std::size_t height, std::size_t width) {
  if (channels != 1 && channels != 3) throw FormatError("PNM export needs 1 or 3 channels");
  if (frame.size() != channels * height * width) throw FormatError("PNM export: frame size mismatch");
  std::string out = std::string(channels == 1 ? "P5" : "P6") + '\n' + std::to_string(width) + ' ' +
                    std::to_string(height) + "\n255\n";
  const std::size_t plane = height * width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      const float v = std::clamp(frame[c * plane + i], 0.0f, 1.0f);
      out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0f))));
    }
  return out;
}

std::vector<std::string> export_frames(const VideoCube<float>& video, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t ch = video.channels(), h = video.height(), w = video.width(), per = ch * h * w;
  std::vector<std::string> paths;
  for (std::size_t f = 0; f < video.count(); ++f) {
    std::ostringstream name;
    name << "frame_" << std::setw(3) << std::setfill('0') << f << (ch == 1 ? ".pgm" : ".ppm");
    const std::string path = (std::filesystem::path(dir) / name.str()).string();
    write_file(path, encode_pnm(video.frames.data().subspan(f * per, per), ch, h, w));
    paths.push_back(path);
  }
  return paths;
}

template Container Container::from_tensor<float>(const Tensor<float>&);
template Container Container::from_tensor<double>(const Tensor<double>&);
template Tensor<float> Container::to_tensor<float>() const;
template Tensor<double> Container::to_tensor<double>() const;
template void save_checkpoint(const std::string&, const EfficientSci<float>&);
template void save_checkpoint(const std::string&, const EfficientSci<double>&);
template EfficientSci<float> load_checkpoint<float>(const std::string&);
template EfficientSci<double> load_checkpoint<double>(const std::string&);

}  // namespace esci
