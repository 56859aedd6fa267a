#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "esci/net.hpp"
#include "esci/sci.hpp"
#include "esci/train.hpp"

namespace esci {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

/// One TENB container: "TENB", version 0x01, dtype, ndim, ndim LE u32
/// extents, then the row-major LE payload. `payload` holds those bytes verbatim.
struct Container {
  DType dtype = DType::F32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t numel() const;

  template <typename T>
  static Container from_tensor(const Tensor<T>& t);
  static Container from_bytes(std::string_view bytes);  // u8, 1-D

  /// Converts f32/f64/u8 payloads to T (u8 maps to 0..255).
  template <typename T>
  Tensor<T> to_tensor() const;
  std::string to_text() const;  // u8 payload as a string
};

std::string encode_container(const Container& c);
/// Throws FormatError on bad magic, version, dtype or length.
Container decode_container(std::string_view bytes);

using Bundle = std::vector<std::pair<std::string, Container>>;

/// Manifest lines `name<TAB>offset<TAB>length`, an empty line, then the
/// concatenated containers; offsets count from the byte after the empty line.
std::string encode_bundle(const Bundle& entries);
Bundle decode_bundle(std::string_view bytes);
const Container& bundle_get(const Bundle& b, const std::string& name);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

void save_container(const std::string& path, const Container& c);
Container load_container(const std::string& path);

/// Flat `key = value` text; '#' starts a comment. Throws ConfigError with the line number.
std::map<std::string, std::string> parse_key_values(std::string_view text);
std::string format_key_values(const std::map<std::string, std::string>& kv);

std::map<std::string, std::string> to_key_values(const NetworkConfig& c);
/// Starts from `variant` (if given) or the defaults and applies the remaining keys.
NetworkConfig network_config_from(const std::map<std::string, std::string>& kv);
TrainConfig train_config_from(const std::map<std::string, std::string>& kv);

template <typename T>
void save_checkpoint(const std::string& path, const EfficientSci<T>& net);
template <typename T>
EfficientSci<T> load_checkpoint(const std::string& path);

void save_measurement(const std::string& path, const Measurement<float>& m);
Measurement<float> load_measurement(const std::string& path);
/// Masks are a plain [B,H,W] container.
MaskSet<float> load_masks(const std::string& path);
/// Videos are [B,C,H,W]; [B,H,W] is read as gray.
VideoCube<float> load_video(const std::string& path);

/// Binary PGM (P5, one channel) or PPM (P6, three channels) of a [C,H,W]
/// frame. Values are clamped to [0,1] and scaled to 0..255.
std::string encode_pnm(std::span<const float> frame, std::size_t channels, std::size_t height, std::size_t width);
/// Writes frame_000.pgm/ppm, ... into `dir`; returns the paths.
std::vector<std::string> export_frames(const VideoCube<float>& video, const std::string& dir);

}  // namespace esci
