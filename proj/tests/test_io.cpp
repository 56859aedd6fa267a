#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "esci/io.hpp"
#include "reference.hpp"

using namespace esci;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("esci_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

template <typename T>
std::vector<std::uint8_t> le_bytes(const Tensor<T>& t) {
  std::vector<std::uint8_t> out(t.numel() * sizeof(T));
  std::memcpy(out.data(), t.data().data(), out.size());  // the test host is little-endian
  return out;
}

}  // namespace

TEST(ContainerTest, HeaderLayout) {
  const Tensor<float> t = Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6});
  const std::string bytes = encode_container(Container::from_tensor(t));
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 1 + 2 * 4 + 6 * 4);
  EXPECT_EQ(bytes.substr(0, 4), "TENB");
  EXPECT_EQ(std::uint8_t(bytes[4]), 1);
  EXPECT_EQ(std::uint8_t(bytes[5]), 0);
  EXPECT_EQ(std::uint8_t(bytes[6]), 2);
  EXPECT_EQ(std::string(bytes.data() + 7, 8), std::string("\x02\0\0\0\x03\0\0\0", 8));
  const auto payload = le_bytes(t);
  EXPECT_EQ(std::memcmp(bytes.data() + 15, payload.data(), payload.size()), 0);
}

TEST(ContainerTest, RoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Shape dims;
    for (std::size_t k = 0, r = 1 + rng() % 4; k < r; ++k) dims.push_back(1 + rng() % 5);
    const auto f = ref::random_tensor<float>(dims, rng, -1e3, 1e3);
    const auto d = ref::random_tensor<double>(dims, rng, -1e-3, 1e-3);
    const std::string ef = encode_container(Container::from_tensor(f));
    const std::string ed = encode_container(Container::from_tensor(d));
    const auto back_f = decode_container(ef).to_tensor<float>();
    const auto back_d = decode_container(ed).to_tensor<double>();
    EXPECT_EQ(back_f.dims(), dims);
    EXPECT_EQ(le_bytes(back_f), le_bytes(f));
    EXPECT_EQ(le_bytes(back_d), le_bytes(d));
    EXPECT_EQ(encode_container(decode_container(ef)), ef);
    EXPECT_EQ(encode_container(decode_container(ed)), ed);
  }
}

TEST(ContainerTest, U8Payloads) {
  const Container c = Container::from_bytes("a=1\n");
  EXPECT_EQ(c.dtype, DType::U8);
  EXPECT_EQ(c.dims, std::vector<std::uint32_t>{4});
  const Container back = decode_container(encode_container(c));
  EXPECT_EQ(back.to_text(), "a=1\n");
  const auto t = Container::from_bytes(std::string("\x00\xff", 2)).to_tensor<float>();
  EXPECT_EQ(t[0], 0.0f);
  EXPECT_EQ(t[1], 255.0f);
  EXPECT_THROW(Container::from_tensor(Tensor<float>::zeros({1})).to_text(), FormatError);
}

TEST(ContainerTest, MalformedInputRejected) {
  const std::string good = encode_container(Container::from_tensor(Tensor<float>::zeros({2, 2})));
  auto corrupt = [&](std::size_t at, char v) {
    std::string s = good;
    s[at] = v;
    return s;
  };
  EXPECT_THROW(decode_container(corrupt(0, 'X')), FormatError);
  EXPECT_THROW(decode_container(corrupt(4, 2)), FormatError);
  EXPECT_THROW(decode_container(corrupt(5, 7)), FormatError);
  EXPECT_THROW(decode_container(good.substr(0, good.size() - 1)), FormatError);
  EXPECT_THROW(decode_container(good + "x"), FormatError);
  EXPECT_THROW(decode_container(good.substr(0, 9)), FormatError);
  EXPECT_THROW(decode_container(""), FormatError);
  try {
    decode_container(corrupt(0, 'X'));
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(BundleTest, RoundTripAndLookup) {
  std::mt19937_64 rng(2);
  const auto a = ref::random_tensor<float>({3, 4}, rng);
  const auto b = ref::random_tensor<double>({5}, rng);
  const Bundle in{{"a", Container::from_tensor(a)}, {"b.w", Container::from_tensor(b)}};
  const std::string bytes = encode_bundle(in);
  const Bundle out = decode_bundle(bytes);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].first, "a");
  EXPECT_EQ(le_bytes(bundle_get(out, "a").to_tensor<float>()), le_bytes(a));
  EXPECT_EQ(le_bytes(bundle_get(out, "b.w").to_tensor<double>()), le_bytes(b));
  EXPECT_THROW(bundle_get(out, "c"), FormatError);
  EXPECT_EQ(encode_bundle(out), bytes);

  // Manifest offsets count from the byte after the blank line.
  const std::size_t body = bytes.find("\n\n") + 2;
  const std::string first = encode_container(in[0].second);
  EXPECT_EQ(bytes.substr(0, body), "a\t0\t" + std::to_string(first.size()) + "\nb.w\t" +
                                       std::to_string(first.size()) + '\t' +
                                       std::to_string(encode_container(in[1].second).size()) + "\n\n");
}

TEST(BundleTest, MalformedManifestsRejected) {
  EXPECT_THROW(decode_bundle("a\t0\t10"), FormatError);
  EXPECT_THROW(decode_bundle("a 0 10\n\n"), FormatError);
  EXPECT_THROW(decode_bundle("a\t0\t999\n\nTENB"), FormatError);
  EXPECT_THROW(encode_bundle({{"bad\tname", Container::from_bytes("x")}}), FormatError);
}

TEST(KeyValueTest, ParsesCommentsAndWhitespace) {
  const auto kv = parse_key_values("# header\nchannels = 16\n\n  blocks=2   # trailing\nvariant = T\n");
  EXPECT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv.at("channels"), "16");
  EXPECT_EQ(kv.at("blocks"), "2");
  EXPECT_EQ(parse_key_values(format_key_values(kv)), kv);
}

TEST(KeyValueTest, ErrorsCarryLineNumbers) {
  auto message = [](std::string_view text) {
    try {
      parse_key_values(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_EQ(message("a = 1\nnot a pair\n"), "line 2: expected 'key = value'");
  EXPECT_EQ(message("= 3\n"), "line 1: empty key");
  EXPECT_EQ(message("a = 1\n# c\na = 2\n"), "line 3: duplicate key 'a'");
}

TEST(KeyValueTest, ConfigsFromKeys) {
  const auto nc = network_config_from(parse_key_values("variant = S\nheads = 2\n"));
  EXPECT_EQ(nc.channels, NetworkConfig::variant("S").channels);
  EXPECT_EQ(nc.blocks, NetworkConfig::variant("S").blocks);
  EXPECT_EQ(nc.heads, 2u);
  const auto back = network_config_from(to_key_values(nc));
  EXPECT_EQ(back.channels, nc.channels);
  EXPECT_EQ(back.heads, nc.heads);
  EXPECT_EQ(back.split, nc.split);

  const auto tc = train_config_from(parse_key_values("channels = 8\nlr_initial = 0.002\nrandom_flip = false\n"));
  EXPECT_DOUBLE_EQ(tc.lr_initial, 0.002);
  EXPECT_FALSE(tc.random_flip);
  EXPECT_THROW(train_config_from(parse_key_values("learning_rate = 1\n")), ConfigError);
  EXPECT_THROW(train_config_from(parse_key_values("batch_size = -1\n")), ConfigError);
  EXPECT_THROW(network_config_from(parse_key_values("channels = x\n")), ConfigError);
  EXPECT_THROW(network_config_from(parse_key_values("channels = 10\nheads = 4\n")), ConfigError);
}

TEST(CheckpointTest, SaveLoadIsBitExact) {
  const auto dir = scratch("ckpt");
  NetworkConfig c;
  c.channels = 8;
  c.blocks = 1;
  c.split = 2;
  c.heads = 1;
  const auto net = EfficientSci<float>::build(c, 17);
  const std::string path = (dir / "net.bin").string();
  save_checkpoint(path, net);
  const auto back = load_checkpoint<float>(path);
  EXPECT_EQ(back.config().channels, 8u);
  ASSERT_EQ(back.params().size(), net.params().size());
  const auto& want = net.params().entries();
  const auto& got = back.params().entries();
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(got[i].first, want[i].first);
    EXPECT_EQ(le_bytes(got[i].second), le_bytes(want[i].second)) << want[i].first;
  }
  // Saving again reproduces the file byte for byte.
  const std::string again = (dir / "again.bin").string();
  save_checkpoint(again, back);
  EXPECT_EQ(read_file(again), read_file(path));
}

TEST(CheckpointTest, ShapeMismatchAndExtraEntriesRejected) {
  const auto dir = scratch("ckpt_bad");
  NetworkConfig c;
  c.channels = 8;
  c.blocks = 1;
  c.split = 2;
  c.heads = 1;
  const auto net = EfficientSci<float>::build(c, 1);
  Bundle b = decode_bundle([&] {
    save_checkpoint((dir / "n.bin").string(), net);
    return read_file((dir / "n.bin").string());
  }());
  Bundle wrong_shape = b;
  wrong_shape[1].second = Container::from_tensor(Tensor<float>::zeros({1}));
  write_file((dir / "shape.bin").string(), encode_bundle(wrong_shape));
  try {
    load_checkpoint<float>((dir / "shape.bin").string());
    ADD_FAILURE() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(b[1].first), std::string::npos) << e.what();
  }
  Bundle extra = b;
  extra.emplace_back("stray", Container::from_tensor(Tensor<float>::zeros({1})));
  write_file((dir / "extra.bin").string(), encode_bundle(extra));
  EXPECT_THROW(load_checkpoint<float>((dir / "extra.bin").string()), FormatError);
  EXPECT_THROW(load_checkpoint<float>((dir / "missing.bin").string()), FormatError);
}

TEST(MeasurementFileTest, RoundTrip) {
  const auto dir = scratch("meas");
  std::mt19937_64 rng(3);
  Measurement<float> m{ref::random_tensor<float>({6, 4}, rng, 0, 8), 8, ColorMode::BayerRggb, 0.01};
  const std::string path = (dir / "y.bin").string();
  save_measurement(path, m);
  const auto back = load_measurement(path);
  EXPECT_EQ(le_bytes(back.y), le_bytes(m.y));
  EXPECT_EQ(back.frames, 8u);
  EXPECT_EQ(back.color, ColorMode::BayerRggb);
  EXPECT_DOUBLE_EQ(back.noise_sigma, 0.01);
  save_container(path, Container::from_tensor(m.y));
  EXPECT_THROW(load_measurement(path), FormatError);
}

TEST(VideoFileTest, GrayVideosGainChannelAxis) {
  const auto dir = scratch("video");
  const std::string path = (dir / "v.bin").string();
  save_container(path, Container::from_tensor(Tensor<float>::zeros({4, 6, 8})));
  EXPECT_EQ(load_video(path).frames.dims(), (Shape{4, 1, 6, 8}));
  save_container(path, Container::from_tensor(Tensor<float>::zeros({4, 2, 6, 8})));
  EXPECT_THROW(load_video(path), FormatError);
  save_container(path, Container::from_tensor(Tensor<float>::zeros({4, 6})));
  EXPECT_THROW(load_masks(path), FormatError);
}

TEST(PnmTest, GrayHeaderAndPayload) {
  const std::vector<float> frame{0.0f, 0.5f, 1.0f, 2.0f, -1.0f, 0.25f};
  const std::string pgm = encode_pnm(frame, 1, 2, 3);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 6);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  const std::vector<std::uint8_t> px(pgm.begin() + header.size(), pgm.end());
  EXPECT_EQ(px, (std::vector<std::uint8_t>{0, 128, 255, 255, 0, 64}));
}

TEST(PnmTest, ColorIsInterleaved) {
  // Planes R, G, B of a 1x2 frame.
  const std::vector<float> frame{1.0f, 0.0f, 0.0f, 1.0f, 0.0f, 0.0f};
  const std::string ppm = encode_pnm(frame, 3, 1, 2);
  const std::string header = "P6\n2 1\n255\n";
  EXPECT_EQ(ppm.substr(0, header.size()), header);
  const std::vector<std::uint8_t> px(ppm.begin() + header.size(), ppm.end());
  EXPECT_EQ(px, (std::vector<std::uint8_t>{255, 0, 0, 0, 255, 0}));
  EXPECT_THROW(encode_pnm(frame, 2, 1, 3), FormatError);
  EXPECT_THROW(encode_pnm(frame, 1, 2, 2), FormatError);
}

TEST(PnmTest, ExportFramesWritesOneFilePerFrame) {
  const auto dir = scratch("export");
  const VideoCube<float> v{Tensor<float>::full({3, 3, 4, 5}, 0.5f)};
  const auto paths = export_frames(v, (dir / "out").string());
  ASSERT_EQ(paths.size(), 3u);
  EXPECT_EQ(fs::path(paths[2]).filename(), "frame_002.ppm");
  const std::string bytes = read_file(paths[0]);
  EXPECT_EQ(bytes.size(), std::string("P6\n5 4\n255\n").size() + 60);
}
