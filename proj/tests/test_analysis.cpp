#include <gtest/gtest.h>

#include <cmath>

#include "esci/analysis.hpp"
#include "reference.hpp"

using namespace esci;

namespace {

VideoCube<double> cube(std::size_t b, std::size_t c, std::size_t h, std::size_t w, double value) {
  return {Tensor<double>::full({b, c, h, w}, value)};
}

// Scalar PSNR of one plane, no clamping (fixtures already lie in [0, 1]).
double ref_psnr(std::span<const double> a, std::span<const double> b) {
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  return 10.0 * std::log10(1.0 / (se / double(a.size())));
}

// An 8x8 hand image: diagonal ramp with a bright square.
std::vector<double> hand_image(double shift) {
  std::vector<double> v(64);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) v[r * 8 + c] = (r >= 2 && r < 5 && c >= 3 && c < 6) ? 0.9 : 0.05 * (r + c) + shift;
  return v;
}

NetworkConfig scb_only(std::size_t c) {
  NetworkConfig cfg;
  cfg.channels = c;
  cfg.split = 1;
  cfg.heads = 1;
  cfg.blocks = 1;
  return cfg;
}

}  // namespace

TEST(PsnrTest, UniformDifferenceOfOneTenth) {
  const auto rep = psnr(cube(3, 1, 4, 4, 0.5), cube(3, 1, 4, 4, 0.6));
  for (double v : rep.per_frame) EXPECT_NEAR(v, 20.0, 1e-9);
  EXPECT_NEAR(rep.mean, 20.0, 1e-9);
}

TEST(PsnrTest, IdenticalInputsHitTheCap) {
  std::mt19937_64 rng(1);
  const VideoCube<double> a{ref::random_tensor<double>({2, 1, 8, 8}, rng, 0, 1)};
  const auto rep = psnr(a, a);
  for (double v : rep.per_frame) EXPECT_TRUE(std::isinf(v) && v > 0);
  EXPECT_EQ(rep.mean, kPsnrCap);
}

TEST(PsnrTest, SymmetricAndClamped) {
  std::mt19937_64 rng(2);
  const VideoCube<double> a{ref::random_tensor<double>({3, 1, 6, 6}, rng, -0.5, 1.5)};
  const VideoCube<double> b{ref::random_tensor<double>({3, 1, 6, 6}, rng, -0.5, 1.5)};
  EXPECT_EQ(psnr(a, b).per_frame, psnr(b, a).per_frame);
  // Out-of-range values compare as their clamped versions.
  EXPECT_TRUE(std::isinf(psnr(cube(1, 1, 4, 4, 1.7), cube(1, 1, 4, 4, 1.0)).per_frame[0]));
}

TEST(PsnrTest, MatchesScalarReferenceOnHandImages) {
  Tensor<double> a({2, 1, 8, 8}), b({2, 1, 8, 8});
  const auto a0 = hand_image(0.0), b0 = hand_image(0.02), a1 = hand_image(0.01);
  auto b1 = hand_image(0.01);
  b1[9] += 0.3;
  std::copy(a0.begin(), a0.end(), a.mutable_data().begin());
  std::copy(a1.begin(), a1.end(), a.mutable_data().begin() + 64);
  std::copy(b0.begin(), b0.end(), b.mutable_data().begin());
  std::copy(b1.begin(), b1.end(), b.mutable_data().begin() + 64);
  const auto rep = psnr(VideoCube<double>{a}, VideoCube<double>{b});
  const double f0 = ref_psnr(a0, b0), f1 = ref_psnr(a1, b1);
  EXPECT_NEAR(rep.per_frame[0], f0, 1e-9);
  EXPECT_NEAR(rep.per_frame[1], f1, 1e-9);
  EXPECT_NEAR(rep.mean, (f0 + f1) / 2, 1e-9);
}

TEST(PsnrTest, ShapeMismatchRejected) {
  EXPECT_THROW(psnr(cube(2, 1, 4, 4, 0), cube(3, 1, 4, 4, 0)), ShapeError);
}

TEST(SsimTest, IdenticalInputsGiveOne) {
  std::mt19937_64 rng(3);
  const VideoCube<double> a{ref::random_tensor<double>({2, 3, 16, 12}, rng, 0, 1)};
  const auto rep = ssim(a, a);
  for (double v : rep.per_frame) EXPECT_NEAR(v, 1.0, 1e-12);
  const VideoCube<double> small{ref::random_tensor<double>({1, 1, 8, 8}, rng, 0, 1)};
  EXPECT_NEAR(ssim(small, small, 7).mean, 1.0, 1e-12);
}

TEST(SsimTest, InvertedBinaryImageScoresLow) {
  std::mt19937_64 rng(4);
  Tensor<double> a({1, 1, 24, 24}), b({1, 1, 24, 24});
  for (std::size_t i = 0; i < a.numel(); ++i) {
    a.mutable_data()[i] = double(rng() % 2);
    b.mutable_data()[i] = 1.0 - a[i];
  }
  EXPECT_LT(ssim(VideoCube<double>{a}, VideoCube<double>{b}).mean, 0.5);
}

TEST(SsimTest, DcOffsetFollowsLuminanceTerm) {
  const double m1 = 0.4, m2 = 0.45, c1 = 1e-4;
  const double want = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
  EXPECT_NEAR(ssim(cube(1, 1, 12, 12, m1), cube(1, 1, 12, 12, m2)).mean, want, 1e-12);
}

TEST(SsimTest, MatchesDirectWindowReference) {
  std::mt19937_64 rng(5);
  for (auto [h, w, win] : std::vector<std::array<std::size_t, 3>>{{8, 8, 7}, {8, 8, 5}, {16, 13, 11}, {11, 11, 11}}) {
    const auto a = ref::random_tensor<double>({h, w}, rng, 0, 1);
    auto b = a.clone();
    for (auto& v : b.mutable_data()) v = std::clamp(v + std::normal_distribution<double>(0, 0.1)(rng), 0.0, 1.0);
    EXPECT_NEAR(ssim_plane(a.vec(), b.vec(), h, w, win), ref::ssim_plane(a.vec(), b.vec(), h, w, win), 1e-9)
        << h << "x" << w << " window " << win;
  }
  // Hand images through the cube interface.
  const auto a0 = hand_image(0.0), b0 = hand_image(0.02);
  const auto rep = ssim(VideoCube<double>{Tensor<double>({1, 1, 8, 8}, a0)},
                        VideoCube<double>{Tensor<double>({1, 1, 8, 8}, b0)}, 7);
  EXPECT_NEAR(rep.mean, ref::ssim_plane(a0, b0, 8, 8, 7), 1e-9);
}

TEST(SsimTest, FramesSmallerThanWindowRejected) {
  EXPECT_THROW(ssim(cube(1, 1, 8, 8, 0.2), cube(1, 1, 8, 8, 0.2)), ShapeError);
  EXPECT_THROW(ssim(cube(1, 1, 8, 8, 0.2), cube(1, 1, 8, 8, 0.2), 6), std::invalid_argument);
}

TEST(MetricsTableTest, CsvAndTextLayout) {
  MetricReport p{{20.0, std::numeric_limits<double>::infinity()}, 60.0}, s{{0.5, 1.0}, 0.75};
  EXPECT_EQ(metrics_table_csv(p, s), "frame,psnr,ssim\n0,20,0.5\n1,100,1\nmean,60,0.75\n");
  const std::string text = metrics_table_text(p, s);
  EXPECT_NE(text.find("PSNR(dB)"), std::string::npos);
  EXPECT_NE(text.find("100.00"), std::string::npos);
}

TEST(FlopsTest, ClosedFormExamples) {
  EXPECT_DOUBLE_EQ(flops_analytic(Component::Scb, 8, 8, 4, 16, 3), 294912.0);
  EXPECT_DOUBLE_EQ(flops_analytic(Component::Tsab, 8, 8, 4, 16, 3), 40960.0);
  EXPECT_DOUBLE_EQ(flops_analytic(Component::Scb3d, 8, 8, 4, 16, 3), 0.5 * 64 * 4 * 27 * 256);
  EXPECT_DOUBLE_EQ(flops_analytic(Component::GMsa, 8, 8, 4, 16), 64.0 * 4 * 256 + 256.0 * 256 * 16);
  EXPECT_DOUBLE_EQ(flops_analytic(Component::TsMsa, 8, 8, 4, 16), 2.0 * 256 * 256 + 4.0 * 64 * 64 * 16 + 64.0 * 16 * 16);
}

TEST(FlopsTest, ScalingInImageSize) {
  for (auto c : {Component::Scb, Component::Tsab, Component::Scb3d})
    EXPECT_DOUBLE_EQ(flops_analytic(c, 16, 8, 4, 16), 2 * flops_analytic(c, 8, 8, 4, 16)) << to_string(c);
  // The (HW)^2 parts grow four-fold.
  const double g1 = flops_analytic(Component::GMsa, 8, 8, 4, 16), g2 = flops_analytic(Component::GMsa, 16, 8, 4, 16);
  EXPECT_DOUBLE_EQ(g2 - 2 * 64 * 4 * 256, 4 * (g1 - 64 * 4 * 256));
  const double t1 = flops_analytic(Component::TsMsa, 8, 8, 4, 16), t2 = flops_analytic(Component::TsMsa, 16, 8, 4, 16);
  EXPECT_DOUBLE_EQ(t2 - 2 * (2.0 * 256 * 256 + 64.0 * 16 * 16), 4 * (t1 - (2.0 * 256 * 256 + 64.0 * 16 * 16)));
}

TEST(FlopsTest, NamesRoundTripAndBadExtentsFail) {
  for (auto c : {Component::Scb, Component::Tsab, Component::Scb3d, Component::GMsa, Component::TsMsa})
    EXPECT_EQ(component_from_string(to_string(c)), c);
  EXPECT_THROW(component_from_string("MLP"), std::invalid_argument);
  EXPECT_THROW(flops_analytic(Component::Scb, 0, 8, 4, 16), std::invalid_argument);
}

TEST(FlopsTest, CountedMultipliesMatchExactLayerSums) {
  // The counter sees every multiply; the closed form keeps only the leading term of the first conv.
  const std::size_t t = 4, h = 8, w = 8, c = 32, half = c / 2, hw = h * w;
  const auto net = build_network<float>(scb_only(c), 0);
  const auto& cf = net.blocks()[0].cformers[0];
  const auto x = Tensor<float>::full({t, c, h, w}, 0.1f);
  std::uint64_t scb_count, tsab_count;
  {
    MultiplyCounter counter;
    scb_forward(x, cf.scb);
    scb_count = counter.count();
  }
  {
    MultiplyCounter counter;
    tsab_forward(x, cf.tsab);
    tsab_count = counter.count();
  }
  EXPECT_EQ(scb_count, hw * t * 9 * (c * half + half * half));
  // Q, K, V projections; scores; their scaling and normalization; attention x V; output projection.
  EXPECT_EQ(tsab_count,
            3 * hw * t * c * half + hw * t * t * half + 2 * hw * t * t + hw * t * t * half + hw * t * half * half);
  EXPECT_DOUBLE_EQ(0.5 * double(hw * t) * 9 * c * c, double(hw * t * 9 * c * half));
}

TEST(ParamCountTest, SpatialBranchIsTwoConvs) {
  const auto pc = param_count(scb_only(16));
  const auto it = std::find_if(pc.layers.begin(), pc.layers.end(),
                               [](const LayerCount& l) { return l.name == "blocks.0.cformer.0.scb"; });
  ASSERT_NE(it, pc.layers.end());
  // 3x3 c -> c/2 with bias, then 3x3 c/2 -> c/2 with bias.
  EXPECT_EQ(it->params, (9u * 16 * 8 + 8) + (9u * 8 * 8 + 8));
}

TEST(ParamCountTest, LayerSumAndVariantOrdering) {
  std::uint64_t prev = 0;
  for (const char* v : {"T", "S", "B", "L"}) {
    const auto pc = param_count(NetworkConfig::variant(v));
    std::uint64_t s = 0;
    for (const auto& l : pc.layers) s += l.params;
    EXPECT_EQ(s, pc.total) << v;
    EXPECT_GT(pc.total, prev) << v;
    prev = pc.total;
  }
}

TEST(NetworkFlopsTest, OrderedAndLinearInFrames) {
  double prev = 0;
  for (const char* v : {"T", "S", "B", "L"}) {
    const double f = network_flops(NetworkConfig::variant(v), 8, 256, 256).total();
    EXPECT_GT(f, prev) << v;
    prev = f;
  }
  const auto cfg = NetworkConfig::variant("T");
  const auto a = network_flops(cfg, 8, 64, 64), b = network_flops(cfg, 16, 64, 64);
  EXPECT_DOUBLE_EQ(b.features, 2 * a.features);
  EXPECT_DOUBLE_EQ(b.head, 2 * a.head);
  EXPECT_GT(b.blocks, 2 * a.blocks);  // the T^2 attention terms
}

TEST(NetworkFlopsTest, MatchesCountedForwardPass) {
  NetworkConfig cfg = scb_only(16);
  cfg.split = 2;
  cfg.blocks = 2;
  const auto net = build_network<float>(cfg, 0);
  MultiplyCounter counter;
  net.forward(Tensor<float>::full({4, 1, 16, 16}, 0.2f));
  const double counted = double(counter.count()), analytic = network_flops(cfg, 4, 16, 16).total();
  EXPECT_NEAR(counted / analytic, 1.0, 0.02);
}
