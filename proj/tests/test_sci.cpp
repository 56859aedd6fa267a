#include <gtest/gtest.h>

#include <numeric>

#include "esci/ops.hpp"
#include "esci/sci.hpp"
#include "reference.hpp"

using namespace esci;

namespace {

VideoCube<double> random_video(std::size_t b, std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  return {ref::random_tensor<double>({b, c, h, w}, rng, 0.0, 1.0)};
}

// H·vec(x) with H the dense oracle.
std::vector<double> apply_oracle(const Tensor<double>& hm, const Tensor<double>& x) {
  const std::size_t rows = hm.dim(0), cols = hm.dim(1);
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r] += hm[r * cols + c] * x[c];
  return y;
}

}  // namespace

TEST(MasksTest, FullDensityIsAllOnes) {
  const auto m = generate_masks<float>(3, 5, 7, 1.0, 9);
  for (float v : m.masks.data()) EXPECT_EQ(v, 1.0f);
}

TEST(MasksTest, HalfDensityConcentrates) {
  const auto m = generate_masks<float>(8, 64, 64, 0.5, 3);
  const double mean = std::accumulate(m.masks.data().begin(), m.masks.data().end(), 0.0) / double(m.masks.numel());
  EXPECT_GE(mean, 0.48);
  EXPECT_LE(mean, 0.52);
  for (float v : m.masks.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
}

TEST(MasksTest, DeterministicInSeed) {
  EXPECT_EQ(generate_masks<float>(4, 8, 8, 0.5, 11).masks.vec(), generate_masks<float>(4, 8, 8, 0.5, 11).masks.vec());
  EXPECT_NE(generate_masks<float>(4, 8, 8, 0.5, 11).masks.vec(), generate_masks<float>(4, 8, 8, 0.5, 12).masks.vec());
}

TEST(EncodeTest, OnesMasksSumFrames) {
  const auto masks = generate_masks<float>(2, 4, 4, 1.0, 0);
  const auto y = encode(VideoCube<float>{Tensor<float>::full({2, 1, 4, 4}, 1.0f)}, masks);
  for (float v : y.y.data()) EXPECT_EQ(v, 2.0f);
  EXPECT_EQ(y.frames, 2u);
  EXPECT_EQ(y.color, ColorMode::Gray);
}

TEST(EncodeTest, MatchesDenseOracle) {
  std::mt19937_64 rng(1);
  const auto masks = generate_masks<double>(3, 4, 4, 0.5, 2);
  const auto x = random_video(3, 1, 4, 4, rng);
  const auto y = encode(x, masks);
  const auto want = apply_oracle(build_sensing_oracle(masks), x.frames);
  EXPECT_LE(ref::max_abs_diff(y.y.data(), want), 1e-6);
}

TEST(EncodeTest, RejectsShapeMismatch) {
  const auto masks = generate_masks<float>(2, 4, 4);
  EXPECT_THROW(encode(VideoCube<float>{Tensor<float>::zeros({3, 1, 4, 4})}, masks), ShapeError);
  EXPECT_THROW(encode(VideoCube<float>{Tensor<float>::zeros({2, 2, 4, 4})}, masks), ShapeError);
}

TEST(EncodeTest, ZeroVideoGivesPureNoise) {
  const auto masks = generate_masks<double>(4, 32, 32, 0.5, 5);
  const auto m = encode(VideoCube<double>{Tensor<double>::zeros({4, 1, 32, 32})}, masks, 0.1, 7);
  double s = 0, s2 = 0;
  for (double v : m.y.data()) {
    s += v;
    s2 += v * v;
  }
  const double n = double(m.y.numel()), mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sd, 0.1, 0.01);
  EXPECT_EQ(encode(VideoCube<double>{Tensor<double>::zeros({4, 1, 32, 32})}, masks, 0.1, 7).y.vec(), m.y.vec());
}

TEST(EncodeTest, Linear) {
  std::mt19937_64 rng(2);
  const auto masks = generate_masks<double>(5, 6, 7, 0.5, 3);
  const auto a = random_video(5, 1, 6, 7, rng), b = random_video(5, 1, 6, 7, rng);
  const double alpha = 0.7, beta = -1.9;
  Tensor<double> mix({5, 1, 6, 7});
  for (std::size_t i = 0; i < mix.numel(); ++i) mix.mutable_data()[i] = alpha * a.frames[i] + beta * b.frames[i];
  const auto ym = encode(VideoCube<double>{mix}, masks).y, ya = encode(a, masks).y, yb = encode(b, masks).y;
  for (std::size_t i = 0; i < ym.numel(); ++i) EXPECT_NEAR(ym[i], alpha * ya[i] + beta * yb[i], 1e-6);
}

TEST(EncodeTest, ColorUsesMosaicSample) {
  std::mt19937_64 rng(3);
  const auto masks = generate_masks<double>(2, 4, 4, 1.0, 0);
  const auto x = random_video(2, 3, 4, 4, rng);
  const auto m = encode(x, masks);
  EXPECT_EQ(m.color, ColorMode::BayerRggb);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      const std::size_t ch = (r % 2 == 0 && c % 2 == 0) ? 0 : (r % 2 && c % 2) ? 2 : 1;
      double want = 0;
      for (std::size_t f = 0; f < 2; ++f) want += x.frames[((f * 3 + ch) * 4 + r) * 4 + c];
      EXPECT_NEAR(m.y[r * 4 + c], want, 1e-12);
    }
}

TEST(OracleTest, SingleOnesMaskIsIdentity) {
  const auto h = build_sensing_oracle(generate_masks<double>(1, 3, 3, 1.0, 0));
  ASSERT_EQ(h.dims(), (Shape{9, 9}));
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 9; ++c) EXPECT_EQ(h[r * 9 + c], r == c ? 1.0 : 0.0);
}

TEST(OracleTest, FullyCoveredRowHasBNonzeros) {
  const auto h = build_sensing_oracle(generate_masks<double>(4, 2, 3, 1.0, 0));
  for (std::size_t r = 0; r < 6; ++r) {
    std::size_t nz = 0;
    for (std::size_t c = 0; c < h.dim(1); ++c) nz += h[r * h.dim(1) + c] != 0.0;
    EXPECT_EQ(nz, 4u);
  }
}

TEST(OracleTest, RefusesLargeInstances) {
  EXPECT_THROW(build_sensing_oracle(generate_masks<float>(1, 65, 64)), std::length_error);
}

TEST(BayerTest, RedPlaneOfIndexImage) {
  Tensor<double> y({4, 4});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) y.mutable_data()[r * 4 + c] = 10.0 * r + c;
  const auto s = bayer_split(y, generate_masks<double>(2, 4, 4, 1.0, 0));
  EXPECT_EQ(s.measurements[0].vec(), (std::vector<double>{0, 2, 20, 22}));
  EXPECT_EQ(s.measurements[1].vec(), (std::vector<double>{1, 3, 21, 23}));
  EXPECT_EQ(s.measurements[2].vec(), (std::vector<double>{10, 12, 30, 32}));
  EXPECT_EQ(s.measurements[3].vec(), (std::vector<double>{11, 13, 31, 33}));
}

TEST(BayerTest, SplitMergeIsBijection) {
  std::mt19937_64 rng(4);
  const auto y = ref::random_tensor<double>({6, 8}, rng);
  const auto masks = generate_masks<double>(3, 6, 8, 0.5, 1);
  const auto s = bayer_split(y, masks);
  EXPECT_EQ(bayer_merge(s.measurements).vec(), y.vec());
  for (std::size_t f = 0; f < 3; ++f) {
    std::array<Tensor<double>, 4> frame;
    for (std::size_t k = 0; k < 4; ++k)
      frame[k] = Tensor<double>({3, 4}, std::vector<double>(s.masks[k].masks.data().begin() + f * 12,
                                                            s.masks[k].masks.data().begin() + (f + 1) * 12));
    const auto merged = bayer_merge(frame);
    for (std::size_t i = 0; i < 48; ++i) EXPECT_EQ(merged[i], masks.masks[f * 48 + i]);
  }
}

TEST(BayerTest, ConstantMeasurementGivesConstantSubs) {
  const auto s = bayer_split(Tensor<double>::full({4, 6}, 3.5), generate_masks<double>(1, 4, 6));
  for (const auto& m : s.measurements)
    for (double v : m.data()) EXPECT_EQ(v, 3.5);
}

TEST(BayerTest, OddExtentsRejected) {
  EXPECT_THROW(bayer_split(Tensor<double>::zeros({5, 4}), generate_masks<double>(1, 5, 4)), ShapeError);
}

TEST(EstimationTest, OnesMasksGiveTwiceMean) {
  Measurement<float> y{Tensor<float>::full({4, 4}, 2.0f), 2};
  const auto xe = estimation_init(y, generate_masks<float>(2, 4, 4, 1.0, 0));
  ASSERT_EQ(xe.dims(), (Shape{2, 1, 4, 4}));
  for (float v : xe.data()) EXPECT_EQ(v, 2.0f);
}

TEST(EstimationTest, MatchesScalarEvaluation) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 1 + rng() % 8, h = 1 + rng() % 12, w = 1 + rng() % 12;
    const auto masks = generate_masks<float>(b, h, w, 0.5, rng());
    Measurement<float> y{ref::random_tensor<float>({h, w}, rng, 0.0, 4.0), b};
    const auto xe = estimation_init(y, masks);
    for (std::size_t f = 0; f < b; ++f)
      for (std::size_t p = 0; p < h * w; ++p) {
        double s = 0;
        for (std::size_t k = 0; k < b; ++k) s += masks.masks[k * h * w + p];
        const double ybar = double(y.y[p]) / (s == 0 ? 1e-6 : s);
        const double want = ybar * masks.masks[f * h * w + p] + ybar;
        EXPECT_NEAR(xe[f * h * w + p], want, 1e-6 * std::max(1.0, std::abs(want)));
      }
  }
}

TEST(EstimationTest, ZeroSumPixelIsGuardedAndFlagged) {
  Tensor<float> m({2, 2, 2});
  m.mutable_data()[0] = 1.0f;  // pixel 0 lit in frame 0 only; the other three are dark
  Measurement<float> y{Tensor<float>::full({2, 2}, 0.0f), 2};
  EstimationDiagnostics diag;
  const auto xe = estimation_init(y, MaskSet<float>{m}, &diag);
  EXPECT_EQ(diag.zero_sum_pixels, 3u);
  for (float v : xe.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(EstimationTest, ScalesExactlyWithMeasurement) {
  std::mt19937_64 rng(6);
  const auto masks = generate_masks<float>(4, 8, 8, 0.5, 2);
  Measurement<float> y{ref::random_tensor<float>({8, 8}, rng, 0.0, 3.0), 4};
  Measurement<float> y4 = y;
  y4.y = mul_scalar(y.y, 4.0f);
  const auto a = estimation_init(y, masks), b = estimation_init(y4, masks);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(b[i], 4.0f * a[i]);
}

TEST(EstimationTest, BayerStacksFourSubProblems) {
  std::mt19937_64 rng(7);
  const auto masks = generate_masks<float>(3, 8, 8, 0.5, 4);
  const auto m = encode(VideoCube<float>{ref::random_tensor<float>({3, 3, 8, 8}, rng, 0.0, 1.0)}, masks);
  const auto xe = estimation_init(m, masks);
  ASSERT_EQ(xe.dims(), (Shape{3, 4, 4, 4}));
  const auto s = bayer_split(m.y, masks);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto sub = estimation_init(Measurement<float>{s.measurements[k], 3}, s.masks[k]);
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t p = 0; p < 16; ++p) EXPECT_EQ(xe[(f * 4 + k) * 16 + p], sub[f * 16 + p]);
  }
}

TEST(EstimationTest, FrameCountMismatchRejected) {
  Measurement<float> y{Tensor<float>::zeros({4, 4}), 3};
  EXPECT_THROW(estimation_init(y, generate_masks<float>(2, 4, 4)), ShapeError);
}

TEST(SciPropertyTest, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const std::size_t b = 1 + rng() % 8, h = 1 + rng() % 16, w = 1 + rng() % 16;
    const auto masks = generate_masks<double>(b, h, w, 0.5, rng());
    const auto x = random_video(b, 1, h, w, rng);
    EXPECT_LE(ref::max_abs_diff(encode(x, masks).y.data(), apply_oracle(build_sensing_oracle(masks), x.frames)), 1e-6);
  }
}
