#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "esci/train.hpp"

namespace esci {

namespace {

struct Shape2d {
  bool disc = false;
  double cx = 0, cy = 0, vx = 0, vy = 0;
  double half_w = 0, half_h = 0;  // discs use half_w as radius
  std::vector<double> color;
};

// Signed distance in pixels, negative inside; used for a one-pixel soft edge.
double signed_distance(const Shape2d& s, double x, double y, double t) {
  const double dx = x - (s.cx + s.vx * t), dy = y - (s.cy + s.vy * t);
  if (s.disc) return std::hypot(dx, dy) - s.half_w;
  return std::max(std::abs(dx) - s.half_w, std::abs(dy) - s.half_h);
}

}  // namespace

std::vector<VideoCube<float>> make_synthetic_dataset(std::size_t count, std::size_t frames, std::size_t height,
                                                     std::size_t width, std::uint64_t seed, std::size_t channels) {
  if (channels != 1 && channels != 3) throw ShapeError("make_synthetic_dataset: channels must be 1 or 3");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  const double small = std::min(w, h);

  std::vector<VideoCube<float>> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::vector<double> base(channels), gx(channels), gy(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      base[c] = uniform(0.05, 0.3);
      gx[c] = uniform(-0.15, 0.15);
      gy[c] = uniform(-0.15, 0.15);
    }
    std::vector<Shape2d> shapes(static_cast<std::size_t>(std::uniform_int_distribution<int>(2, 4)(rng)));
    for (auto& s : shapes) {
      s.disc = unit(rng) < 0.5;
      s.cx = uniform(0, w);
      s.cy = uniform(0, h);
      const double speed = uniform(1.0, 3.0), angle = uniform(0, 2 * std::numbers::pi);
      s.vx = speed * std::cos(angle);
      s.vy = speed * std::sin(angle);
      s.half_w = uniform(0.06, 0.18) * small;
      s.half_h = uniform(0.06, 0.18) * small;
      for (std::size_t c = 0; c < channels; ++c) s.color.push_back(uniform(0.3, 1.0));
    }

    Tensor<float> video({frames, channels, height, width});
    auto d = video.mutable_data();
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
          const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
          std::vector<double> v(channels);
          for (std::size_t c = 0; c < channels; ++c) v[c] = base[c] + gx[c] * px / w + gy[c] * py / h;
          for (const auto& s : shapes) {
            const double cover = std::clamp(0.5 - signed_distance(s, px, py, static_cast<double>(t)), 0.0, 1.0);
            for (std::size_t c = 0; c < channels; ++c) v[c] += cover * (s.color[c] - v[c]);
          }
          for (std::size_t c = 0; c < channels; ++c)
            d[((t * channels + c) * height + y) * width + x] = static_cast<float>(std::clamp(v[c], 0.0, 1.0));
        }
    out.push_back(VideoCube<float>{std::move(video)});
  }
  return out;
}

VideoCube<float> augment(const VideoCube<float>& video, std::size_t crop, bool random_crop, bool random_scale,
                         bool random_flip, std::uint64_t seed) {
  const std::size_t b = video.count(), ch = video.channels(), h = video.height(), w = video.width();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double side = std::min<double>(static_cast<double>(std::min(h, w)),
                                       static_cast<double>(crop) * (random_scale ? 1.0 + 0.25 * unit(rng) : 1.0));
  if (side < static_cast<double>(crop))
    throw ShapeError("augment: source " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than crop " +
                     std::to_string(crop));
  const double x0 = random_crop ? unit(rng) * (static_cast<double>(w) - side) : 0.5 * (static_cast<double>(w) - side);
  const double y0 = random_crop ? unit(rng) * (static_cast<double>(h) - side) : 0.5 * (static_cast<double>(h) - side);
  const bool flip_x = random_flip && unit(rng) < 0.5;
  const bool flip_y = random_flip && unit(rng) < 0.5;

  const double scale = side / static_cast<double>(crop);
  auto taps = [&](std::size_t i, double origin, std::size_t extent, bool flip) {
    const std::size_t k = flip ? crop - 1 - i : i;
    const double s = std::clamp(origin + (static_cast<double>(k) + 0.5) * scale - 0.5, 0.0,
                                static_cast<double>(extent - 1));
    const auto lo = static_cast<std::size_t>(s);
    const std::size_t hi = std::min(lo + 1, extent - 1);
    return std::tuple{lo, hi, s - static_cast<double>(lo)};
  };

  Tensor<float> out({b, ch, crop, crop});
  auto od = out.mutable_data();
  const auto in = video.frames.data();
  for (std::size_t r = 0; r < crop; ++r) {
    const auto [r0, r1, fr] = taps(r, y0, h, flip_y);
    for (std::size_t c = 0; c < crop; ++c) {
      const auto [c0, c1, fc] = taps(c, x0, w, flip_x);
      for (std::size_t p = 0; p < b * ch; ++p) {
        const float* plane = in.data() + p * h * w;
        const double top = plane[r0 * w + c0] * (1 - fc) + plane[r0 * w + c1] * fc;
        const double bot = plane[r1 * w + c0] * (1 - fc) + plane[r1 * w + c1] * fc;
        od[(p * crop + r) * crop + c] = static_cast<float>(top * (1 - fr) + bot * fr);
      }
    }
  }
  return VideoCube<float>{std::move(out)};
}

}  // namespace esci
