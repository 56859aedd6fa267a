#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "esci/analysis.hpp"

namespace esci {

namespace {

template <typename T>
void require_same(const VideoCube<T>& a, const VideoCube<T>& b, const char* what) {
  if (a.frames.dims() != b.frames.dims())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.frames.dims()) + " vs " +
                     shape_str(b.frames.dims()));
  if (a.frames.rank() != 4) throw ShapeError(std::string(what) + ": expected [B,C,H,W]");
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::vector<double> gaussian_window(int size) {
  constexpr double kSigma = 1.5;
  std::vector<double> g(size);
  double total = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - size / 2;
    total += g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
  }
  for (auto& v : g) v /= total;
  return g;
}

// Separable "valid" filtering of an [h, w] plane with the 1-D window.
std::vector<double> filter_valid(const std::vector<double>& x, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size(), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < k; ++j) acc += g[j] * x[r * w + c + j];
      rows[r * ow + c] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < k; ++i) acc += g[i] * rows[(r + i) * ow + c];
      out[r * ow + c] = acc;
    }
  return out;
}

}  // namespace

template <typename T>
MetricReport psnr(const VideoCube<T>& a, const VideoCube<T>& b, double peak) {
  require_same(a, b, "psnr");
  const std::size_t frames = a.count(), per = a.frames.numel() / frames;
  MetricReport rep;
  double total = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    double se = 0;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = clamp01(a.frames[f * per + i]) - clamp01(b.frames[f * per + i]);
      se += d * d;
    }
    const double mse = se / static_cast<double>(per);
    const double v = mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(peak * peak / mse);
    rep.per_frame.push_back(v);
    total += std::min(v, kPsnrCap);
  }
  rep.mean = total / static_cast<double>(frames);
  return rep;
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::size_t h, std::size_t w,
                  std::size_t window) {
  if (a.size() != h * w || b.size() != h * w) throw ShapeError("ssim: plane size mismatch");
  if (window == 0 || window % 2 == 0) throw std::invalid_argument("ssim: window size must be odd");
  if (h < window || w < window)
    throw ShapeError("ssim: frames of " + std::to_string(h) + "x" + std::to_string(w) + " are smaller than the " +
                     std::to_string(window) + "x" + std::to_string(window) + " window");
  static const std::vector<double> standard = gaussian_window(kSsimWindow);
  const std::vector<double> g = window == kSsimWindow ? standard : gaussian_window(static_cast<int>(window));
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, g), mu_b = filter_valid(b, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g), e_ab = filter_valid(ab, h, w, g);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

template <typename T>
MetricReport ssim(const VideoCube<T>& a, const VideoCube<T>& b, std::size_t window) {
  require_same(a, b, "ssim");
  const std::size_t frames = a.count(), ch = a.channels(), h = a.height(), w = a.width(), plane = h * w;
  MetricReport rep;
  double total = 0;
  std::vector<double> pa(plane), pb(plane);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0;
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (f * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        pa[i] = clamp01(a.frames[base + i]);
        pb[i] = clamp01(b.frames[base + i]);
      }
      acc += ssim_plane(pa, pb, h, w, window);
    }
    rep.per_frame.push_back(acc / static_cast<double>(ch));
    total += rep.per_frame.back();
  }
  rep.mean = total / static_cast<double>(frames);
  return rep;
}

std::string metrics_table_text(const MetricReport& p, const MetricReport& s) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "frame" << std::right << std::setw(12) << "PSNR(dB)" << std::setw(10) << "SSIM"
     << '\n';
  os << std::fixed;
  for (std::size_t f = 0; f < p.per_frame.size(); ++f)
    os << std::left << std::setw(8) << f << std::right << std::setw(12) << std::setprecision(2)
       << std::min(p.per_frame[f], kPsnrCap) << std::setw(10) << std::setprecision(4) << s.per_frame[f] << '\n';
  os << std::left << std::setw(8) << "mean" << std::right << std::setw(12) << std::setprecision(2) << p.mean
     << std::setw(10) << std::setprecision(4) << s.mean << '\n';
  return os.str();
}

std::string metrics_table_csv(const MetricReport& p, const MetricReport& s) {
  std::ostringstream os;
  os << "frame,psnr,ssim\n" << std::setprecision(10);
  for (std::size_t f = 0; f < p.per_frame.size(); ++f)
    os << f << ',' << std::min(p.per_frame[f], kPsnrCap) << ',' << s.per_frame[f] << '\n';
  os << "mean," << p.mean << ',' << s.mean << '\n';
  return os.str();
}

template MetricReport psnr<float>(const VideoCube<float>&, const VideoCube<float>&, double);
template MetricReport psnr<double>(const VideoCube<double>&, const VideoCube<double>&, double);
template MetricReport ssim<float>(const VideoCube<float>&, const VideoCube<float>&, std::size_t);
template MetricReport ssim<double>(const VideoCube<double>&, const VideoCube<double>&, std::size_t);

}  // namespace esci
