#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "videopred/common.hpp"
#include "videopred/tensor.hpp"

// Whole-image quality metrics on [0,1] images. PSNR uses peak value 1.0 and
// caps at 100 dB for identical images; SSIM uses the canonical 11x11
// Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1.0,
// per-channel over valid window positions.

namespace vp {

constexpr double kPsnrCap = 100.0;

inline double mse_span(const float* a, const float* b, std::int64_t n) {
  double s = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return s / double(n);
}

inline double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// PSNR in dB between two same-length [0,1] image buffers (any layout, MSE
/// runs over all pixels and channels).
inline double psnr(const float* a, const float* b, std::int64_t n) {
  return psnr_from_mse(mse_span(a, b, n));
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  check_shape(same_shape(a, b), "psnr: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  double s = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = double(a.data()[i]) - double(b.data()[i]);
    s += d * d;
  }
  return psnr_from_mse(s / double(a.numel()));
}

namespace ssim_detail {

inline const std::vector<double>& gaussian11() {
  static const std::vector<double> w = [] {
    std::vector<double> v(11);
    const double sigma = 1.5;
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5;
      v[size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
      sum += v[size_t(i)];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return w;
}

/// Separable valid-region Gaussian filter of a H x W map. Output is
/// (H-10) x (W-10).
inline void gauss_filter_valid(const std::vector<double>& img, int H, int W,
                               std::vector<double>& out) {
  const auto& k = gaussian11();
  const int Wv = W - 10, Hv = H - 10;
  std::vector<double> tmp(size_t(H) * Wv);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < Wv; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[size_t(i)] * img[size_t(y) * W + x + i];
      tmp[size_t(y) * Wv + x] = s;
    }
  out.assign(size_t(Hv) * Wv, 0.0);
  for (int y = 0; y < Hv; ++y)
    for (int x = 0; x < Wv; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[size_t(i)] * tmp[size_t(y + i) * Wv + x];
      out[size_t(y) * Wv + x] = s;
    }
}

}  // namespace ssim_detail

/// Mean SSIM of one channel given as float spans with stride `stride`
/// between consecutive pixels of the channel.
inline double ssim_channel(const float* a, const float* b, int H, int W, std::int64_t stride) {
  check(H >= 11 && W >= 11, "ssim: image " + std::to_string(H) + "x" + std::to_string(W) +
                                " smaller than the 11x11 window");
  const size_t n = size_t(H) * W;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    const double xv = a[std::int64_t(i) * stride], yv = b[std::int64_t(i) * stride];
    x[i] = xv;
    y[i] = yv;
    xx[i] = xv * xv;
    yy[i] = yv * yv;
    xy[i] = xv * yv;
  }
  std::vector<double> mx, my, mxx, myy, mxy;
  ssim_detail::gauss_filter_valid(x, H, W, mx);
  ssim_detail::gauss_filter_valid(y, H, W, my);
  ssim_detail::gauss_filter_valid(xx, H, W, mxx);
  ssim_detail::gauss_filter_valid(yy, H, W, myy);
  ssim_detail::gauss_filter_valid(xy, H, W, mxy);

  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  double total = 0;
  for (size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cxy = mxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + C1) * (2.0 * cxy + C2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2);
    total += num / den;
  }
  return total / double(mx.size());
}

/// Mean SSIM over channels of two channel-last [H,W,3] frames.
inline double ssim_hwc(const float* a, const float* b, int H, int W, int C = 3) {
  double s = 0;
  for (int c = 0; c < C; ++c) s += ssim_channel(a + c, b + c, H, W, C);
  return s / C;
}

/// Mean SSIM over channels of two [C,H,W] tensors (or [B,C,H,W] with B=1).
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  check_shape(same_shape(a, b), "ssim: shape mismatch");
  Shape s = a.shape();
  check_shape(s.size() == 3 || (s.size() == 4 && s[0] == 1), "ssim: expected [C,H,W]");
  const int C = int(s[s.size() - 3]), H = int(s[s.size() - 2]), W = int(s[s.size() - 1]);
  std::vector<float> af(size_t(a.numel())), bf(size_t(b.numel()));
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    af[size_t(i)] = float(a.data()[i]);
    bf[size_t(i)] = float(b.data()[i]);
  }
  double total = 0;
  for (int c = 0; c < C; ++c)
    total += ssim_channel(af.data() + size_t(c) * H * W, bf.data() + size_t(c) * H * W, H, W, 1);
  return total / C;
}

}  // namespace vp
