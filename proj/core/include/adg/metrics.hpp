#pragma once

#include <cmath>

#include "adg/tensor.hpp"

namespace adg {

/// Peak signal-to-noise ratio in dB for rasters in [0,1]; capped at 99 dB
/// when the MSE underflows 1e-10.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "psnr");
  double mse = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse < 1e-10) return 99.0;
  return 10.0 * std::log10(1.0 / mse);
}

namespace metric_detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<size_t>(size));
  const int half = size / 2;
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double x = i - half;
    w[static_cast<size_t>(i)] = std::exp(-x * x / (2 * sigma * sigma));
    sum += w[static_cast<size_t>(i)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

/// Separable Gaussian filter over valid positions (no padding):
/// output is (H-size+1) x (W-size+1).
template <typename T>
Tensor<double> filter_valid(const Tensor<T>& img, int64_t c, const std::vector<double>& win) {
  const int64_t h = img.dim(1), w = img.dim(2);
  const int64_t k = static_cast<int64_t>(win.size());
  Tensor<double> tmp({h, w - k + 1});
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j + k <= w; ++j) {
      double acc = 0;
      for (int64_t m = 0; m < k; ++m) acc += win[static_cast<size_t>(m)] * static_cast<double>(img.at(c, i, j + m));
      tmp.at(i, j) = acc;
    }
  Tensor<double> out({h - k + 1, w - k + 1});
  for (int64_t i = 0; i + k <= h; ++i)
    for (int64_t j = 0; j < out.dim(1); ++j) {
      double acc = 0;
      for (int64_t m = 0; m < k; ++m) acc += win[static_cast<size_t>(m)] * tmp.at(i + m, j);
      out.at(i, j) = acc;
    }
  return out;
}

}  // namespace metric_detail

/// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
/// dynamic range 1, computed per channel over valid windows and averaged.
/// Throws for images smaller than the window.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "ssim");
  if (a.ndim() != 3 || a.dim(0) != 3) throw std::invalid_argument("ssim: expected [3,H,W]");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (a.dim(1) < kWin || a.dim(2) < kWin)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto win = metric_detail::gaussian_window(kWin, kSigma);

  double total = 0;
  for (int64_t c = 0; c < 3; ++c) {
    Tensor<T> aa = Tensor<T>({1, a.dim(1), a.dim(2)});
    Tensor<T> bb = aa, ab = aa, a2 = aa, b2 = aa;
    for (int64_t i = 0; i < a.dim(1); ++i)
      for (int64_t j = 0; j < a.dim(2); ++j) {
        const T av = a.at(c, i, j), bv = b.at(c, i, j);
        aa.at(0, i, j) = av;
        bb.at(0, i, j) = bv;
        ab.at(0, i, j) = av * bv;
        a2.at(0, i, j) = av * av;
        b2.at(0, i, j) = bv * bv;
      }
    const auto mu1 = metric_detail::filter_valid(aa, 0, win);
    const auto mu2 = metric_detail::filter_valid(bb, 0, win);
    const auto s12 = metric_detail::filter_valid(ab, 0, win);
    const auto s11 = metric_detail::filter_valid(a2, 0, win);
    const auto s22 = metric_detail::filter_valid(b2, 0, win);
    double acc = 0;
    for (int64_t i = 0; i < mu1.numel(); ++i) {
      const double m1 = mu1[i], m2 = mu2[i];
      const double v1 = s11[i] - m1 * m1;
      const double v2 = s22[i] - m2 * m2;
      const double cov = s12[i] - m1 * m2;
      acc += ((2 * m1 * m2 + c1) * (2 * cov + c2)) / ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
    }
    total += acc / static_cast<double>(mu1.numel());
  }
  return total / 3.0;
}

}  // namespace adg
