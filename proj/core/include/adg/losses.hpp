#pragma once

#include <functional>

#include "adg/renderer.hpp"
#include "adg/tensor.hpp"

namespace adg {

/// Differentiable image distance plug-in: returns the distance and, if
/// grad != nullptr, writes d(distance)/d(pred) into it.
template <typename T>
using PerceptualFn =
    std::function<T(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>* grad)>;

template <typename T>
struct LossConfig {
  T lambda_lpips = T(0.05);
  PerceptualFn<T> perceptual;  // empty = plug-in off
  T depth_weight = T(1);
};

template <typename T>
struct LossReport {
  T total = T(0);
  T mse = T(0);
  T perceptual = T(0);
  T depth_smoothness = T(0);
};

/// Mean squared error over all entries. Accumulates into *grad when given.
template <typename T>
T mse_loss(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>* grad = nullptr) {
  check_same_shape(pred, gt, "mse_loss");
  const int64_t n = pred.numel();
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const T d = pred[i] - gt[i];
    acc += d * d;
    if (grad) (*grad)[i] += T(2) * d / static_cast<T>(n);
  }
  return acc / static_cast<T>(n);
}

/// MSE + lambda * perceptual distance (perceptual term 0 when the plug-in
/// is off).
template <typename T>
T nvs_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossConfig<T>& cfg,
           Tensor<T>* grad = nullptr, T* mse_out = nullptr, T* perc_out = nullptr) {
  const T mse = mse_loss(pred, gt, grad);
  T perc = T(0);
  if (cfg.perceptual) {
    Tensor<T> pgrad;
    if (grad) pgrad = Tensor<T>::zeros_like(pred);
    perc = cfg.perceptual(pred, gt, grad ? &pgrad : nullptr);
    if (grad)
      for (int64_t i = 0; i < grad->numel(); ++i) (*grad)[i] += cfg.lambda_lpips * pgrad[i];
  }
  if (mse_out) *mse_out = mse;
  if (perc_out) *perc_out = perc;
  return mse + cfg.lambda_lpips * perc;
}

/// Edge-aware smoothness: mean over interior sites of
/// |dD/dx| e^{-|dI/dx|} + |dD/dy| e^{-|dI/dy|}, forward differences, image
/// gradient = channel mean of absolute differences. Degenerate single-row
/// or single-column rasters use the available axis only.
template <typename T>
T depth_smoothness_loss(const Tensor<T>& depth, const Tensor<T>& image,
                        Tensor<T>* grad_depth = nullptr) {
  if (depth.ndim() != 2 || image.ndim() != 3 || image.dim(0) != 3 ||
      image.dim(1) != depth.dim(0) || image.dim(2) != depth.dim(1))
    throw std::invalid_argument("depth_smoothness_loss: shape mismatch");
  const int64_t h = depth.dim(0), w = depth.dim(1);
  const bool use_x = w >= 2, use_y = h >= 2;
  if (!use_x && !use_y) return T(0);
  const int64_t sh = use_y ? h - 1 : 1;
  const int64_t sw = use_x ? w - 1 : 1;
  const int64_t n = sh * sw;

  auto img_grad_x = [&](int64_t i, int64_t j) {
    T a = T(0);
    for (int c = 0; c < 3; ++c) a += std::abs(image.at(c, i, j + 1) - image.at(c, i, j));
    return a / T(3);
  };
  auto img_grad_y = [&](int64_t i, int64_t j) {
    T a = T(0);
    for (int c = 0; c < 3; ++c) a += std::abs(image.at(c, i + 1, j) - image.at(c, i, j));
    return a / T(3);
  };

  T acc = T(0);
  for (int64_t i = 0; i < sh; ++i)
    for (int64_t j = 0; j < sw; ++j) {
      if (use_x) {
        const T dd = depth.at(i, j + 1) - depth.at(i, j);
        const T wgt = std::exp(-img_grad_x(i, j));
        acc += std::abs(dd) * wgt;
        if (grad_depth) {
          const T s = (dd > T(0) ? T(1) : (dd < T(0) ? T(-1) : T(0))) * wgt / static_cast<T>(n);
          grad_depth->at(i, j + 1) += s;
          grad_depth->at(i, j) -= s;
        }
      }
      if (use_y) {
        const T dd = depth.at(i + 1, j) - depth.at(i, j);
        const T wgt = std::exp(-img_grad_y(i, j));
        acc += std::abs(dd) * wgt;
        if (grad_depth) {
          const T s = (dd > T(0) ? T(1) : (dd < T(0) ? T(-1) : T(0))) * wgt / static_cast<T>(n);
          grad_depth->at(i + 1, j) += s;
          grad_depth->at(i, j) -= s;
        }
      }
    }
  return acc / static_cast<T>(n);
}

/// Full objective over a rendered view against the ground-truth frame.
/// Writes gradients w.r.t. the rendered color and depth rasters when
/// `grads` is given (alpha receives none).
template <typename T>
LossReport<T> total_loss(const RenderOutput<T>& render, const Tensor<T>& gt_image,
                         const LossConfig<T>& cfg, RenderOutputGrad<T>* grads = nullptr) {
  if (!render.color.same_shape(gt_image))
    throw std::invalid_argument("total_loss: render/gt resolution mismatch");
  LossReport<T> rep;
  Tensor<T>* gc = nullptr;
  Tensor<T>* gd = nullptr;
  if (grads) {
    grads->color = Tensor<T>::zeros_like(render.color);
    grads->depth = Tensor<T>::zeros_like(render.depth);
    grads->alpha = Tensor<T>::zeros_like(render.alpha);
    gc = &grads->color;
    gd = &grads->depth;
  }
  const T nvs = nvs_loss(render.color, gt_image, cfg, gc, &rep.mse, &rep.perceptual);
  if (gd) {
    Tensor<T> sgrad = Tensor<T>::zeros_like(render.depth);
    rep.depth_smoothness = depth_smoothness_loss(render.depth, gt_image, &sgrad);
    for (int64_t i = 0; i < gd->numel(); ++i) (*gd)[i] += cfg.depth_weight * sgrad[i];
  } else {
    rep.depth_smoothness = depth_smoothness_loss<T>(render.depth, gt_image, nullptr);
  }
  rep.total = nvs + cfg.depth_weight * rep.depth_smoothness;
  return rep;
}

}  // namespace adg
