#pragma once

#include <cmath>

#include "adg/autodiff.hpp"

namespace adg {

template <typename T>
struct AdamConfig {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
template <typename T>
T clip_global_norm(ParamStore<T>& store, T max_norm) {
  double sq = 0;
  for (auto& p : store.all())
    for (T g : p->grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
  const T norm = static_cast<T>(std::sqrt(sq));
  if (norm > max_norm && norm > T(0)) {
    const T s = max_norm / norm;
    for (auto& p : store.all())
      for (T& g : p->grad.data) g *= s;
  }
  return norm;
}

/// One Adam update; `step` is 1-based for bias correction.
template <typename T>
void adam_step(ParamStore<T>& store, T lr, const AdamConfig<T>& cfg, int64_t step) {
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg.beta1), static_cast<double>(step)));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(cfg.beta2), static_cast<double>(step)));
  for (auto& p : store.all()) {
    if (!p->trainable) continue;
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      const T g = p->grad[i];
      p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (T(1) - cfg.beta1) * g;
      p->adam_v[i] = cfg.beta2 * p->adam_v[i] + (T(1) - cfg.beta2) * g * g;
      const T mhat = p->adam_m[i] / bc1;
      const T vhat = p->adam_v[i] / bc2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

/// Cosine decay from lr_init at step 0 to lr_min at step total.
inline double cosine_lr(double lr_init, double lr_min, int64_t step, int64_t total) {
  if (step >= total) return lr_min;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + (lr_init - lr_min) * 0.5 * (1.0 + std::cos(M_PI * t));
}

}  // namespace adg
