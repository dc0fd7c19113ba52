#pragma once

#include <array>
#include <cmath>

#include "adg/camera.hpp"
#include "adg/tensor.hpp"

namespace adg {

/// Raw (pre-activation) per-pixel head outputs.
/// geo  [4,H,W]: depth_raw, offset_u_raw, offset_v_raw, opacity_raw
/// app  [10,H,W]: color_raw rgb, scale_raw xyz, rot_raw wxyz
template <typename T>
struct GaussianRaster {
  Tensor<T> geo;
  Tensor<T> app;
};

/// Activated world-space Gaussians, one per source pixel. Covariance is
/// kept factored as (scale, quaternion).
template <typename T>
struct GaussianSet {
  int64_t n = 0;
  std::vector<T> mu;     // n*3, meters
  std::vector<T> alpha;  // n, in (0,1)
  std::vector<T> scale;  // n*3, meters
  std::vector<T> quat;   // n*4, (w,x,y,z), unit
  std::vector<T> color;  // n*3, in (0,1)

  void resize(int64_t count) {
    n = count;
    mu.assign(static_cast<size_t>(3 * n), T(0));
    alpha.assign(static_cast<size_t>(n), T(0));
    scale.assign(static_cast<size_t>(3 * n), T(0));
    quat.assign(static_cast<size_t>(4 * n), T(0));
    color.assign(static_cast<size_t>(3 * n), T(0));
  }
};

template <typename T>
struct GaussianGrads {
  std::vector<T> mu, alpha, scale, quat, color;

  explicit GaussianGrads(int64_t n = 0) { resize(n); }
  void resize(int64_t n) {
    mu.assign(static_cast<size_t>(3 * n), T(0));
    alpha.assign(static_cast<size_t>(n), T(0));
    scale.assign(static_cast<size_t>(3 * n), T(0));
    quat.assign(static_cast<size_t>(4 * n), T(0));
    color.assign(static_cast<size_t>(3 * n), T(0));
  }
};

/// 3x3 rotation from a quaternion, evaluated with the unit-quaternion
/// formula applied literally to the given components.
template <typename T>
void quat_to_rot(const T* q, T r[3][3]) {
  const T w = q[0], x = q[1], y = q[2], z = q[3];
  r[0][0] = 1 - 2 * (y * y + z * z);
  r[0][1] = 2 * (x * y - w * z);
  r[0][2] = 2 * (x * z + w * y);
  r[1][0] = 2 * (x * y + w * z);
  r[1][1] = 1 - 2 * (x * x + z * z);
  r[1][2] = 2 * (y * z - w * x);
  r[2][0] = 2 * (x * z - w * y);
  r[2][1] = 2 * (y * z + w * x);
  r[2][2] = 1 - 2 * (x * x + y * y);
}

/// Sigma = R(q) diag(s^2) R(q)^T.
template <typename T>
void gaussian_covariance(const T* scale, const T* quat, T sigma[3][3]) {
  T r[3][3];
  quat_to_rot(quat, r);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      T acc = T(0);
      for (int k = 0; k < 3; ++k) acc += r[a][k] * scale[k] * scale[k] * r[b][k];
      sigma[a][b] = acc;
    }
}

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

struct ActivationConfig {
  bool offset_enabled = true;
  double offset_range_px = 1.0;
  double scale_clip = 5.0;
};

/// Turns raw per-pixel head outputs into world-space Gaussians.
/// Depth uses an inverse-depth (disparity) map of R onto (near, far);
/// centers are lifted along the (optionally offset) pixel ray; scales are
/// anchored to the pixel footprint 2*d/fx.
template <typename T>
GaussianSet<T> activate_and_lift(const GaussianRaster<T>& raster, const CameraModel& cam,
                                 const ActivationConfig& acfg = {}) {
  const int64_t h = raster.geo.dim(1), w = raster.geo.dim(2);
  if (raster.app.dim(1) != h || raster.app.dim(2) != w || raster.geo.dim(0) != 4 ||
      raster.app.dim(0) != 10)
    throw std::invalid_argument("activate_and_lift: bad raster shapes");

  const T k_disp = static_cast<T>(1.0 / cam.near - 1.0 / cam.far);
  const T inv_far = static_cast<T>(1.0 / cam.far);
  const Eigen::Matrix3d rot_t = cam.rotation().transpose();
  const Eigen::Vector3d trans = cam.translation();

  GaussianSet<T> gs;
  gs.resize(h * w);
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const int64_t g = i * w + j;

      const T sig_d = sigmoid(raster.geo.at(0, i, j));
      const T d = T(1) / (sig_d * k_disp + inv_far);

      T up = static_cast<T>(j), vp = static_cast<T>(i);
      if (acfg.offset_enabled) {
        up += std::tanh(raster.geo.at(1, i, j)) * static_cast<T>(acfg.offset_range_px);
        vp += std::tanh(raster.geo.at(2, i, j)) * static_cast<T>(acfg.offset_range_px);
      }
      const Eigen::Vector3d pc((up - cam.cx) / cam.fx * static_cast<double>(d),
                               (vp - cam.cy) / cam.fy * static_cast<double>(d),
                               static_cast<double>(d));
      const Eigen::Vector3d mu = rot_t * (pc - trans);
      for (int a = 0; a < 3; ++a) gs.mu[static_cast<size_t>(3 * g + a)] = static_cast<T>(mu[a]);

      gs.alpha[static_cast<size_t>(g)] = sigmoid(raster.geo.at(3, i, j));

      for (int c = 0; c < 3; ++c)
        gs.color[static_cast<size_t>(3 * g + c)] = sigmoid(raster.app.at(c, i, j));

      const T s_base = T(2) * d / static_cast<T>(cam.fx);
      for (int a = 0; a < 3; ++a) {
        T e = raster.app.at(3 + a, i, j);
        e = std::clamp(e, static_cast<T>(-acfg.scale_clip), static_cast<T>(acfg.scale_clip));
        gs.scale[static_cast<size_t>(3 * g + a)] = s_base * std::exp(e);
      }

      T qn = T(0);
      for (int a = 0; a < 4; ++a) {
        const T qv = raster.app.at(6 + a, i, j);
        qn += qv * qv;
      }
      qn = std::sqrt(qn);
      if (qn < T(1e-8)) {
        gs.quat[static_cast<size_t>(4 * g)] = T(1);
      } else {
        for (int a = 0; a < 4; ++a)
          gs.quat[static_cast<size_t>(4 * g + a)] = raster.app.at(6 + a, i, j) / qn;
      }
    }
  return gs;
}

/// Gradients of activate_and_lift: maps Gaussian-parameter gradients back
/// to the raw rasters.
template <typename T>
GaussianRaster<T> activate_and_lift_backward(const GaussianRaster<T>& raster,
                                             const CameraModel& cam,
                                             const GaussianGrads<T>& grads,
                                             const ActivationConfig& acfg = {}) {
  const int64_t h = raster.geo.dim(1), w = raster.geo.dim(2);
  const T k_disp = static_cast<T>(1.0 / cam.near - 1.0 / cam.far);
  const T inv_far = static_cast<T>(1.0 / cam.far);
  const Eigen::Matrix3d rot = cam.rotation();

  GaussianRaster<T> out;
  out.geo = Tensor<T>({4, h, w});
  out.app = Tensor<T>({10, h, w});

  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const int64_t g = i * w + j;

      // Recompute forward intermediates.
      const T sig_d = sigmoid(raster.geo.at(0, i, j));
      const T d = T(1) / (sig_d * k_disp + inv_far);
      T up = static_cast<T>(j), vp = static_cast<T>(i);
      T tu = T(0), tv = T(0);
      if (acfg.offset_enabled) {
        tu = std::tanh(raster.geo.at(1, i, j));
        tv = std::tanh(raster.geo.at(2, i, j));
        up += tu * static_cast<T>(acfg.offset_range_px);
        vp += tv * static_cast<T>(acfg.offset_range_px);
      }

      // mu = R^T (pc - t)  =>  dpc = R * dmu
      Eigen::Vector3d dmu(static_cast<double>(grads.mu[static_cast<size_t>(3 * g)]),
                          static_cast<double>(grads.mu[static_cast<size_t>(3 * g + 1)]),
                          static_cast<double>(grads.mu[static_cast<size_t>(3 * g + 2)]));
      const Eigen::Vector3d dpc = rot * dmu;

      T dd = static_cast<T>(dpc.z());
      dd += static_cast<T>(dpc.x()) * static_cast<T>((up - cam.cx) / cam.fx);
      dd += static_cast<T>(dpc.y()) * static_cast<T>((vp - cam.cy) / cam.fy);
      const T dup = static_cast<T>(dpc.x()) * d / static_cast<T>(cam.fx);
      const T dvp = static_cast<T>(dpc.y()) * d / static_cast<T>(cam.fy);

      if (acfg.offset_enabled) {
        out.geo.at(1, i, j) = dup * static_cast<T>(acfg.offset_range_px) * (T(1) - tu * tu);
        out.geo.at(2, i, j) = dvp * static_cast<T>(acfg.offset_range_px) * (T(1) - tv * tv);
      }

      // scale: s_a = (2 d / fx) exp(clip(e_a))
      const T s_base = T(2) * d / static_cast<T>(cam.fx);
      for (int a = 0; a < 3; ++a) {
        const T e_raw = raster.app.at(3 + a, i, j);
        const T e = std::clamp(e_raw, static_cast<T>(-acfg.scale_clip), static_cast<T>(acfg.scale_clip));
        const T expe = std::exp(e);
        const T dsa = grads.scale[static_cast<size_t>(3 * g + a)];
        if (std::fabs(static_cast<double>(e_raw)) < acfg.scale_clip)
          out.app.at(3 + a, i, j) = dsa * s_base * expe;
        dd += dsa * T(2) / static_cast<T>(cam.fx) * expe;
      }

      // depth: d = 1 / (sigmoid(raw) * k + 1/far)
      out.geo.at(0, i, j) = dd * (-k_disp * d * d) * sig_d * (T(1) - sig_d);

      const T a_val = sigmoid(raster.geo.at(3, i, j));
      out.geo.at(3, i, j) = grads.alpha[static_cast<size_t>(g)] * a_val * (T(1) - a_val);

      for (int c = 0; c < 3; ++c) {
        const T cv = sigmoid(raster.app.at(c, i, j));
        out.app.at(c, i, j) = grads.color[static_cast<size_t>(3 * g + c)] * cv * (T(1) - cv);
      }

      T qn = T(0);
      for (int a = 0; a < 4; ++a) {
        const T qv = raster.app.at(6 + a, i, j);
        qn += qv * qv;
      }
      qn = std::sqrt(qn);
      if (qn >= T(1e-8)) {
        T q[4], dot = T(0);
        for (int a = 0; a < 4; ++a) {
          q[a] = raster.app.at(6 + a, i, j) / qn;
          dot += q[a] * grads.quat[static_cast<size_t>(4 * g + a)];
        }
        for (int a = 0; a < 4; ++a)
          out.app.at(6 + a, i, j) = (grads.quat[static_cast<size_t>(4 * g + a)] - q[a] * dot) / qn;
      }
    }
  return out;
}

}  // namespace adg
