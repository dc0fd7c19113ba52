#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "adg/gaussians.hpp"

namespace adg {

/// EWA projection of one Gaussian into a camera.
template <typename T>
struct Projected2DGaussian {
  T u = 0, v = 0;          // pixel-space mean
  T cov00 = 0, cov01 = 0, cov11 = 0;  // 2x2 covariance incl. dilation, px^2
  T z = 0;                 // camera depth, m
  T radius = 0;            // 3-sigma cull radius, px
  bool culled = true;
};

template <typename T>
struct RenderOutput {
  Tensor<T> color;  // [3,H,W]
  Tensor<T> depth;  // [H,W]
  Tensor<T> alpha;  // [H,W]
};

template <typename T>
struct RenderOutputGrad {
  Tensor<T> color, depth, alpha;  // same shapes as RenderOutput
};

enum class RenderPath { kTiled, kReference };

namespace splat_detail {
constexpr double kDilation = 0.3;       // px^2 added to both eigenvalues
constexpr double kAlphaClamp = 0.999;
constexpr double kAlphaSkip = 1.0 / 255.0;
constexpr double kTransmittanceStop = 1e-4;
constexpr int kTileSize = 16;
}  // namespace splat_detail

/// Projects Gaussian `g` (index into `gs`) into `cam`. Returns culled=true
/// for Gaussians outside (near, far) or entirely off-screen.
template <typename T>
Projected2DGaussian<T> project_gaussian(const GaussianSet<T>& gs, int64_t g,
                                        const CameraModel& cam) {
  Projected2DGaussian<T> out;
  const Eigen::Matrix3d rot = cam.rotation();
  const Eigen::Vector3d mu(static_cast<double>(gs.mu[static_cast<size_t>(3 * g)]),
                           static_cast<double>(gs.mu[static_cast<size_t>(3 * g + 1)]),
                           static_cast<double>(gs.mu[static_cast<size_t>(3 * g + 2)]));
  const Eigen::Vector3d pc = rot * mu + cam.translation();
  const double x = pc.x(), y = pc.y(), z = pc.z();
  if (z <= cam.near || z >= cam.far) return out;

  out.u = static_cast<T>(cam.fx * x / z + cam.cx);
  out.v = static_cast<T>(cam.fy * y / z + cam.cy);
  out.z = static_cast<T>(z);

  T sigma[3][3];
  gaussian_covariance(&gs.scale[static_cast<size_t>(3 * g)], &gs.quat[static_cast<size_t>(4 * g)], sigma);

  // M = W Sigma W^T in camera frame, then the perspective Jacobian chain.
  double m[3][3];
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double acc = 0;
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q)
          acc += rot(a, p) * static_cast<double>(sigma[p][q]) * rot(b, q);
      m[a][b] = acc;
    }

  const double j00 = cam.fx / z, j02 = -cam.fx * x / (z * z);
  const double j11 = cam.fy / z, j12 = -cam.fy * y / (z * z);
  // rows of J*M
  const double jm0[3] = {j00 * m[0][0] + j02 * m[2][0], j00 * m[0][1] + j02 * m[2][1],
                         j00 * m[0][2] + j02 * m[2][2]};
  const double jm1[3] = {j11 * m[1][0] + j12 * m[2][0], j11 * m[1][1] + j12 * m[2][1],
                         j11 * m[1][2] + j12 * m[2][2]};
  const double c00 = jm0[0] * j00 + jm0[2] * j02 + splat_detail::kDilation;
  const double c01 = jm1[0] * j00 + jm1[2] * j02;
  const double c11 = jm1[1] * j11 + jm1[2] * j12 + splat_detail::kDilation;

  out.cov00 = static_cast<T>(c00);
  out.cov01 = static_cast<T>(c01);
  out.cov11 = static_cast<T>(c11);

  const double mid = 0.5 * (c00 + c11);
  const double disc = std::sqrt(std::max(0.0, 0.25 * (c00 - c11) * (c00 - c11) + c01 * c01));
  out.radius = static_cast<T>(3.0 * std::sqrt(std::max(0.0, mid + disc)));

  const double r = static_cast<double>(out.radius);
  if (static_cast<double>(out.u) + r < -0.5 || static_cast<double>(out.u) - r > cam.width - 0.5 ||
      static_cast<double>(out.v) + r < -0.5 || static_cast<double>(out.v) - r > cam.height - 0.5)
    return out;

  out.culled = false;
  return out;
}

namespace splat_detail {

template <typename T>
struct Prepared {
  std::vector<Projected2DGaussian<T>> proj;   // per input Gaussian
  std::vector<T> inv00, inv01, inv11;         // inverse 2d covariance
  std::vector<int64_t> order;                 // visible Gaussians, front to back
  std::vector<std::vector<int32_t>> tile_lists;  // per tile, indices into `order`
  int tiles_x = 0, tiles_y = 0;
};

template <typename T>
Prepared<T> prepare(const GaussianSet<T>& gs, const CameraModel& cam, RenderPath path) {
  Prepared<T> prep;
  prep.proj.resize(static_cast<size_t>(gs.n));
  prep.inv00.resize(static_cast<size_t>(gs.n));
  prep.inv01.resize(static_cast<size_t>(gs.n));
  prep.inv11.resize(static_cast<size_t>(gs.n));
  for (int64_t g = 0; g < gs.n; ++g) {
    auto p = project_gaussian(gs, g, cam);
    if (!p.culled) {
      const T det = p.cov00 * p.cov11 - p.cov01 * p.cov01;
      if (det <= T(0)) {
        p.culled = true;
      } else {
        prep.inv00[static_cast<size_t>(g)] = p.cov11 / det;
        prep.inv01[static_cast<size_t>(g)] = -p.cov01 / det;
        prep.inv11[static_cast<size_t>(g)] = p.cov00 / det;
        prep.order.push_back(g);
      }
    }
    prep.proj[static_cast<size_t>(g)] = p;
  }
  std::sort(prep.order.begin(), prep.order.end(), [&](int64_t a, int64_t b) {
    const T za = prep.proj[static_cast<size_t>(a)].z, zb = prep.proj[static_cast<size_t>(b)].z;
    return za < zb || (za == zb && a < b);
  });

  if (path == RenderPath::kTiled) {
    prep.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
    prep.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
    prep.tile_lists.assign(static_cast<size_t>(prep.tiles_x * prep.tiles_y), {});
    for (size_t pos = 0; pos < prep.order.size(); ++pos) {
      const auto& p = prep.proj[static_cast<size_t>(prep.order[pos])];
      const int tx0 = std::max(0, static_cast<int>(std::floor((static_cast<double>(p.u) -
                                                               static_cast<double>(p.radius)) / kTileSize)));
      const int tx1 = std::min(prep.tiles_x - 1,
                               static_cast<int>(std::floor((static_cast<double>(p.u) +
                                                            static_cast<double>(p.radius)) / kTileSize)));
      const int ty0 = std::max(0, static_cast<int>(std::floor((static_cast<double>(p.v) -
                                                               static_cast<double>(p.radius)) / kTileSize)));
      const int ty1 = std::min(prep.tiles_y - 1,
                               static_cast<int>(std::floor((static_cast<double>(p.v) +
                                                            static_cast<double>(p.radius)) / kTileSize)));
      for (int ty = ty0; ty <= ty1; ++ty)
        for (int tx = tx0; tx <= tx1; ++tx)
          prep.tile_lists[static_cast<size_t>(ty * prep.tiles_x + tx)].push_back(static_cast<int32_t>(pos));
    }
  }
  return prep;
}

/// One blended contribution at a pixel, saved for the backward sweep.
template <typename T>
struct Contribution {
  int64_t g;
  T alpha_prime;
  T t_before;   // transmittance before this Gaussian
  T g_exp;      // exp term
  T dx, dy;
  bool clamped;
};

/// Front-to-back composit at one pixel. `candidates` are positions into
/// `prep.order`; pass nullptr to iterate all of `prep.order`.
/// Returns final transmittance; fills color/depth accumulators and,
/// optionally, the contribution list.
template <typename T>
T composite_pixel(const GaussianSet<T>& gs, const Prepared<T>& prep,
                  const std::vector<int32_t>* candidates, T px, T py, T rgb[3], T* sdepth,
                  std::vector<Contribution<T>>* contribs) {
  T trans = T(1);
  rgb[0] = rgb[1] = rgb[2] = T(0);
  *sdepth = T(0);
  const size_t count = candidates ? candidates->size() : prep.order.size();
  for (size_t k = 0; k < count; ++k) {
    const int64_t g = prep.order[candidates ? static_cast<size_t>((*candidates)[k]) : k];
    const auto& p = prep.proj[static_cast<size_t>(g)];
    const T dx = px - p.u, dy = py - p.v;
    if (dx * dx + dy * dy > p.radius * p.radius) continue;
    const T power = T(-0.5) * (prep.inv00[static_cast<size_t>(g)] * dx * dx +
                               T(2) * prep.inv01[static_cast<size_t>(g)] * dx * dy +
                               prep.inv11[static_cast<size_t>(g)] * dy * dy);
    const T g_exp = std::exp(power);
    const T raw = gs.alpha[static_cast<size_t>(g)] * g_exp;
    const bool clamped = raw > static_cast<T>(kAlphaClamp);
    const T a = clamped ? static_cast<T>(kAlphaClamp) : raw;
    if (a < static_cast<T>(kAlphaSkip)) continue;
    const T w = a * trans;
    for (int c = 0; c < 3; ++c) rgb[c] += gs.color[static_cast<size_t>(3 * g + c)] * w;
    *sdepth += p.z * w;
    if (contribs) contribs->push_back({g, a, trans, g_exp, dx, dy, clamped});
    trans *= (T(1) - a);
    if (trans < static_cast<T>(kTransmittanceStop)) break;
  }
  return trans;
}

}  // namespace splat_detail

/// Differentiable forward splat: depth-sorted front-to-back alpha
/// compositing of the Gaussian set into `cam`. Deterministic; the tiled and
/// reference paths traverse identical per-pixel sequences.
template <typename T>
RenderOutput<T> render(const GaussianSet<T>& gs, const CameraModel& cam,
                       const std::array<T, 3>& background,
                       RenderPath path = RenderPath::kTiled) {
  using namespace splat_detail;
  const int h = cam.height, w = cam.width;
  RenderOutput<T> out;
  out.color = Tensor<T>({3, h, w});
  out.depth = Tensor<T>({h, w});
  out.alpha = Tensor<T>({h, w});

  const Prepared<T> prep = prepare(gs, cam, path);

  auto do_pixel = [&](int i, int j, const std::vector<int32_t>* cands) {
    T rgb[3], sdepth;
    const T trans = composite_pixel<T>(gs, prep, cands, static_cast<T>(j), static_cast<T>(i),
                                       rgb, &sdepth, nullptr);
    const T a = T(1) - trans;
    for (int c = 0; c < 3; ++c) out.color.at(c, i, j) = rgb[c] + background[static_cast<size_t>(c)] * trans;
    out.alpha.at(i, j) = a;
    out.depth.at(i, j) = sdepth / std::max(a, T(1e-6));
  };

  if (path == RenderPath::kTiled) {
    for (int ty = 0; ty < prep.tiles_y; ++ty)
      for (int tx = 0; tx < prep.tiles_x; ++tx) {
        const auto& list = prep.tile_lists[static_cast<size_t>(ty * prep.tiles_x + tx)];
        const int i1 = std::min(h, (ty + 1) * kTileSize), j1 = std::min(w, (tx + 1) * kTileSize);
        for (int i = ty * kTileSize; i < i1; ++i)
          for (int j = tx * kTileSize; j < j1; ++j) do_pixel(i, j, &list);
      }
  } else {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) do_pixel(i, j, nullptr);
  }
  return out;
}

/// Exact gradients of `render` w.r.t. all Gaussian parameters. Culled and
/// skipped Gaussians receive zero gradient.
template <typename T>
GaussianGrads<T> render_backward(const GaussianSet<T>& gs, const CameraModel& cam,
                                 const std::array<T, 3>& background,
                                 const RenderOutputGrad<T>& grad,
                                 RenderPath path = RenderPath::kTiled) {
  using namespace splat_detail;
  const int h = cam.height, w = cam.width;
  const Prepared<T> prep = prepare(gs, cam, path);

  GaussianGrads<T> out(gs.n);
  // Screen-space accumulators per Gaussian.
  std::vector<T> du(static_cast<size_t>(gs.n), T(0)), dv(static_cast<size_t>(gs.n), T(0));
  std::vector<T> dz(static_cast<size_t>(gs.n), T(0));
  std::vector<T> dc00(static_cast<size_t>(gs.n), T(0)), dc01(static_cast<size_t>(gs.n), T(0)),
      dc11(static_cast<size_t>(gs.n), T(0));

  std::vector<Contribution<T>> contribs;
  auto do_pixel = [&](int i, int j, const std::vector<int32_t>* cands) {
    contribs.clear();
    T rgb[3], sdepth;
    const T t_end = composite_pixel<T>(gs, prep, cands, static_cast<T>(j), static_cast<T>(i),
                                       rgb, &sdepth, &contribs);
    const T alpha_px = T(1) - t_end;
    const T a_den = std::max(alpha_px, T(1e-6));

    const T g_color[3] = {grad.color.at(0, i, j), grad.color.at(1, i, j), grad.color.at(2, i, j)};
    const T g_alpha_out = grad.alpha.at(i, j);
    const T g_depth = grad.depth.at(i, j);

    const T d_sdepth = g_depth / a_den;
    T d_alpha_total = g_alpha_out;
    if (alpha_px > T(1e-6)) d_alpha_total -= g_depth * sdepth / (a_den * a_den);
    const T q_tend = background[0] * g_color[0] + background[1] * g_color[1] +
                     background[2] * g_color[2] - d_alpha_total;

    // Back-to-front sweep with a suffix accumulator of w_j * P_j.
    T suffix = t_end * q_tend;
    for (int64_t k = static_cast<int64_t>(contribs.size()) - 1; k >= 0; --k) {
      const auto& c = contribs[static_cast<size_t>(k)];
      const size_t g = static_cast<size_t>(c.g);
      const auto& p = prep.proj[g];
      const T wgt = c.alpha_prime * c.t_before;

      const T pi = gs.color[3 * g] * g_color[0] + gs.color[3 * g + 1] * g_color[1] +
                   gs.color[3 * g + 2] * g_color[2] + p.z * d_sdepth;

      for (int cc = 0; cc < 3; ++cc) out.color[3 * g + cc] += wgt * g_color[cc];
      dz[g] += wgt * d_sdepth;

      const T d_alpha_prime = c.t_before * pi - suffix / (T(1) - c.alpha_prime);
      suffix += wgt * pi;

      if (c.clamped) continue;  // min() clamp kills the gradient
      out.alpha[g] += c.g_exp * d_alpha_prime;
      const T d_gexp = gs.alpha[g] * d_alpha_prime;
      const T d_power = d_gexp * c.g_exp;

      const T a00 = prep.inv00[g], a01 = prep.inv01[g], a11 = prep.inv11[g];
      const T ddx = d_power * (-(a00 * c.dx + a01 * c.dy));
      const T ddy = d_power * (-(a01 * c.dx + a11 * c.dy));
      du[g] -= ddx;
      dv[g] -= ddy;

      // Gradient w.r.t. the inverse covariance, then to cov2d via
      // dC = -A * dA * A (A symmetric).
      const T ga00 = d_power * (T(-0.5) * c.dx * c.dx);
      const T ga01 = d_power * (T(-0.5) * c.dx * c.dy);  // per matrix entry; pair doubles it
      const T ga11 = d_power * (T(-0.5) * c.dy * c.dy);
      // G_C = -A * G_A * A with G_A = [[ga00, ga01],[ga01, ga11]]
      const T t00 = a00 * ga00 + a01 * ga01, t01 = a00 * ga01 + a01 * ga11;
      const T t10 = a01 * ga00 + a11 * ga01, t11 = a01 * ga01 + a11 * ga11;
      const T gc00 = -(t00 * a00 + t01 * a01);
      const T gc01 = -(t00 * a01 + t01 * a11);
      const T gc10 = -(t10 * a00 + t11 * a01);
      const T gc11 = -(t10 * a01 + t11 * a11);
      dc00[g] += gc00;
      dc01[g] += gc01 + gc10;
      dc11[g] += gc11;
    }
  };

  if (path == RenderPath::kTiled) {
    for (int ty = 0; ty < prep.tiles_y; ++ty)
      for (int tx = 0; tx < prep.tiles_x; ++tx) {
        const auto& list = prep.tile_lists[static_cast<size_t>(ty * prep.tiles_x + tx)];
        const int i1 = std::min(h, (ty + 1) * kTileSize), j1 = std::min(w, (tx + 1) * kTileSize);
        for (int i = ty * kTileSize; i < i1; ++i)
          for (int j = tx * kTileSize; j < j1; ++j) do_pixel(i, j, &list);
      }
  } else {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) do_pixel(i, j, nullptr);
  }

  // Chain screen-space gradients through the EWA projection per Gaussian.
  const Eigen::Matrix3d rot = cam.rotation();
  for (int64_t g = 0; g < gs.n; ++g) {
    const auto& p = prep.proj[static_cast<size_t>(g)];
    if (p.culled) continue;
    const size_t gi = static_cast<size_t>(g);

    const Eigen::Vector3d mu(static_cast<double>(gs.mu[3 * gi]), static_cast<double>(gs.mu[3 * gi + 1]),
                             static_cast<double>(gs.mu[3 * gi + 2]));
    const Eigen::Vector3d pc = rot * mu + cam.translation();
    const double x = pc.x(), y = pc.y(), z = pc.z();

    T sigma[3][3];
    gaussian_covariance(&gs.scale[3 * gi], &gs.quat[4 * gi], sigma);
    Eigen::Matrix3d m;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double acc = 0;
        for (int pp = 0; pp < 3; ++pp)
          for (int qq = 0; qq < 3; ++qq)
            acc += rot(a, pp) * static_cast<double>(sigma[pp][qq]) * rot(b, qq);
        m(a, b) = acc;
      }

    Eigen::Matrix<double, 2, 3> jac = Eigen::Matrix<double, 2, 3>::Zero();
    jac(0, 0) = cam.fx / z;
    jac(0, 2) = -cam.fx * x / (z * z);
    jac(1, 1) = cam.fy / z;
    jac(1, 2) = -cam.fy * y / (z * z);

    Eigen::Matrix2d gc;
    gc << static_cast<double>(dc00[gi]), 0.5 * static_cast<double>(dc01[gi]),
        0.5 * static_cast<double>(dc01[gi]), static_cast<double>(dc11[gi]);

    const Eigen::Matrix3d gm = jac.transpose() * gc * jac;
    const Eigen::Matrix3d gsigma = rot.transpose() * gm * rot;
    const Eigen::Matrix<double, 2, 3> gjac = 2.0 * gc * jac * m;

    double dx_c = 0, dy_c = 0, dz_c = static_cast<double>(dz[gi]);
    dx_c += gjac(0, 2) * (-cam.fx / (z * z));
    dy_c += gjac(1, 2) * (-cam.fy / (z * z));
    dz_c += gjac(0, 0) * (-cam.fx / (z * z)) + gjac(1, 1) * (-cam.fy / (z * z)) +
            gjac(0, 2) * (2.0 * cam.fx * x / (z * z * z)) +
            gjac(1, 2) * (2.0 * cam.fy * y / (z * z * z));

    dx_c += static_cast<double>(du[gi]) * cam.fx / z;
    dz_c += static_cast<double>(du[gi]) * (-cam.fx * x / (z * z));
    dy_c += static_cast<double>(dv[gi]) * cam.fy / z;
    dz_c += static_cast<double>(dv[gi]) * (-cam.fy * y / (z * z));

    const Eigen::Vector3d dmu = rot.transpose() * Eigen::Vector3d(dx_c, dy_c, dz_c);
    for (int a = 0; a < 3; ++a) out.mu[3 * gi + static_cast<size_t>(a)] += static_cast<T>(dmu[a]);

    // Sigma = Rq diag(s^2) Rq^T
    T rq[3][3];
    quat_to_rot(&gs.quat[4 * gi], rq);
    for (int k = 0; k < 3; ++k) {
      double dkk = 0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) dkk += static_cast<double>(rq[a][k]) * gsigma(a, b) * static_cast<double>(rq[b][k]);
      out.scale[3 * gi + static_cast<size_t>(k)] +=
          static_cast<T>(2.0 * static_cast<double>(gs.scale[3 * gi + static_cast<size_t>(k)]) * dkk);
    }

    // dL/dRq = 2 * G_Sigma * Rq * diag(s^2)
    Eigen::Matrix3d rq_e;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) rq_e(a, b) = static_cast<double>(rq[a][b]);
    Eigen::Matrix3d d2 = Eigen::Matrix3d::Zero();
    for (int k = 0; k < 3; ++k)
      d2(k, k) = static_cast<double>(gs.scale[3 * gi + static_cast<size_t>(k)]) *
                 static_cast<double>(gs.scale[3 * gi + static_cast<size_t>(k)]);
    const Eigen::Matrix3d grq = 2.0 * gsigma * rq_e * d2;

    const double qw = static_cast<double>(gs.quat[4 * gi]);
    const double qx = static_cast<double>(gs.quat[4 * gi + 1]);
    const double qy = static_cast<double>(gs.quat[4 * gi + 2]);
    const double qz = static_cast<double>(gs.quat[4 * gi + 3]);
    Eigen::Matrix3d dr[4];
    dr[0] << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
    dr[1] << 0, qy, qz, qy, -2 * qx, -qw, qz, qw, -2 * qx;
    dr[2] << -2 * qy, qx, qw, qx, 0, qz, -qw, qz, -2 * qy;
    dr[3] << -2 * qz, -qw, qx, qw, -2 * qz, qy, qx, qy, 0;
    for (int k = 0; k < 4; ++k)
      out.quat[4 * gi + static_cast<size_t>(k)] +=
          static_cast<T>(2.0 * (grq.array() * dr[static_cast<size_t>(k)].array()).sum());
  }
  return out;
}

}  // namespace adg
