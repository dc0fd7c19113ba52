#pragma once

#include <iomanip>
#include <ostream>

#include "adg/model.hpp"
#include "adg/scene.hpp"

namespace adg {

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0;
  int64_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;

  double max_rel_err() const {
    double m = 0;
    for (const auto& g : groups) m = std::max(m, g.max_rel_err);
    return m;
  }
  bool pass(double tol = 1e-3) const { return max_rel_err() <= tol; }

  void print(std::ostream& os) const {
    for (const auto& g : groups)
      os << std::left << std::setw(12) << g.name << " max rel err "
         << std::scientific << std::setprecision(3) << g.max_rel_err << "  (" << g.checked
         << " entries)\n";
  }
};

namespace gradcheck_detail {

inline double rel_err(double analytic, double fd) {
  const double mag = std::max(std::fabs(analytic), std::fabs(fd));
  if (mag < 1e-7) return 0.0;  // both effectively zero
  return std::fabs(analytic - fd) / mag;
}

/// Central finite difference of a scalar function along one coordinate.
template <typename F>
double central_fd(double& slot, F&& f, double step = 1e-5) {
  const double saved = slot;
  const double h = step * std::max(1.0, std::fabs(saved));
  slot = saved + h;
  const double fp = f();
  slot = saved - h;
  const double fm = f();
  slot = saved;
  return (fp - fm) / (2.0 * h);
}

/// Central finite difference that validates itself against a smaller step.
/// The objective contains |.| kinks (edge-aware smoothness) and hard skip
/// thresholds; where the two step sizes disagree the coordinate sits on a
/// non-smooth point and no meaningful derivative exists, so it is skipped.
template <typename F>
bool robust_fd(double& slot, F&& f, double* fd_out) {
  const double fd1 = central_fd(slot, f, 1e-5);
  const double fd2 = central_fd(slot, f, 1e-5 / 8.0);
  const double mag = std::max({std::fabs(fd1), std::fabs(fd2), 1e-6});
  if (std::fabs(fd1 - fd2) > 1e-4 * mag) return false;
  *fd_out = fd2;
  return true;
}

inline CameraModel tiny_camera(int h, int w) {
  CameraModel cam;
  cam.width = w;
  cam.height = h;
  cam.fx = cam.fy = static_cast<double>(w);
  cam.cx = (w - 1) / 2.0;
  cam.cy = (h - 1) / 2.0;
  cam.near = 0.05;
  cam.far = 50.0;
  return cam;
}

inline GaussianSet<double> random_gaussians(Rng& rng, int64_t n, const CameraModel& cam) {
  GaussianSet<double> gs;
  gs.resize(n);
  for (int64_t g = 0; g < n; ++g) {
    const double u = rng.uniform(0.0, cam.width - 1.0);
    const double v = rng.uniform(0.0, cam.height - 1.0);
    const double d = rng.uniform(1.0, 6.0);
    const Eigen::Vector3d p = unproject(u, v, d, cam);
    for (int a = 0; a < 3; ++a) gs.mu[static_cast<size_t>(3 * g + a)] = p[a];
    gs.alpha[static_cast<size_t>(g)] = rng.uniform(0.2, 0.8);
    const double base = 2.0 * d / cam.fx;
    for (int a = 0; a < 3; ++a)
      gs.scale[static_cast<size_t>(3 * g + a)] = base * std::exp(rng.uniform(-0.5, 0.8));
    double q[4], qn = 0;
    for (int a = 0; a < 4; ++a) {
      q[a] = rng.normal();
      qn += q[a] * q[a];
    }
    qn = std::sqrt(qn);
    for (int a = 0; a < 4; ++a) gs.quat[static_cast<size_t>(4 * g + a)] = q[a] / qn;
    for (int a = 0; a < 3; ++a) gs.color[static_cast<size_t>(3 * g + a)] = rng.uniform(0.1, 0.9);
  }
  return gs;
}

}  // namespace gradcheck_detail

/// Verifies render_backward against central finite differences on a small
/// random scene. The objective is a fixed random linear functional of the
/// color, depth and alpha outputs. `corrupt` deliberately biases one
/// gradient group (test fixture for the failure path).
inline GradCheckReport grad_check_renderer(uint64_t seed, int h = 8, int w = 8,
                                           int64_t n_gaussians = 10, bool corrupt = false) {
  using namespace gradcheck_detail;
  Rng rng(seed);
  const CameraModel cam = tiny_camera(h, w);
  GaussianSet<double> gs = random_gaussians(rng, n_gaussians, cam);
  const std::array<double, 3> bg = {rng.uniform(), rng.uniform(), rng.uniform()};

  RenderOutputGrad<double> up;
  up.color = Tensor<double>({3, h, w});
  up.depth = Tensor<double>({h, w});
  up.alpha = Tensor<double>({h, w});
  for (auto& v : up.color.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : up.depth.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : up.alpha.data) v = rng.uniform(-1.0, 1.0);

  auto objective = [&]() {
    const auto out = render(gs, cam, bg, RenderPath::kReference);
    double f = 0;
    for (int64_t i = 0; i < out.color.numel(); ++i) f += up.color[i] * out.color[i];
    for (int64_t i = 0; i < out.depth.numel(); ++i) f += up.depth[i] * out.depth[i];
    for (int64_t i = 0; i < out.alpha.numel(); ++i) f += up.alpha[i] * out.alpha[i];
    return f;
  };

  GaussianGrads<double> an = render_backward(gs, cam, bg, up, RenderPath::kReference);
  if (corrupt)
    for (auto& v : an.alpha) v *= 1.02;

  GradCheckReport rep;
  auto check_group = [&](const char* name, std::vector<double>& params,
                         const std::vector<double>& analytic) {
    GradCheckGroup grp{name, 0.0, 0};
    for (size_t i = 0; i < params.size(); ++i) {
      const double fd = central_fd(params[i], objective);
      grp.max_rel_err = std::max(grp.max_rel_err, rel_err(analytic[i], fd));
      ++grp.checked;
    }
    rep.groups.push_back(grp);
  };
  check_group("mu", gs.mu, an.mu);
  check_group("alpha", gs.alpha, an.alpha);
  check_group("scale", gs.scale, an.scale);
  check_group("quat", gs.quat, an.quat);
  check_group("color", gs.color, an.color);
  return rep;
}

/// Verifies the fused lift + splat + loss backward on rasters produced by a
/// real (randomly initialized) model forward pass, plus the loss gradients
/// w.r.t. the rendered color/depth. Entries are subsampled with a fixed
/// stride for runtime.
inline GradCheckReport grad_check_pipeline(uint64_t seed, int h = 32, int w = 48,
                                           int64_t samples_per_group = 48,
                                           bool corrupt = false) {
  using namespace gradcheck_detail;

  SyntheticSceneConfig scfg;
  scfg.seed = seed;
  scfg.width = w;
  scfg.height = h;
  const Scene scene = generate_synthetic_scene(scfg);
  const Frame& src = scene.frames[0];
  const Frame& target = scene.frames[1];

  ModelConfig<double> mcfg;
  mcfg.init_seed = seed + 1;
  Model<double> model(mcfg);
  Tape<double> tape;
  const auto raw = model.forward_raw(tape, src);
  GaussianRaster<double> raster{tape.val(raw.geo), tape.val(raw.app)};

  const CameraModel cam = target.camera;
  const ActivationConfig acfg = model.config().activation;
  const std::array<double, 3> bg = model.config().background;
  const Tensor<double> gt = target.image.cast<double>();
  LossConfig<double> lcfg;

  auto objective = [&]() {
    const auto gs = activate_and_lift(raster, cam, acfg);
    const auto out = render(gs, cam, bg, RenderPath::kTiled);
    return static_cast<double>(total_loss(out, gt, lcfg).total);
  };

  // Analytic chain: loss -> render -> activation.
  const auto gs0 = activate_and_lift(raster, cam, acfg);
  const auto out0 = render(gs0, cam, bg, RenderPath::kTiled);
  RenderOutputGrad<double> rgrads;
  total_loss(out0, gt, lcfg, &rgrads);
  const auto ggrads = render_backward(gs0, cam, bg, rgrads, RenderPath::kTiled);
  GaussianRaster<double> an = activate_and_lift_backward(raster, cam, ggrads, acfg);
  if (corrupt)
    for (auto& v : an.geo.data) v *= 1.02;

  GradCheckReport rep;
  auto check_raster = [&](const char* name, Tensor<double>& params, const Tensor<double>& analytic) {
    GradCheckGroup grp{name, 0.0, 0};
    const int64_t stride = std::max<int64_t>(1, params.numel() / samples_per_group);
    for (int64_t i = 0; i < params.numel(); i += stride) {
      double fd;
      if (!robust_fd(params[i], objective, &fd)) continue;
      grp.max_rel_err = std::max(grp.max_rel_err, rel_err(analytic[i], fd));
      ++grp.checked;
    }
    rep.groups.push_back(grp);
  };
  check_raster("raw_geo", raster.geo, an.geo);
  check_raster("raw_app", raster.app, an.app);

  // Loss inputs: d(total)/d(rendered color, depth) vs finite differences of
  // total_loss alone.
  RenderOutput<double> out = out0;
  auto loss_only = [&]() { return static_cast<double>(total_loss(out, gt, lcfg).total); };
  auto check_loss_input = [&](const char* name, Tensor<double>& params,
                              const Tensor<double>& analytic) {
    GradCheckGroup grp{name, 0.0, 0};
    const int64_t stride = std::max<int64_t>(1, params.numel() / samples_per_group);
    for (int64_t i = 0; i < params.numel(); i += stride) {
      double fd;
      if (!robust_fd(params[i], loss_only, &fd)) continue;
      grp.max_rel_err = std::max(grp.max_rel_err, rel_err(analytic[i], fd));
      ++grp.checked;
    }
    rep.groups.push_back(grp);
  };
  check_loss_input("loss_color", out.color, rgrads.color);
  check_loss_input("loss_depth", out.depth, rgrads.depth);
  return rep;
}

}  // namespace adg
