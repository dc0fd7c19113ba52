#include <algorithm>
#include <cmath>
#include <limits>

#include "adg/rng.hpp"
#include "adg/scene.hpp"

namespace adg {

void SyntheticSceneConfig::validate() const {
  if (!(lidar_density > 0.0 && lidar_density <= 1.0))
    throw std::invalid_argument("SyntheticSceneConfig: lidar_density must be in (0,1]");
  if (n_frames < 2) throw std::invalid_argument("SyntheticSceneConfig: n_frames must be >= 2");
  if (width < 8 || height < 8) throw std::invalid_argument("SyntheticSceneConfig: resolution too small");
  if (!(forward_step_m > 0)) throw std::invalid_argument("SyntheticSceneConfig: forward_step_m must be > 0");
}

namespace {

struct Box {
  Eigen::Vector3d lo, hi;
  Eigen::Vector3d base_color;
  double tex_freq;
};

struct SceneGeometry {
  double ground_y;          // world y of the ground plane (y points down)
  Eigen::Vector3d ground_color;
  double ground_freq;
  std::vector<Box> boxes;
};

// Slab intersection; returns entry parameter or +inf.
double intersect_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Box& b) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::fabs(d[a]) < 1e-12) {
      if (o[a] < b.lo[a] || o[a] > b.hi[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double ta = (b.lo[a] - o[a]) / d[a];
    double tb = (b.hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 < t0 || t1 < 0) return std::numeric_limits<double>::infinity();
  return t0 > 0 ? t0 : std::numeric_limits<double>::infinity();
}

double smooth_wave(double x) { return 0.5 + 0.5 * std::sin(2.0 * M_PI * x); }

SceneGeometry build_geometry(const SyntheticSceneConfig& cfg, Rng& rng) {
  SceneGeometry geo;
  geo.ground_y = 1.5;
  geo.ground_color = {0.36, 0.34, 0.30};
  geo.ground_freq = cfg.ground_texture_freq;

  for (int k = 0; k < cfg.n_boxes; ++k) {
    Box b;
    const double side = rng.uniform(0.6, 2.4);
    const double h = rng.uniform(0.8, 3.0);
    const double x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.8, 7.0);
    const double z = rng.uniform(5.0, 26.0);
    b.lo = {x - side / 2, geo.ground_y - h, z - side / 2};
    b.hi = {x + side / 2, geo.ground_y, z + side / 2};
    b.base_color = {rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9)};
    b.tex_freq = rng.uniform(0.2, 0.8);
    geo.boxes.push_back(b);
  }
  for (int k = 0; k < cfg.n_poles; ++k) {
    Box b;
    const double w = 0.14;
    const double h = rng.uniform(3.0, 5.0);
    const double x = (k % 2 == 0 ? -1.0 : 1.0) * rng.uniform(2.2, 5.0);
    const double z = rng.uniform(4.0, 28.0);
    b.lo = {x - w / 2, geo.ground_y - h, z - w / 2};
    b.hi = {x + w / 2, geo.ground_y, z + w / 2};
    b.base_color = {0.55, 0.55, 0.6};
    b.tex_freq = 1.2;
    geo.boxes.push_back(b);
  }
  return geo;
}

// Camera-space z of the nearest hit plus its shaded color. Returns 0 depth
// when the ray escapes to the sky.
double cast_ray(const SceneGeometry& geo, const Eigen::Vector3d& origin,
                const Eigen::Vector3d& dir_world, Eigen::Vector3d* color) {
  double best_t = std::numeric_limits<double>::infinity();
  int best = -1;  // -1 none, -2 ground

  if (dir_world.y() > 1e-9) {
    const double t = (geo.ground_y - origin.y()) / dir_world.y();
    if (t > 0 && t < best_t) {
      best_t = t;
      best = -2;
    }
  }
  for (size_t k = 0; k < geo.boxes.size(); ++k) {
    const double t = intersect_box(origin, dir_world, geo.boxes[k]);
    if (t < best_t) {
      best_t = t;
      best = static_cast<int>(k);
    }
  }

  if (best == -1) {
    const double g = std::clamp(0.5 - dir_world.y(), 0.0, 1.0);
    *color = {0.45 + 0.3 * g, 0.55 + 0.3 * g, 0.75 + 0.2 * g};
    return 0.0;
  }

  const Eigen::Vector3d p = origin + best_t * dir_world;
  if (best == -2) {
    const double w = smooth_wave(geo.ground_freq * p.x()) * smooth_wave(geo.ground_freq * p.z());
    *color = geo.ground_color * (0.7 + 0.5 * w);
  } else {
    const Box& b = geo.boxes[static_cast<size_t>(best)];
    const double w = smooth_wave(b.tex_freq * (p.x() + p.z())) * 0.5 + smooth_wave(b.tex_freq * p.y()) * 0.5;
    *color = b.base_color * (0.6 + 0.55 * w);
  }
  for (int c = 0; c < 3; ++c) (*color)[c] = std::clamp((*color)[c], 0.0, 1.0);
  return best_t;  // dir_world maps camera-space (.,.,1), so t equals camera z
}

}  // namespace

Tensor<float> sparsify_depth(const Tensor<float>& dense, double density,
                             SparsifyPattern pattern, uint64_t seed) {
  if (!(density > 0.0 && density <= 1.0))
    throw std::invalid_argument("sparsify_depth: density must be in (0,1]");
  if (density == 1.0) return dense;
  const int64_t h = dense.dim(0), w = dense.dim(1);
  Tensor<float> out({h, w});

  if (pattern == SparsifyPattern::kScanline) {
    // Evenly spaced full rows; a fractional remainder becomes one partial
    // row with evenly spaced columns so the retained fraction stays exact.
    const double rows_f = density * static_cast<double>(h);
    const int64_t nfull = static_cast<int64_t>(rows_f);
    const double frac = rows_f - static_cast<double>(nfull);
    const int64_t nrows = nfull + (frac > 1e-12 ? 1 : 0);
    for (int64_t k = 0; k < nrows; ++k) {
      const int64_t r = static_cast<int64_t>((static_cast<double>(k) + 0.5) * static_cast<double>(h) /
                                             static_cast<double>(nrows));
      if (k < nfull) {
        for (int64_t j = 0; j < w; ++j) out.at(r, j) = dense.at(r, j);
      } else {
        const int64_t ncols = std::llround(frac * static_cast<double>(w));
        for (int64_t m = 0; m < ncols; ++m) {
          const int64_t j = static_cast<int64_t>((static_cast<double>(m) + 0.5) * static_cast<double>(w) /
                                                 static_cast<double>(ncols));
          out.at(r, j) = dense.at(r, j);
        }
      }
    }
  } else {
    const int64_t n = h * w;
    const int64_t keep = std::llround(density * static_cast<double>(n));
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    Rng rng(seed ^ 0x5eedf00dULL);
    for (int64_t i = 0; i < keep; ++i) {
      const int64_t j = i + rng.uniform_int(n - i);
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
      out[idx[static_cast<size_t>(i)]] = dense[idx[static_cast<size_t>(i)]];
    }
  }
  return out;
}

Scene generate_synthetic_scene(const SyntheticSceneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const SceneGeometry geo = build_geometry(cfg, rng);

  Scene scene;
  scene.id = "scene_" + std::to_string(cfg.seed);

  CameraModel base;
  base.width = cfg.width;
  base.height = cfg.height;
  base.fx = base.fy = 0.95 * cfg.width;
  base.cx = cfg.width / 2.0 - 0.5;
  base.cy = cfg.height / 2.0 - 0.5;
  base.near = 0.5;
  base.far = 60.0;

  for (int f = 0; f < cfg.n_frames; ++f) {
    const double yaw = rng.uniform(-0.008, 0.008);
    const Eigen::Vector3d center(0.0, 0.0, cfg.forward_step_m * f);

    Frame frame;
    frame.camera = base;
    frame.camera.w2c = look_pose(center, yaw, 0.0);
    frame.image = Tensor<float>({3, cfg.height, cfg.width});
    Tensor<float> dense({cfg.height, cfg.width});

    const Eigen::Matrix3d c2w_rot = frame.camera.rotation().transpose();
    for (int i = 0; i < cfg.height; ++i)
      for (int j = 0; j < cfg.width; ++j) {
        const Eigen::Vector3d dir_cam((j - base.cx) / base.fx, (i - base.cy) / base.fy, 1.0);
        Eigen::Vector3d color;
        const double z = cast_ray(geo, center, c2w_rot * dir_cam, &color);
        dense.at(i, j) = (z > base.near && z < base.far) ? static_cast<float>(z) : 0.f;
        for (int c = 0; c < 3; ++c)
          frame.image.at(c, i, j) =
              static_cast<float>(std::lround(color[c] * 255.0)) / 255.f;  // pre-quantized for PNG
      }

    frame.sparse_depth = sparsify_depth(dense, cfg.lidar_density, cfg.pattern, cfg.seed + 1000 + static_cast<uint64_t>(f));
    scene.dense_depth.push_back(std::move(dense));
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

}  // namespace adg
