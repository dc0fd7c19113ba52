#pragma once

#include <string>
#include <vector>

#include "adg/camera.hpp"
#include "adg/tensor.hpp"

namespace adg {

/// One observation: RGB image in [0,1] (channel-first, [3,H,W]), sparse
/// metric depth in meters ([H,W], 0 = missing) and the camera it was taken
/// with.
struct Frame {
  Tensor<float> image;         // [3,H,W]
  Tensor<float> sparse_depth;  // [H,W]
  CameraModel camera;

  int height() const { return static_cast<int>(sparse_depth.dim(0)); }
  int width() const { return static_cast<int>(sparse_depth.dim(1)); }

  void validate() const;
};

struct Scene {
  std::string id;
  std::vector<Frame> frames;
  /// Synthetic scenes keep the dense depth per frame for oracle checks.
  std::vector<Tensor<float>> dense_depth;  // empty, or one [H,W] per frame
};

enum class SparsifyPattern { kScanline, kUniform };

struct SyntheticSceneConfig {
  uint64_t seed = 0;
  int n_frames = 2;
  int width = 96, height = 64;
  double lidar_density = 0.05;
  double forward_step_m = 0.15;
  int n_boxes = 6;
  int n_poles = 4;
  double ground_texture_freq = 0.35;  // cycles per meter
  SparsifyPattern pattern = SparsifyPattern::kScanline;

  void validate() const;
};

Scene generate_synthetic_scene(const SyntheticSceneConfig& cfg);

/// Drops depth samples so that roughly `density` of all pixels keep their
/// value; dropped pixels become 0. Retained values are copied verbatim.
Tensor<float> sparsify_depth(const Tensor<float>& dense, double density,
                             SparsifyPattern pattern, uint64_t seed);

}  // namespace adg
