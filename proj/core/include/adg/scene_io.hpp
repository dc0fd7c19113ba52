#pragma once

#include <filesystem>
#include <string>

#include "adg/scene.hpp"

namespace adg {

/// Raised for malformed files; message carries the offending path.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 8-bit RGB PNG. `image` is [3,H,W] in [0,1]; values are quantized with
/// round(v*255) on write.
void write_png(const std::filesystem::path& path, const Tensor<float>& image);
Tensor<float> read_png(const std::filesystem::path& path);

/// ADGD raster: magic "ADGD", little-endian u32 width, u32 height, then
/// width*height row-major little-endian float32.
void write_adgd(const std::filesystem::path& path, const Tensor<float>& raster);
Tensor<float> read_adgd(const std::filesystem::path& path);

void write_camera_json(const std::filesystem::path& path, const CameraModel& cam);
CameraModel read_camera_json(const std::filesystem::path& path);

/// Scene directory layout:
///   <root>/<id>/frames/NNNN.image.png
///   <root>/<id>/frames/NNNN.depth.adgd
///   <root>/<id>/frames/NNNN.camera.json
///   <root>/<id>/frames/NNNN.dense_depth.adgd   (optional)
void save_scene(const Scene& scene, const std::filesystem::path& root);
Scene load_scene(const std::filesystem::path& scene_dir);

/// Loads every scene directory directly under `root`, sorted by id.
std::vector<Scene> load_scenes(const std::filesystem::path& root);

}  // namespace adg
