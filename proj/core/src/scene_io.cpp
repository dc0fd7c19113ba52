#include "adg/scene_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

namespace adg {

static_assert(std::endian::native == std::endian::little,
              "ADGD/ADGC readers assume a little-endian host");

namespace {

constexpr char kAdgdMagic[4] = {'A', 'D', 'G', 'D'};

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::string frame_stem(int index) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

void Frame::validate() const {
  camera.validate();
  if (image.ndim() != 3 || image.dim(0) != 3 || sparse_depth.ndim() != 2)
    throw std::invalid_argument("Frame: bad raster rank");
  if (image.dim(1) != sparse_depth.dim(0) || image.dim(2) != sparse_depth.dim(1) ||
      sparse_depth.dim(0) != camera.height || sparse_depth.dim(1) != camera.width)
    throw std::invalid_argument("Frame: raster/camera size mismatch");
  for (float v : image.data)
    if (!(v >= 0.f && v <= 1.f)) throw std::invalid_argument("Frame: image value outside [0,1]");
  for (float d : sparse_depth.data)
    if (d != 0.f && !(d > camera.near && d < camera.far))
      throw std::invalid_argument("Frame: depth value outside (near, far)");
}

void write_adgd(const std::filesystem::path& path, const Tensor<float>& raster) {
  if (raster.ndim() != 2) throw std::invalid_argument("write_adgd: expected [H,W] tensor");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_adgd: cannot open " + path.string());
  const uint32_t w = static_cast<uint32_t>(raster.dim(1));
  const uint32_t h = static_cast<uint32_t>(raster.dim(0));
  out.write(kAdgdMagic, 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(raster.data.data()),
            static_cast<std::streamsize>(raster.data.size() * sizeof(float)));
  if (!out) throw FormatError("write_adgd: short write on " + path.string());
}

Tensor<float> read_adgd(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("read_adgd: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kAdgdMagic, 4) != 0)
    throw FormatError("read_adgd: bad magic in " + path.string());
  const uint32_t w = read_u32(in);
  const uint32_t h = read_u32(in);
  if (!in || w == 0 || h == 0 || static_cast<uint64_t>(w) * h > (1ull << 30))
    throw FormatError("read_adgd: bad header in " + path.string());
  Tensor<float> raster({static_cast<int64_t>(h), static_cast<int64_t>(w)});
  in.read(reinterpret_cast<char*>(raster.data.data()),
          static_cast<std::streamsize>(raster.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(raster.data.size() * sizeof(float)))
    throw FormatError("read_adgd: truncated payload in " + path.string());
  return raster;
}

void write_camera_json(const std::filesystem::path& path, const CameraModel& cam) {
  nlohmann::json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["near"] = cam.near;
  j["far"] = cam.far;
  std::vector<double> w2c(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) w2c[static_cast<size_t>(r * 4 + c)] = cam.w2c(r, c);
  j["w2c"] = w2c;
  std::ofstream out(path);
  if (!out) throw FormatError("write_camera_json: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

CameraModel read_camera_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("read_camera_json: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("read_camera_json: parse error in " + path.string() + ": " + e.what());
  }
  CameraModel cam;
  try {
    cam.fx = j.at("fx");
    cam.fy = j.at("fy");
    cam.cx = j.at("cx");
    cam.cy = j.at("cy");
    cam.width = j.at("width");
    cam.height = j.at("height");
    cam.near = j.at("near");
    cam.far = j.at("far");
    const auto w2c = j.at("w2c").get<std::vector<double>>();
    if (w2c.size() != 16) throw FormatError("read_camera_json: w2c must have 16 numbers: " + path.string());
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) cam.w2c(r, c) = w2c[static_cast<size_t>(r * 4 + c)];
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("read_camera_json: missing/bad key in " + path.string() + ": " + e.what());
  }
  cam.validate();
  return cam;
}

void save_scene(const Scene& scene, const std::filesystem::path& root) {
  const auto frames_dir = root / scene.id / "frames";
  std::filesystem::create_directories(frames_dir);
  for (size_t i = 0; i < scene.frames.size(); ++i) {
    const Frame& f = scene.frames[i];
    const std::string stem = frame_stem(static_cast<int>(i));
    write_png(frames_dir / (stem + ".image.png"), f.image);
    write_adgd(frames_dir / (stem + ".depth.adgd"), f.sparse_depth);
    write_camera_json(frames_dir / (stem + ".camera.json"), f.camera);
    if (i < scene.dense_depth.size())
      write_adgd(frames_dir / (stem + ".dense_depth.adgd"), scene.dense_depth[i]);
  }
}

Scene load_scene(const std::filesystem::path& scene_dir) {
  Scene scene;
  scene.id = scene_dir.filename().string();
  const auto frames_dir = scene_dir / "frames";
  if (!std::filesystem::is_directory(frames_dir))
    throw FormatError("load_scene: no frames directory in " + scene_dir.string());

  for (int i = 0;; ++i) {
    const std::string stem = frame_stem(i);
    const auto img_path = frames_dir / (stem + ".image.png");
    if (!std::filesystem::exists(img_path)) break;
    Frame f;
    f.image = read_png(img_path);
    f.sparse_depth = read_adgd(frames_dir / (stem + ".depth.adgd"));
    f.camera = read_camera_json(frames_dir / (stem + ".camera.json"));
    f.validate();
    const auto dense_path = frames_dir / (stem + ".dense_depth.adgd");
    if (std::filesystem::exists(dense_path)) scene.dense_depth.push_back(read_adgd(dense_path));
    scene.frames.push_back(std::move(f));
  }
  if (scene.frames.empty()) throw FormatError("load_scene: no frames found in " + scene_dir.string());
  if (!scene.dense_depth.empty() && scene.dense_depth.size() != scene.frames.size())
    throw FormatError("load_scene: dense depth count mismatch in " + scene_dir.string());
  for (const Frame& f : scene.frames)
    if (f.width() != scene.frames[0].width() || f.height() != scene.frames[0].height())
      throw FormatError("load_scene: frames disagree on resolution in " + scene_dir.string());
  return scene;
}

std::vector<Scene> load_scenes(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root))
    throw std::invalid_argument("load_scenes: not a directory: " + root.string());
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<Scene> scenes;
  for (const auto& d : dirs) scenes.push_back(load_scene(d));
  if (scenes.empty()) throw FormatError("load_scenes: no scene directories under " + root.string());
  return scenes;
}

}  // namespace adg
