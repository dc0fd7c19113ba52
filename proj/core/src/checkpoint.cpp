#include "adg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "adg/scene_io.hpp"

namespace adg {

namespace {
constexpr char kMagic[4] = {'A', 'D', 'G', 'C'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("read_checkpoint: truncated file " + path);
  return v;
}
}  // namespace

uint64_t fnv1a_hash(const std::string& s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_checkpoint: cannot open " + path.string());
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, ckpt.version);
  write_pod<uint64_t>(out, ckpt.step);
  write_pod<uint64_t>(out, ckpt.config_hash);
  write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d) write_pod<uint32_t>(out, static_cast<uint32_t>(t.dim(d)));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw FormatError("write_checkpoint: short write on " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string p = path.string();
  if (!in) throw FormatError("read_checkpoint: cannot open " + p);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("read_checkpoint: bad magic in " + p);

  CheckpointData ckpt;
  ckpt.version = read_pod<uint32_t>(in, p);
  if (ckpt.version != 1) throw FormatError("read_checkpoint: unsupported version in " + p);
  ckpt.step = read_pod<uint64_t>(in, p);
  ckpt.config_hash = read_pod<uint64_t>(in, p);
  const uint32_t count = read_pod<uint32_t>(in, p);
  for (uint32_t k = 0; k < count; ++k) {
    const uint32_t name_len = read_pod<uint32_t>(in, p);
    if (name_len > 4096) throw FormatError("read_checkpoint: absurd name length in " + p);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t ndim = read_pod<uint32_t>(in, p);
    if (ndim > 8) throw FormatError("read_checkpoint: absurd rank in " + p);
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(read_pod<uint32_t>(in, p));
      numel *= shape.back();
    }
    if (numel > (1ll << 30)) throw FormatError("read_checkpoint: absurd tensor size in " + p);
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in) throw FormatError("read_checkpoint: truncated tensor payload in " + p);
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace adg
