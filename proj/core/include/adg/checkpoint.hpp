#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "adg/tensor.hpp"

namespace adg {

/// ADGC container: magic "ADGC", little-endian u32 format version, u64 step,
/// u64 config hash, u32 tensor count, then per tensor
/// (u32 name length, name bytes, u32 ndims, u32 dims..., float32 payload).
struct CheckpointData {
  uint32_t version = 1;
  uint64_t step = 0;
  uint64_t config_hash = 0;
  std::map<std::string, Tensor<float>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& ckpt);
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// FNV-1a over a string; used to bind a checkpoint to the config it was
/// trained with.
uint64_t fnv1a_hash(const std::string& s);

}  // namespace adg
