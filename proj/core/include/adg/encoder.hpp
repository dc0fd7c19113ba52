#pragma once

#include "adg/nn.hpp"
#include "adg/tensor.hpp"

namespace adg {

/// Spatial layout of a token sequence: L = h_l * w_l tokens in row-major
/// order, each covering a patch x patch pixel cell.
struct TokenLayout {
  int64_t h_l = 0, w_l = 0;
  int patch = 0;
  int64_t channels = 0;
  int64_t tokens() const { return h_l * w_l; }
};

/// Positional embedding combining token grid coordinates with per-patch
/// depth: an xy-z code shared by both modality streams.
template <typename T>
struct DPEmbedding {
  Tensor<T> values;                  // [L, C]
  std::vector<int64_t> linear_index; // k = i*w_l + j per token
  std::vector<T> patch_depth;        // meters; 0 where the cell has no sample
  TokenLayout layout;
};

/// Normalizes depth by `far` and copies it across three channels so the
/// depth map matches the image tensor layout.
template <typename T>
Tensor<T> replicate_depth_channels(const Tensor<float>& sparse_depth, double far) {
  const int64_t h = sparse_depth.dim(0), w = sparse_depth.dim(1);
  Tensor<T> out({3, h, w});
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const T v = static_cast<T>(sparse_depth.at(i, j) / far);
      out.at(0, i, j) = v;
      out.at(1, i, j) = v;
      out.at(2, i, j) = v;
    }
  return out;
}

/// Fixed sinusoidal code of a scalar in [0,1] into `m` channels:
/// interleaved sin/cos at geometrically increasing frequencies.
template <typename T>
void sinusoidal_encode(T t, int64_t m, T* out) {
  for (int64_t c = 0; c < m; ++c) {
    const int64_t pair = c / 2;
    const T freq = static_cast<T>(M_PI) * static_cast<T>(int64_t(1) << pair);
    out[c] = (c % 2 == 0) ? std::sin(freq * t) : std::cos(freq * t);
  }
}

/// Splits C channels over the three coordinates: ceil(C/3) for x, the
/// remainder split between y and z.
inline void dpe_channel_split(int64_t c, int64_t* cx, int64_t* cy, int64_t* cz) {
  *cx = (c + 2) / 3;
  *cy = (c - *cx + 1) / 2;
  *cz = c - *cx - *cy;
}

/// Builds the depth-guided positional embedding for a token grid over the
/// given sparse depth raster. Token (i,j) carries linear index k = i*w_l+j,
/// the mean of the valid depths inside its cell (0 if none), and the
/// concatenated sinusoidal codes of (x_hat, y_hat, z_hat).
/// With include_z=false the z channel slice is zeroed.
template <typename T>
DPEmbedding<T> build_dpe(int64_t h_l, int64_t w_l, const Tensor<float>& sparse_depth, int patch,
                         int64_t channels, double far, bool include_z = true) {
  if (sparse_depth.dim(0) != h_l * patch || sparse_depth.dim(1) != w_l * patch)
    throw std::invalid_argument("build_dpe: depth raster does not match token grid");
  DPEmbedding<T> dpe;
  dpe.layout = {h_l, w_l, patch, channels};
  dpe.values = Tensor<T>({h_l * w_l, channels});
  dpe.linear_index.resize(static_cast<size_t>(h_l * w_l));
  dpe.patch_depth.resize(static_cast<size_t>(h_l * w_l));

  int64_t cx, cy, cz;
  dpe_channel_split(channels, &cx, &cy, &cz);

  for (int64_t i = 0; i < h_l; ++i)
    for (int64_t j = 0; j < w_l; ++j) {
      const int64_t k = i * w_l + j;
      dpe.linear_index[static_cast<size_t>(k)] = k;

      double sum = 0;
      int64_t count = 0;
      for (int pi = 0; pi < patch; ++pi)
        for (int pj = 0; pj < patch; ++pj) {
          const float d = sparse_depth.at(i * patch + pi, j * patch + pj);
          if (d > 0.f) {
            sum += d;
            ++count;
          }
        }
      const T z = count ? static_cast<T>(sum / count) : T(0);
      dpe.patch_depth[static_cast<size_t>(k)] = z;

      const T xh = w_l > 1 ? static_cast<T>(j) / static_cast<T>(w_l - 1) : T(0);
      const T yh = h_l > 1 ? static_cast<T>(i) / static_cast<T>(h_l - 1) : T(0);
      const T zh = static_cast<T>(z / static_cast<T>(far));
      T* row = &dpe.values.at(k, 0);
      sinusoidal_encode(xh, cx, row);
      sinusoidal_encode(yh, cy, row + cx);
      if (include_z)
        sinusoidal_encode(zh, cz, row + cx + cy);
    }
  return dpe;
}

template <typename T>
struct EncoderConfig {
  int patch = 8;
  int64_t dim = 64;
  int blocks = 4;
  int heads = 4;
  int mlp_ratio = 4;
};

/// Weight-shared ViT encoder: one parameter set serves both the image and
/// the depth stream.
template <typename T>
struct Encoder {
  EncoderConfig<T> cfg;
  LinearLayer<T> patch_proj;
  std::vector<TransformerBlock<T>> blocks;

  static Encoder create(ParamStore<T>& store, const EncoderConfig<T>& cfg, Rng& rng) {
    Encoder e;
    e.cfg = cfg;
    e.patch_proj = LinearLayer<T>::create(store, "encoder.patch_proj",
                                          3 * cfg.patch * cfg.patch, cfg.dim, rng);
    for (int i = 0; i < cfg.blocks; ++i)
      e.blocks.push_back(TransformerBlock<T>::create(store, "encoder.block" + std::to_string(i),
                                                     cfg.dim, cfg.heads, cfg.dim * cfg.mlp_ratio, rng));
    return e;
  }

  /// [3,H,W] raster -> [L, dim] tokens.
  VarId patchify(Tape<T>& t, VarId raster) const {
    return patch_proj.apply(t, t.extract_patches(raster, cfg.patch));
  }

  /// tokens + dpe -> encoded tokens, same [L, dim].
  VarId encode(Tape<T>& t, VarId tokens, const DPEmbedding<T>& dpe) const {
    if (t.val(tokens).shape != dpe.values.shape)
      throw std::invalid_argument("encode: tokens/dpe shape mismatch");
    VarId x = t.add(tokens, t.constant(dpe.values));
    for (const auto& b : blocks) x = b.apply(t, x);
    return x;
  }
};

}  // namespace adg
