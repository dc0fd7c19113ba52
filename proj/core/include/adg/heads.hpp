#pragma once

#include "adg/encoder.hpp"
#include "adg/gaussians.hpp"
#include "adg/nn.hpp"

namespace adg {

/// Valid-mean pooled resize of a sparse depth raster to H/f x W/f, values
/// normalized by `far`; cells without any valid sample stay 0. Returned as
/// a one-channel [1,h,w] map.
template <typename T>
Tensor<T> pool_sparse_depth(const Tensor<float>& sparse_depth, int factor, double far) {
  const int64_t h = sparse_depth.dim(0), w = sparse_depth.dim(1);
  if (h % factor != 0 || w % factor != 0)
    throw std::invalid_argument("pool_sparse_depth: size not divisible by factor");
  const int64_t oh = h / factor, ow = w / factor;
  Tensor<T> out({1, oh, ow});
  for (int64_t i = 0; i < oh; ++i)
    for (int64_t j = 0; j < ow; ++j) {
      double sum = 0;
      int64_t count = 0;
      for (int a = 0; a < factor; ++a)
        for (int b = 0; b < factor; ++b) {
          const float d = sparse_depth.at(i * factor + a, j * factor + b);
          if (d > 0.f) {
            sum += d;
            ++count;
          }
        }
      out.at(0, i, j) = count ? static_cast<T>(sum / (static_cast<double>(count) * far)) : T(0);
    }
  return out;
}

template <typename T>
struct HeadConfig {
  int patch = 8;            // token grid stride; the 4 scales are 1/8..1/1
  int64_t token_dim = 64;
  int64_t ch[4] = {48, 48, 48, 48};  // feature channels at 1/8, 1/4, 1/2, 1/1
};

/// DPT-style regression head with multi-scale depth encoding: tokens are
/// reassembled at 1/8 scale and fused upward; at every scale the pooled
/// sparse depth passes a two-convolution shallow net whose output is added
/// to the features. A single-convolution skip of the full-resolution input
/// raster joins before the output projection.
template <typename T>
struct DptHead {
  HeadConfig<T> cfg;
  ConvLayer<T> reassemble;                 // token_dim -> ch0
  std::vector<ConvLayer<T>> fuse;          // ch_i -> ch_{i+1}, after 2x upsample
  struct DepthNet {
    ConvLayer<T> c1, c2;                   // 1 -> ch, ch -> ch (c2 zero-init)
  };
  std::vector<DepthNet> depth_nets;        // one per scale
  ConvLayer<T> skip_conv;                  // skip_channels -> ch3
  ConvLayer<T> out_proj;                   // ch3 -> out_channels

  static DptHead create(ParamStore<T>& store, const std::string& name, const HeadConfig<T>& cfg,
                        int64_t skip_channels, int64_t out_channels, Rng& rng) {
    if (cfg.patch != 8) throw std::invalid_argument("DptHead: 4-scale design requires patch size 8");
    DptHead h;
    h.cfg = cfg;
    h.reassemble = ConvLayer<T>::create(store, name + ".reassemble", cfg.token_dim, cfg.ch[0], 3, rng);
    for (int s = 0; s < 3; ++s)
      h.fuse.push_back(ConvLayer<T>::create(store, name + ".fuse" + std::to_string(s),
                                            cfg.ch[s], cfg.ch[s + 1], 3, rng));
    for (int s = 0; s < 4; ++s) {
      DepthNet dn;
      dn.c1 = ConvLayer<T>::create(store, name + ".depthnet" + std::to_string(s) + ".c1",
                                   1, cfg.ch[s], 3, rng);
      // Output layer starts at zero so the depth path is inert at init.
      dn.c2 = ConvLayer<T>::create(store, name + ".depthnet" + std::to_string(s) + ".c2",
                                   cfg.ch[s], cfg.ch[s], 3, rng, 0.02, /*zero_weights=*/true);
      h.depth_nets.push_back(dn);
    }
    h.skip_conv = ConvLayer<T>::create(store, name + ".skip", skip_channels, cfg.ch[3], 3, rng);
    h.out_proj = ConvLayer<T>::create(store, name + ".out", cfg.ch[3], out_channels, 3, rng);
    return h;
  }

  /// tokens [L, token_dim] -> [out_channels, H, W].
  /// `sparse_depth` drives the per-scale encoding; `skip_raster` is the
  /// full-resolution skip input (a tape constant or variable).
  /// `multiscale` / `skip_enabled` gate the two depth-injection paths.
  VarId apply(Tape<T>& t, VarId tokens, const TokenLayout& layout,
              const Tensor<float>& sparse_depth, VarId skip_raster, double far,
              bool multiscale = true, bool skip_enabled = true) const {
    if (sparse_depth.dim(0) != layout.h_l * layout.patch ||
        sparse_depth.dim(1) != layout.w_l * layout.patch)
      throw std::invalid_argument("DptHead: depth raster does not match token layout");

    VarId x = t.relu(reassemble.apply(t, t.tokens_to_chw(tokens, layout.h_l, layout.w_l)));
    if (multiscale) x = t.add(x, depth_branch(t, 0, sparse_depth, 8, far));
    for (int s = 0; s < 3; ++s) {
      x = t.relu(fuse[static_cast<size_t>(s)].apply(t, t.upsample2x(x)));
      if (multiscale) x = t.add(x, depth_branch(t, s + 1, sparse_depth, 4 >> s, far));
    }
    if (skip_enabled) x = t.add(x, skip_conv.apply(t, skip_raster));
    return out_proj.apply(t, x);
  }

 private:
  VarId depth_branch(Tape<T>& t, int scale_idx, const Tensor<float>& sparse_depth, int factor,
                     double far) const {
    const VarId d = t.constant(pool_sparse_depth<T>(sparse_depth, factor, far));
    const auto& dn = depth_nets[static_cast<size_t>(scale_idx)];
    return dn.c2.apply(t, t.relu(dn.c1.apply(t, d)));
  }
};

}  // namespace adg
