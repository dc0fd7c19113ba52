#pragma once

#include "adg/nn.hpp"

namespace adg {

template <typename T>
struct MatcherConfig {
  int64_t dim = 64;
  int blocks = 2;
  int heads = 4;
  int mlp_ratio = 4;
};

/// One decoder block: self-attention, cross-attention into the other
/// stream, MLP, all pre-norm with residuals.
template <typename T>
struct DecoderBlock {
  LayerNormLayer<T> ln_self, ln_cross, ln_mlp;
  AttentionLayer<T> self_attn, cross_attn;
  MlpLayer<T> mlp;

  static DecoderBlock create(ParamStore<T>& store, const std::string& name, int64_t dim, int heads,
                             int64_t mlp_hidden, Rng& rng) {
    DecoderBlock b;
    b.ln_self = LayerNormLayer<T>::create(store, name + ".ln_self", dim);
    b.ln_cross = LayerNormLayer<T>::create(store, name + ".ln_cross", dim);
    b.ln_mlp = LayerNormLayer<T>::create(store, name + ".ln_mlp", dim);
    b.self_attn = AttentionLayer<T>::create(store, name + ".self", dim, heads, rng);
    b.cross_attn = AttentionLayer<T>::create(store, name + ".cross", dim, heads, rng);
    b.mlp = MlpLayer<T>::create(store, name + ".mlp", dim, mlp_hidden, rng);
    return b;
  }

  VarId self_step(Tape<T>& t, VarId x) const {
    const VarId n = ln_self.apply(t, x);
    return t.add(x, self_attn.apply(t, n, n));
  }

  VarId cross_step(Tape<T>& t, VarId x, VarId other) const {
    x = t.add(x, cross_attn.apply(t, ln_cross.apply(t, x), other));
    return t.add(x, mlp.apply(t, ln_mlp.apply(t, x)));
  }
};

/// Two cross-attention transformer decoders fusing the image and depth
/// token streams. The two decoders are architecturally identical but do not
/// share parameters.
template <typename T>
struct CrossModalMatcher {
  MatcherConfig<T> cfg;
  std::vector<DecoderBlock<T>> image_blocks, depth_blocks;

  static CrossModalMatcher create(ParamStore<T>& store, const MatcherConfig<T>& cfg, Rng& rng) {
    CrossModalMatcher m;
    m.cfg = cfg;
    for (int i = 0; i < cfg.blocks; ++i) {
      m.image_blocks.push_back(DecoderBlock<T>::create(store, "matcher.d1.block" + std::to_string(i),
                                                       cfg.dim, cfg.heads, cfg.dim * cfg.mlp_ratio, rng));
      m.depth_blocks.push_back(DecoderBlock<T>::create(store, "matcher.d2.block" + std::to_string(i),
                                                       cfg.dim, cfg.heads, cfg.dim * cfg.mlp_ratio, rng));
    }
    return m;
  }

  /// (F_I, F_S) -> (G_I, G_S). At each block both streams run
  /// self-attention first; each then cross-attends into the other stream's
  /// post-self-attention tokens of the same block.
  std::pair<VarId, VarId> decode_pair(Tape<T>& t, VarId f_img, VarId f_depth) const {
    check_same_shape(t.val(f_img), t.val(f_depth), "decode_pair");
    VarId xi = f_img, xd = f_depth;
    for (int b = 0; b < cfg.blocks; ++b) {
      const VarId si = image_blocks[static_cast<size_t>(b)].self_step(t, xi);
      const VarId sd = depth_blocks[static_cast<size_t>(b)].self_step(t, xd);
      xi = image_blocks[static_cast<size_t>(b)].cross_step(t, si, sd);
      xd = depth_blocks[static_cast<size_t>(b)].cross_step(t, sd, si);
    }
    return {xi, xd};
  }
};

}  // namespace adg
