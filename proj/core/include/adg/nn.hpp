#pragma once

#include "adg/autodiff.hpp"
#include "adg/rng.hpp"

namespace adg {

template <typename T>
void init_truncated_normal(Tensor<T>& t, Rng& rng, double stddev) {
  for (auto& v : t.data) v = static_cast<T>(rng.truncated_normal(stddev));
}

template <typename T>
struct LinearLayer {
  Param<T>* w = nullptr;
  Param<T>* b = nullptr;

  static LinearLayer create(ParamStore<T>& store, const std::string& name, int64_t in, int64_t out,
                            Rng& rng, double stddev = 0.02, bool zero_weights = false) {
    LinearLayer l;
    l.w = &store.create(name + ".w", {in, out});
    l.b = &store.create(name + ".b", {out});
    if (!zero_weights) init_truncated_normal(l.w->value, rng, stddev);
    return l;
  }

  VarId apply(Tape<T>& t, VarId x) const { return t.linear(x, t.param(*w), t.param(*b)); }
};

template <typename T>
struct LayerNormLayer {
  Param<T>* gamma = nullptr;
  Param<T>* beta = nullptr;

  static LayerNormLayer create(ParamStore<T>& store, const std::string& name, int64_t dim) {
    LayerNormLayer l;
    l.gamma = &store.create(name + ".gamma", {dim});
    l.beta = &store.create(name + ".beta", {dim});
    l.gamma->value.fill(T(1));
    return l;
  }

  VarId apply(Tape<T>& t, VarId x) const {
    return t.layernorm(x, t.param(*gamma), t.param(*beta));
  }
};

/// Multi-head attention; queries come from `x`, keys/values from `ctx`
/// (pass the same id for self-attention).
template <typename T>
struct AttentionLayer {
  LinearLayer<T> q, k, v, o;
  int heads = 1;
  int64_t dim = 0;

  static AttentionLayer create(ParamStore<T>& store, const std::string& name, int64_t dim,
                               int heads, Rng& rng) {
    if (dim % heads != 0) throw std::invalid_argument("AttentionLayer: dim % heads != 0");
    AttentionLayer a;
    a.heads = heads;
    a.dim = dim;
    a.q = LinearLayer<T>::create(store, name + ".q", dim, dim, rng);
    a.k = LinearLayer<T>::create(store, name + ".k", dim, dim, rng);
    a.v = LinearLayer<T>::create(store, name + ".v", dim, dim, rng);
    a.o = LinearLayer<T>::create(store, name + ".o", dim, dim, rng);
    return a;
  }

  VarId apply(Tape<T>& t, VarId x, VarId ctx) const {
    const VarId qv = q.apply(t, x);
    const VarId kv = k.apply(t, ctx);
    const VarId vv = v.apply(t, ctx);
    const int64_t hd = dim / heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
    std::vector<VarId> outs;
    for (int h = 0; h < heads; ++h) {
      const VarId qh = t.slice_cols(qv, h * hd, hd);
      const VarId kh = t.slice_cols(kv, h * hd, hd);
      const VarId vh = t.slice_cols(vv, h * hd, hd);
      const VarId scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt);
      outs.push_back(t.matmul(t.softmax_rows(scores), vh));
    }
    return o.apply(t, t.concat_cols(outs));
  }
};

template <typename T>
struct MlpLayer {
  LinearLayer<T> fc1, fc2;

  static MlpLayer create(ParamStore<T>& store, const std::string& name, int64_t dim,
                         int64_t hidden, Rng& rng) {
    MlpLayer m;
    m.fc1 = LinearLayer<T>::create(store, name + ".fc1", dim, hidden, rng);
    m.fc2 = LinearLayer<T>::create(store, name + ".fc2", hidden, dim, rng);
    return m;
  }

  VarId apply(Tape<T>& t, VarId x) const { return fc2.apply(t, t.gelu(fc1.apply(t, x))); }
};

/// Pre-norm transformer block: x += attn(ln(x)); x += mlp(ln(x)).
template <typename T>
struct TransformerBlock {
  LayerNormLayer<T> ln1, ln2;
  AttentionLayer<T> attn;
  MlpLayer<T> mlp;

  static TransformerBlock create(ParamStore<T>& store, const std::string& name, int64_t dim,
                                 int heads, int64_t mlp_hidden, Rng& rng) {
    TransformerBlock b;
    b.ln1 = LayerNormLayer<T>::create(store, name + ".ln1", dim);
    b.ln2 = LayerNormLayer<T>::create(store, name + ".ln2", dim);
    b.attn = AttentionLayer<T>::create(store, name + ".attn", dim, heads, rng);
    b.mlp = MlpLayer<T>::create(store, name + ".mlp", dim, mlp_hidden, rng);
    return b;
  }

  VarId apply(Tape<T>& t, VarId x) const {
    const VarId n1 = ln1.apply(t, x);
    x = t.add(x, attn.apply(t, n1, n1));
    return t.add(x, mlp.apply(t, ln2.apply(t, x)));
  }
};

template <typename T>
struct ConvLayer {
  Param<T>* w = nullptr;
  Param<T>* b = nullptr;

  static ConvLayer create(ParamStore<T>& store, const std::string& name, int64_t cin, int64_t cout,
                          int64_t k, Rng& rng, double stddev = 0.02, bool zero_weights = false) {
    ConvLayer c;
    c.w = &store.create(name + ".w", {cout, cin, k, k});
    c.b = &store.create(name + ".b", {cout});
    if (!zero_weights) init_truncated_normal(c.w->value, rng, stddev);
    return c;
  }

  VarId apply(Tape<T>& t, VarId x) const { return t.conv2d(x, t.param(*w), t.param(*b)); }
};

}  // namespace adg
