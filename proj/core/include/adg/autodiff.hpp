#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "adg/rng.hpp"
#include "adg/tensor.hpp"

namespace adg {

/// Named trainable tensor plus gradient and Adam state.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> adam_m, adam_v;
  bool trainable = true;
};

template <typename T>
class ParamStore {
 public:
  Param<T>& create(const std::string& name, std::vector<int64_t> shape) {
    if (by_name_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->value = Tensor<T>(shape);
    p->grad = Tensor<T>(shape);
    p->adam_m = Tensor<T>(shape);
    p->adam_v = Tensor<T>(shape);
    params_.push_back(std::move(p));
    by_name_[name] = params_.size() - 1;
    return *params_.back();
  }

  Param<T>& at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("ParamStore: no param " + name);
    return *params_[it->second];
  }

  std::vector<std::unique_ptr<Param<T>>>& all() { return params_; }
  const std::vector<std::unique_ptr<Param<T>>>& all() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
  std::map<std::string, size_t> by_name_;
};

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
MatMap<T> as_mat(Tensor<T>& t, int64_t rows, int64_t cols) {
  return MatMap<T>(t.data.data(), rows, cols);
}
template <typename T>
CMatMap<T> as_mat(const Tensor<T>& t, int64_t rows, int64_t cols) {
  return CMatMap<T>(t.data.data(), rows, cols);
}

using VarId = int;

/// Reverse-mode tape. Built fresh per forward pass; node order doubles as a
/// topological order for the backward sweep.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&)> backward;  // empty for leaves/constants
    Param<T>* param = nullptr;
    bool needs_grad = false;
  };

  const Tensor<T>& val(VarId id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor<T>& grad(VarId id) { return nodes_[static_cast<size_t>(id)].grad; }
  bool needs_grad(VarId id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  VarId constant(Tensor<T> v) { return push(std::move(v), false); }

  VarId leaf(const Tensor<T>& v, bool needs = true) { return push(v, needs); }

  VarId param(Param<T>& p) {
    VarId id = push(p.value, p.trainable);
    nodes_[static_cast<size_t>(id)].param = &p;
    return id;
  }

  /// Runs the backward sweep from a scalar node (numel 1).
  void backward(VarId loss) {
    auto& ln = nodes_[static_cast<size_t>(loss)];
    if (ln.value.numel() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar");
    for (auto& n : nodes_)
      if (n.needs_grad && n.grad.numel() == 0) n.grad = Tensor<T>::zeros_like(n.value);
    if (!ln.needs_grad) return;
    ln.grad[0] = T(1);
    for (int64_t i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.needs_grad) continue;
      if (n.backward) n.backward(*this);
      if (n.param) {
        for (int64_t k = 0; k < n.grad.numel(); ++k) n.param->grad[k] += n.grad[k];
      }
    }
  }

  // ---- elementwise ----

  VarId add(VarId a, VarId b) {
    check_same_shape(val(a), val(b), "add");
    Tensor<T> y = val(a);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += val(b)[i];
    return make(std::move(y), {a, b}, [a, b](Tape& t, Node& n) {
      t.accum(a, n.grad);
      t.accum(b, n.grad);
    });
  }

  VarId sub(VarId a, VarId b) {
    check_same_shape(val(a), val(b), "sub");
    Tensor<T> y = val(a);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] -= val(b)[i];
    return make(std::move(y), {a, b}, [a, b](Tape& t, Node& n) {
      t.accum(a, n.grad);
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad(b);
        for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] -= n.grad[i];
      }
    });
  }

  VarId mul(VarId a, VarId b) {
    check_same_shape(val(a), val(b), "mul");
    Tensor<T> y = val(a);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] *= val(b)[i];
    return make(std::move(y), {a, b}, [a, b](Tape& t, Node& n) {
      if (t.needs_grad(a)) {
        Tensor<T>& ga = t.grad(a);
        const Tensor<T>& vb = t.val(b);
        for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] * vb[i];
      }
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad(b);
        const Tensor<T>& va = t.val(a);
        for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] += n.grad[i] * va[i];
      }
    });
  }

  VarId scale(VarId a, T c) {
    Tensor<T> y = val(a);
    for (auto& v : y.data) v *= c;
    return make(std::move(y), {a}, [a, c](Tape& t, Node& n) {
      if (t.needs_grad(a)) {
        Tensor<T>& ga = t.grad(a);
        for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += c * n.grad[i];
      }
    });
  }

  VarId relu(VarId a) {
    Tensor<T> y = val(a);
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    return make(std::move(y), {a}, [a](Tape& t, Node& n) {
      if (!t.needs_grad(a)) return;
      Tensor<T>& ga = t.grad(a);
      const Tensor<T>& va = t.val(a);
      for (int64_t i = 0; i < n.grad.numel(); ++i)
        if (va[i] > T(0)) ga[i] += n.grad[i];
    });
  }

  VarId gelu(VarId a) {
    Tensor<T> y = val(a);
    for (auto& v : y.data) v = T(0.5) * v * (T(1) + std::erf(v * T(M_SQRT1_2)));
    return make(std::move(y), {a}, [a](Tape& t, Node& n) {
      if (!t.needs_grad(a)) return;
      Tensor<T>& ga = t.grad(a);
      const Tensor<T>& va = t.val(a);
      const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
      for (int64_t i = 0; i < n.grad.numel(); ++i) {
        const T x = va[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
        ga[i] += n.grad[i] * (cdf + x * pdf);
      }
    });
  }

  // ---- shape ----

  VarId reshape(VarId a, std::vector<int64_t> shape) {
    Tensor<T> y = val(a);
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    if (n != y.numel()) throw std::invalid_argument("reshape: numel mismatch");
    y.shape = std::move(shape);
    return make(std::move(y), {a}, [a](Tape& t, Node& n2) {
      if (!t.needs_grad(a)) return;
      Tensor<T>& ga = t.grad(a);
      for (int64_t i = 0; i < n2.grad.numel(); ++i) ga[i] += n2.grad[i];
    });
  }

  VarId slice_cols(VarId a, int64_t c0, int64_t width) {
    const Tensor<T>& x = val(a);
    if (x.ndim() != 2) throw std::invalid_argument("slice_cols: need 2-d");
    const int64_t rows = x.dim(0), cols = x.dim(1);
    Tensor<T> y({rows, width});
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < width; ++j) y.at(i, j) = x.at(i, c0 + j);
    return make(std::move(y), {a}, [a, c0, width, cols](Tape& t, Node& n) {
      if (!t.needs_grad(a)) return;
      Tensor<T>& ga = t.grad(a);
      const int64_t rows = n.grad.dim(0);
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < width; ++j) ga[i * cols + c0 + j] += n.grad.at(i, j);
    });
  }

  VarId concat_cols(const std::vector<VarId>& parts) {
    const int64_t rows = val(parts[0]).dim(0);
    int64_t cols = 0;
    for (VarId p : parts) {
      if (val(p).ndim() != 2 || val(p).dim(0) != rows)
        throw std::invalid_argument("concat_cols: row mismatch");
      cols += val(p).dim(1);
    }
    Tensor<T> y({rows, cols});
    int64_t off = 0;
    for (VarId p : parts) {
      const Tensor<T>& x = val(p);
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < x.dim(1); ++j) y.at(i, off + j) = x.at(i, j);
      off += x.dim(1);
    }
    std::vector<VarId> ps = parts;
    return make(std::move(y), ps, [ps](Tape& t, Node& n) {
      const int64_t rows = n.grad.dim(0);
      int64_t off = 0;
      for (VarId p : ps) {
        const int64_t w = t.val(p).dim(1);
        if (t.needs_grad(p)) {
          Tensor<T>& gp = t.grad(p);
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < w; ++j) gp.at(i, j) += n.grad.at(i, off + j);
        }
        off += w;
      }
    });
  }

  // ---- linear algebra ----

  VarId matmul(VarId a, VarId b) {
    const Tensor<T>&va = val(a), &vb = val(b);
    if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(0))
      throw std::invalid_argument("matmul: bad shapes");
    Tensor<T> y({va.dim(0), vb.dim(1)});
    as_mat(y, y.dim(0), y.dim(1)).noalias() =
        as_mat(va, va.dim(0), va.dim(1)) * as_mat(vb, vb.dim(0), vb.dim(1));
    return make(std::move(y), {a, b}, [a, b](Tape& t, Node& n) {
      const Tensor<T>&va = t.val(a), &vb = t.val(b);
      auto g = as_mat(n.grad, n.grad.dim(0), n.grad.dim(1));
      if (t.needs_grad(a))
        as_mat(t.grad(a), va.dim(0), va.dim(1)).noalias() += g * as_mat(vb, vb.dim(0), vb.dim(1)).transpose();
      if (t.needs_grad(b))
        as_mat(t.grad(b), vb.dim(0), vb.dim(1)).noalias() += as_mat(va, va.dim(0), va.dim(1)).transpose() * g;
    });
  }

  /// y = a * b^T for a[m,k], b[n,k].
  VarId matmul_nt(VarId a, VarId b) {
    const Tensor<T>&va = val(a), &vb = val(b);
    if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(1))
      throw std::invalid_argument("matmul_nt: bad shapes");
    Tensor<T> y({va.dim(0), vb.dim(0)});
    as_mat(y, y.dim(0), y.dim(1)).noalias() =
        as_mat(va, va.dim(0), va.dim(1)) * as_mat(vb, vb.dim(0), vb.dim(1)).transpose();
    return make(std::move(y), {a, b}, [a, b](Tape& t, Node& n) {
      const Tensor<T>&va = t.val(a), &vb = t.val(b);
      auto g = as_mat(n.grad, n.grad.dim(0), n.grad.dim(1));
      if (t.needs_grad(a))
        as_mat(t.grad(a), va.dim(0), va.dim(1)).noalias() += g * as_mat(vb, vb.dim(0), vb.dim(1));
      if (t.needs_grad(b))
        as_mat(t.grad(b), vb.dim(0), vb.dim(1)).noalias() += g.transpose() * as_mat(va, va.dim(0), va.dim(1));
    });
  }

  /// y[L,out] = x[L,in] * w[in,out] + b[out]
  VarId linear(VarId x, VarId w, VarId b) {
    const Tensor<T>&vx = val(x), &vw = val(w), &vb = val(b);
    if (vx.ndim() != 2 || vw.ndim() != 2 || vx.dim(1) != vw.dim(0) || vb.numel() != vw.dim(1))
      throw std::invalid_argument("linear: bad shapes");
    Tensor<T> y({vx.dim(0), vw.dim(1)});
    auto ym = as_mat(y, y.dim(0), y.dim(1));
    ym.noalias() = as_mat(vx, vx.dim(0), vx.dim(1)) * as_mat(vw, vw.dim(0), vw.dim(1));
    for (int64_t i = 0; i < y.dim(0); ++i)
      for (int64_t j = 0; j < y.dim(1); ++j) y.at(i, j) += vb[j];
    return make(std::move(y), {x, w, b}, [x, w, b](Tape& t, Node& n) {
      const Tensor<T>&vx = t.val(x), &vw = t.val(w);
      auto g = as_mat(n.grad, n.grad.dim(0), n.grad.dim(1));
      if (t.needs_grad(x))
        as_mat(t.grad(x), vx.dim(0), vx.dim(1)).noalias() += g * as_mat(vw, vw.dim(0), vw.dim(1)).transpose();
      if (t.needs_grad(w))
        as_mat(t.grad(w), vw.dim(0), vw.dim(1)).noalias() += as_mat(vx, vx.dim(0), vx.dim(1)).transpose() * g;
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad(b);
        for (int64_t i = 0; i < n.grad.dim(0); ++i)
          for (int64_t j = 0; j < n.grad.dim(1); ++j) gb[j] += n.grad.at(i, j);
      }
    });
  }

  VarId softmax_rows(VarId a) {
    const Tensor<T>& x = val(a);
    if (x.ndim() != 2) throw std::invalid_argument("softmax_rows: need 2-d");
    Tensor<T> y = x;
    const int64_t rows = x.dim(0), cols = x.dim(1);
    for (int64_t i = 0; i < rows; ++i) {
      T mx = y.at(i, 0);
      for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, y.at(i, j));
      T sum = T(0);
      for (int64_t j = 0; j < cols; ++j) {
        y.at(i, j) = std::exp(y.at(i, j) - mx);
        sum += y.at(i, j);
      }
      for (int64_t j = 0; j < cols; ++j) y.at(i, j) /= sum;
    }
    return make(std::move(y), {a}, [a](Tape& t, Node& n) {
      if (!t.needs_grad(a)) return;
      Tensor<T>& ga = t.grad(a);
      const Tensor<T>& y = n.value;
      const int64_t rows = y.dim(0), cols = y.dim(1);
      for (int64_t i = 0; i < rows; ++i) {
        T dot = T(0);
        for (int64_t j = 0; j < cols; ++j) dot += n.grad.at(i, j) * y.at(i, j);
        for (int64_t j = 0; j < cols; ++j) ga.at(i, j) += y.at(i, j) * (n.grad.at(i, j) - dot);
      }
    });
  }

  /// Layer norm over the last dimension of a 2-d tensor.
  VarId layernorm(VarId x, VarId gamma, VarId beta, T eps = T(1e-5)) {
    const Tensor<T>& vx = val(x);
    if (vx.ndim() != 2) throw std::invalid_argument("layernorm: need 2-d");
    const int64_t rows = vx.dim(0), cols = vx.dim(1);
    if (val(gamma).numel() != cols || val(beta).numel() != cols)
      throw std::invalid_argument("layernorm: gamma/beta size mismatch");
    Tensor<T> y({rows, cols});
    Tensor<T> stats({rows, 2});  // mean, rstd
    for (int64_t i = 0; i < rows; ++i) {
      T mean = T(0);
      for (int64_t j = 0; j < cols; ++j) mean += vx.at(i, j);
      mean /= T(cols);
      T var = T(0);
      for (int64_t j = 0; j < cols; ++j) {
        const T d = vx.at(i, j) - mean;
        var += d * d;
      }
      var /= T(cols);
      const T rstd = T(1) / std::sqrt(var + eps);
      stats.at(i, 0) = mean;
      stats.at(i, 1) = rstd;
      for (int64_t j = 0; j < cols; ++j)
        y.at(i, j) = (vx.at(i, j) - mean) * rstd * val(gamma)[j] + val(beta)[j];
    }
    return make(std::move(y), {x, gamma, beta},
                [x, gamma, beta, stats = std::move(stats)](Tape& t, Node& n) {
      const Tensor<T>& vx = t.val(x);
      const Tensor<T>& vg = t.val(gamma);
      const int64_t rows = vx.dim(0), cols = vx.dim(1);
      for (int64_t i = 0; i < rows; ++i) {
        const T mean = stats.at(i, 0), rstd = stats.at(i, 1);
        T sum_g = T(0), sum_gx = T(0);
        for (int64_t j = 0; j < cols; ++j) {
          const T xhat = (vx.at(i, j) - mean) * rstd;
          const T gj = n.grad.at(i, j) * vg[j];
          sum_g += gj;
          sum_gx += gj * xhat;
          if (t.needs_grad(gamma)) t.grad(gamma)[j] += n.grad.at(i, j) * xhat;
          if (t.needs_grad(beta)) t.grad(beta)[j] += n.grad.at(i, j);
        }
        if (t.needs_grad(x)) {
          Tensor<T>& gx = t.grad(x);
          for (int64_t j = 0; j < cols; ++j) {
            const T xhat = (vx.at(i, j) - mean) * rstd;
            const T gj = n.grad.at(i, j) * vg[j];
            gx.at(i, j) += rstd * (gj - (sum_g + xhat * sum_gx) / T(cols));
          }
        }
      }
    });
  }

  // ---- spatial ----

  /// Flattens non-overlapping p x p patches of a [C,H,W] raster into rows of
  /// a [L, C*p*p] matrix, channel-major within a patch, patches row-major.
  VarId extract_patches(VarId a, int p) {
    const Tensor<T>& x = val(a);
    if (x.ndim() != 3) throw std::invalid_argument("extract_patches: need [C,H,W]");
    const int64_t ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % p != 0 || w % p != 0)
      throw std::invalid_argument("extract_patches: raster size not divisible by patch size");
    const int64_t hl = h / p, wl = w / p, l = hl * wl, cp = ch * p * p;
    Tensor<T> y({l, cp});
    for (int64_t i = 0; i < hl; ++i)
      for (int64_t j = 0; j < wl; ++j) {
        int64_t col = 0;
        for (int64_t c = 0; c < ch; ++c)
          for (int p_i = 0; p_i < p; ++p_i)
            for (int p_j = 0; p_j < p; ++p_j)
              y.at(i * wl + j, col++) = x.at(c, i * p + p_i, j * p + p_j);
      }
    return make(std::move(y), {a}, [a, p](Tape& t, Node& n) {
      if (!t.needs_grad(a)) return;
      Tensor<T>& ga = t.grad(a);
      const int64_t ch = ga.dim(0), h = ga.dim(1), w = ga.dim(2);
      const int64_t hl = h / p, wl = w / p;
      for (int64_t i = 0; i < hl; ++i)
        for (int64_t j = 0; j < wl; ++j) {
          int64_t col = 0;
          for (int64_t c = 0; c < ch; ++c)
            for (int p_i = 0; p_i < p; ++p_i)
              for (int p_j = 0; p_j < p; ++p_j)
                ga.at(c, i * p + p_i, j * p + p_j) += n.grad.at(i * wl + j, col++);
        }
    });
  }

  /// 2d convolution, stride 1, zero padding k/2 (same size). x [Cin,H,W],
  /// w [Cout,Cin,k,k], b [Cout].
  VarId conv2d(VarId x, VarId w, VarId b) {
    const Tensor<T>&vx = val(x), &vw = val(w), &vb = val(b);
    if (vx.ndim() != 3 || vw.ndim() != 4 || vw.dim(1) != vx.dim(0) || vb.numel() != vw.dim(0))
      throw std::invalid_argument("conv2d: bad shapes");
    const int64_t cout = vw.dim(0), k = vw.dim(2);
    const int64_t h = vx.dim(1), ww = vx.dim(2);
    Tensor<T> cols = im2col(vx, k);
    Tensor<T> y({cout, h, ww});
    as_mat(y, cout, h * ww).noalias() =
        as_mat(vw, cout, vw.numel() / cout) * as_mat(cols, cols.dim(0), cols.dim(1));
    for (int64_t c = 0; c < cout; ++c)
      for (int64_t i = 0; i < h * ww; ++i) y[c * h * ww + i] += vb[c];
    return make(std::move(y), {x, w, b}, [x, w, b](Tape& t, Node& n) {
      const Tensor<T>&vx = t.val(x), &vw = t.val(w);
      const int64_t cout = vw.dim(0), k = vw.dim(2);
      const int64_t h = vx.dim(1), ww = vx.dim(2);
      auto g = as_mat(n.grad, cout, h * ww);
      if (t.needs_grad(w)) {
        Tensor<T> cols = im2col(vx, k);  // recomputed; cheaper than caching
        as_mat(t.grad(w), cout, vw.numel() / cout).noalias() +=
            g * as_mat(cols, cols.dim(0), cols.dim(1)).transpose();
      }
      if (t.needs_grad(b)) {
        Tensor<T>& gb = t.grad(b);
        for (int64_t c = 0; c < cout; ++c)
          for (int64_t i = 0; i < h * ww; ++i) gb[c] += n.grad[c * h * ww + i];
      }
      if (t.needs_grad(x)) {
        Tensor<T> gcols({vw.numel() / cout, h * ww});
        as_mat(gcols, gcols.dim(0), gcols.dim(1)).noalias() =
            as_mat(vw, cout, vw.numel() / cout).transpose() * g;
        col2im_accum(gcols, k, t.grad(x));
      }
    });
  }

  /// Nearest-neighbour 2x upsampling of a [C,H,W] raster.
  VarId upsample2x(VarId a) {
    const Tensor<T>& x = val(a);
    if (x.ndim() != 3) throw std::invalid_argument("upsample2x: need [C,H,W]");
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> y({c, h * 2, w * 2});
    for (int64_t cc = 0; cc < c; ++cc)
      for (int64_t i = 0; i < 2 * h; ++i)
        for (int64_t j = 0; j < 2 * w; ++j) y.at(cc, i, j) = x.at(cc, i / 2, j / 2);
    return make(std::move(y), {a}, [a](Tape& t, Node& n) {
      if (!t.needs_grad(a)) return;
      Tensor<T>& ga = t.grad(a);
      const int64_t c = ga.dim(0), h = ga.dim(1), w = ga.dim(2);
      for (int64_t cc = 0; cc < c; ++cc)
        for (int64_t i = 0; i < 2 * h; ++i)
          for (int64_t j = 0; j < 2 * w; ++j) ga.at(cc, i / 2, j / 2) += n.grad.at(cc, i, j);
    });
  }

  /// [L, C] tokens -> [C, h_l, w_l] feature map (tokens row-major).
  VarId tokens_to_chw(VarId a, int64_t h_l, int64_t w_l) {
    const Tensor<T>& x = val(a);
    if (x.ndim() != 2 || x.dim(0) != h_l * w_l)
      throw std::invalid_argument("tokens_to_chw: bad shapes");
    const int64_t c = x.dim(1);
    Tensor<T> y({c, h_l, w_l});
    for (int64_t i = 0; i < h_l; ++i)
      for (int64_t j = 0; j < w_l; ++j)
        for (int64_t cc = 0; cc < c; ++cc) y.at(cc, i, j) = x.at(i * w_l + j, cc);
    return make(std::move(y), {a}, [a, h_l, w_l](Tape& t, Node& n) {
      if (!t.needs_grad(a)) return;
      Tensor<T>& ga = t.grad(a);
      const int64_t c = ga.dim(1);
      for (int64_t i = 0; i < h_l; ++i)
        for (int64_t j = 0; j < w_l; ++j)
          for (int64_t cc = 0; cc < c; ++cc) ga.at(i * w_l + j, cc) += n.grad.at(cc, i, j);
    });
  }

  VarId sum(VarId a) {
    T s = T(0);
    for (T v : val(a).data) s += v;
    Tensor<T> y({1});
    y[0] = s;
    return make(std::move(y), {a}, [a](Tape& t, Node& n) {
      if (!t.needs_grad(a)) return;
      Tensor<T>& ga = t.grad(a);
      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[0];
    });
  }

  /// Arbitrary differentiable op with a hand-written backward. The callback
  /// receives the upstream gradient and one writable gradient tensor per
  /// input (nullptr where the input does not need a gradient).
  VarId custom(const std::vector<VarId>& inputs, Tensor<T> value,
               std::function<void(const Tensor<T>& grad_out, const std::vector<Tensor<T>*>& grads_in)> bw) {
    std::vector<VarId> ins = inputs;
    return make(std::move(value), ins, [ins, bw = std::move(bw)](Tape& t, Node& n) {
      std::vector<Tensor<T>*> gs;
      gs.reserve(ins.size());
      for (VarId i : ins) gs.push_back(t.needs_grad(i) ? &t.grad(i) : nullptr);
      bw(n.grad, gs);
    });
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;

  VarId push(Tensor<T> v, bool needs) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size() - 1);
  }

  VarId make(Tensor<T> value, const std::vector<VarId>& inputs,
             std::function<void(Tape&, Node&)> bw) {
    bool needs = false;
    for (VarId i : inputs) needs = needs || nodes_[static_cast<size_t>(i)].needs_grad;
    VarId id = push(std::move(value), needs);
    if (needs) {
      nodes_[static_cast<size_t>(id)].backward = [id, bw = std::move(bw)](Tape& t) {
        bw(t, t.nodes_[static_cast<size_t>(id)]);
      };
    }
    return id;
  }

  void accum(VarId id, const Tensor<T>& g) {
    if (!needs_grad(id)) return;
    Tensor<T>& dst = grad(id);
    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += g[i];
  }

  static Tensor<T> im2col(const Tensor<T>& x, int64_t k) {
    const int64_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t pad = k / 2;
    Tensor<T> cols({cin * k * k, h * w});
    int64_t row = 0;
    for (int64_t c = 0; c < cin; ++c)
      for (int64_t di = 0; di < k; ++di)
        for (int64_t dj = 0; dj < k; ++dj, ++row)
          for (int64_t i = 0; i < h; ++i) {
            const int64_t si = i + di - pad;
            if (si < 0 || si >= h) continue;
            for (int64_t j = 0; j < w; ++j) {
              const int64_t sj = j + dj - pad;
              if (sj < 0 || sj >= w) continue;
              cols.at(row, i * w + j) = x.at(c, si, sj);
            }
          }
    return cols;
  }

  static void col2im_accum(const Tensor<T>& gcols, int64_t k, Tensor<T>& gx) {
    const int64_t cin = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
    const int64_t pad = k / 2;
    int64_t row = 0;
    for (int64_t c = 0; c < cin; ++c)
      for (int64_t di = 0; di < k; ++di)
        for (int64_t dj = 0; dj < k; ++dj, ++row)
          for (int64_t i = 0; i < h; ++i) {
            const int64_t si = i + di - pad;
            if (si < 0 || si >= h) continue;
            for (int64_t j = 0; j < w; ++j) {
              const int64_t sj = j + dj - pad;
              if (sj < 0 || sj >= w) continue;
              gx.at(c, si, sj) += gcols.at(row, i * w + j);
            }
          }
  }
};

}  // namespace adg
