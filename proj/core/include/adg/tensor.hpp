#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace adg {

/// Dense row-major n-d array. Shapes are checked in debug builds only;
/// construction validates against overflow.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s, T fill = T(0)) : shape(std::move(s)) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    data.assign(static_cast<size_t>(n), fill);
  }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  T& at(int64_t i, int64_t j) {
    assert(ndim() == 2);
    return data[static_cast<size_t>(i * shape[1] + j)];
  }
  const T& at(int64_t i, int64_t j) const {
    assert(ndim() == 2);
    return data[static_cast<size_t>(i * shape[1] + j)];
  }
  T& at(int64_t c, int64_t i, int64_t j) {
    assert(ndim() == 3);
    return data[static_cast<size_t>((c * shape[1] + i) * shape[2] + j)];
  }
  const T& at(int64_t c, int64_t i, int64_t j) const {
    assert(ndim() == 3);
    return data[static_cast<size_t>((c * shape[1] + i) * shape[2] + j)];
  }
  T& at(int64_t n, int64_t c, int64_t i, int64_t j) {
    assert(ndim() == 4);
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + i) * shape[3] + j)];
  }
  const T& at(int64_t n, int64_t c, int64_t i, int64_t j) const {
    assert(ndim() == 4);
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + i) * shape[3] + j)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (int64_t i = 0; i < numel(); ++i) out.data[static_cast<size_t>(i)] = static_cast<U>(data[static_cast<size_t>(i)]);
    return out;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

}  // namespace adg
