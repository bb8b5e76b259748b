#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <vector>

#include "graviton/core/error.hpp"

namespace graviton {

/// Dense, row-major n-d array. The shape convention throughout the project is
/// C x H x W for feature maps and images, rows x cols for matrices, {1} for
/// scalars.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0))
      : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), fill) {}

  static int64_t numel(const std::vector<int>& s) {
    GRAVITON_REQUIRE(!s.empty(), "tensor shape must be non-empty");
    int64_t n = 1;
    for (int d : s) {
      GRAVITON_REQUIRE(d > 0, "tensor dims must be positive, got ", d);
      n *= d;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int dim(size_t i) const { return shape.at(i); }
  int ndim() const { return static_cast<int>(shape.size()); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // matrix indexing (rows x cols)
  T& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  const T& at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

  // map indexing (C x H x W)
  T& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const T& v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
Tensor<T> make_tensor(std::vector<int> shape, std::initializer_list<T> values) {
  Tensor<T> t(std::move(shape));
  GRAVITON_REQUIRE(static_cast<int64_t>(values.size()) == t.size(),
                   "initializer size mismatch");
  size_t i = 0;
  for (T v : values) t.data[i++] = v;
  return t;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  GRAVITON_REQUIRE(a.same_shape(b), "max_abs_diff: shape mismatch");
  T m = T(0);
  for (int64_t i = 0; i < a.size(); ++i) {
    T d = std::abs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) return false;
  for (int64_t i = 0; i < a.size(); ++i) {
    // compare representations, not values: distinguishes -0.0, treats NaN == NaN
    if (std::memcmp(&a[i], &b[i], sizeof(T)) != 0) return false;
  }
  return true;
}

}  // namespace graviton
