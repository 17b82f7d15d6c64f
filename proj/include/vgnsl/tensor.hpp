#pragma once

// Minimal dense tensors and vector helpers used by the model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vgnsl/error.hpp"

namespace vgnsl {

template <class T>
using Vec = std::vector<T>;

// Row-major tensor of rank 1 or 2. An empty tensor means "absent".
template <class T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  bool empty() const noexcept { return data.empty(); }
  std::size_t size() const noexcept { return data.size(); }
  std::size_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const noexcept { return shape.size() < 2 ? 1 : shape[1]; }

  std::span<T> row(std::size_t r) { return std::span<T>(data).subspan(r * cols(), cols()); }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data).subspan(r * cols(), cols());
  }
  T& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  Tensor zeros_like() const { return Tensor(shape); }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class T>
T norm2(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

template <class T>
bool all_finite(std::span<const T> a) {
  for (const T& x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

// a / |a|; throws on a zero vector.
template <class T>
Vec<T> normalized(std::span<const T> a, const char* what = "vector") {
  const T n = norm2(a);
  if (!(n > T(0)) || !std::isfinite(n)) throw DegenerateInput(std::string(what) + " has zero norm");
  Vec<T> out(a.begin(), a.end());
  for (auto& x : out) x /= n;
  return out;
}

}  // namespace vgnsl
