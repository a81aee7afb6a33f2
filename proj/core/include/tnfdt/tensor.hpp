#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "tnfdt/errors.hpp"

namespace tnfdt {

// Extent of a 4-D tensor: batch n, channels z, rows y, columns x.
class Shape {
 public:
  Shape() = default;
  Shape(std::int64_t n, std::int64_t z, std::int64_t y, std::int64_t x) {
    if (n < 1 || z < 1 || y < 1 || x < 1) {
      throw ShapeError("shape dims must be >= 1, got " + describe(n, z, y, x));
    }
    n_ = static_cast<std::size_t>(n);
    z_ = static_cast<std::size_t>(z);
    y_ = static_cast<std::size_t>(y);
    x_ = static_cast<std::size_t>(x);
    constexpr auto max = std::numeric_limits<std::size_t>::max();
    if (z_ > max / x_ || z_ * x_ > max / y_ || z_ * y_ * x_ > max / n_) {
      throw ShapeError("element count overflows: " + describe(n, z, y, x));
    }
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t z() const noexcept { return z_; }
  std::size_t y() const noexcept { return y_; }
  std::size_t x() const noexcept { return x_; }

  std::size_t plane() const noexcept { return y_ * x_; }
  std::size_t sample_size() const noexcept { return z_ * y_ * x_; }
  std::size_t count() const noexcept { return n_ * sample_size(); }

  // Same shape with a different batch count.
  Shape with_batch(std::size_t n) const {
    return Shape(static_cast<std::int64_t>(n), static_cast<std::int64_t>(z_),
                 static_cast<std::int64_t>(y_), static_cast<std::int64_t>(x_));
  }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return describe(static_cast<std::int64_t>(n_), static_cast<std::int64_t>(z_),
                    static_cast<std::int64_t>(y_), static_cast<std::int64_t>(x_));
  }

 private:
  static std::string describe(std::int64_t n, std::int64_t z, std::int64_t y, std::int64_t x) {
    return "(" + std::to_string(n) + "," + std::to_string(z) + "," + std::to_string(y) + "," +
           std::to_string(x) + ")";
  }

  std::size_t n_ = 1;
  std::size_t z_ = 1;
  std::size_t y_ = 1;
  std::size_t x_ = 1;
};

// Dense 4-D array stored row-major in (n, z, y, x) order.
template <typename T>
class BasicTensor {
  static_assert(std::is_floating_point_v<T>, "tensor elements are float or double");

 public:
  using value_type = T;

  BasicTensor() : values_(1, T(0)) {}
  explicit BasicTensor(const Shape& shape, T value = T(0))
      : shape_(shape), values_(shape.count(), value) {}
  BasicTensor(const Shape& shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.count()) {
      throw ShapeError("buffer of " + std::to_string(values_.size()) +
                       " values does not match shape " + shape_.str());
    }
  }

  static BasicTensor fill(const Shape& shape, T value) { return BasicTensor(shape, value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  std::size_t index(std::size_t n, std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return ((n * shape_.z() + z) * shape_.y() + y) * shape_.x() + x;
  }
  T& operator()(std::size_t n, std::size_t z, std::size_t y, std::size_t x) noexcept {
    return values_[index(n, z, y, x)];
  }
  const T& operator()(std::size_t n, std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return values_[index(n, z, y, x)];
  }
  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  // Contiguous view of one sample.
  std::span<T> sample(std::size_t n) noexcept {
    return std::span<T>(values_).subspan(n * shape_.sample_size(), shape_.sample_size());
  }
  std::span<const T> sample(std::size_t n) const noexcept {
    return std::span<const T>(values_).subspan(n * shape_.sample_size(), shape_.sample_size());
  }

  BasicTensor sample_copy(std::size_t n) const {
    auto s = sample(n);
    return BasicTensor(shape_.with_batch(1), std::vector<T>(s.begin(), s.end()));
  }

  // Same values under a different shape with the same element count.
  BasicTensor reshaped(const Shape& shape) const {
    if (shape.count() != shape_.count()) {
      throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    return BasicTensor(shape, values_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

enum class ElementwiseOp { add, sub, mul, scale };

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": shape " + a.str() + " vs " + b.str());
}

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "elementwise");
  BasicTensor<T> out(a.shape());
  const std::size_t size = a.size();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < size; ++i) out[i] = a[i] + b[i];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < size; ++i) out[i] = a[i] - b[i];
      break;
    case ElementwiseOp::mul:
    case ElementwiseOp::scale:
      for (std::size_t i = 0; i < size; ++i) out[i] = a[i] * b[i];
      break;
  }
  return out;
}

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, T b) {
  BasicTensor<T> out(a.shape());
  const std::size_t size = a.size();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < size; ++i) out[i] = a[i] + b;
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < size; ++i) out[i] = a[i] - b;
      break;
    case ElementwiseOp::mul:
    case ElementwiseOp::scale:
      for (std::size_t i = 0; i < size; ++i) out[i] = a[i] * b;
      break;
  }
  return out;
}

template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::add, a, b);
}
template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::sub, a, b);
}
template <typename T>
BasicTensor<T> operator*(const BasicTensor<T>& a, T s) {
  return elementwise(ElementwiseOp::scale, a, s);
}

template <typename T>
T max_abs(const BasicTensor<T>& t) {
  T m = 0;
  for (T v : t.values()) m = std::max(m, v < 0 ? -v : v);
  return m;
}

template <typename T>
double sum(const BasicTensor<T>& t) {
  double s = 0;
  for (T v : t.values()) s += v;
  return s;
}

}  // namespace tnfdt
