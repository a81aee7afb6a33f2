#pragma once

// Stateless forward/backward kernels shared by the layer classes.

#include <cstddef>
#include <limits>
#include <vector>

#include "tnfdt/tensor.hpp"

namespace tnfdt::nn {

// ---------------------------------------------------------------------------
// Tensor normalization
//
// For every sample n and pixel (y, x) the mean over channels is subtracted:
//   M[n,0,y,x] = (sum_z A[n,z,y,x]) / Z,   A*[n,z,y,x] = A[n,z,y,x] - M[n,0,y,x].
// There are no learnable parameters and no statistics across the batch.
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> tn_mean(const BasicTensor<T>& a) {
  const Shape& s = a.shape();
  BasicTensor<T> mean(Shape(s.n(), 1, s.y(), s.x()));
  const std::size_t plane = s.plane();
  const T inv_z = T(1) / static_cast<T>(s.z());
  for (std::size_t n = 0; n < s.n(); ++n) {
    const T* src = a.data() + n * s.sample_size();
    T* m = mean.data() + n * plane;
    for (std::size_t z = 0; z < s.z(); ++z) {
      const T* channel = src + z * plane;
      for (std::size_t p = 0; p < plane; ++p) m[p] += channel[p];
    }
    for (std::size_t p = 0; p < plane; ++p) m[p] *= inv_z;
  }
  return mean;
}

template <typename T>
struct TnForward {
  BasicTensor<T> output;
  BasicTensor<T> mean;  // (n, 1, y, x); the cache of the forward pass
};

// Subtracts a given per-pixel mean from every channel.
template <typename T>
BasicTensor<T> subtract_pixel_mean(const BasicTensor<T>& a, const BasicTensor<T>& mean) {
  const Shape& s = a.shape();
  if (mean.shape() != Shape(s.n(), 1, s.y(), s.x())) {
    throw ShapeError("pixel mean " + mean.shape().str() + " does not fit tensor " + s.str());
  }
  BasicTensor<T> out(s);
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n(); ++n) {
    const T* m = mean.data() + n * plane;
    for (std::size_t z = 0; z < s.z(); ++z) {
      const std::size_t base = (n * s.z() + z) * plane;
      for (std::size_t p = 0; p < plane; ++p) out[base + p] = a[base + p] - m[p];
    }
  }
  return out;
}

template <typename T>
TnForward<T> tn_forward(const BasicTensor<T>& a) {
  BasicTensor<T> mean = tn_mean(a);
  BasicTensor<T> out = subtract_pixel_mean(a, mean);
  return {std::move(out), std::move(mean)};
}

// The mean is treated as a constant, so the error passes through unchanged.
template <typename T>
BasicTensor<T> tn_backward(const BasicTensor<T>& upstream, const Shape& forward_shape) {
  require_same_shape(upstream.shape(), forward_shape, "tn_backward");
  return upstream;
}

// Exact Jacobian of mean subtraction, (I - ones/Z) per pixel. Ablation only.
template <typename T>
BasicTensor<T> tn_backward_exact(const BasicTensor<T>& upstream, const Shape& forward_shape) {
  require_same_shape(upstream.shape(), forward_shape, "tn_backward_exact");
  return subtract_pixel_mean(upstream, tn_mean(upstream));
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input) {
  require_same_shape(upstream.shape(), input.shape(), "relu_backward");
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? upstream[i] : T(0);
  return out;
}

// ReLU followed by tensor normalization in a single pass over each pixel
// column. Produces exactly the values of relu_forward then tn_forward.
template <typename T>
TnForward<T> relu_tn_forward(const BasicTensor<T>& input) {
  const Shape& s = input.shape();
  TnForward<T> r{BasicTensor<T>(s), BasicTensor<T>(Shape(s.n(), 1, s.y(), s.x()))};
  const std::size_t plane = s.plane();
  const T inv_z = T(1) / static_cast<T>(s.z());
  for (std::size_t n = 0; n < s.n(); ++n) {
    const T* src = input.data() + n * s.sample_size();
    T* dst = r.output.data() + n * s.sample_size();
    T* m = r.mean.data() + n * plane;
    for (std::size_t z = 0; z < s.z(); ++z) {
      for (std::size_t p = 0; p < plane; ++p) {
        const T v = src[z * plane + p] > T(0) ? src[z * plane + p] : T(0);
        dst[z * plane + p] = v;
        m[p] += v;
      }
    }
    for (std::size_t p = 0; p < plane; ++p) m[p] *= inv_z;
    for (std::size_t z = 0; z < s.z(); ++z) {
      for (std::size_t p = 0; p < plane; ++p) dst[z * plane + p] -= m[p];
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Pooling, residual sum
// ---------------------------------------------------------------------------

template <typename T>
struct MaxPoolForward {
  BasicTensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

inline std::size_t pooled_extent(std::size_t in, std::size_t k, std::size_t stride) {
  if (k == 0 || stride == 0) throw ShapeError("pool kernel and stride must be >= 1");
  if (in < k) throw ShapeError("pool kernel larger than input extent");
  return (in - k) / stride + 1;
}

template <typename T>
MaxPoolForward<T> maxpool2d_forward(const BasicTensor<T>& input, std::size_t k, std::size_t stride) {
  const Shape& s = input.shape();
  const std::size_t oy = pooled_extent(s.y(), k, stride);
  const std::size_t ox = pooled_extent(s.x(), k, stride);
  MaxPoolForward<T> r{BasicTensor<T>(Shape(s.n(), s.z(), oy, ox)), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < s.n(); ++n) {
    for (std::size_t z = 0; z < s.z(); ++z) {
      for (std::size_t y = 0; y < oy; ++y) {
        for (std::size_t x = 0; x < ox; ++x, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_i = 0;
          for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx) {
              const std::size_t i = input.index(n, z, y * stride + dy, x * stride + dx);
              if (input[i] > best) {
                best = input[i];
                best_i = i;
              }
            }
          }
          r.output[o] = best;
          r.argmax[o] = best_i;
        }
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& upstream, const std::vector<std::size_t>& argmax,
                                  const Shape& input_shape) {
  if (upstream.size() != argmax.size()) throw ShapeError("maxpool2d_backward: upstream size");
  BasicTensor<T> out(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) out[argmax[o]] += upstream[o];
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>& input) {
  const Shape& s = input.shape();
  BasicTensor<T> out(Shape(s.n(), s.z(), 1, 1));
  const std::size_t plane = s.plane();
  for (std::size_t c = 0; c < s.n() * s.z(); ++c) {
    double acc = 0;
    for (std::size_t p = 0; p < plane; ++p) acc += input[c * plane + p];
    out[c] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& upstream, const Shape& input_shape) {
  if (upstream.shape() != Shape(input_shape.n(), input_shape.z(), 1, 1)) {
    throw ShapeError("global_avg_pool_backward: upstream " + upstream.shape().str());
  }
  BasicTensor<T> out(input_shape);
  const std::size_t plane = input_shape.plane();
  const T inv = T(1) / static_cast<T>(plane);
  for (std::size_t c = 0; c < upstream.size(); ++c) {
    for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] = upstream[c] * inv;
  }
  return out;
}

template <typename T>
BasicTensor<T> residual_add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "residual_add");
  return elementwise(ElementwiseOp::add, a, b);
}

// Both branches receive the upstream error unchanged.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> residual_add_backward(const BasicTensor<T>& upstream) {
  return {upstream, upstream};
}

}  // namespace tnfdt::nn
