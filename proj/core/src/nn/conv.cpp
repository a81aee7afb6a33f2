#include <Eigen/Core>

#include "tnfdt/nn/layers.hpp"

namespace tnfdt::nn {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  std::size_t batch, in_z, in_y, in_x;
  std::size_t k, stride, pad;
  std::size_t out_y, out_x;

  std::size_t patch() const { return in_z * k * k; }
  std::size_t positions() const { return out_y * out_x; }
  std::size_t columns() const { return batch * positions(); }
};

// columns[(c*k + ky)*k + kx][n*P + oy*out_x + ox] = padded input[n, c, oy*s+ky-pad, ox*s+kx-pad]
template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* columns) {
  const std::size_t cols = g.columns();
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.in_z; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = columns + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const T* plane = input + (n * g.in_z + c) * g.in_y * g.in_x;
          T* dst = row + n * positions;
          for (std::size_t oy = 0; oy < g.out_y; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_y)) {
              for (std::size_t ox = 0; ox < g.out_x; ++ox) dst[oy * g.out_x + ox] = T(0);
              continue;
            }
            const T* src_row = plane + static_cast<std::size_t>(iy) * g.in_x;
            for (std::size_t ox = 0; ox < g.out_x; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad);
              dst[oy * g.out_x + ox] =
                  (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_x)) ? T(0) : src_row[ix];
            }
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
template <typename T>
void col2im(const T* columns, const ConvGeometry& g, T* input_grad) {
  const std::size_t cols = g.columns();
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.in_z; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = columns + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t n = 0; n < g.batch; ++n) {
          T* plane = input_grad + (n * g.in_z + c) * g.in_y * g.in_x;
          const T* src = row + n * positions;
          for (std::size_t oy = 0; oy < g.out_y; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_y)) continue;
            T* dst_row = plane + static_cast<std::size_t>(iy) * g.in_x;
            for (std::size_t ox = 0; ox < g.out_x; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_x)) {
                dst_row[ix] += src[oy * g.out_x + ox];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

double he_std(std::size_t fan_in) {
  if (fan_in == 0) throw DomainError("he_init requires fan_in >= 1");
  return std::sqrt(2.0 / static_cast<double>(fan_in));
}

template <typename T>
void he_init(BasicTensor<T>& weights, std::size_t fan_in, Rng& rng) {
  const double std = he_std(fan_in);
  for (T& w : weights.values()) w = static_cast<T>(std * rng.normal01());
}

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t stride, std::size_t padding)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding) {
  if (in_ == 0 || out_ == 0 || k_ == 0 || stride_ == 0) {
    throw ShapeError("conv2d: channels, kernel and stride must be >= 1");
  }
  const auto s = [](std::size_t v) { return static_cast<std::int64_t>(v); };
  weights = BasicTensor<T>(Shape(s(out_), s(in_), s(k_), s(k_)));
  weight_grad = BasicTensor<T>(weights.shape());
  bias = BasicTensor<T>(Shape(s(out_), 1, 1, 1));
  bias_grad = BasicTensor<T>(bias.shape());
}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
  he_init(weights, in_ * k_ * k_, rng);
  bias = BasicTensor<T>(bias.shape());
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& input) const {
  if (input.z() != in_) {
    throw ShapeError("conv2d: input has " + std::to_string(input.z()) + " channels, expected " +
                     std::to_string(in_));
  }
  const std::size_t py = input.y() + 2 * pad_;
  const std::size_t px = input.x() + 2 * pad_;
  if (py < k_ || px < k_) throw ShapeError("conv2d: kernel larger than padded input " + input.str());
  const auto s = [](std::size_t v) { return static_cast<std::int64_t>(v); };
  return Shape(s(input.n()), s(out_), s((py - k_) / stride_ + 1), s((px - k_) / stride_ + 1));
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& input, Mode) {
  const Shape out_shape = output_shape(input.shape());
  const ConvGeometry g{input.shape().n(), in_, input.shape().y(), input.shape().x(), k_, stride_,
                       pad_, out_shape.y(), out_shape.x()};
  columns_.resize(g.patch() * g.columns());
  im2col(input.data(), g, columns_.data());

  // (out x patch) * (patch x N*P)
  RowMatrix<T> product = ConstMatrixMap<T>(weights.data(), out_, g.patch()) *
                         ConstMatrixMap<T>(columns_.data(), g.patch(), g.columns());

  BasicTensor<T> out(out_shape);
  const std::size_t positions = g.positions();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < out_; ++o) {
      const T* src = product.data() + o * g.columns() + n * positions;
      T* dst = out.data() + (n * out_ + o) * positions;
      const T b = bias[o];
      for (std::size_t p = 0; p < positions; ++p) dst[p] = src[p] + b;
    }
  }
  input_ = input;
  this->mark_cached();
  return out;
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  const Shape out_shape = output_shape(input_.shape());
  require_same_shape(upstream.shape(), out_shape, "conv2d backward");
  const ConvGeometry g{input_.shape().n(), in_, input_.shape().y(), input_.shape().x(), k_, stride_,
                       pad_, out_shape.y(), out_shape.x()};
  const std::size_t positions = g.positions();

  RowMatrix<T> grad_out(out_, g.columns());
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < out_; ++o) {
      const T* src = upstream.data() + (n * out_ + o) * positions;
      T* dst = grad_out.data() + o * g.columns() + n * positions;
      std::copy(src, src + positions, dst);
    }
  }

  ConstMatrixMap<T> cols(columns_.data(), g.patch(), g.columns());
  MatrixMap<T>(weight_grad.data(), out_, g.patch()).noalias() += grad_out * cols.transpose();
  for (std::size_t o = 0; o < out_; ++o) {
    double acc = 0;
    for (std::size_t c = 0; c < g.columns(); ++c) acc += grad_out(o, c);
    bias_grad[o] += static_cast<T>(acc);
  }

  BasicTensor<T> input_grad;
  if (input_grad_needed_) {
    RowMatrix<T> grad_cols = ConstMatrixMap<T>(weights.data(), out_, g.patch()).transpose() * grad_out;
    input_grad = BasicTensor<T>(input_.shape());
    col2im(grad_cols.data(), g, input_grad.data());
  }
  input_ = BasicTensor<T>();
  return input_grad;
}

template <typename T>
void Conv2d<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "weight", &weights, &weight_grad, true});
  out.push_back({prefix + "bias", &bias, &bias_grad, false});
}

template <typename T>
Dense<T>::Dense(std::size_t in_features, std::size_t out_features) : in_(in_features), out_(out_features) {
  if (in_ == 0 || out_ == 0) throw ShapeError("dense: feature counts must be >= 1");
  const auto s = [](std::size_t v) { return static_cast<std::int64_t>(v); };
  weights = BasicTensor<T>(Shape(s(out_), s(in_), 1, 1));
  weight_grad = BasicTensor<T>(weights.shape());
  bias = BasicTensor<T>(Shape(s(out_), 1, 1, 1));
  bias_grad = BasicTensor<T>(bias.shape());
}

template <typename T>
void Dense<T>::init(Rng& rng) {
  he_init(weights, in_, rng);
  bias = BasicTensor<T>(bias.shape());
}

template <typename T>
BasicTensor<T> Dense<T>::forward(const BasicTensor<T>& input, Mode) {
  if (input.shape().sample_size() != in_) {
    throw ShapeError("dense: input " + input.shape().str() + " has sample size " +
                     std::to_string(input.shape().sample_size()) + ", expected " + std::to_string(in_));
  }
  const std::size_t batch = input.shape().n();
  BasicTensor<T> out(Shape(static_cast<std::int64_t>(batch), static_cast<std::int64_t>(out_), 1, 1));
  MatrixMap<T>(out.data(), batch, out_).noalias() =
      ConstMatrixMap<T>(input.data(), batch, in_) * ConstMatrixMap<T>(weights.data(), out_, in_).transpose();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < out_; ++o) out[n * out_ + o] += bias[o];
  }
  input_ = input;
  this->mark_cached();
  return out;
}

template <typename T>
BasicTensor<T> Dense<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  const std::size_t batch = input_.shape().n();
  if (upstream.shape() != Shape(static_cast<std::int64_t>(batch), static_cast<std::int64_t>(out_), 1, 1)) {
    throw ShapeError("dense backward: upstream " + upstream.shape().str());
  }
  ConstMatrixMap<T> grad_out(upstream.data(), batch, out_);
  ConstMatrixMap<T> in(input_.data(), batch, in_);
  MatrixMap<T>(weight_grad.data(), out_, in_).noalias() += grad_out.transpose() * in;
  for (std::size_t o = 0; o < out_; ++o) {
    double acc = 0;
    for (std::size_t n = 0; n < batch; ++n) acc += upstream[n * out_ + o];
    bias_grad[o] += static_cast<T>(acc);
  }
  BasicTensor<T> input_grad;
  if (input_grad_needed_) {
    input_grad = BasicTensor<T>(input_.shape());
    MatrixMap<T>(input_grad.data(), batch, in_).noalias() =
        grad_out * ConstMatrixMap<T>(weights.data(), out_, in_);
  }
  input_ = BasicTensor<T>();
  return input_grad;
}

template <typename T>
void Dense<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "weight", &weights, &weight_grad, true});
  out.push_back({prefix + "bias", &bias, &bias_grad, false});
}

template void he_init<float>(BasicTensor<float>&, std::size_t, Rng&);
template void he_init<double>(BasicTensor<double>&, std::size_t, Rng&);
template class Conv2d<float>;
template class Conv2d<double>;
template class Dense<float>;
template class Dense<double>;

}  // namespace tnfdt::nn
