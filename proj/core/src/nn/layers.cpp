#include "tnfdt/nn/layers.hpp"

#include <cmath>

namespace tnfdt::nn {

// ----- BatchNorm2d ---------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  if (channels_ == 0) throw ShapeError("batchnorm2d: channels must be >= 1");
  if (!(eps_ > 0)) throw DomainError("batchnorm2d: eps must be > 0");
  if (momentum_ < 0 || momentum_ > 1) throw DomainError("batchnorm2d: momentum must be in [0, 1]");
  const Shape s(static_cast<std::int64_t>(channels_), 1, 1, 1);
  gamma = BasicTensor<T>(s, T(1));
  beta = BasicTensor<T>(s);
  running_mean = BasicTensor<T>(s);
  running_var = BasicTensor<T>(s, T(1));
  gamma_grad = BasicTensor<T>(s);
  beta_grad = BasicTensor<T>(s);
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::forward(const BasicTensor<T>& input, Mode mode) {
  const Shape& s = input.shape();
  if (s.z() != channels_) {
    throw ShapeError("batchnorm2d: input has " + std::to_string(s.z()) + " channels, expected " +
                     std::to_string(channels_));
  }
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n() * plane);
  normalized_ = BasicTensor<T>(s);
  inv_std_.assign(channels_, 0.0);
  BasicTensor<T> out(s);

  for (std::size_t c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double acc = 0;
      for (std::size_t n = 0; n < s.n(); ++n) {
        const T* src = input.data() + (n * channels_ + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) acc += src[p];
      }
      mean = acc / count;
      double sq = 0;
      for (std::size_t n = 0; n < s.n(); ++n) {
        const T* src = input.data() + (n * channels_ + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const double d = src[p] - mean;
          sq += d * d;
        }
      }
      var = sq / count;
      running_mean[c] = static_cast<T>(momentum_ * running_mean[c] + (1 - momentum_) * mean);
      running_var[c] = static_cast<T>(momentum_ * running_var[c] + (1 - momentum_) * var);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv_std;
    const T g = gamma[c];
    const T b = beta[c];
    for (std::size_t n = 0; n < s.n(); ++n) {
      const std::size_t base = (n * channels_ + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const T xhat = static_cast<T>((input[base + p] - mean) * inv_std);
        normalized_[base + p] = xhat;
        out[base + p] = g * xhat + b;
      }
    }
  }
  mode_ = mode;
  this->mark_cached();
  return out;
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  const Shape& s = normalized_.shape();
  require_same_shape(upstream.shape(), s, "batchnorm2d backward");
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n() * plane);
  BasicTensor<T> grad(s);

  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t n = 0; n < s.n(); ++n) {
      const std::size_t base = (n * channels_ + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        sum_dy += upstream[base + p];
        sum_dy_xhat += static_cast<double>(upstream[base + p]) * normalized_[base + p];
      }
    }
    gamma_grad[c] += static_cast<T>(sum_dy_xhat);
    beta_grad[c] += static_cast<T>(sum_dy);

    const double scale = gamma[c] * inv_std_[c];
    for (std::size_t n = 0; n < s.n(); ++n) {
      const std::size_t base = (n * channels_ + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        if (mode_ == Mode::train) {
          // dx = gamma/sigma * (dy - mean(dy) - x_hat * mean(dy * x_hat))
          grad[base + p] = static_cast<T>(
              scale * (upstream[base + p] - sum_dy / count - normalized_[base + p] * sum_dy_xhat / count));
        } else {
          grad[base + p] = static_cast<T>(scale * upstream[base + p]);
        }
      }
    }
  }
  return grad;
}

template <typename T>
void BatchNorm2d<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "gamma", &gamma, &gamma_grad, false});
  out.push_back({prefix + "beta", &beta, &beta_grad, false});
}

template <typename T>
void BatchNorm2d<T>::collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) {
  out.push_back({prefix + "gamma", &gamma});
  out.push_back({prefix + "beta", &beta});
  out.push_back({prefix + "running_mean", &running_mean});
  out.push_back({prefix + "running_var", &running_var});
}

// ----- activations ---------------------------------------------------------

template <typename T>
BasicTensor<T> Relu<T>::forward(const BasicTensor<T>& input, Mode) {
  input_ = input;
  this->mark_cached();
  return relu_forward(input);
}

template <typename T>
BasicTensor<T> Relu<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  return relu_backward(upstream, input_);
}

template <typename T>
BasicTensor<T> TensorNorm<T>::forward(const BasicTensor<T>& input, Mode) {
  auto r = tn_forward(input);
  shape_ = input.shape();
  mean_ = std::move(r.mean);
  this->mark_cached();
  return std::move(r.output);
}

template <typename T>
BasicTensor<T> TensorNorm<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  return exact_backward_ ? tn_backward_exact(upstream, shape_) : tn_backward(upstream, shape_);
}

template <typename T>
BasicTensor<T> ReluTensorNorm<T>::forward(const BasicTensor<T>& input, Mode) {
  input_ = input;
  this->mark_cached();
  return relu_tn_forward(input).output;
}

template <typename T>
BasicTensor<T> ReluTensorNorm<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  const Shape& s = input_.shape();
  const BasicTensor<T> through = exact_backward_ ? tn_backward_exact(upstream, s) : tn_backward(upstream, s);
  return relu_backward(through, input_);
}

// ----- pooling ---------------------------------------------------------------

template <typename T>
BasicTensor<T> MaxPool2d<T>::forward(const BasicTensor<T>& input, Mode) {
  auto r = maxpool2d_forward(input, k_, stride_);
  input_shape_ = input.shape();
  argmax_ = std::move(r.argmax);
  this->mark_cached();
  return std::move(r.output);
}

template <typename T>
BasicTensor<T> MaxPool2d<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  return maxpool2d_backward(upstream, argmax_, input_shape_);
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::forward(const BasicTensor<T>& input, Mode) {
  input_shape_ = input.shape();
  this->mark_cached();
  return global_avg_pool_forward(input);
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  return global_avg_pool_backward(upstream, input_shape_);
}

template <typename T>
BasicTensor<T> Flatten<T>::forward(const BasicTensor<T>& input, Mode) {
  input_shape_ = input.shape();
  this->mark_cached();
  const Shape& s = input.shape();
  return input.reshaped(Shape(static_cast<std::int64_t>(s.n()), static_cast<std::int64_t>(s.sample_size()), 1, 1));
}

template <typename T>
BasicTensor<T> Flatten<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  return upstream.reshaped(input_shape_);
}

// ----- containers ------------------------------------------------------------

template <typename T>
BasicTensor<T> Sequential<T>::forward(const BasicTensor<T>& input, Mode mode) {
  BasicTensor<T> x = input;
  for (auto& layer : layers_) {
    x = layer->forward(x, mode);
    if (observer_ != nullptr && *observer_) (*observer_)(*layer, x);
  }
  this->mark_cached();
  return x;
}

template <typename T>
BasicTensor<T> Sequential<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  BasicTensor<T> g = upstream;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect_params(prefix + std::to_string(i) + ".", out);
  }
}

template <typename T>
void Sequential<T>::collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect_state(prefix + std::to_string(i) + ".", out);
  }
}

template <typename T>
void Sequential<T>::set_input_grad_needed(bool needed) {
  if (!layers_.empty()) layers_.front()->set_input_grad_needed(needed);
}

template <typename T>
void Sequential<T>::for_each_child(const std::function<void(Layer<T>&)>& fn) {
  for (auto& layer : layers_) fn(*layer);
}

template <typename T>
BasicTensor<T> Residual<T>::forward(const BasicTensor<T>& input, Mode mode) {
  BasicTensor<T> a = main_.forward(input, mode);
  BasicTensor<T> b = shortcut_.empty() ? input : shortcut_.forward(input, mode);
  this->mark_cached();
  return residual_add(a, b);
}

template <typename T>
BasicTensor<T> Residual<T>::backward(const BasicTensor<T>& upstream) {
  this->consume_cache();
  auto [to_main, to_shortcut] = residual_add_backward(upstream);
  BasicTensor<T> g = main_.backward(to_main);
  if (!shortcut_.empty()) to_shortcut = shortcut_.backward(to_shortcut);
  return g + to_shortcut;
}

template <typename T>
void Residual<T>::collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  main_.collect_params(prefix + "main.", out);
  shortcut_.collect_params(prefix + "shortcut.", out);
}

template <typename T>
void Residual<T>::collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) {
  main_.collect_state(prefix + "main.", out);
  shortcut_.collect_state(prefix + "shortcut.", out);
}

template <typename T>
void Residual<T>::for_each_child(const std::function<void(Layer<T>&)>& fn) {
  fn(main_);
  fn(shortcut_);
}

#define TNFDT_INSTANTIATE(T)          \
  template class BatchNorm2d<T>;      \
  template class Relu<T>;             \
  template class TensorNorm<T>;       \
  template class ReluTensorNorm<T>;   \
  template class MaxPool2d<T>;        \
  template class GlobalAvgPool<T>;    \
  template class Flatten<T>;          \
  template class Sequential<T>;       \
  template class Residual<T>;

TNFDT_INSTANTIATE(float)
TNFDT_INSTANTIATE(double)

#undef TNFDT_INSTANTIATE

}  // namespace tnfdt::nn
