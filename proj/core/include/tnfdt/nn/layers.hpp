#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tnfdt/nn/kernels.hpp"
#include "tnfdt/nn/layer.hpp"
#include "tnfdt/rng.hpp"

namespace tnfdt::nn {

// Standard deviation of He-normal initialization, sqrt(2 / fan_in).
double he_std(std::size_t fan_in);

// Fills `weights` with draws from normal(0, sqrt(2 / fan_in)).
template <typename T>
void he_init(BasicTensor<T>& weights, std::size_t fan_in, Rng& rng);

// 2-D cross-correlation with zero padding. Weights (out, in, k, k), bias (out, 1, 1, 1).
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride = 1, std::size_t padding = 0);

  std::string kind() const override { return "conv2d"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void set_input_grad_needed(bool needed) override { input_grad_needed_ = needed; }

  void init(Rng& rng);
  Shape output_shape(const Shape& input) const;

  std::size_t in_channels() const noexcept { return in_; }
  std::size_t out_channels() const noexcept { return out_; }
  std::size_t kernel() const noexcept { return k_; }
  std::size_t stride() const noexcept { return stride_; }
  std::size_t padding() const noexcept { return pad_; }

  BasicTensor<T> weights;
  BasicTensor<T> bias;
  BasicTensor<T> weight_grad;
  BasicTensor<T> bias_grad;

 private:
  std::size_t in_, out_, k_, stride_, pad_;
  bool input_grad_needed_ = true;
  BasicTensor<T> input_;
  std::vector<T> columns_;
};

// Fully connected layer over the flattened sample. Weights (out, in, 1, 1).
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in_features, std::size_t out_features);

  std::string kind() const override { return "dense"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void set_input_grad_needed(bool needed) override { input_grad_needed_ = needed; }

  void init(Rng& rng);

  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }

  BasicTensor<T> weights;
  BasicTensor<T> bias;
  BasicTensor<T> weight_grad;
  BasicTensor<T> bias_grad;

 private:
  std::size_t in_, out_;
  bool input_grad_needed_ = true;
  BasicTensor<T> input_;
};

// Per-channel batch normalization. Train mode normalizes with the batch
// statistics over (n, y, x) and folds them into the running averages
// (running = momentum * running + (1 - momentum) * batch). Infer mode uses the
// running statistics, which start at mean 0 and variance 1.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  explicit BatchNorm2d(std::size_t channels, double eps = 1e-5, double momentum = 0.9);

  std::string kind() const override { return "batchnorm2d"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) override;

  std::size_t channels() const noexcept { return channels_; }
  double eps() const noexcept { return eps_; }
  double momentum() const noexcept { return momentum_; }

  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  BasicTensor<T> gamma_grad;
  BasicTensor<T> beta_grad;

 private:
  std::size_t channels_;
  double eps_, momentum_;
  Mode mode_ = Mode::train;
  BasicTensor<T> normalized_;       // x_hat of the last forward
  std::vector<double> inv_std_;     // per channel
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;

 private:
  BasicTensor<T> input_;
};

// Parameter-free per-pixel channel-mean subtraction.
template <typename T>
class TensorNorm final : public Layer<T> {
 public:
  explicit TensorNorm(bool exact_backward = false) : exact_backward_(exact_backward) {}

  std::string kind() const override { return "tensornorm"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;

  bool exact_backward() const noexcept { return exact_backward_; }
  // Per-pixel mean of the last forward, shape (n, 1, y, x).
  const BasicTensor<T>& cached_mean() const noexcept { return mean_; }

 private:
  bool exact_backward_;
  Shape shape_;
  BasicTensor<T> mean_;
};

// ReLU and tensor normalization computed in one kernel.
template <typename T>
class ReluTensorNorm final : public Layer<T> {
 public:
  explicit ReluTensorNorm(bool exact_backward = false) : exact_backward_(exact_backward) {}

  std::string kind() const override { return "relu_tensornorm"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;

 private:
  bool exact_backward_;
  BasicTensor<T> input_;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(std::size_t kernel, std::size_t stride) : k_(kernel), stride_(stride) {}

  std::string kind() const override { return "maxpool2d"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;

 private:
  std::size_t k_, stride_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;

 private:
  Shape input_shape_;
};

// (n, z, y, x) -> (n, z*y*x, 1, 1)
template <typename T>
class Flatten final : public Layer<T> {
 public:
  std::string kind() const override { return "flatten"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;

 private:
  Shape input_shape_;
};

// Called after every layer forward with the layer and its output.
template <typename T>
using ActivationObserver = std::function<void(const Layer<T>&, const BasicTensor<T>&)>;

template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;

  std::string kind() const override { return "sequential"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) override;
  void set_input_grad_needed(bool needed) override;
  void for_each_child(const std::function<void(Layer<T>&)>& fn) override;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push(LayerPtr<T> layer) { layers_.push_back(std::move(layer)); }

  bool empty() const noexcept { return layers_.empty(); }
  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }

  void set_observer(const ActivationObserver<T>* observer) { observer_ = observer; }

 private:
  std::vector<LayerPtr<T>> layers_;
  const ActivationObserver<T>* observer_ = nullptr;
};

// out = main(x) + shortcut(x); an empty shortcut is the identity.
template <typename T>
class Residual final : public Layer<T> {
 public:
  Residual() = default;

  std::string kind() const override { return "residual"; }
  BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& upstream) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) override;
  void for_each_child(const std::function<void(Layer<T>&)>& fn) override;

  Sequential<T>& main() noexcept { return main_; }
  Sequential<T>& shortcut() noexcept { return shortcut_; }

 private:
  Sequential<T> main_;
  Sequential<T> shortcut_;
};

}  // namespace tnfdt::nn
