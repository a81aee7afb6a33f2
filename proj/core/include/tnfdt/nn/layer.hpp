#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tnfdt/tensor.hpp"

namespace tnfdt::nn {

enum class Mode { train, infer };

// A learnable tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  BasicTensor<T>* value;
  BasicTensor<T>* grad;
  bool decay;  // weight decay applies (weights yes; biases and BN affine no)
};

// Any tensor that is part of the serialized model state.
template <typename T>
struct StateRef {
  std::string name;
  BasicTensor<T>* value;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;

  // Caches whatever backward needs; the cache belongs to this call only.
  virtual BasicTensor<T> forward(const BasicTensor<T>& input, Mode mode) = 0;

  // Error with respect to the input of the most recent forward. Parameter
  // gradients are added to the accumulators. Consumes the cache.
  virtual BasicTensor<T> backward(const BasicTensor<T>& upstream) = 0;

  virtual void collect_params(const std::string& /*prefix*/, std::vector<ParamRef<T>>& /*out*/) {}
  virtual void collect_state(const std::string& prefix, std::vector<StateRef<T>>& out) {
    std::vector<ParamRef<T>> params;
    collect_params(prefix, params);
    for (auto& p : params) out.push_back({p.name, p.value});
  }

  // Layers whose input error is never consumed (the first layer in training)
  // may skip computing it and return an empty tensor.
  virtual void set_input_grad_needed(bool /*needed*/) {}

  virtual void for_each_child(const std::function<void(Layer<T>&)>& /*fn*/) {}

 protected:
  void mark_cached() noexcept { cached_ = true; }
  void consume_cache() {
    if (!cached_) throw UsageError(kind() + ": backward without a preceding forward");
    cached_ = false;
  }

 private:
  bool cached_ = false;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

}  // namespace tnfdt::nn
