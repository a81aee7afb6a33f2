#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "tnfdt/nn/layers.hpp"
#include "tnfdt/rng.hpp"

namespace tnfdt::nn {

// Architecture description; enough to rebuild a model before loading weights.
struct ModelSpec {
  // "reference": residual CNN (stem, 3 stages, global average pool, dense head)
  // "mlp":       flatten, dense(hidden), relu, dense(classes)
  // "linear":    dense(classes) on the flattened input
  std::string arch = "reference";
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t classes = 10;
  std::size_t base_width = 16;  // reference: stage widths w, 2w, 4w
  std::size_t hidden = 64;      // mlp only
  bool tn = false;              // tensor normalization after every conv-block ReLU
  bool tn_fused = false;        // use the single-kernel ReLU+TN layer
  bool tn_exact_backward = false;

  // "key=value;key=value" form used in model blobs.
  std::string serialize() const;
  static ModelSpec parse(const std::string& text);

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Anything that maps a batch of images to class scores.
template <typename T>
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t classes() const = 0;
  // Scores of shape (n, classes, 1, 1); inference mode.
  virtual BasicTensor<T> logits(const BasicTensor<T>& images) = 0;
};

template <typename T>
class Model final : public Classifier<T> {
 public:
  Model(ModelSpec spec, Sequential<T> body);

  BasicTensor<T> forward(const BasicTensor<T>& images, Mode mode);
  // Propagates the error of the last forward to every layer. The returned
  // input error is only computed when `input_grad` is true.
  BasicTensor<T> backward(const BasicTensor<T>& upstream, bool input_grad = false);

  std::size_t classes() const override { return spec_.classes; }
  BasicTensor<T> logits(const BasicTensor<T>& images) override { return forward(images, Mode::infer); }

  std::vector<ParamRef<T>> params();
  std::vector<StateRef<T>> state();
  void zero_grad();

  // Observes every layer output (nested layers included) until reset with nullptr.
  void set_observer(ActivationObserver<T> observer);

  const ModelSpec& spec() const noexcept { return spec_; }
  Sequential<T>& body() noexcept { return body_; }

 private:
  ModelSpec spec_;
  Sequential<T> body_;
  std::unique_ptr<ActivationObserver<T>> observer_;  // stable address shared with body_
};

// Builds the architecture and draws He-initialized weights from `rng` in layer order.
template <typename T>
Model<T> build_model(const ModelSpec& spec, Rng& rng);

}  // namespace tnfdt::nn
