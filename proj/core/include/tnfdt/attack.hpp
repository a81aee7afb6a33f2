#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tnfdt/nn/model.hpp"

namespace tnfdt::attack {

// Step size used when none is configured: alpha = epsilon * 0.01 / 0.3.
double default_alpha(double epsilon);

struct AttackConfig {
  double epsilon = 0.0;            // bound on |x_t - x_0| per pixel, input units
  std::size_t iterations = 40;     // T
  std::optional<double> alpha;     // defaults to default_alpha(epsilon)
  // Optional clamp of x_t to the valid pixel domain; off by default.
  std::optional<std::pair<double, double>> domain;

  double step() const { return alpha ? *alpha : default_alpha(epsilon); }
  void validate() const;
};

// A classifier that can also differentiate its loss with respect to the input.
template <typename T>
class AttackTarget : public nn::Classifier<T> {
 public:
  // Gradient of the multiclass log loss at `labels` with respect to `images`.
  virtual BasicTensor<T> input_gradient(const BasicTensor<T>& images, std::span<const int> labels) = 0;
};

// Full backpropagation through `model` in inference mode. Tensor
// normalization layers use their configured backward.
template <typename T>
BasicTensor<T> input_gradient(nn::Model<T>& model, const BasicTensor<T>& images, std::span<const int> labels);

template <typename T>
class ModelTarget final : public AttackTarget<T> {
 public:
  explicit ModelTarget(nn::Model<T>& model) : model_(model) {}
  std::size_t classes() const override { return model_.classes(); }
  BasicTensor<T> logits(const BasicTensor<T>& images) override { return model_.logits(images); }
  BasicTensor<T> input_gradient(const BasicTensor<T>& images, std::span<const int> labels) override {
    return attack::input_gradient(model_, images, labels);
  }

 private:
  nn::Model<T>& model_;
};

// x_{t+1} = x_0 + clip(x_t + alpha * sign(grad) - x_0, -epsilon, epsilon), sign(0) = 0.
template <typename T>
BasicTensor<T> pgd_step(const BasicTensor<T>& x_t, const BasicTensor<T>& x_0, const BasicTensor<T>& grad,
                        double alpha, double epsilon);

struct Trajectory {
  std::vector<int> clean_predictions;             // predictions on x_0
  std::vector<std::vector<int>> predictions;      // [t-1][image] for t = 1..T
  std::vector<double> max_perturbation;           // max |x_t - x_0| per iteration
};

template <typename T>
Trajectory pgd_attack(AttackTarget<T>& target, const BasicTensor<T>& images, std::span<const int> labels,
                      const AttackConfig& config);

struct AttackReport {
  double epsilon = 0;
  double robust_accuracy = 0;                     // sum(correct_per_iteration) / (N * T)
  double clean_accuracy = 0;
  std::size_t images = 0;                         // N
  std::size_t iterations = 0;                     // T
  std::vector<std::size_t> correct_per_iteration; // length T
  double max_perturbation = 0;

  std::size_t correct_total() const;
};

// Counts correct predictions over iterations 1..T; x_0 itself is not counted.
AttackReport score_trajectory(const Trajectory& trajectory, std::span<const int> labels, double epsilon);

// Attacks every image (in chunks of `batch_size`) and merges the counts.
template <typename T>
AttackReport robust_accuracy(AttackTarget<T>& target, const BasicTensor<T>& images, std::span<const int> labels,
                             const AttackConfig& config, std::size_t batch_size = 100);

}  // namespace tnfdt::attack
