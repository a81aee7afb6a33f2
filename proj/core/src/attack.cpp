#include "tnfdt/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tnfdt/losses.hpp"

namespace tnfdt::attack {

double default_alpha(double epsilon) { return epsilon * 0.01 / 0.3; }

void AttackConfig::validate() const {
  if (!(epsilon >= 0)) throw DomainError("epsilon must be >= 0");
  if (iterations < 1) throw DomainError("iterations must be >= 1");
  if (alpha && !(*alpha >= 0)) throw DomainError("alpha must be >= 0");
  if (domain && !(domain->first <= domain->second)) throw DomainError("empty pixel domain");
}

std::size_t AttackReport::correct_total() const {
  return std::accumulate(correct_per_iteration.begin(), correct_per_iteration.end(), std::size_t{0});
}

template <typename T>
BasicTensor<T> input_gradient(nn::Model<T>& model, const BasicTensor<T>& images, std::span<const int> labels) {
  const BasicTensor<T> scores = model.forward(images, nn::Mode::infer);
  if (scores.shape().y() != 1 || scores.shape().x() != 1 || scores.shape().z() != model.classes()) {
    throw UsageError("model does not end in a class-score head; output " + scores.shape().str());
  }
  const auto result = loss::multiclass_log_loss(labels, loss::ClassMatrix<T>::from_logits(scores));
  BasicTensor<T> grad = model.backward(result.error.to_tensor(), true);
  // Parameter gradients are a by-product here; leave the accumulators clean.
  model.zero_grad();
  return grad;
}

template <typename T>
BasicTensor<T> pgd_step(const BasicTensor<T>& x_t, const BasicTensor<T>& x_0, const BasicTensor<T>& grad,
                        double alpha, double epsilon) {
  require_same_shape(x_t.shape(), x_0.shape(), "pgd_step");
  require_same_shape(grad.shape(), x_0.shape(), "pgd_step");
  BasicTensor<T> out(x_0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = grad[i];
    const double sign = g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
    const double delta = std::clamp(static_cast<double>(x_t[i]) + alpha * sign - static_cast<double>(x_0[i]),
                                    -epsilon, epsilon);
    out[i] = static_cast<T>(static_cast<double>(x_0[i]) + delta);
  }
  return out;
}

namespace {

template <typename T>
std::vector<int> predict(AttackTarget<T>& target, const BasicTensor<T>& images) {
  return loss::predicted_classes(loss::ClassMatrix<T>::from_logits(target.logits(images)));
}

}  // namespace

template <typename T>
Trajectory pgd_attack(AttackTarget<T>& target, const BasicTensor<T>& images, std::span<const int> labels,
                      const AttackConfig& config) {
  config.validate();
  if (labels.size() != images.shape().n()) throw ShapeError("one label per image required");
  const double alpha = config.step();
  Trajectory tr;
  tr.clean_predictions = predict(target, images);
  BasicTensor<T> x = images;
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const BasicTensor<T> grad = target.input_gradient(x, labels);
    x = pgd_step(x, images, grad, alpha, config.epsilon);
    if (config.domain) {
      for (T& v : x.values()) {
        v = static_cast<T>(std::clamp(static_cast<double>(v), config.domain->first, config.domain->second));
      }
    }
    double max_delta = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      max_delta = std::max(max_delta, std::abs(static_cast<double>(x[i]) - static_cast<double>(images[i])));
    }
    tr.max_perturbation.push_back(max_delta);
    tr.predictions.push_back(predict(target, x));
  }
  return tr;
}

AttackReport score_trajectory(const Trajectory& trajectory, std::span<const int> labels, double epsilon) {
  AttackReport r;
  r.epsilon = epsilon;
  r.images = labels.size();
  r.iterations = trajectory.predictions.size();
  if (r.images == 0) throw DomainError("robust accuracy of an empty set");
  if (r.iterations == 0) throw DomainError("trajectory without iterations");
  std::size_t clean = 0;
  for (std::size_t i = 0; i < trajectory.clean_predictions.size() && i < labels.size(); ++i) {
    clean += trajectory.clean_predictions[i] == labels[i];
  }
  r.clean_accuracy = static_cast<double>(clean) / static_cast<double>(r.images);
  for (const auto& step : trajectory.predictions) {
    if (step.size() != labels.size()) throw ShapeError("trajectory step has wrong image count");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += step[i] == labels[i];
    r.correct_per_iteration.push_back(correct);
  }
  for (double d : trajectory.max_perturbation) r.max_perturbation = std::max(r.max_perturbation, d);
  r.robust_accuracy =
      static_cast<double>(r.correct_total()) / (static_cast<double>(r.images) * static_cast<double>(r.iterations));
  return r;
}

template <typename T>
AttackReport robust_accuracy(AttackTarget<T>& target, const BasicTensor<T>& images, std::span<const int> labels,
                             const AttackConfig& config, std::size_t batch_size) {
  config.validate();
  const std::size_t n = labels.size();
  if (n == 0) throw DomainError("robust accuracy of an empty set");
  if (images.shape().n() != n) throw ShapeError("one label per image required");
  if (batch_size == 0) batch_size = n;

  AttackReport total;
  total.epsilon = config.epsilon;
  total.images = n;
  total.iterations = config.iterations;
  total.correct_per_iteration.assign(config.iterations, 0);
  std::size_t clean = 0;
  const std::size_t sample = images.shape().sample_size();
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t count = std::min(batch_size, n - begin);
    const auto first = images.values().begin() + static_cast<std::ptrdiff_t>(begin * sample);
    BasicTensor<T> chunk(images.shape().with_batch(count),
                         std::vector<T>(first, first + static_cast<std::ptrdiff_t>(count * sample)));
    const auto chunk_labels = labels.subspan(begin, count);
    const AttackReport part = score_trajectory(pgd_attack(target, chunk, chunk_labels, config), chunk_labels,
                                               config.epsilon);
    for (std::size_t t = 0; t < config.iterations; ++t) total.correct_per_iteration[t] += part.correct_per_iteration[t];
    clean += static_cast<std::size_t>(std::llround(part.clean_accuracy * static_cast<double>(count)));
    total.max_perturbation = std::max(total.max_perturbation, part.max_perturbation);
  }
  total.clean_accuracy = static_cast<double>(clean) / static_cast<double>(n);
  total.robust_accuracy = static_cast<double>(total.correct_total()) /
                          (static_cast<double>(n) * static_cast<double>(config.iterations));
  return total;
}

#define TNFDT_INSTANTIATE(T)                                                                                  \
  template BasicTensor<T> input_gradient<T>(nn::Model<T>&, const BasicTensor<T>&, std::span<const int>);      \
  template BasicTensor<T> pgd_step<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                      double, double);                                                        \
  template Trajectory pgd_attack<T>(AttackTarget<T>&, const BasicTensor<T>&, std::span<const int>,            \
                                    const AttackConfig&);                                                     \
  template AttackReport robust_accuracy<T>(AttackTarget<T>&, const BasicTensor<T>&, std::span<const int>,     \
                                           const AttackConfig&, std::size_t);

TNFDT_INSTANTIATE(float)
TNFDT_INSTANTIATE(double)

#undef TNFDT_INSTANTIATE

}  // namespace tnfdt::attack
