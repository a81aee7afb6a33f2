#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tnfdt/tensor.hpp"

namespace tnfdt::loss {

// Y classes x B batch columns. Column b is contiguous, so the buffer order is
// the same as a logits tensor of shape (B, Y, 1, 1).
template <typename T>
class ClassMatrix {
 public:
  ClassMatrix() = default;
  ClassMatrix(std::size_t classes, std::size_t batch, T value = T(0))
      : classes_(classes), batch_(batch), values_(classes * batch, value) {}
  ClassMatrix(std::size_t classes, std::size_t batch, std::vector<T> values);

  static ClassMatrix from_logits(const BasicTensor<T>& logits);
  BasicTensor<T> to_tensor() const;

  std::size_t classes() const noexcept { return classes_; }
  std::size_t batch() const noexcept { return batch_; }

  T& at(std::size_t y, std::size_t b) noexcept { return values_[b * classes_ + y]; }
  const T& at(std::size_t y, std::size_t b) const noexcept { return values_[b * classes_ + y]; }
  std::span<T> column(std::size_t b) noexcept { return std::span<T>(values_).subspan(b * classes_, classes_); }
  std::span<const T> column(std::size_t b) const noexcept {
    return std::span<const T>(values_).subspan(b * classes_, classes_);
  }
  std::span<const T> values() const noexcept { return values_; }

  friend bool operator==(const ClassMatrix&, const ClassMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::size_t batch_ = 0;
  std::vector<T> values_;
};

template <typename T>
struct LossResult {
  double loss = 0;        // L
  ClassMatrix<T> error;   // E, the error propagated into the logits
};

// Default support threshold of the multi-label loss.
inline constexpr double kSupportEps = 1e-6;

// Column-wise softmax with max subtraction.
template <typename T>
ClassMatrix<T> softmax(const ClassMatrix<T>& predictions);

// Cross entropy against integer labels:
//   L = sum_b (1/B) * -log P_S[label_b, b]
//   E = (1/B) * (P_S - onehot(label))
template <typename T>
LossResult<T> multiclass_log_loss(std::span<const int> labels, const ClassMatrix<T>& predictions);

// Soft-target variant. For entries with GT > eps:
//   L += (1/B) * -log P_S,  E = (1/B) * (P_S - GT)
// and E = (1/B) * P_S elsewhere. L is not weighted by GT.
template <typename T>
LossResult<T> multilabel_log_loss(const ClassMatrix<double>& ground_truth, const ClassMatrix<T>& predictions,
                                  double eps = kSupportEps);

// True derivative of the multi-label L above: (1/B) * (k * P_S - 1_support)
// per column with k supported classes. Differs from the propagated E; kept
// for gradient checks.
template <typename T>
ClassMatrix<T> multilabel_loss_gradient(const ClassMatrix<double>& ground_truth,
                                        const ClassMatrix<T>& predictions, double eps = kSupportEps);

// Argmax per column.
template <typename T>
std::vector<int> predicted_classes(const ClassMatrix<T>& predictions);

// One-hot distribution matrix for integer labels.
ClassMatrix<double> one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace tnfdt::loss
