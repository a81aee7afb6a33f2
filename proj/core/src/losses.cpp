#include "tnfdt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tnfdt::loss {

template <typename T>
ClassMatrix<T>::ClassMatrix(std::size_t classes, std::size_t batch, std::vector<T> values)
    : classes_(classes), batch_(batch), values_(std::move(values)) {
  if (values_.size() != classes_ * batch_) throw ShapeError("class matrix buffer size mismatch");
}

template <typename T>
ClassMatrix<T> ClassMatrix<T>::from_logits(const BasicTensor<T>& logits) {
  const Shape& s = logits.shape();
  if (s.y() != 1 || s.x() != 1) {
    throw UsageError("expected class scores of shape (n, classes, 1, 1), got " + s.str());
  }
  return ClassMatrix(s.z(), s.n(), std::vector<T>(logits.values().begin(), logits.values().end()));
}

template <typename T>
BasicTensor<T> ClassMatrix<T>::to_tensor() const {
  return BasicTensor<T>(Shape(static_cast<std::int64_t>(batch_), static_cast<std::int64_t>(classes_), 1, 1),
                        values_);
}

template <typename T>
ClassMatrix<T> softmax(const ClassMatrix<T>& predictions) {
  ClassMatrix<T> out(predictions.classes(), predictions.batch());
  for (std::size_t b = 0; b < predictions.batch(); ++b) {
    auto in = predictions.column(b);
    auto dst = out.column(b);
    const T max = *std::max_element(in.begin(), in.end());
    T total = 0;
    for (std::size_t y = 0; y < in.size(); ++y) {
      dst[y] = std::exp(in[y] - max);
      total += dst[y];
    }
    for (T& v : dst) v /= total;
  }
  return out;
}

namespace {

template <typename T>
void check_batch(std::size_t batch, const ClassMatrix<T>& predictions) {
  if (predictions.batch() == 0 || predictions.classes() == 0) throw ShapeError("empty prediction matrix");
  if (batch != predictions.batch()) {
    throw ShapeError("ground truth has " + std::to_string(batch) + " columns, predictions " +
                     std::to_string(predictions.batch()));
  }
}

void check_distribution(const ClassMatrix<double>& gt) {
  for (std::size_t b = 0; b < gt.batch(); ++b) {
    double total = 0;
    for (double v : gt.column(b)) {
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("ground truth entry outside [0,1] in column " + std::to_string(b));
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw DomainError("ground truth column " + std::to_string(b) + " sums to " + std::to_string(total));
    }
  }
}

}  // namespace

template <typename T>
LossResult<T> multiclass_log_loss(std::span<const int> labels, const ClassMatrix<T>& predictions) {
  check_batch(labels.size(), predictions);
  const std::size_t classes = predictions.classes();
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DomainError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  LossResult<T> r{0.0, softmax(predictions)};
  const T scale = T(1) / static_cast<T>(predictions.batch());
  for (std::size_t b = 0; b < predictions.batch(); ++b) {
    for (std::size_t y = 0; y < classes; ++y) {
      T& p = r.error.at(y, b);
      if (static_cast<int>(y) == labels[b]) {
        r.loss += static_cast<double>(scale) * -std::log(static_cast<double>(p));
        p = scale * (p - T(1));
      } else {
        p = scale * p;
      }
    }
  }
  return r;
}

template <typename T>
LossResult<T> multilabel_log_loss(const ClassMatrix<double>& ground_truth, const ClassMatrix<T>& predictions,
                                  double eps) {
  check_batch(ground_truth.batch(), predictions);
  if (ground_truth.classes() != predictions.classes()) throw ShapeError("ground truth class count mismatch");
  check_distribution(ground_truth);
  LossResult<T> r{0.0, softmax(predictions)};
  const T scale = T(1) / static_cast<T>(predictions.batch());
  for (std::size_t b = 0; b < predictions.batch(); ++b) {
    for (std::size_t y = 0; y < predictions.classes(); ++y) {
      T& p = r.error.at(y, b);
      const double gt = ground_truth.at(y, b);
      if (gt > eps) {
        r.loss += static_cast<double>(scale) * -std::log(static_cast<double>(p));
        p = scale * (p - static_cast<T>(gt));
      } else {
        p = scale * p;
      }
    }
  }
  return r;
}

template <typename T>
ClassMatrix<T> multilabel_loss_gradient(const ClassMatrix<double>& ground_truth, const ClassMatrix<T>& predictions,
                                        double eps) {
  check_batch(ground_truth.batch(), predictions);
  ClassMatrix<T> probs = softmax(predictions);
  const T scale = T(1) / static_cast<T>(predictions.batch());
  for (std::size_t b = 0; b < predictions.batch(); ++b) {
    T support = 0;
    for (double g : ground_truth.column(b)) support += g > eps ? T(1) : T(0);
    for (std::size_t y = 0; y < predictions.classes(); ++y) {
      const T indicator = ground_truth.at(y, b) > eps ? T(1) : T(0);
      probs.at(y, b) = scale * (support * probs.at(y, b) - indicator);
    }
  }
  return probs;
}

template <typename T>
std::vector<int> predicted_classes(const ClassMatrix<T>& predictions) {
  std::vector<int> out(predictions.batch());
  for (std::size_t b = 0; b < predictions.batch(); ++b) {
    auto col = predictions.column(b);
    out[b] = static_cast<int>(std::max_element(col.begin(), col.end()) - col.begin());
  }
  return out;
}

ClassMatrix<double> one_hot(std::span<const int> labels, std::size_t classes) {
  ClassMatrix<double> m(classes, labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw DomainError("label " + std::to_string(labels[b]) + " out of range");
    }
    m.at(static_cast<std::size_t>(labels[b]), b) = 1.0;
  }
  return m;
}

#define TNFDT_INSTANTIATE(T)                                                                              \
  template class ClassMatrix<T>;                                                                          \
  template ClassMatrix<T> softmax<T>(const ClassMatrix<T>&);                                              \
  template LossResult<T> multiclass_log_loss<T>(std::span<const int>, const ClassMatrix<T>&);             \
  template LossResult<T> multilabel_log_loss<T>(const ClassMatrix<double>&, const ClassMatrix<T>&, double); \
  template ClassMatrix<T> multilabel_loss_gradient<T>(const ClassMatrix<double>&, const ClassMatrix<T>&,  \
                                                      double);                                            \
  template std::vector<int> predicted_classes<T>(const ClassMatrix<T>&);

TNFDT_INSTANTIATE(float)
TNFDT_INSTANTIATE(double)

#undef TNFDT_INSTANTIATE

}  // namespace tnfdt::loss
