#include "tnfdt/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "tnfdt/fdt.hpp"
#include "tnfdt/losses.hpp"

namespace tnfdt::train {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::overlay: return "ov";
    case Variant::fdt: return "fdt";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  if (text == "baseline") return Variant::baseline;
  if (text == "ov" || text == "overlay") return Variant::overlay;
  if (text == "fdt") return Variant::fdt;
  throw DomainError("unknown variant '" + text + "' (baseline, ov, fdt)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0)) throw DomainError("learning rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw DomainError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw DomainError("weight decay must be >= 0");
  if (batch_size == 0) throw DomainError("batch size must be >= 1");
  if (lr_drop_period == 0) throw DomainError("lr drop period must be >= 1");
  if (!(lr_drop_factor > 0)) throw DomainError("lr drop factor must be > 0");
  augmentation.validate();
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> TrainConfig::describe() const {
  return {{"variant", to_string(variant)},
          {"learning_rate", fmt(learning_rate)},
          {"momentum", fmt(momentum)},
          {"weight_decay", fmt(weight_decay)},
          {"batch_size", std::to_string(batch_size)},
          {"epochs", std::to_string(epochs)},
          {"lr_drop_period", std::to_string(lr_drop_period)},
          {"lr_drop_factor", fmt(lr_drop_factor)},
          {"seed", std::to_string(seed)},
          {"augment", augment ? "true" : "false"},
          {"max_shift", std::to_string(augmentation.max_shift)},
          {"flip_prob", fmt(augmentation.flip_prob)}};
}

template <typename T>
void sgd_update(std::span<const nn::ParamRef<T>> params, OptimizerState<T>& state, double lr, double momentum,
                double weight_decay) {
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.emplace_back(p.value->shape());
  }
  if (state.velocity.size() != params.size()) throw UsageError("optimizer state does not match parameter list");
  const T m = static_cast<T>(momentum);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    BasicTensor<T>& v = state.velocity[i];
    if (v.shape() != p.value->shape() || p.grad->shape() != p.value->shape()) {
      throw UsageError("shape mismatch for parameter " + p.name);
    }
    const T wd = p.decay ? static_cast<T>(weight_decay) : T(0);
    T* w = p.value->data();
    const T* g = p.grad->data();
    T* vel = v.data();
    for (std::size_t j = 0; j < v.size(); ++j) {
      vel[j] = m * vel[j] + (g[j] + wd * w[j]);
      w[j] -= rate * vel[j];
    }
  }
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
  return config.learning_rate *
         std::pow(config.lr_drop_factor, static_cast<double>(epoch / config.lr_drop_period));
}

void MetricsLog::append(const EpochRecord& record) {
  if (!records.empty() && record.epoch <= records.back().epoch) {
    throw UsageError("metrics epochs must strictly increase");
  }
  records.push_back(record);
}

std::string MetricsLog::to_csv(bool include_wall_time) const {
  std::ostringstream out;
  for (const auto& [k, v] : header) out << "# " << k << "=" << v << "\n";
  out << "epoch,train_loss,train_accuracy,val_accuracy,learning_rate";
  if (include_wall_time) out << ",wall_seconds";
  out << "\n";
  for (const auto& r : records) {
    out << r.epoch << "," << fmt(r.train_loss) << "," << fmt(r.train_accuracy) << "," << fmt(r.val_accuracy) << ","
        << fmt(r.learning_rate);
    if (include_wall_time) out << "," << fmt(r.wall_seconds);
    out << "\n";
  }
  return out.str();
}

EpochRecord train_epoch(nn::Model<float>& model, const data::LabeledDataset& dataset, const TrainConfig& config,
                        OptimizerState<float>& state, std::size_t epoch) {
  config.validate();
  dataset.validate();
  if (dataset.classes != model.classes()) {
    throw UsageError("dataset has " + std::to_string(dataset.classes) + " classes, model " +
                     std::to_string(model.classes()));
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = dataset.size();
  const double lr = lr_schedule(epoch, config);

  Rng epoch_rng = Rng(config.seed).split(epoch);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(epoch_rng.int_below(i + 1))]);
  }

  const auto by_class = data::class_index(dataset);
  const data::AugmentConfig& aug = config.augmentation;
  const fdt::ImageFetch fetch = [&](std::size_t index, Rng& rng) {
    const Tensor raw = dataset.image(index);
    return config.augment ? data::preprocess_train(raw, aug, rng) : data::normalize(raw, aug);
  };

  const auto params = model.params();
  double loss_sum = 0;
  std::size_t correct = 0;
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t begin = b * config.batch_size;
    const std::size_t count = std::min(config.batch_size, n - begin);
    const Rng batch_rng = epoch_rng.split(b);

    Tensor images;
    std::vector<int> labels;
    loss::ClassMatrix<double> distribution;
    if (config.variant == Variant::baseline) {
      images = Tensor(dataset.images.shape().with_batch(count));
      labels.resize(count);
      for (std::size_t s = 0; s < count; ++s) {
        Rng slot = batch_rng.split(s);
        const std::size_t index = order[begin + s];
        const Tensor img = fetch(index, slot);
        std::copy(img.values().begin(), img.values().end(), images.sample(s).begin());
        labels[s] = dataset.labels[index];
      }
    } else {
      fdt::FdtBatch fb = fdt::fdt_batch(dataset, by_class, count, batch_rng, {std::nullopt, fetch});
      images = std::move(fb.images);
      labels = std::move(fb.top_labels);
      distribution = std::move(fb.distribution);
    }

    const Tensor scores = model.forward(images, nn::Mode::train);
    const auto predictions = loss::ClassMatrix<float>::from_logits(scores);
    const loss::LossResult<float> result = config.variant == Variant::fdt
                                               ? loss::multilabel_log_loss(distribution, predictions)
                                               : loss::multiclass_log_loss(labels, predictions);
    if (!std::isfinite(result.loss)) {
      throw NumericError(epoch, "non-finite loss in epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
    }
    const auto predicted = loss::predicted_classes(predictions);
    for (std::size_t s = 0; s < count; ++s) correct += predicted[s] == labels[s];
    loss_sum += result.loss * static_cast<double>(count);

    model.zero_grad();
    model.backward(result.error.to_tensor());
    sgd_update<float>(params, state, lr, config.momentum, config.weight_decay);
  }
  for (const auto& p : params) {
    if (!p.value->all_finite()) throw NumericError(epoch, "non-finite parameter " + p.name);
  }

  EpochRecord rec;
  rec.epoch = epoch;
  rec.train_loss = loss_sum / static_cast<double>(n);
  rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  rec.learning_rate = lr;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

double evaluate(nn::Classifier<float>& model, const Tensor& images, std::span<const int> labels,
                std::size_t batch_size) {
  const std::size_t n = labels.size();
  if (n == 0) throw DomainError("evaluation set is empty");
  if (images.shape().n() != n) throw ShapeError("one label per image required");
  if (batch_size == 0) batch_size = n;
  const std::size_t sample = images.shape().sample_size();
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t count = std::min(batch_size, n - begin);
    const auto first = images.values().begin() + static_cast<std::ptrdiff_t>(begin * sample);
    const Tensor chunk(images.shape().with_batch(count),
                       std::vector<float>(first, first + static_cast<std::ptrdiff_t>(count * sample)));
    const auto predicted = loss::predicted_classes(loss::ClassMatrix<float>::from_logits(model.logits(chunk)));
    for (std::size_t i = 0; i < count; ++i) correct += predicted[i] == labels[begin + i];
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double evaluate(nn::Classifier<float>& model, const data::LabeledDataset& dataset,
                const data::AugmentConfig& augmentation, std::size_t batch_size) {
  if (dataset.size() == 0) throw DomainError("evaluation set is empty");
  return evaluate(model, data::normalize(dataset.images, augmentation), dataset.labels, batch_size);
}

MetricsLog fit(nn::Model<float>& model, const data::LabeledDataset& train_set, const data::LabeledDataset* validation,
               const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  MetricsLog log;
  log.header = config.describe();
  log.header.emplace_back("model", model.spec().serialize());
  OptimizerState<float> state;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec = train_epoch(model, train_set, config, state, epoch);
    if (validation != nullptr) rec.val_accuracy = evaluate(model, *validation, config.augmentation);
    log.append(rec);
    if (on_epoch) on_epoch(rec);
  }
  return log;
}

template void sgd_update<float>(std::span<const nn::ParamRef<float>>, OptimizerState<float>&, double, double, double);
template void sgd_update<double>(std::span<const nn::ParamRef<double>>, OptimizerState<double>&, double, double,
                                 double);

}  // namespace tnfdt::train
