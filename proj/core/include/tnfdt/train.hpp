#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tnfdt/data.hpp"
#include "tnfdt/nn/model.hpp"

namespace tnfdt::train {

// baseline: augmented single images, multiclass loss
// overlay:  superposed images, multiclass loss on the largest-factor class
// fdt:      superposed images, multi-label loss on the factor distribution
enum class Variant { baseline, overlay, fdt };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t batch_size = 100;
  std::size_t epochs = 15;
  std::size_t lr_drop_period = 5;
  double lr_drop_factor = 0.1;
  std::uint64_t seed = 0;
  Variant variant = Variant::baseline;
  bool augment = true;
  data::AugmentConfig augmentation;

  void validate() const;
  // Ordered key/value view used for log headers.
  std::vector<std::pair<std::string, std::string>> describe() const;
};

template <typename T>
struct OptimizerState {
  std::vector<BasicTensor<T>> velocity;  // one per parameter, same shape
};

// v <- momentum * v + (g + wd * w) ; w <- w - lr * v
// Weight decay only touches parameters flagged `decay`.
template <typename T>
void sgd_update(std::span<const nn::ParamRef<T>> params, OptimizerState<T>& state, double lr, double momentum,
                double weight_decay);

// base * factor^floor(epoch / period)
double lr_schedule(std::size_t epoch, const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;     // argmax vs the batch's (top) labels
  double val_accuracy = -1;      // -1 when no validation set
  double learning_rate = 0;
  double wall_seconds = 0;
};

struct MetricsLog {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<EpochRecord> records;

  void append(const EpochRecord& record);  // epochs must strictly increase
  // Comment header with the configuration, then one CSV line per epoch.
  // Wall time is left out unless asked for, so logs of identical runs match byte for byte.
  std::string to_csv(bool include_wall_time = false) const;
};

// One pass over ceil(N / B) batches. The sample order and all augmentation
// and composition draws derive from Rng(config.seed).split(epoch).
EpochRecord train_epoch(nn::Model<float>& model, const data::LabeledDataset& dataset, const TrainConfig& config,
                        OptimizerState<float>& state, std::size_t epoch);

// Fraction of images whose argmax score equals the label.
double evaluate(nn::Classifier<float>& model, const Tensor& images, std::span<const int> labels,
                std::size_t batch_size = 250);
// Normalizes the raw images first.
double evaluate(nn::Classifier<float>& model, const data::LabeledDataset& dataset,
                const data::AugmentConfig& augmentation, std::size_t batch_size = 250);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs config.epochs epochs; evaluates on `validation` after each epoch when given.
MetricsLog fit(nn::Model<float>& model, const data::LabeledDataset& train_set,
               const data::LabeledDataset* validation, const TrainConfig& config,
               const EpochCallback& on_epoch = {});

}  // namespace tnfdt::train
