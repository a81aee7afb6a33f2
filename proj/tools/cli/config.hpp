#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tnfdt/data.hpp"
#include "tnfdt/nn/model.hpp"
#include "tnfdt/train.hpp"

namespace tnfdt::cli {

// Bad or unknown configuration; `key()` names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct DatasetConfig {
  std::string kind = "idx";  // idx | cifar10 | synthetic
  std::size_t classes = 10;
  std::filesystem::path train_images, train_labels, val_images, val_labels;  // idx
  std::vector<std::filesystem::path> train_files, val_files;                 // cifar10
  std::size_t train_limit = 0;  // 0 keeps everything
  std::size_t val_limit = 0;
  // synthetic
  std::size_t synthetic_train = 200;
  std::size_t synthetic_val = 100;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t channels = 1;
  double synthetic_noise = 0.0;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  nn::ModelSpec model;  // channels, size and classes come from the dataset
  train::TrainConfig train;
  std::vector<double> epsilons;
  std::size_t attack_iterations = 40;
  std::size_t attack_limit = 0;
  std::filesystem::path out = "runs";
  std::uint64_t seed = 0;

  // Flat key=value listing that parses back to the same configuration.
  std::string to_text() const;
};

// Flat `key = value` lines; '#' starts a comment. Unknown or repeated keys are
// rejected. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Throws ConfigError for any referenced input path that does not exist.
void check_paths(const DatasetConfig& dataset);

std::vector<double> parse_epsilons(const std::string& text);

struct Datasets {
  data::LabeledDataset train;
  data::LabeledDataset validation;
};

// Synthetic data is drawn from `seed`.
Datasets load_datasets(const DatasetConfig& config, std::uint64_t seed);

// Spec strings for --dataset:
//   idx:IMAGES,LABELS    cifar10:FILE[,FILE...]    synthetic:classes=2,count=100,height=8,width=8,seed=1
data::LabeledDataset load_dataset_spec(const std::string& spec, std::size_t classes = 10);

}  // namespace tnfdt::cli
