#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "tnfdt/rng.hpp"
#include "tnfdt/tensor.hpp"

namespace tnfdt::data {

enum class Split { train, validation };

// Images are kept in raw [0, 255] scale, shape (N, z, y, x).
struct LabeledDataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t classes = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
  Tensor image(std::size_t i) const { return images.sample_copy(i); }
  // Throws DataError unless labels are in [0, classes) and sizes agree.
  void validate() const;
};

struct AugmentConfig {
  int max_shift = 4;           // pixels in each direction, zero fill
  double flip_prob = 0.5;      // horizontal flip
  std::array<float, 3> means{122.0f, 117.0f, 104.0f};  // R, G, B; grayscale uses R
  float divisor = 256.0f;
  bool shift_enabled = true;
  bool flip_enabled = true;

  void validate() const;
};

// Big-endian IDX: images magic 0x00000803 (N, rows, cols), labels magic 0x00000801 (N).
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        Split split = Split::train, std::size_t classes = 10);
void write_idx(const LabeledDataset& dataset, const std::filesystem::path& images,
               const std::filesystem::path& labels);

// CIFAR-10 binary batches: 3073-byte records, label byte then R, G, B planes of 32x32.
// SVHN converted to the same record layout loads through this function too.
LabeledDataset load_cifar10_binary(std::span<const std::filesystem::path> files, Split split = Split::train,
                                   std::size_t classes = 10);
void write_cifar10_binary(const LabeledDataset& dataset, const std::filesystem::path& file);

// out(y, x) = in(y - dy, x - dx), zero outside. Image shape (1, z, y, x).
Tensor shift_image(const Tensor& image, int dx, int dy);
Tensor flip_horizontal(const Tensor& image);

// Random shift in [-s, s]^2, then horizontal flip with probability p.
Tensor augment(const Tensor& image, const AugmentConfig& config, Rng& rng);

// (raw - channel mean) / divisor. Works on any batch size.
Tensor normalize(const Tensor& images, const AugmentConfig& config);
Tensor denormalize(const Tensor& images, const AugmentConfig& config);

// Training-time pipeline for one raw image: augment, then normalize.
Tensor preprocess_train(const Tensor& raw_image, const AugmentConfig& config, Rng& rng);

struct SyntheticOptions {
  double noise = 0.0;          // uniform noise amplitude in raw units
  std::size_t channels = 1;
};

// Class c lights up its own band of pixels (flattened pixel index p belongs to
// band floor(p * C / (y * x))); labels cycle 0..C-1. Linearly separable.
LabeledDataset synthetic_dataset(Rng& rng, std::size_t classes, std::size_t count, std::size_t height,
                                 std::size_t width, const SyntheticOptions& options = {});

// First `count` images (all when count is 0 or larger than the set).
LabeledDataset head(const LabeledDataset& dataset, std::size_t count);

// Dataset indices grouped by class.
std::vector<std::vector<std::size_t>> class_index(const LabeledDataset& dataset);

}  // namespace tnfdt::data
