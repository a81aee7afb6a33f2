#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tnfdt/data.hpp"
#include "tnfdt/losses.hpp"
#include "tnfdt/rng.hpp"

namespace tnfdt::fdt {

// Normalized harmonic weights F_i = (1/i) / sum_{j<=k} (1/j), i = 1..k.
using FactorVector = std::vector<double>;

FactorVector harmonic_factors(std::size_t k);

// Number of images to superpose, uniform over {1, ..., classes}.
std::size_t sample_composition_size(Rng& rng, std::size_t classes);

// k distinct classes in random order; position i receives factor F_{i+1}.
std::vector<int> sample_class_subset(Rng& rng, std::size_t classes, std::size_t k);

struct CompositeExample {
  Tensor image;                        // (1, z, y, x)
  std::vector<double> distribution;    // length C, GT[classes[i]] = factors[i]
  std::vector<int> classes;
  FactorVector factors;
  std::vector<std::size_t> sources;    // dataset index of each superposed image

  // Class with the largest factor; the single label used by the overlay ablation.
  int top_class() const { return classes.front(); }
};

// Produces the model-domain image for a dataset index. The default returns
// the raw stored image unchanged.
using ImageFetch = std::function<Tensor(std::size_t index, Rng& rng)>;

// D = sum_i F_i * I_{j_i} with j_i drawn uniformly from the images of classes[i].
CompositeExample compose_example(const data::LabeledDataset& dataset,
                                 const std::vector<std::vector<std::size_t>>& by_class,
                                 std::span<const int> classes, const FactorVector& factors, Rng& rng,
                                 const ImageFetch& fetch = {});

struct FdtBatch {
  Tensor images;                            // (B, z, y, x)
  loss::ClassMatrix<double> distribution;   // C x B
  std::vector<int> top_labels;              // largest-factor class per slot
  std::vector<CompositeExample> examples;   // per-slot metadata (image left empty)
};

struct FdtOptions {
  std::optional<std::size_t> forced_k;  // fix the composition size instead of sampling it
  ImageFetch fetch;
};

// B independent composites. Slot s draws from rng.split(s) only, so the batch
// is a function of the generator's seed.
FdtBatch fdt_batch(const data::LabeledDataset& dataset, const std::vector<std::vector<std::size_t>>& by_class,
                   std::size_t batch, const Rng& rng, const FdtOptions& options = {});

}  // namespace tnfdt::fdt
