#include "tnfdt/fdt.hpp"

#include <numeric>
#include <string>

namespace tnfdt::fdt {

FactorVector harmonic_factors(std::size_t k) {
  if (k == 0) throw DomainError("harmonic_factors requires k >= 1");
  FactorVector f(k);
  double total = 0;
  for (std::size_t i = 0; i < k; ++i) {
    f[i] = 1.0 / static_cast<double>(i + 1);
    total += f[i];
  }
  for (double& v : f) v /= total;
  return f;
}

std::size_t sample_composition_size(Rng& rng, std::size_t classes) {
  if (classes == 0) throw DomainError("class count must be >= 1");
  return 1 + static_cast<std::size_t>(rng.int_below(classes));
}

std::vector<int> sample_class_subset(Rng& rng, std::size_t classes, std::size_t k) {
  if (k == 0 || k > classes) {
    throw DomainError("cannot draw " + std::to_string(k) + " distinct classes out of " + std::to_string(classes));
  }
  std::vector<int> pool(classes);
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates: the first k slots are a uniform ordered sample.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.int_below(classes - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

CompositeExample compose_example(const data::LabeledDataset& dataset,
                                 const std::vector<std::vector<std::size_t>>& by_class,
                                 std::span<const int> classes, const FactorVector& factors, Rng& rng,
                                 const ImageFetch& fetch) {
  if (classes.size() != factors.size() || classes.empty()) {
    throw DomainError("compose_example needs one factor per class");
  }
  CompositeExample ex;
  ex.classes.assign(classes.begin(), classes.end());
  ex.factors = factors;
  ex.distribution.assign(dataset.classes, 0.0);

  const Shape sample_shape = dataset.images.shape().with_batch(1);
  std::vector<double> accum(sample_shape.count(), 0.0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int c = classes[i];
    if (c < 0 || static_cast<std::size_t>(c) >= by_class.size()) {
      throw DomainError("class " + std::to_string(c) + " out of range");
    }
    if (ex.distribution[static_cast<std::size_t>(c)] != 0.0) {
      throw DomainError("class " + std::to_string(c) + " listed twice");
    }
    const auto& members = by_class[static_cast<std::size_t>(c)];
    if (members.empty()) throw DataError("class " + std::to_string(c) + " has no images");
    const std::size_t j = members[static_cast<std::size_t>(rng.int_below(members.size()))];
    const Tensor img = fetch ? fetch(j, rng) : dataset.image(j);
    require_same_shape(img.shape(), sample_shape, "compose_example image");
    for (std::size_t p = 0; p < accum.size(); ++p) accum[p] += factors[i] * static_cast<double>(img[p]);
    ex.distribution[static_cast<std::size_t>(c)] = factors[i];
    ex.sources.push_back(j);
  }
  ex.image = Tensor(sample_shape);
  for (std::size_t p = 0; p < accum.size(); ++p) ex.image[p] = static_cast<float>(accum[p]);
  return ex;
}

FdtBatch fdt_batch(const data::LabeledDataset& dataset, const std::vector<std::vector<std::size_t>>& by_class,
                   std::size_t batch, const Rng& rng, const FdtOptions& options) {
  if (batch == 0) throw DomainError("batch size must be >= 1");
  const std::size_t classes = dataset.classes;
  FdtBatch out;
  out.images = Tensor(dataset.images.shape().with_batch(batch));
  out.distribution = loss::ClassMatrix<double>(classes, batch);
  out.top_labels.resize(batch);
  out.examples.reserve(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    Rng slot = rng.split(s);
    const std::size_t k = options.forced_k ? *options.forced_k : sample_composition_size(slot, classes);
    const std::vector<int> picked = sample_class_subset(slot, classes, k);
    CompositeExample ex = compose_example(dataset, by_class, picked, harmonic_factors(k), slot, options.fetch);
    std::copy(ex.image.values().begin(), ex.image.values().end(), out.images.sample(s).begin());
    for (std::size_t c = 0; c < classes; ++c) out.distribution.at(c, s) = ex.distribution[c];
    out.top_labels[s] = ex.top_class();
    ex.image = Tensor();
    out.examples.push_back(std::move(ex));
  }
  return out;
}

}  // namespace tnfdt::fdt
