#include "tnfdt/data.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>

#include "tnfdt/errors.hpp"

namespace tnfdt::data {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open file");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& field) {
  if (bytes.size() < offset + 4) throw FormatError(field, "file truncated inside header");
  return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  out.write(b, 4);
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

void LabeledDataset::validate() const {
  if (labels.empty()) throw DataError("dataset is empty");
  if (images.shape().n() != labels.size()) throw DataError("image and label counts differ");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw DataError("label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

void AugmentConfig::validate() const {
  if (max_shift < 0) throw DomainError("max_shift must be >= 0");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw DomainError("flip_prob must be in [0, 1]");
  if (!(divisor > 0)) throw DomainError("divisor must be > 0");
}

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, Split split,
                        std::size_t classes) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);

  const std::uint32_t img_magic = read_be32(img, 0, "image magic");
  if (img_magic != kIdxImageMagic) {
    throw FormatError("image magic", "expected 0x00000803, got " + hex(img_magic));
  }
  const std::uint32_t lab_magic = read_be32(lab, 0, "label magic");
  if (lab_magic != kIdxLabelMagic) {
    throw FormatError("label magic", "expected 0x00000801, got " + hex(lab_magic));
  }
  const std::size_t count = read_be32(img, 4, "image count");
  const std::size_t rows = read_be32(img, 8, "rows");
  const std::size_t cols = read_be32(img, 12, "cols");
  const std::size_t label_count = read_be32(lab, 4, "label count");
  if (count != label_count) {
    throw FormatError("label count", std::to_string(label_count) + " labels for " + std::to_string(count) + " images");
  }
  if (count == 0 || rows == 0 || cols == 0) throw FormatError("image count", "empty image file");
  const std::size_t payload = count * rows * cols;
  if (img.size() != 16 + payload) {
    throw FormatError("image payload", "expected " + std::to_string(payload) + " bytes, found " +
                                           std::to_string(img.size() - 16));
  }
  if (lab.size() != 8 + count) {
    throw FormatError("label payload", "expected " + std::to_string(count) + " bytes, found " +
                                           std::to_string(lab.size() - 8));
  }

  LabeledDataset ds;
  ds.classes = classes;
  ds.split = split;
  ds.images = Tensor(Shape(static_cast<std::int64_t>(count), 1, static_cast<std::int64_t>(rows),
                           static_cast<std::int64_t>(cols)));
  for (std::size_t i = 0; i < payload; ++i) ds.images[i] = static_cast<float>(img[16 + i]);
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    ds.labels[i] = lab[8 + i];
    if (static_cast<std::size_t>(ds.labels[i]) >= classes) {
      throw FormatError("label", "value " + std::to_string(ds.labels[i]) + " at record " + std::to_string(i) +
                                     " is not below " + std::to_string(classes));
    }
  }
  return ds;
}

void write_idx(const LabeledDataset& dataset, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  const Shape& s = dataset.images.shape();
  if (s.z() != 1) throw DataError("IDX images are single channel");
  std::ofstream img(images, std::ios::binary);
  write_be32(img, kIdxImageMagic);
  write_be32(img, static_cast<std::uint32_t>(s.n()));
  write_be32(img, static_cast<std::uint32_t>(s.y()));
  write_be32(img, static_cast<std::uint32_t>(s.x()));
  for (float v : dataset.images.values()) img.put(static_cast<char>(to_byte(v)));
  std::ofstream lab(labels, std::ios::binary);
  write_be32(lab, kIdxLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(dataset.labels.size()));
  for (int l : dataset.labels) lab.put(static_cast<char>(l));
  if (!img || !lab) throw DataError("failed writing IDX files");
}

LabeledDataset load_cifar10_binary(std::span<const std::filesystem::path> files, Split split, std::size_t classes) {
  std::vector<unsigned char> all;
  for (const auto& f : files) {
    auto bytes = read_file(f);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw FormatError("record length", f.string() + " has " + std::to_string(bytes.size()) +
                                             " bytes, not a positive multiple of 3073");
    }
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  if (all.empty()) throw FormatError("record length", "no CIFAR files given");
  const std::size_t count = all.size() / kCifarRecord;
  const std::size_t sample = kCifarRecord - 1;
  LabeledDataset ds;
  ds.classes = classes;
  ds.split = split;
  ds.images = Tensor(Shape(static_cast<std::int64_t>(count), 3, kCifarSide, kCifarSide));
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* rec = all.data() + i * kCifarRecord;
    ds.labels[i] = rec[0];
    if (static_cast<std::size_t>(rec[0]) >= classes) {
      throw FormatError("label", "value " + std::to_string(rec[0]) + " at record " + std::to_string(i));
    }
    float* dst = ds.images.data() + i * sample;
    for (std::size_t p = 0; p < sample; ++p) dst[p] = static_cast<float>(rec[1 + p]);
  }
  return ds;
}

void write_cifar10_binary(const LabeledDataset& dataset, const std::filesystem::path& file) {
  const Shape& s = dataset.images.shape();
  if (s.z() != 3 || s.y() != kCifarSide || s.x() != kCifarSide) throw DataError("CIFAR records are 3x32x32");
  std::ofstream out(file, std::ios::binary);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.put(static_cast<char>(dataset.labels[i]));
    for (float v : dataset.images.sample(i)) out.put(static_cast<char>(to_byte(v)));
  }
  if (!out) throw DataError("failed writing " + file.string());
}

Tensor shift_image(const Tensor& image, int dx, int dy) {
  const Shape& s = image.shape();
  Tensor out(s);
  const auto h = static_cast<int>(s.y());
  const auto w = static_cast<int>(s.x());
  for (std::size_t n = 0; n < s.n(); ++n) {
    for (std::size_t z = 0; z < s.z(); ++z) {
      for (int y = 0; y < h; ++y) {
        const int sy = y - dy;
        if (sy < 0 || sy >= h) continue;
        for (int x = 0; x < w; ++x) {
          const int sx = x - dx;
          if (sx < 0 || sx >= w) continue;
          out(n, z, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              image(n, z, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        }
      }
    }
  }
  return out;
}

Tensor flip_horizontal(const Tensor& image) {
  const Shape& s = image.shape();
  Tensor out(s);
  for (std::size_t row = 0; row < s.n() * s.z() * s.y(); ++row) {
    const float* src = image.data() + row * s.x();
    float* dst = out.data() + row * s.x();
    std::reverse_copy(src, src + s.x(), dst);
  }
  return out;
}

Tensor augment(const Tensor& image, const AugmentConfig& config, Rng& rng) {
  config.validate();
  Tensor out = image;
  if (config.shift_enabled && config.max_shift > 0) {
    const auto span = static_cast<std::uint64_t>(2 * config.max_shift + 1);
    const int dx = static_cast<int>(rng.int_below(span)) - config.max_shift;
    const int dy = static_cast<int>(rng.int_below(span)) - config.max_shift;
    out = shift_image(out, dx, dy);
  }
  if (config.flip_enabled && rng.uniform01() < config.flip_prob) out = flip_horizontal(out);
  return out;
}

namespace {

float channel_mean(const AugmentConfig& config, std::size_t channels, std::size_t z) {
  if (channels == 1) return config.means[0];
  if (channels == 3) return config.means[z];
  throw DomainError("normalize supports 1 or 3 channels, got " + std::to_string(channels));
}

}  // namespace

Tensor normalize(const Tensor& images, const AugmentConfig& config) {
  const Shape& s = images.shape();
  Tensor out(s);
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n(); ++n) {
    for (std::size_t z = 0; z < s.z(); ++z) {
      const float mean = channel_mean(config, s.z(), z);
      const std::size_t base = (n * s.z() + z) * plane;
      for (std::size_t p = 0; p < plane; ++p) out[base + p] = (images[base + p] - mean) / config.divisor;
    }
  }
  return out;
}

Tensor denormalize(const Tensor& images, const AugmentConfig& config) {
  const Shape& s = images.shape();
  Tensor out(s);
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n(); ++n) {
    for (std::size_t z = 0; z < s.z(); ++z) {
      const float mean = channel_mean(config, s.z(), z);
      const std::size_t base = (n * s.z() + z) * plane;
      for (std::size_t p = 0; p < plane; ++p) out[base + p] = images[base + p] * config.divisor + mean;
    }
  }
  return out;
}

Tensor preprocess_train(const Tensor& raw_image, const AugmentConfig& config, Rng& rng) {
  return normalize(augment(raw_image, config, rng), config);
}

LabeledDataset synthetic_dataset(Rng& rng, std::size_t classes, std::size_t count, std::size_t height,
                                 std::size_t width, const SyntheticOptions& options) {
  if (classes < 2) throw DomainError("synthetic dataset needs at least 2 classes");
  if (count == 0) throw DomainError("synthetic dataset needs at least one image");
  const std::size_t plane = height * width;
  if (plane < classes) throw DomainError("synthetic images need at least one pixel per class");
  LabeledDataset ds;
  ds.classes = classes;
  ds.images = Tensor(Shape(static_cast<std::int64_t>(count), static_cast<std::int64_t>(options.channels),
                           static_cast<std::int64_t>(height), static_cast<std::int64_t>(width)));
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % classes;
    ds.labels[i] = static_cast<int>(label);
    float* dst = ds.images.data() + i * ds.images.shape().sample_size();
    for (std::size_t z = 0; z < options.channels; ++z) {
      for (std::size_t p = 0; p < plane; ++p) {
        const bool lit = p * classes / plane == label;
        double v = lit ? 200.0 : 30.0;
        if (options.noise > 0) v += options.noise * (2.0 * rng.uniform01() - 1.0);
        dst[z * plane + p] = static_cast<float>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return ds;
}

LabeledDataset head(const LabeledDataset& dataset, std::size_t count) {
  if (count == 0 || count >= dataset.size()) return dataset;
  LabeledDataset out;
  out.classes = dataset.classes;
  out.split = dataset.split;
  const std::size_t sample = dataset.images.shape().sample_size();
  const auto begin = dataset.images.values().begin();
  out.images = Tensor(dataset.images.shape().with_batch(count),
                      std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(count * sample)));
  out.labels.assign(dataset.labels.begin(), dataset.labels.begin() + static_cast<std::ptrdiff_t>(count));
  return out;
}

std::vector<std::vector<std::size_t>> class_index(const LabeledDataset& dataset) {
  std::vector<std::vector<std::size_t>> index(dataset.classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const int l = dataset.labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= dataset.classes) throw DataError("label out of range");
    index[static_cast<std::size_t>(l)].push_back(i);
  }
  return index;
}

}  // namespace tnfdt::data
