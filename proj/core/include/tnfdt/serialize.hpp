#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "tnfdt/errors.hpp"
#include "tnfdt/nn/model.hpp"

namespace tnfdt::io {

inline constexpr std::string_view kModelMagic = "TNFDTMDL";
inline constexpr std::uint32_t kModelVersion = 1;

// The blob was written by an incompatible format version or precision.
class ArtifactMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

// Layout (little-endian):
//   magic[8] | u32 version | u8 precision ('f' or 'd') | u32 len, model spec text
//   | u32 tensor count | per tensor: u32 len, name, 4 x u64 dims, values
// Tensors are the model state (parameters and BatchNorm running statistics) in layer order.
template <typename T>
std::string encode_model(nn::Model<T>& model);

template <typename T>
nn::Model<T> decode_model(std::string_view blob);

template <typename T>
void save_model(nn::Model<T>& model, const std::filesystem::path& path);

template <typename T>
nn::Model<T> load_model(const std::filesystem::path& path);

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace tnfdt::io
